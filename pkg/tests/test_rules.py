import itertools
import json

import pytest
from hypothesis import given, settings, strategies as st

from rih.rules import (
    BLANK,
    BOTTOM_BC,
    FRAME_ADMITS_ALL_BLANK,
    LEFT_BC,
    RIGHT_BC,
    DecodeError,
    GridTiling,
    RuleSetError,
    TileRuleSet,
    check_tiling,
    decode_lifted,
    encode_lifted,
    enumerate_valid,
    frame_configuration,
    lift_3x3,
    load_grid,
    load_ruleset,
    open_bc_frame_ruleset,
    reflect_h,
    reflect_subtile_name,
    subtile,
)

MONO = TileRuleSet(("m",), frozenset(), frozenset())
# oriented on purpose: b left of a stays legal
AB = TileRuleSet(("a", "b"), frozenset({("a", "b")}), frozenset())
FREE2 = TileRuleSet(("a", "b"), frozenset(), frozenset())


def brute_force_valid(rs, n):
    """Reference enumeration: filter every assignment through the checker."""
    out = []
    for cells in itertools.product(rs.alphabet, repeat=n * n):
        rows = tuple(cells[y * n:(y + 1) * n] for y in range(n))
        g = GridTiling(n, rows)
        if not check_tiling(rs, g):
            out.append(rows)
    return out


class TestRuleSetBasics:
    def test_duplicate_names_rejected(self):
        with pytest.raises(RuleSetError):
            TileRuleSet(("a", "a"), frozenset(), frozenset())

    def test_empty_alphabet_rejected(self):
        with pytest.raises(RuleSetError):
            TileRuleSet((), frozenset(), frozenset())

    def test_unknown_boundary_rejected(self):
        with pytest.raises(RuleSetError):
            TileRuleSet(("a",), frozenset(), frozenset(), boundary="torus")

    def test_pair_outside_alphabet_rejected(self):
        with pytest.raises(RuleSetError):
            TileRuleSet(("a",), frozenset({("a", "b")}), frozenset())

    def test_json_round_trip(self):
        rs = TileRuleSet(
            ("a", "b", "c"),
            frozenset({("a", "b"), ("c", "a")}),
            frozenset({("b", "b")}),
            boundary="open",
        )
        again = TileRuleSet.from_json_dict(rs.to_json_dict())
        assert again == rs
        # serialized pair lists are sorted for stable files
        d = rs.to_json_dict()
        assert d["forbidden_h"] == sorted(d["forbidden_h"])

    def test_file_loaders(self, tmp_path):
        rs = AB
        g = GridTiling.filled(2, "a")
        p1 = tmp_path / "rules.json"
        p2 = tmp_path / "grid.json"
        p1.write_text(json.dumps(rs.to_json_dict()))
        p2.write_text(json.dumps(g.to_json_dict()))
        assert load_ruleset(p1) == rs
        assert load_grid(p2) == g

    def test_grid_shape_enforced(self):
        with pytest.raises(RuleSetError):
            GridTiling(2, (("a", "a"),))
        with pytest.raises(RuleSetError):
            GridTiling(2, (("a",), ("a", "a")))


class TestCheckTiling:
    def test_no_rules_never_violates(self):
        for rows in itertools.product(itertools.product("ab", repeat=2), repeat=2):
            assert check_tiling(FREE2, GridTiling(2, rows)) == []

    @pytest.mark.parametrize(
        "boundary,expected", [("periodic", 9), ("open", 6)]
    )
    def test_self_pair_counts(self, boundary, expected):
        rs = TileRuleSet(("a",), frozenset({("a", "a")}), frozenset(), boundary)
        v = check_tiling(rs, GridTiling.filled(3, "a"))
        assert len(v) == expected
        assert all(kind == "h" for kind, _, _ in v)

    def test_violation_order_and_shape(self):
        rs = TileRuleSet(
            ("a", "b"),
            frozenset({("a", "b")}),
            frozenset({("a", "a")}),
            boundary="open",
        )
        g = GridTiling(2, (("a", "b"), ("a", "b")))
        assert check_tiling(rs, g) == [
            ("h", (0, 0), ("a", "b")),
            ("v", (0, 0), ("a", "a")),
            ("h", (0, 1), ("a", "b")),
        ]

    def test_unknown_tile_rejected(self):
        with pytest.raises(RuleSetError):
            check_tiling(MONO, GridTiling.filled(2, "x"))


class TestEnumerateValid:
    def test_single_tile_single_grid(self):
        res = enumerate_valid(MONO, 2)
        assert len(res) == 1 and not res.truncated
        assert res.tilings[0] == GridTiling.filled(2, "m")

    def test_oriented_pair_periodic(self):
        # any mixed row hits the forbidden order once it wraps
        res = enumerate_valid(AB, 2)
        rows = [g.rows for g in res]
        assert rows == [
            (("a", "a"), ("a", "a")),
            (("a", "a"), ("b", "b")),
            (("b", "b"), ("a", "a")),
            (("b", "b"), ("b", "b")),
        ]

    def test_limit_truncates(self):
        res = enumerate_valid(AB, 2, limit=2)
        assert len(res) == 2 and res.truncated
        full = enumerate_valid(AB, 2, limit=4)
        assert len(full) == 4 and not full.truncated

    def test_require_present_filters(self):
        res = enumerate_valid(AB, 2, require_present={"a"})
        assert len(res) == 3
        assert all(any("a" in r for r in g.rows) for g in res)
        with pytest.raises(RuleSetError):
            enumerate_valid(AB, 2, require_present={"zz"})

    def test_threads_match_serial(self):
        a = enumerate_valid(AB, 3)
        b = enumerate_valid(AB, 3, threads=2)
        assert [g.rows for g in a] == [g.rows for g in b]

    def test_unsatisfiable_is_empty(self):
        rs = TileRuleSet(("a",), frozenset({("a", "a")}), frozenset())
        assert len(enumerate_valid(rs, 2)) == 0

    @settings(max_examples=40, deadline=None)
    @given(
        fh=st.frozensets(
            st.tuples(st.sampled_from("ab"), st.sampled_from("ab")), max_size=3
        ),
        fv=st.frozensets(
            st.tuples(st.sampled_from("ab"), st.sampled_from("ab")), max_size=3
        ),
        boundary=st.sampled_from(["periodic", "open"]),
        n=st.sampled_from([2, 3]),
    )
    def test_matches_brute_force(self, fh, fv, boundary, n):
        rs = TileRuleSet(("a", "b"), fh, fv, boundary)
        expected = brute_force_valid(rs, n)
        got = [g.rows for g in enumerate_valid(rs, n)]
        assert got == expected
        for g in enumerate_valid(rs, n):
            assert check_tiling(rs, g) == []


def all_offsets():
    return [(ox, oy) for ox in range(3) for oy in range(3)]


class TestLift:
    def test_single_tile_lift_count(self):
        lifted = lift_3x3(MONO)
        res = enumerate_valid(lifted, 3)
        assert len(res) == 9 and not res.truncated
        base = GridTiling(1, (("m",),))
        expected = {encode_lifted(base, off).rows for off in all_offsets()}
        assert {g.rows for g in res} == expected

    @pytest.mark.parametrize("rs,n", [(MONO, 1), (AB, 1), (AB, 2), (FREE2, 1)])
    def test_offset_decode_bijection(self, rs, n):
        originals = {g.rows for g in enumerate_valid(rs, n)}
        lifted_rs = lift_3x3(rs)
        lifted = enumerate_valid(lifted_rs, 3 * n)
        assert len(lifted) == 9 * len(originals)
        seen = set()
        for g in lifted:
            orig, off = decode_lifted(g, rs.alphabet)
            assert orig.rows in originals
            assert (orig.rows, off) not in seen
            seen.add((orig.rows, off))
        assert seen == {(r, off) for r in originals for off in all_offsets()}

    def test_encode_decode_round_trip(self):
        g = GridTiling(2, (("a", "b"), ("b", "b")))
        for off in all_offsets():
            back, got_off = decode_lifted(encode_lifted(g, off), ("a", "b"))
            assert back == g and got_off == off

    def test_lift_preserves_emptiness(self):
        rs = TileRuleSet(("a",), frozenset({("a", "a")}), frozenset())
        assert len(enumerate_valid(rs, 1)) == 0
        assert len(enumerate_valid(lift_3x3(rs), 3)) == 0

    def test_decode_rejects_broken_blocks(self):
        with pytest.raises(DecodeError):
            decode_lifted(GridTiling.filled(3, subtile("m", "c")), ("m",))
        good = encode_lifted(GridTiling(1, (("m",),)), (1, 1))
        rows = [list(r) for r in good.rows]
        rows[0][0], rows[0][1] = rows[0][1], rows[0][0]
        with pytest.raises(DecodeError):
            decode_lifted(GridTiling(3, tuple(map(tuple, rows))), ("m",))
        with pytest.raises(DecodeError):
            decode_lifted(GridTiling.filled(2, subtile("m", "c")), ("m",))

    @pytest.mark.parametrize(
        "rs",
        [
            AB,
            TileRuleSet(
                ("x", "y", "z"),
                frozenset({("x", "y"), ("z", "z")}),
                frozenset({("y", "x"), ("x", "z")}),
                boundary="open",
            ),
        ],
    )
    def test_reflect_lift_commutes(self, rs):
        a = lift_3x3(reflect_h(rs))
        b = reflect_h(lift_3x3(rs), rename=reflect_subtile_name)
        assert set(a.alphabet) == set(b.alphabet)
        assert a.forbidden_h == b.forbidden_h
        assert a.forbidden_v == b.forbidden_v
        assert a.boundary == b.boundary


def bar_rows(n, left, right):
    first = (left,) + (BOTTOM_BC,) * (n - 2) + (right,)
    return (first,) + tuple((BLANK,) * n for _ in range(n - 1))


def expected_frame_survivors(n):
    """Everything the stated prohibitions admit: the frame, the all-blank
    grid, and bars that simply stop at an open edge instead of carrying an
    end marker (no neighbor exists there to trigger the flanking rules)."""
    return [
        bar_rows(n, LEFT_BC, BOTTOM_BC),
        bar_rows(n, LEFT_BC, RIGHT_BC),
        bar_rows(n, BOTTOM_BC, BOTTOM_BC),
        bar_rows(n, BOTTOM_BC, RIGHT_BC),
        tuple(((BLANK,) * n) for _ in range(n)),
    ]


class TestFrameRules:
    def test_frame_is_valid(self):
        rs = open_bc_frame_ruleset()
        for n in (3, 4, 5):
            assert check_tiling(rs, frame_configuration(n)) == []

    def test_left_end_pinned_to_corner(self):
        rs = open_bc_frame_ruleset()
        shifted = GridTiling(
            3,
            (
                (BLANK, LEFT_BC, BOTTOM_BC),
                (BLANK,) * 3,
                (BLANK,) * 3,
            ),
        )
        assert any(pair[1] == LEFT_BC for _, _, pair in check_tiling(rs, shifted))
        raised = GridTiling(
            3,
            (
                (BLANK,) * 3,
                (LEFT_BC, BOTTOM_BC, BOTTOM_BC),
                (BLANK,) * 3,
            ),
        )
        assert check_tiling(rs, raised) != []

    def test_exhaustive_n3_matches_brute_force(self):
        rs = open_bc_frame_ruleset()
        brute = brute_force_valid(rs, 3)
        assert brute == [g.rows for g in enumerate_valid(rs, 3)]
        assert set(brute) == set(expected_frame_survivors(3))

    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_survivor_set_frozen(self, n):
        rs = open_bc_frame_ruleset()
        res = enumerate_valid(rs, n)
        assert not res.truncated
        assert {g.rows for g in res} == set(expected_frame_survivors(n))
        assert frame_configuration(n).rows in {g.rows for g in res}
        # the figure's single-configuration claim does not survive literal
        # rule reading: the blank grid and edge-stopped bars pass too
        assert FRAME_ADMITS_ALL_BLANK
        assert len(res) == 5

    def test_require_present_narrows_to_frame(self):
        rs = open_bc_frame_ruleset()
        res = enumerate_valid(rs, 4, require_present={LEFT_BC, RIGHT_BC})
        assert [g.rows for g in res] == [frame_configuration(4).rows]
