import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rih.lattice import (
    OPEN,
    PERIODIC,
    LatticeSpec,
    edge_index_array,
    edges,
    lattice_symmetry_permutations,
)
from rih.tiling import (
    RULE_DIFF_COLOR_DIFF_NUMBER,
    RULE_SAME_COLOR_SAME_NUMBER,
    Slot,
    Tiling,
    classical_energy,
    classify,
    epr_demand_graph,
    h1lb_bound,
    handshake_check,
    rule_violations,
    same_color_degree,
    same_color_loops,
    striped_witness,
)


def random_tiling(spec, rng):
    N = spec.num_sites
    return Tiling(
        spec,
        rng.integers(0, 3, N),
        rng.integers(0, 3, N),
        rng.integers(0, 3, N),
        rng.integers(0, 3, N),
    )


class TestTilingBasics:
    def test_shape_validation(self):
        spec = LatticeSpec(2, 3)
        with pytest.raises(ValueError):
            Tiling(spec, [0] * 8, [0] * 9)
        with pytest.raises(ValueError):
            Tiling(spec, [0] * 9, [3] * 9)
        with pytest.raises(ValueError):
            Tiling(spec, [0] * 9, [-1] * 9)

    def test_tile_lookup(self):
        spec = LatticeSpec(1, 3)
        t = Tiling(spec, [0, 1, 2], [2, 1, 0], [1, 1, 1], [0, 0, 0])
        assert t.tile((0,), 1) == (0, 2)
        assert t.tile((2,), 1) == (2, 0)
        assert t.tile((1,), 2) == (1, 0)

    def test_json_round_trip(self):
        spec = LatticeSpec(2, 3, OPEN)
        rng = np.random.default_rng(5)
        t = random_tiling(spec, rng)
        t2 = Tiling.from_json_dict(t.to_json_dict())
        assert t == t2

    def test_json_single_copy_defaults_second(self):
        spec = LatticeSpec(1, 3)
        obj = {
            "spec": spec.to_json_dict(),
            "copies": [[[0, 0], [1, 1], [2, 2]]],
        }
        t = Tiling.from_json_dict(obj)
        assert (t.colors2 == 0).all() and (t.numbers2 == 0).all()

    def test_permuted_moves_tiles(self):
        spec = LatticeSpec(1, 3)
        t = Tiling(spec, [0, 1, 2], [0, 1, 2])
        # cyclic shift: new site j carries old site j+1's tile
        p = [1, 2, 0]
        tp = t.permuted(p)
        assert list(tp.colors1) == [1, 2, 0]


class TestRules:
    def test_same_color_same_number_flagged(self):
        spec = LatticeSpec(1, 3, OPEN)
        t = Tiling(spec, [0, 0, 0], [1, 1, 2])
        v = rule_violations(t, 1)
        assert v == [(((0,), (1,)), RULE_SAME_COLOR_SAME_NUMBER)]

    def test_diff_color_diff_number_flagged(self):
        spec = LatticeSpec(1, 3, OPEN)
        t = Tiling(spec, [0, 1, 1], [0, 1, 2])
        v = rule_violations(t, 1)
        assert (((0,), (1,)), RULE_DIFF_COLOR_DIFF_NUMBER) in v
        # the (1,)-(2,) edge is same color, different number: legal
        assert len(v) == 1

    def test_legal_pairs_pass(self):
        spec = LatticeSpec(1, 3, OPEN)
        # same color different number, different color same number
        t = Tiling(spec, [0, 0, 2], [0, 1, 1])
        assert rule_violations(t, 1) == []

    def test_copies_independent(self):
        spec = LatticeSpec(1, 3, OPEN)
        t = Tiling(spec, [0, 0, 0], [0, 1, 2], [0, 0, 0], [0, 0, 0])
        assert rule_violations(t, 1) == []
        assert len(rule_violations(t, 2)) == 2

    def test_same_color_degree(self):
        spec = LatticeSpec(2, 3)
        t = striped_witness(spec)
        for u in spec.sites():
            assert same_color_degree(t, 1, u) == 2


class TestWitness:
    @pytest.mark.parametrize("r,n", [(2, 3), (2, 6), (3, 3)])
    def test_periodic_witness_is_rule_clean(self, r, n):
        t = striped_witness(LatticeSpec(r, n))
        assert rule_violations(t, 1) == []
        assert rule_violations(t, 2) == []

    def test_open_witness_is_rule_clean(self):
        t = striped_witness(LatticeSpec(2, 3, OPEN))
        assert rule_violations(t, 1) == []
        assert rule_violations(t, 2) == []

    @pytest.mark.parametrize(
        "r,n,expected",
        [(2, 3, 36), (2, 6, 144), (3, 3, 216)],
    )
    def test_classical_energy_closed_form(self, r, n, expected):
        # all cost sits in the different-color loop edges: 4 n^r (r-1)
        t = striped_witness(LatticeSpec(r, n))
        e = classical_energy(t)
        assert e.tile1 == e.tile2 == 0
        assert e.copy_coupling == 0
        assert e.total == expected
        assert e.total == 4 * n**r * (r - 1)

    def test_witness_flags(self):
        t = striped_witness(LatticeSpec(2, 3), copy1_dir=0, copy2_dir=1)
        f1, f2 = classify(t, 1), classify(t, 2)
        for f in (f1, f2):
            assert f.looped and not f.has_turn
            assert f.uniformly_directed and f.numbered_consistently
        assert f1.direction == 0
        assert f2.direction == 1

    def test_witness_loops_are_lines(self):
        spec = LatticeSpec(2, 6)
        t = striped_witness(spec)
        loops = same_color_loops(t, 1)
        assert len(loops) == 6
        assert all(len(c) == 6 for c in loops)

    def test_same_direction_copies_pay_coupling(self):
        # both copies striped along dimension 0: every same-color edge doubles up
        spec = LatticeSpec(2, 3)
        w = striped_witness(spec)
        t = Tiling(spec, w.colors1, w.numbers1, w.colors1, w.numbers1)
        e = classical_energy(t)
        assert e.copy_coupling == 9
        assert e.total == 36 + 9

    def test_witness_validation(self):
        with pytest.raises(ValueError):
            striped_witness(LatticeSpec(2, 4))
        with pytest.raises(ValueError):
            striped_witness(LatticeSpec(2, 3), copy1_dir=0, copy2_dir=0)
        with pytest.raises(ValueError):
            striped_witness(LatticeSpec(2, 3), copy1_dir=0, copy2_dir=2)


class TestClassify:
    def test_staircase_loops_with_turns(self):
        # three interleaved 12-site staircase loops tile the 6x6 torus; each is
        # chordless, so every site keeps same-color degree 2, yet corners bend
        spec = LatticeSpec(2, 6)
        colors = np.zeros(36, dtype=np.int8)
        for u in spec.sites():
            colors[spec.site_index(u)] = ((u[0] - u[1]) % 6) // 2
        t = Tiling(spec, colors, np.zeros(36, dtype=np.int8))
        f = classify(t, 1)
        assert f.looped
        assert f.has_turn
        assert not f.uniformly_directed
        loops = same_color_loops(t, 1)
        assert len(loops) == 3
        assert all(len(c) == 12 for c in loops)

    def test_constant_color_not_looped(self):
        spec = LatticeSpec(2, 3)
        t = Tiling(spec, np.zeros(9, dtype=np.int8), np.zeros(9, dtype=np.int8))
        f = classify(t, 1)
        assert not f.looped
        assert f.has_turn

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_flag_implications(self, seed):
        spec = LatticeSpec(2, 3)
        t = random_tiling(spec, np.random.default_rng(seed))
        f = classify(t, 1)
        if f.numbered_consistently:
            assert f.uniformly_directed
        if f.uniformly_directed:
            assert f.looped and not f.has_turn and f.direction is not None
        else:
            assert f.direction is None

    def test_flags_invariant_under_lattice_symmetry(self):
        spec = LatticeSpec(2, 3)
        rng = np.random.default_rng(11)
        perms = lattice_symmetry_permutations(spec)
        for _ in range(5):
            t = random_tiling(spec, rng)
            f = classify(t, 1)
            for g in perms[rng.integers(0, len(perms), 6)]:
                fg = classify(t.permuted(g), 1)
                assert fg.looped == f.looped
                assert fg.has_turn == f.has_turn
                assert fg.uniformly_directed == f.uniformly_directed


class TestDemandGraph:
    def test_ring_cycle_demands(self):
        # numbers 0,1,2 around a 3-ring: three demands, every slot used once
        spec = LatticeSpec(1, 3)
        t = Tiling(spec, [0, 0, 0], [0, 1, 2])
        g = epr_demand_graph(t, 1)
        assert len(g.demands) == 3
        assert g.rule_conflicts == []
        deg = g.slot_degrees()
        assert len(deg) == 6
        assert set(deg.values()) == {1}
        pairs = {(d.tail.site, d.head.site) for d in g.demands}
        assert pairs == {(0, 1), (1, 2), (2, 0)}

    def test_path_shared_head_slot(self):
        # numbers 0,1,0 on an open path: both edges point into the middle site
        spec = LatticeSpec(1, 3, OPEN)
        t = Tiling(spec, [0, 0, 0], [0, 1, 0])
        g = epr_demand_graph(t, 1)
        assert len(g.demands) == 2
        heads = [d.head for d in g.demands]
        assert heads == [Slot(1, 1, 1), Slot(1, 1, 1)]
        assert g.overloaded_slots() == [Slot(1, 1, 1)]

    def test_same_number_same_color_is_conflict(self):
        spec = LatticeSpec(1, 3, OPEN)
        t = Tiling(spec, [2, 2, 0], [1, 1, 1])
        g = epr_demand_graph(t, 1)
        assert g.demands == []
        assert g.rule_conflicts == [(((0,), (1,)))]

    def test_same_number_diff_color_is_silent(self):
        spec = LatticeSpec(1, 3, OPEN)
        t = Tiling(spec, [0, 1, 2], [1, 1, 1])
        g = epr_demand_graph(t, 1)
        assert g.demands == []
        assert g.rule_conflicts == []

    def test_demands_follow_numbers_not_colors(self):
        # stepping numbers demand pairing even across different colors
        spec = LatticeSpec(1, 3, OPEN)
        t = Tiling(spec, [0, 1, 2], [0, 1, 2])
        g = epr_demand_graph(t, 1)
        assert len(g.demands) == 2
        assert all(d.tail.port == 2 and d.head.port == 1 for d in g.demands)

    def test_demand_direction_follows_step(self):
        # numbers 2 -> 0 step forward; 0 -> 2 is the reverse orientation
        spec = LatticeSpec(1, 3, OPEN)
        t = Tiling(spec, [0, 0, 0], [2, 0, 2])
        g = epr_demand_graph(t, 1)
        pairs = {(d.tail.site, d.head.site) for d in g.demands}
        assert pairs == {(0, 1), (2, 1)}

    def test_copy_label_carried(self):
        spec = LatticeSpec(1, 3)
        t = Tiling(spec, [0, 0, 0], [0, 1, 2], [0, 0, 0], [0, 2, 1])
        g2 = epr_demand_graph(t, 2)
        assert g2.copy == 2
        assert all(d.tail.copy == 2 and d.head.copy == 2 for d in g2.demands)
        # copy 2 numbers run backwards, so demands flip
        pairs = {(d.tail.site, d.head.site) for d in g2.demands}
        assert pairs == {(1, 0), (2, 1), (0, 2)}


class TestEnergyBounds:
    def test_h1lb_witness(self):
        t = striped_witness(LatticeSpec(2, 3))
        assert h1lb_bound(t, 1) == 18
        assert h1lb_bound(t, 2) == 18

    def test_h1lb_constant_color(self):
        spec = LatticeSpec(2, 3)
        t = Tiling(spec, np.zeros(9, dtype=np.int8), np.zeros(9, dtype=np.int8))
        # degree 4 everywhere: 36 - 36 + 4*9
        assert h1lb_bound(t, 1) == 36

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_handshake_identity(self, seed):
        spec = LatticeSpec(2, 3)
        t = random_tiling(spec, np.random.default_rng(seed))
        lhs, rhs = handshake_check(t, 1)
        assert lhs == rhs

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_h1lb_closed_form_periodic(self, seed):
        spec = LatticeSpec(2, 3)
        t = random_tiling(spec, np.random.default_rng(seed))
        deg = np.array([same_color_degree(t, 1, u) for u in spec.sites()])
        closed = 2 * spec.n**spec.r * spec.r - int(deg.sum()) + 4 * int((deg // 3).sum())
        assert h1lb_bound(t, 1) == closed

    def test_classical_energy_breakdown(self):
        spec = LatticeSpec(1, 3)
        # copy 1: one rule-1 violation, one loop edge; copy 2: clean stripes
        t = Tiling(spec, [0, 0, 1], [0, 0, 0], [0, 1, 2], [0, 0, 0])
        e = classical_energy(t)
        assert e.tile1 == 8  # edge (0,1): same color same number
        assert e.loop1 == 4  # edges (1,2) and (0,2) cross colors
        assert e.tile2 == 0
        assert e.loop2 == 6
        assert e.copy_coupling == 0
        assert e.total == 18

    def test_copy_coupling_counts_doubly_monochrome_edges(self):
        spec = LatticeSpec(1, 3)
        t = Tiling(spec, [0, 0, 0], [0, 1, 2], [1, 1, 2], [0, 1, 0])
        e = classical_energy(t)
        # copy1 all same color (3 edges), copy2 same only on (0,1)
        assert e.copy_coupling == 1
