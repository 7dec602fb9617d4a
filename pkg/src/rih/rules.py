"""Translation-invariant 2D tile rule sets with exhaustive enumeration.

Rule sets are oriented: a horizontal prohibition (left, right) says nothing
about (right, left), and no reflection closure is ever applied.  Grids store
the bottom row first, so "above" always means the next row index up.

The subtile lift replaces every tile with a named 3x3 block whose placement
rules force blocks to assemble rigidly and align across block borders; the
original adjacency prohibitions transfer to the facing border subtiles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

RULESET_SCHEMA = "tile-rules/1"
GRID_SCHEMA = "grid-tiling/1"
ALPHABET_CAP = 64
ROW_CAP = 2_000_000

BLOCK_POSITIONS = ("c", "l", "r", "t", "b", "tl", "tr", "bl", "br")
# horizontal mirror: left-ish positions trade places with right-ish ones
MIRROR_H = {
    "c": "c", "l": "r", "r": "l", "t": "t", "b": "b",
    "tl": "tr", "tr": "tl", "bl": "br", "br": "bl",
}


class RuleSetError(ValueError):
    pass


class DecodeError(ValueError):
    pass


@dataclass(frozen=True)
class TileRuleSet:
    alphabet: tuple
    forbidden_h: frozenset  # ordered (left, right)
    forbidden_v: frozenset  # ordered (below, above)
    boundary: str = "periodic"

    def __post_init__(self):
        names = tuple(self.alphabet)
        if len(set(names)) != len(names):
            raise RuleSetError("alphabet has repeated names")
        if not names:
            raise RuleSetError("alphabet is empty")
        if self.boundary not in ("periodic", "open"):
            raise RuleSetError(f"unknown boundary {self.boundary!r}")
        members = set(names)
        for kind, pairs in (("forbidden_h", self.forbidden_h), ("forbidden_v", self.forbidden_v)):
            for p in pairs:
                if len(p) != 2 or p[0] not in members or p[1] not in members:
                    raise RuleSetError(f"{kind} pair {p!r} outside the alphabet")
        object.__setattr__(self, "alphabet", names)
        object.__setattr__(self, "forbidden_h", frozenset(map(tuple, self.forbidden_h)))
        object.__setattr__(self, "forbidden_v", frozenset(map(tuple, self.forbidden_v)))

    def to_json_dict(self):
        return {
            "schema": RULESET_SCHEMA,
            "alphabet": list(self.alphabet),
            "forbidden_h": sorted(map(list, self.forbidden_h)),
            "forbidden_v": sorted(map(list, self.forbidden_v)),
            "boundary": self.boundary,
        }

    @classmethod
    def from_json_dict(cls, obj):
        return cls(
            alphabet=tuple(obj["alphabet"]),
            forbidden_h=frozenset(map(tuple, obj.get("forbidden_h", ()))),
            forbidden_v=frozenset(map(tuple, obj.get("forbidden_v", ()))),
            boundary=obj.get("boundary", "periodic"),
        )


@dataclass(frozen=True)
class GridTiling:
    n: int
    rows: tuple  # rows[0] is the bottom row; rows[y][x] is a tile name

    def __post_init__(self):
        rows = tuple(tuple(r) for r in self.rows)
        if len(rows) != self.n or any(len(r) != self.n for r in rows):
            raise RuleSetError(f"grid is not {self.n}x{self.n}")
        object.__setattr__(self, "rows", rows)

    def to_json_dict(self):
        return {"schema": GRID_SCHEMA, "n": self.n, "rows": [list(r) for r in self.rows]}

    @classmethod
    def from_json_dict(cls, obj):
        return cls(n=obj["n"], rows=tuple(map(tuple, obj["rows"])))

    @classmethod
    def filled(cls, n, tile):
        return cls(n, tuple((tile,) * n for _ in range(n)))


def check_tiling(rs, g):
    """All adjacency violations of g, in row-major order from the bottom.

    Each violation is (kind, (x, y), (first, second)) where (x, y) is the
    left cell for kind "h" and the lower cell for kind "v".
    """
    members = set(rs.alphabet)
    for row in g.rows:
        for t in row:
            if t not in members:
                raise RuleSetError(f"tile {t!r} outside the alphabet")
    n = g.n
    wrap = rs.boundary == "periodic"
    out = []
    for y in range(n):
        for x in range(n):
            a = g.rows[y][x]
            if x + 1 < n or wrap:
                b = g.rows[y][(x + 1) % n]
                if (a, b) in rs.forbidden_h:
                    out.append(("h", (x, y), (a, b)))
            if y + 1 < n or wrap:
                b = g.rows[(y + 1) % n][x]
                if (a, b) in rs.forbidden_v:
                    out.append(("v", (x, y), (a, b)))
    return out


@dataclass(frozen=True)
class EnumerationResult:
    tilings: tuple
    truncated: bool
    valid_rows: int

    def __iter__(self):
        return iter(self.tilings)

    def __len__(self):
        return len(self.tilings)


def _index_rules(rs):
    k = len(rs.alphabet)
    if k > ALPHABET_CAP:
        raise RuleSetError(f"alphabet of {k} exceeds the enumeration cap {ALPHABET_CAP}")
    pos = {t: i for i, t in enumerate(rs.alphabet)}
    allowed_h = np.ones((k, k), dtype=bool)
    allowed_v = np.ones((k, k), dtype=bool)
    for a, b in rs.forbidden_h:
        allowed_h[pos[a], pos[b]] = False
    for a, b in rs.forbidden_v:
        allowed_v[pos[a], pos[b]] = False
    return pos, allowed_h, allowed_v


def _valid_rows(n, k, allowed_h, wrap):
    """Depth-first generation of horizontally consistent rows, in lex order."""
    succ = [np.flatnonzero(allowed_h[a]).tolist() for a in range(k)]
    rows = []
    stack = [(t,) for t in reversed(range(k))]
    while stack:
        prefix = stack.pop()
        if len(prefix) == n:
            if not wrap or allowed_h[prefix[-1], prefix[0]]:
                rows.append(prefix)
                if len(rows) > ROW_CAP:
                    raise RuleSetError("row space exceeds the enumeration cap")
            continue
        for t in reversed(succ[prefix[-1]]):
            stack.append(prefix + (t,))
    return rows


def enumerate_valid(rs, n, limit=None, require_present=None, threads=None):
    """Exactly the valid n-by-n tilings, by row transfer with memoized row
    compatibility, emitted in lexicographic row order.  A limit truncates the
    output and sets the flag; require_present keeps only tilings containing
    every listed tile."""
    if n < 1:
        raise RuleSetError("grid side must be positive")
    pos, allowed_h, allowed_v = _index_rules(rs)
    k = len(rs.alphabet)
    wrap = rs.boundary == "periodic"
    rows = _valid_rows(n, k, allowed_h, wrap)
    required = frozenset(require_present or ())
    missing = required - set(rs.alphabet)
    if missing:
        raise RuleSetError(f"required tiles {sorted(missing)} outside the alphabet")
    R = len(rows)
    names = rs.alphabet
    if R == 0:
        return EnumerationResult((), False, 0)
    arr = np.array(rows, dtype=np.int16)
    if R <= 4096:
        compat = allowed_v[arr[:, None, :], arr[None, :, :]].all(axis=2)
        succ_rows = [np.flatnonzero(compat[i]).tolist() for i in range(R)]
    else:
        cache = {}

        def row_succ(i):
            if i not in cache:
                cache[i] = np.flatnonzero(
                    allowed_v[arr[i][None, :], arr].all(axis=1)
                ).tolist()
            return cache[i]

        succ_rows = None

    def successors(i):
        return succ_rows[i] if succ_rows is not None else row_succ(i)

    results = []
    truncated = False
    budget = None if limit is None else limit + 1

    def emit(stack):
        tile_rows = tuple(tuple(names[t] for t in rows[i]) for i in stack)
        g = GridTiling(n, tile_rows)
        if required and not required <= {t for r in tile_rows for t in r}:
            return False
        results.append(g)
        return budget is not None and len(results) >= budget

    def dfs(stack):
        if len(stack) == n:
            if wrap and not (
                allowed_v[arr[stack[-1]], arr[stack[0]]].all()
            ):
                return False
            return emit(stack)
        for j in successors(stack[-1]) if stack else range(R):
            if dfs(stack + [j]):
                return True
        return False

    if n == 1:
        for i in range(R):
            if wrap and not allowed_v[arr[i], arr[i]].all():
                continue
            if emit([i]):
                break
    else:
        first_rows = list(range(R))
        if threads and threads > 1:
            from concurrent.futures import ThreadPoolExecutor

            # branches are independent; merge preserves lex order
            def branch(i):
                saved = []
                stack = [i]

                def local_dfs(s):
                    if len(s) == n:
                        if wrap and not allowed_v[arr[s[-1]], arr[s[0]]].all():
                            return
                        tile_rows = tuple(tuple(names[t] for t in rows[q]) for q in s)
                        saved.append(GridTiling(n, tile_rows))
                        return
                    for j in successors(s[-1]):
                        local_dfs(s + [j])

                local_dfs(stack)
                return saved

            with ThreadPoolExecutor(max_workers=threads) as pool:
                for part in pool.map(branch, first_rows):
                    for g in part:
                        if required and not required <= {
                            t for r in g.rows for t in r
                        }:
                            continue
                        results.append(g)
                        if budget is not None and len(results) >= budget:
                            break
                    if budget is not None and len(results) >= budget:
                        break
        else:
            for i in first_rows:
                if dfs([i]):
                    break
    if budget is not None and len(results) >= budget:
        results = results[: limit]
        truncated = True
    return EnumerationResult(tuple(results), truncated, R)


def subtile(tile, position):
    if position not in BLOCK_POSITIONS:
        raise RuleSetError(f"unknown block position {position!r}")
    return f"{tile}:{position}"


def split_subtile(name):
    tile, _, position = name.rpartition(":")
    if position not in BLOCK_POSITIONS or not tile:
        raise DecodeError(f"{name!r} is not a block subtile name")
    return tile, position


def lift_3x3(rs):
    """Blow each tile up into a named 3x3 block.

    Placement rules pin the eight border subtiles around their center (with
    reciprocals), alignment rules let blocks meet only edge-to-matching-edge,
    and every original prohibition transfers to the facing border subtiles.
    """
    lifted = tuple(subtile(t, p) for t in rs.alphabet for p in BLOCK_POSITIONS)
    universe = set(lifted)
    fh = set()
    fv = set()

    def only_right_of(left, allowed):
        fh.update((left, z) for z in universe - set(allowed))

    def only_left_of(right, allowed):
        fh.update((z, right) for z in universe - set(allowed))

    def only_above_of(below, allowed):
        fv.update((below, z) for z in universe - set(allowed))

    def only_below_of(above, allowed):
        fv.update((z, above) for z in universe - set(allowed))

    for m in rs.alphabet:
        c, l, r = subtile(m, "c"), subtile(m, "l"), subtile(m, "r")
        t, b = subtile(m, "t"), subtile(m, "b")
        tl, tr, bl, br = (subtile(m, p) for p in ("tl", "tr", "bl", "br"))
        only_above_of(c, {t})
        only_below_of(t, {c})
        only_below_of(c, {b})
        only_above_of(b, {c})
        only_left_of(c, {l})
        only_right_of(l, {c})
        only_right_of(c, {r})
        only_left_of(r, {c})
        only_left_of(t, {tl})
        only_right_of(tl, {t})
        only_right_of(t, {tr})
        only_left_of(tr, {t})
        only_left_of(b, {bl})
        only_right_of(bl, {b})
        only_right_of(b, {br})
        only_left_of(br, {b})

    left_types = {subtile(m, "l") for m in rs.alphabet}
    right_types = {subtile(m, "r") for m in rs.alphabet}
    top_types = {subtile(m, "t") for m in rs.alphabet}
    bottom_types = {subtile(m, "b") for m in rs.alphabet}
    for name in left_types:
        only_left_of(name, right_types)
    for name in right_types:
        only_right_of(name, left_types)
    for name in top_types:
        only_above_of(name, bottom_types)
    for name in bottom_types:
        only_below_of(name, top_types)

    for a, b2 in rs.forbidden_h:
        fh.add((subtile(a, "r"), subtile(b2, "l")))
    for a, b2 in rs.forbidden_v:
        fv.add((subtile(a, "t"), subtile(b2, "b")))

    return TileRuleSet(lifted, frozenset(fh), frozenset(fv), rs.boundary)


# block layout around a center, as (dx, dy) with +y pointing up
_BLOCK_OFFSETS = {
    "c": (0, 0), "l": (-1, 0), "r": (1, 0), "t": (0, 1), "b": (0, -1),
    "tl": (-1, 1), "tr": (1, 1), "bl": (-1, -1), "br": (1, -1),
}


def decode_lifted(g, original_alphabet):
    """Recover the original tiling and block offset from a lifted grid.

    The centers must sit on one 3-periodic sublattice and every surrounding
    cell must carry the matching border subtile of that center's tile.
    """
    n3 = g.n
    if n3 % 3:
        raise DecodeError("lifted grid side must be a multiple of three")
    n = n3 // 3
    originals = set(original_alphabet)
    centers = {}
    for y in range(n3):
        for x in range(n3):
            tile, p = split_subtile(g.rows[y][x])
            if tile not in originals:
                raise DecodeError(f"subtile of unknown tile {tile!r}")
            if p == "c":
                centers[(x, y)] = tile
    if len(centers) != n * n:
        raise DecodeError(f"expected {n * n} centers, found {len(centers)}")
    offsets = {(x % 3, y % 3) for x, y in centers}
    if len(offsets) != 1:
        raise DecodeError(f"centers sit on {len(offsets)} distinct sublattices")
    (ox, oy) = offsets.pop()
    rows = []
    for j in range(n):
        row = []
        for i in range(n):
            cx, cy = ox + 3 * i, oy + 3 * j
            m = centers[(cx, cy)]
            for p, (dx, dy) in _BLOCK_OFFSETS.items():
                got = g.rows[(cy + dy) % n3][(cx + dx) % n3]
                if got != subtile(m, p):
                    raise DecodeError(
                        f"block at ({cx},{cy}) broken: found {got!r} at offset {p}"
                    )
            row.append(m)
        rows.append(tuple(row))
    return GridTiling(n, tuple(rows)), (ox, oy)


def encode_lifted(g, offset=(1, 1)):
    """Inverse of decode_lifted for a chosen block offset."""
    ox, oy = offset
    if not (0 <= ox < 3 and 0 <= oy < 3):
        raise RuleSetError("offset components must be in 0..2")
    n3 = 3 * g.n
    rows = [[None] * n3 for _ in range(n3)]
    for j in range(g.n):
        for i in range(g.n):
            m = g.rows[j][i]
            cx, cy = ox + 3 * i, oy + 3 * j
            for p, (dx, dy) in _BLOCK_OFFSETS.items():
                rows[(cy + dy) % n3][(cx + dx) % n3] = subtile(m, p)
    return GridTiling(n3, tuple(tuple(r) for r in rows))


def reflect_h(rs, rename=None):
    """Mirror a rule set left-to-right: horizontal pairs swap order, vertical
    pairs keep theirs.  rename maps tile names (block subtiles swap their
    sided positions under MIRROR_H via reflect_subtile_name)."""
    rename = rename or (lambda t: t)
    return TileRuleSet(
        tuple(rename(t) for t in rs.alphabet),
        frozenset((rename(b), rename(a)) for a, b in rs.forbidden_h),
        frozenset((rename(a), rename(b)) for a, b in rs.forbidden_v),
        rs.boundary,
    )


def reflect_subtile_name(name):
    tile, p = split_subtile(name)
    return subtile(tile, MIRROR_H[p])


LEFT_BC = "left_bc"
BOTTOM_BC = "bottom_bc"
RIGHT_BC = "right_bc"
BLANK = "blank"

# rule semantics note: as literally stated, nothing constrains blank-blank
# adjacency, so the all-blank grid is admitted alongside the frame; callers
# that want the frame alone should require the bottom tile to be present
FRAME_ADMITS_ALL_BLANK = True


def open_bc_frame_ruleset():
    """The open-boundary frame tile set: a marked bottom row between two end
    markers, blank everywhere above."""
    alphabet = (LEFT_BC, BOTTOM_BC, RIGHT_BC, BLANK)
    fh = set()
    fv = set()
    every = set(alphabet)
    # nothing to the left of or below the left end
    fh.update((z, LEFT_BC) for z in every)
    fv.update((z, LEFT_BC) for z in every)
    # nothing below the bottom marker
    fv.update((z, BOTTOM_BC) for z in every)
    # nothing to the right of or below the right end
    fh.update((RIGHT_BC, z) for z in every)
    fv.update((z, RIGHT_BC) for z in every)
    # the ends meet only the bottom marker sideways
    fh.update((LEFT_BC, z) for z in every - {BOTTOM_BC})
    fh.update((z, RIGHT_BC) for z in every - {BOTTOM_BC})
    # blank may not flank the bottom marker
    fh.add((BLANK, BOTTOM_BC))
    fh.add((BOTTOM_BC, BLANK))
    # only blank sits above any marked tile
    for t in (LEFT_BC, BOTTOM_BC, RIGHT_BC):
        fv.update((t, z) for z in every - {BLANK})
    return TileRuleSet(alphabet, frozenset(fh), frozenset(fv), "open")


def frame_configuration(n):
    """The intended frame: marked bottom row between the two ends, blanks
    above."""
    if n < 2:
        raise RuleSetError("frame needs side length at least 2")
    bottom = (LEFT_BC,) + (BOTTOM_BC,) * (n - 2) + (RIGHT_BC,)
    return GridTiling(n, (bottom,) + tuple((BLANK,) * n for _ in range(n - 1)))


def load_ruleset(path):
    with open(path) as fh:
        return TileRuleSet.from_json_dict(json.load(fh))


def load_grid(path):
    with open(path) as fh:
        return GridTiling.from_json_dict(json.load(fh))
