"""Classical tile assignments on the lattice: rules, classification, energies.

A tile is a (color, number) pair with color in {red, yellow, blue} and number
in {0, 1, 2}; every site carries one tile per copy.  The adjacency rules are:

  rule 1: equal colors must carry different numbers;
  rule 2: different colors must carry equal numbers.

Numbers induce directed edges along the 0 -> 1 -> 2 -> 0 cycle, which is what
the qubit-pairing demands and the embedded two-dimensional terms key off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rih.lattice import LatticeSpec, coord_diff_count, edge_index_array, edges, neighbors

COLORS = ("red", "yellow", "blue")  # fixed index mapping: red=0, yellow=1, blue=2
RULE_SAME_COLOR_SAME_NUMBER = 1
RULE_DIFF_COLOR_DIFF_NUMBER = 2

TILING_SCHEMA = "tiling/1"


class Tiling:
    """Per-site tiles for two copies, stored as int arrays in lex site order."""

    def __init__(self, spec, colors1, numbers1, colors2=None, numbers2=None):
        self.spec = spec
        N = spec.num_sites
        if colors2 is None:
            colors2 = np.zeros(N, dtype=np.int8)
        if numbers2 is None:
            numbers2 = np.zeros(N, dtype=np.int8)
        arrays = []
        for name, a in (
            ("colors1", colors1),
            ("numbers1", numbers1),
            ("colors2", colors2),
            ("numbers2", numbers2),
        ):
            a = np.asarray(a, dtype=np.int8)
            if a.shape != (N,):
                raise ValueError(f"{name} must have shape ({N},), got {a.shape}")
            if a.min() < 0 or a.max() > 2:
                raise ValueError(f"{name} entries must lie in 0..2")
            arrays.append(a.copy())
        self.colors1, self.numbers1, self.colors2, self.numbers2 = arrays

    def colors(self, copy):
        return self.colors1 if copy == 1 else self.colors2

    def numbers(self, copy):
        return self.numbers1 if copy == 1 else self.numbers2

    def tile(self, u, copy):
        i = self.spec.site_index(u)
        return (int(self.colors(copy)[i]), int(self.numbers(copy)[i]))

    def permuted(self, site_perm):
        """Relabeled tiling: new site j carries what old site site_perm[j] carried."""
        p = np.asarray(site_perm)
        return Tiling(
            self.spec,
            self.colors1[p],
            self.numbers1[p],
            self.colors2[p],
            self.numbers2[p],
        )

    def __eq__(self, other):
        return (
            isinstance(other, Tiling)
            and self.spec == other.spec
            and (self.colors1 == other.colors1).all()
            and (self.numbers1 == other.numbers1).all()
            and (self.colors2 == other.colors2).all()
            and (self.numbers2 == other.numbers2).all()
        )

    def to_json_dict(self):
        copies = []
        for copy in (1, 2):
            c, m = self.colors(copy), self.numbers(copy)
            copies.append([[int(a), int(b)] for a, b in zip(c, m)])
        return {"schema": TILING_SCHEMA, "spec": self.spec.to_json_dict(), "copies": copies}

    @classmethod
    def from_json_dict(cls, obj):
        spec = LatticeSpec.from_json_dict(obj["spec"])
        copies = obj["copies"]
        if len(copies) not in (1, 2):
            raise ValueError("tiling JSON must carry one or two copies")
        c1 = [t[0] for t in copies[0]]
        n1 = [t[1] for t in copies[0]]
        if len(copies) == 2:
            c2 = [t[0] for t in copies[1]]
            n2 = [t[1] for t in copies[1]]
        else:
            c2 = n2 = None
        return cls(spec, c1, n1, c2, n2)


def rule_violations(t, copy):
    """Edges whose tile pair breaks a rule, as (edge, rule_id) in edge order."""
    out = []
    c, m = t.colors(copy), t.numbers(copy)
    spec = t.spec
    for u, v in edges(spec):
        iu, iv = spec.site_index(u), spec.site_index(v)
        if c[iu] == c[iv]:
            if m[iu] == m[iv]:
                out.append(((u, v), RULE_SAME_COLOR_SAME_NUMBER))
        elif m[iu] != m[iv]:
            out.append(((u, v), RULE_DIFF_COLOR_DIFF_NUMBER))
    return out


def same_color_degree(t, copy, u):
    """How many neighbors of u share u's color in the given copy."""
    spec = t.spec
    c = t.colors(copy)
    iu = spec.site_index(u)
    return sum(1 for v in neighbors(u, spec) if c[spec.site_index(v)] == c[iu])


def _same_color_degrees(t, copy):
    spec = t.spec
    c = t.colors(copy)
    deg = np.zeros(spec.num_sites, dtype=np.int64)
    for a, b in edge_index_array(spec):
        if c[a] == c[b]:
            deg[a] += 1
            deg[b] += 1
    return deg


@dataclass(frozen=True)
class ClassificationFlags:
    looped: bool
    has_turn: bool
    uniformly_directed: bool
    direction: int | None
    numbered_consistently: bool

    def to_json_dict(self):
        return {
            "looped": self.looped,
            "has_turn": self.has_turn,
            "uniformly_directed": self.uniformly_directed,
            "direction": self.direction,
            "numbered_consistently": self.numbered_consistently,
        }


def has_turn(t, copy):
    """True iff some same-colored path u - v - w bends: both steps are lattice
    edges but u and w differ in two coordinates."""
    spec = t.spec
    c = t.colors(copy)
    for v in spec.sites():
        iv = spec.site_index(v)
        same = [
            u
            for u in neighbors(v, spec)
            if c[spec.site_index(u)] == c[iv]
        ]
        for i in range(len(same)):
            for j in range(i + 1, len(same)):
                if coord_diff_count(same[i], same[j]) == 2:
                    return True
    return False


def same_color_loops(t, copy):
    """Connected components of the same-color adjacency, as site-index lists."""
    spec = t.spec
    c = t.colors(copy)
    N = spec.num_sites
    adj = [[] for _ in range(N)]
    for a, b in edge_index_array(spec):
        if c[a] == c[b]:
            adj[a].append(b)
            adj[b].append(a)
    seen = np.zeros(N, dtype=bool)
    comps = []
    for s in range(N):
        if seen[s] or not adj[s]:
            continue
        stack, comp = [s], []
        seen[s] = True
        while stack:
            x = stack.pop()
            comp.append(x)
            for y in adj[x]:
                if not seen[y]:
                    seen[y] = True
                    stack.append(y)
        comps.append(sorted(comp))
    return comps


def classify(t, copy):
    """Structural flags for one copy, computed against the literal definitions.

    looped: every site has exactly two same-colored neighbors.  has_turn: some
    same-colored bent path exists.  uniformly_directed: looped, turn-free, and
    all loops run along one common dimension.  numbered_consistently: on top of
    that, the number depends only on the coordinate along that dimension.
    """
    spec = t.spec
    deg = _same_color_degrees(t, copy)
    looped = bool((deg == 2).all())
    turn = has_turn(t, copy)

    uniformly_directed = False
    direction = None
    if looped and not turn:
        dims = set()
        ok = True
        for comp in same_color_loops(t, copy):
            comp_sites = [spec.index_site(i) for i in comp]
            in_comp = set(comp)
            comp_dims = set()
            for u in comp_sites:
                for v in neighbors(u, spec):
                    if spec.site_index(v) in in_comp:
                        for d in range(spec.r):
                            if u[d] != v[d]:
                                comp_dims.add(d)
            if len(comp_dims) != 1 or len(comp) != spec.n:
                ok = False
                break
            dims |= comp_dims
        if ok and len(dims) == 1:
            uniformly_directed = True
            direction = dims.pop()

    numbered_consistently = False
    if uniformly_directed:
        m = t.numbers(copy)
        groups = {}
        for u in spec.sites():
            groups.setdefault(u[direction], set()).add(int(m[spec.site_index(u)]))
        numbered_consistently = all(len(vals) == 1 for vals in groups.values())

    return ClassificationFlags(
        looped=looped,
        has_turn=turn,
        uniformly_directed=uniformly_directed,
        direction=direction,
        numbered_consistently=numbered_consistently,
    )


def striped_witness(spec, copy1_dir=0, copy2_dir=1):
    """Low-energy tiling: per copy, stripes colored by the off-axis coordinate
    sum mod 3 and numbered by the on-axis coordinate mod 3.

    Each copy's loops (periodic) or chains (open) run along its own dimension;
    the two dimensions must differ.  Requires n divisible by 3 so the numbering
    closes around periodic loops.
    """
    if spec.n % 3 != 0:
        raise ValueError(f"striped witness needs n divisible by 3, got n={spec.n}")
    if copy1_dir == copy2_dir:
        raise ValueError("the two copies must run along different dimensions")
    for d in (copy1_dir, copy2_dir):
        if not 0 <= d < spec.r:
            raise ValueError(f"direction {d} out of range for r={spec.r}")

    def build(d):
        cs, ms = [], []
        for u in spec.sites():
            cs.append(sum(u[i] for i in range(spec.r) if i != d) % 3)
            ms.append(u[d] % 3)
        return cs, ms

    c1, n1 = build(copy1_dir)
    c2, n2 = build(copy2_dir)
    return Tiling(spec, c1, n1, c2, n2)


@dataclass(frozen=True)
class Slot:
    """One qubit slot: a site's sigma-1 (incoming) or sigma-2 (outgoing) qubit."""

    site: int
    copy: int
    port: int  # 1 or 2

    def label(self):
        return f"s{self.site}.c{self.copy}.sigma{self.port}"


@dataclass(frozen=True)
class Demand:
    """One pairing demand: tail's sigma-2 must form an EPR pair with head's sigma-1."""

    tail: Slot
    head: Slot
    edge: tuple


@dataclass
class EprDemandGraph:
    """Pairing demands of one copy, plus the slots they touch.

    Demands follow the number cycle alone: an edge whose numbers step by +1 in
    direction u -> v demands (u.sigma2, v.sigma1), whatever the colors say.
    Same-color equal-number edges produce a rule-violation marker instead.
    """

    copy: int
    demands: list = field(default_factory=list)
    rule_conflicts: list = field(default_factory=list)

    def slot_degrees(self):
        deg = {}
        for d in self.demands:
            for s in (d.tail, d.head):
                deg[s] = deg.get(s, 0) + 1
        return deg

    def overloaded_slots(self):
        return sorted(
            (s for s, k in self.slot_degrees().items() if k > 1),
            key=lambda s: (s.site, s.copy, s.port),
        )


def epr_demand_graph(t, copy):
    g = EprDemandGraph(copy=copy)
    spec = t.spec
    c, m = t.colors(copy), t.numbers(copy)
    for u, v in edges(spec):
        iu, iv = spec.site_index(u), spec.site_index(v)
        step = (int(m[iv]) - int(m[iu])) % 3
        if step == 0:
            if c[iu] == c[iv]:
                g.rule_conflicts.append((u, v))
            continue
        if step == 1:
            tail, head = iu, iv
        else:
            tail, head = iv, iu
        g.demands.append(
            Demand(
                tail=Slot(tail, copy, 2),
                head=Slot(head, copy, 1),
                edge=(u, v),
            )
        )
    return g


@dataclass(frozen=True)
class ClassicalEnergy:
    """Diagonal energy of a tile sector, broken down by summand."""

    tile1: int
    tile2: int
    loop1: int
    loop2: int
    copy_coupling: int

    @property
    def total(self):
        return self.tile1 + self.tile2 + self.loop1 + self.loop2 + self.copy_coupling

    def to_json_dict(self):
        return {
            "tile": [self.tile1, self.tile2],
            "loop": [self.loop1, self.loop2],
            "copy_coupling": self.copy_coupling,
            "total": self.total,
        }


def classical_energy(t):
    """Tile penalties (8 each), loop penalties (2 per different-color edge per
    copy), and the copy-coupling count (1 per edge same-colored in both copies)."""
    spec = t.spec
    ei = edge_index_array(spec)
    c1, m1, c2, m2 = t.colors1, t.numbers1, t.colors2, t.numbers2
    same1 = c1[ei[:, 0]] == c1[ei[:, 1]]
    same2 = c2[ei[:, 0]] == c2[ei[:, 1]]
    eqn1 = m1[ei[:, 0]] == m1[ei[:, 1]]
    eqn2 = m2[ei[:, 0]] == m2[ei[:, 1]]
    viol1 = int((same1 & eqn1).sum() + (~same1 & ~eqn1).sum())
    viol2 = int((same2 & eqn2).sum() + (~same2 & ~eqn2).sum())
    return ClassicalEnergy(
        tile1=8 * viol1,
        tile2=8 * viol2,
        loop1=2 * int((~same1).sum()),
        loop2=2 * int((~same2).sum()),
        copy_coupling=int((same1 & same2).sum()),
    )


def h1lb_bound(t, copy):
    """Counting lower bound on one copy's classical-plus-pairing energy.

    2*|edges| - sum_u n_u + 4 * sum_u floor(n_u / 3), with n_u the same-color
    degree.  On a periodic lattice |edges| = r * n^r, recovering the closed
    form 2 n^r r - sum n_u + 4 sum floor(n_u/3).
    """
    deg = _same_color_degrees(t, copy)
    E = len(edges(t.spec))
    return 2 * E - int(deg.sum()) + 4 * int((deg // 3).sum())


def handshake_check(t, copy):
    """sum_u n_u equals twice the same-color edge count; returns both sides."""
    deg = _same_color_degrees(t, copy)
    c = t.colors(copy)
    ei = edge_index_array(t.spec)
    same = int((c[ei[:, 0]] == c[ei[:, 1]]).sum())
    return int(deg.sum()), 2 * same
