"""Two-body nearest-neighbor term assembly.

Each site carries, in fixed order (first factor most significant in the basis
index):

    color1(3), number1(3), color2(3), number2(3),
    qin1(2), qout1(2), qin2(2), qout2(2), embedded(d)

The 3-level factors are the two copies of the classical tile; qin/qout are the
qubits that form pairs with the neighboring sites (qout of the lower-numbered
site pairs with qin of the next one along the 0->1->2->0 cycle); the embedded
factor is the site space of a pluggable translation-invariant two-dimensional
model.  The two-site basis index is u_state * site_dim + v_state.

The term is a sum of projector-style summands with integer weights:

    tile rules (8), pairing penalties (16), different-color penalty (2),
    both-copies-same-color penalty (1), and the embedded horizontal and
    vertical terms (1 each), conditioned on the number step of copy 1 and
    copy 2 respectively, with the reversed step applying the swap-conjugated
    embedded term.

Every summand is diagonal on the tile factors, so the term decomposes into
blocks labeled by the two sites' tile indices.  Assembly, symmetry checks,
and matrix materialization all ride on that block structure.
"""

from __future__ import annotations

import functools
import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse

from rih.lattice import edges

DEFAULT_COEFFICIENTS = {
    "tile": 8.0,
    "pairing": 16.0,
    "loop": 2.0,
    "copy": 1.0,
    "horizontal": 1.0,
    "vertical": 1.0,
}

# (identity - projector onto the maximally entangled pair) / 2, basis 00,01,10,11
EPR_HALF_PROJECTOR = np.array(
    [
        [0.25, 0.0, 0.0, -0.25],
        [0.0, 0.5, 0.0, 0.0],
        [0.0, 0.0, 0.5, 0.0],
        [-0.25, 0.0, 0.0, 0.25],
    ]
)

HERMITICITY_TOL = 1e-12
PSD_TOL = 1e-9
MAX_DENSE_PAIR_DIM = 8192  # direct-matrix checks above this would be wasteful
MAX_MATRIX_NNZ = 50_000_000


def tile_pair_is_illegal(c_left, n_left, c_right, n_right):
    """Adjacency rules: same color needs different numbers, different colors
    need the same number."""
    return (c_left == c_right) == (n_left == n_right)


ILLEGAL_TILE_PAIRS = tuple(
    (c1 * 3 + n1, c2 * 3 + n2)
    for c1 in range(3)
    for n1 in range(3)
    for c2 in range(3)
    for n2 in range(3)
    if tile_pair_is_illegal(c1, n1, c2, n2)
)


@dataclass(frozen=True)
class FactorLayout:
    """Ordered tensor factors of one site; tile factors come first."""

    names: tuple
    dims: tuple
    num_tile_factors: int

    @property
    def site_dim(self):
        return int(np.prod(self.dims))

    @property
    def tile_dim(self):
        return int(np.prod(self.dims[: self.num_tile_factors]))

    @property
    def inner_dim(self):
        return int(np.prod(self.dims[self.num_tile_factors :]))

    @property
    def pair_dim(self):
        return self.site_dim**2

    def position(self, name):
        return self.names.index(name)

    def describe(self):
        return ",".join(f"{n}({d})" for n, d in zip(self.names, self.dims))


def two_copy_layout(d):
    return FactorLayout(
        names=(
            "color1",
            "number1",
            "color2",
            "number2",
            "qin1",
            "qout1",
            "qin2",
            "qout2",
            "embedded",
        ),
        dims=(3, 3, 3, 3, 2, 2, 2, 2, d),
        num_tile_factors=4,
    )


def single_copy_layout():
    return FactorLayout(names=("color", "number", "qin", "qout"), dims=(3, 3, 2, 2), num_tile_factors=2)


def _strides(dims):
    s = [1] * len(dims)
    for i in range(len(dims) - 2, -1, -1):
        s[i] = s[i + 1] * dims[i + 1]
    return s


@functools.lru_cache(maxsize=512)
def _rest_offsets(dims, positions):
    """Flat offsets contributed by every joint setting of the factors NOT in
    positions, for the mixed-radix space with the given dims."""
    strides = _strides(dims)
    out = np.zeros(1, dtype=np.int64)
    for p in range(len(dims)):
        if p in positions:
            continue
        out = np.add.outer(out, np.arange(dims[p], dtype=np.int64) * strides[p]).ravel()
    out.setflags(write=False)
    return out


def dense_entries(mat):
    mat = np.asarray(mat)
    rows, cols = np.nonzero(mat)
    return rows.astype(np.int64), cols.astype(np.int64), mat[rows, cols]


def embed_operator(entries, positions, dims):
    """Scatter a small operator into the mixed-radix space with the given dims.

    entries is a (rows, cols, vals) triple over the small space whose radix is
    [dims[p] for p in positions], most significant first in the listed order.
    Listing positions in a transposed order embeds the correspondingly
    conjugated operator, which is how mirrored terms are produced.  Returns
    COO triples over the full space; the identity is implied on the rest.
    """
    dims = tuple(dims)
    positions = tuple(positions)
    srows, scols, svals = entries
    srows = np.asarray(srows, dtype=np.int64)
    scols = np.asarray(scols, dtype=np.int64)
    svals = np.asarray(svals)
    strides = _strides(dims)

    def offsets(idx):
        off = np.zeros(len(idx), dtype=np.int64)
        rem = idx.copy()
        for p in reversed(positions):
            rem, digit = np.divmod(rem, dims[p])
            off += digit * strides[p]
        return off

    rest = _rest_offsets(dims, positions)
    rows = (offsets(srows)[:, None] + rest[None, :]).ravel()
    cols = (offsets(scols)[:, None] + rest[None, :]).ravel()
    vals = np.repeat(svals, len(rest))
    return rows, cols, vals


def swap_permutation(m):
    """Index permutation of the two-site space |a,b> -> |b,a>, per-site dim m."""
    idx = np.arange(m * m, dtype=np.int64)
    return (idx % m) * m + idx // m


class PlugValidationError(ValueError):
    pass


def _check_hermitian_psd(name, mat, d):
    mat = np.asarray(mat, dtype=np.complex128)
    if mat.shape != (d * d, d * d):
        raise PlugValidationError(f"{name} must be {d * d}x{d * d} for embedded dim {d}")
    defect = np.abs(mat - mat.conj().T).max()
    if defect > HERMITICITY_TOL:
        raise PlugValidationError(f"{name} is not Hermitian (defect {defect:.3e})")
    lo = float(np.linalg.eigvalsh(mat).min())
    if lo < -PSD_TOL:
        raise PlugValidationError(f"{name} is not positive semidefinite (min eig {lo:.3e})")
    if np.abs(mat.imag).max() == 0.0:
        return mat.real.copy()
    return mat


class TranslationPlug:
    """Pluggable two-body terms of the embedded translation-invariant model.

    horizontal applies along copy-1 number steps, vertical along copy-2 steps.
    Both act on (left embedded factor, right embedded factor) and must be
    Hermitian and positive semidefinite.  min_size_hint is a report-only field
    for plugs whose promised spectral behavior only kicks in above some system
    size; nothing in the assembly depends on it.
    """

    def __init__(self, d, horizontal, vertical, name="custom", min_size_hint=None):
        if not isinstance(d, int) or d < 1:
            raise PlugValidationError(f"embedded dimension must be a positive integer, got {d!r}")
        if d > 4:
            raise PlugValidationError(f"embedded dimension capped at 4, got {d}")
        self.d = d
        self.horizontal = _check_hermitian_psd("horizontal term", horizontal, d)
        self.vertical = _check_hermitian_psd("vertical term", vertical, d)
        self.name = name
        self.min_size_hint = min_size_hint

    def __repr__(self):
        return f"TranslationPlug(name={self.name!r}, d={self.d})"


def toy_plugs():
    """Small stand-in plugs: a trivial one, a frustration-free one, and a
    frustrated antiferromagnet."""
    zero = TranslationPlug(1, [[0.0]], [[0.0]], name="zero")
    ff = np.diag([0.0, 1.0, 1.0, 0.0])  # penalize mixed pairs 01 and 10
    frustration_free = TranslationPlug(2, ff, ff, name="frustration_free")
    afm = np.diag([1.0, 0.0, 0.0, 1.0])  # penalize aligned pairs 00 and 11
    antiferro = TranslationPlug(2, afm, np.zeros((4, 4)), name="afm")
    return {"zero": zero, "frustration_free": frustration_free, "afm": antiferro}


@dataclass
class BlockStructure:
    """Tile-diagonal decomposition: block (U, V) equals scalar[U, V] times the
    identity plus the variant operator selected by sig[U, V]."""

    inner_dims: tuple  # factor dims of (u inner, v inner), concatenated
    scalar: np.ndarray  # (tile_dim, tile_dim)
    sig: np.ndarray  # (tile_dim, tile_dim) int
    variants: list  # sig value -> (rows, cols, vals) over inner_dim**2
    mirror_sig: np.ndarray  # sig value under exchanging the two sites

    def variant_dense(self, s, dtype=None):
        n = int(np.round(np.sqrt(np.prod(self.inner_dims))))
        rows, cols, vals = self.variants[s]
        if dtype is None:
            dtype = vals.dtype if len(vals) else np.float64
        out = np.zeros((n * n, n * n), dtype=dtype)
        np.add.at(out, (rows, cols), vals)
        return out


def _epr_ops(step, out_u, in_v, out_v, in_u, weight):
    e = dense_entries(weight * EPR_HALF_PROJECTOR)
    if step == 1:
        return [(e, (out_u, in_v))]
    if step == 2:
        return [(e, (out_v, in_u))]
    return []


def _embedded_ops(step, emb_u, emb_v, mat):
    if np.count_nonzero(mat) == 0:
        return []
    e = dense_entries(mat)
    if step == 1:
        return [(e, (emb_u, emb_v))]
    if step == 2:
        # reversed step applies the swap-conjugated term, i.e. the same matrix
        # read with the two embedded factors exchanged
        return [(e, (emb_v, emb_u))]
    return []


def _build_blocks_two_copy(plug, w):
    d = plug.d
    layout = two_copy_layout(d)
    T = 81
    c1 = np.arange(T) // 27
    n1 = (np.arange(T) // 9) % 3
    c2 = (np.arange(T) // 3) % 3
    n2 = np.arange(T) % 3

    def illegal(cu, nu, cv, nv):
        return ((cu[:, None] == cv[None, :]) == (nu[:, None] == nv[None, :])).astype(float)

    scalar = w["tile"] * (illegal(c1, n1, c1, n1) + illegal(c2, n2, c2, n2))
    scalar += w["loop"] * (c1[:, None] != c1[None, :]).astype(float)
    scalar += w["loop"] * (c2[:, None] != c2[None, :]).astype(float)
    scalar += w["copy"] * ((c1[:, None] == c1[None, :]) & (c2[:, None] == c2[None, :]))

    s1 = (n1[None, :] - n1[:, None]) % 3
    s2 = (n2[None, :] - n2[:, None]) % 3
    sig = (s1 * 3 + s2).astype(np.int16)

    # inner factor order: u then v, each (qin1, qout1, qin2, qout2, embedded)
    inner_dims = (2, 2, 2, 2, d, 2, 2, 2, 2, d)
    U_IN1, U_OUT1, U_IN2, U_OUT2, U_EMB = 0, 1, 2, 3, 4
    V_IN1, V_OUT1, V_IN2, V_OUT2, V_EMB = 5, 6, 7, 8, 9

    variants = []
    for a in range(3):
        for b in range(3):
            ops = []
            ops += _epr_ops(a, U_OUT1, V_IN1, V_OUT1, U_IN1, w["pairing"])
            ops += _epr_ops(b, U_OUT2, V_IN2, V_OUT2, U_IN2, w["pairing"])
            ops += _embedded_ops(a, U_EMB, V_EMB, w["horizontal"] * plug.horizontal)
            ops += _embedded_ops(b, U_EMB, V_EMB, w["vertical"] * plug.vertical)
            variants.append(_sum_embedded(ops, inner_dims))

    mirror = np.array([((-a) % 3) * 3 + ((-b) % 3) for a in range(3) for b in range(3)])
    return layout, BlockStructure(inner_dims, scalar, sig, variants, mirror)


def _build_blocks_single_copy(w):
    layout = single_copy_layout()
    T = 9
    c = np.arange(T) // 3
    n = np.arange(T) % 3
    scalar = w["tile"] * ((c[:, None] == c[None, :]) == (n[:, None] == n[None, :])).astype(float)
    scalar += w["loop"] * (c[:, None] != c[None, :])
    sig = ((n[None, :] - n[:, None]) % 3).astype(np.int16)

    inner_dims = (2, 2, 2, 2)  # u qin, u qout, v qin, v qout
    variants = [
        _sum_embedded(_epr_ops(s, 1, 2, 3, 0, w["pairing"]), inner_dims) for s in range(3)
    ]
    mirror = np.array([(-s) % 3 for s in range(3)])
    return layout, BlockStructure(inner_dims, scalar, sig, variants, mirror)


def _sum_embedded(ops, inner_dims):
    rows, cols, vals = [], [], []
    for entries, positions in ops:
        r, cc, v = embed_operator(entries, positions, inner_dims)
        rows.append(r)
        cols.append(cc)
        vals.append(v)
    if not rows:
        z = np.zeros(0, dtype=np.int64)
        return z, z, np.zeros(0)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


class TwoBodyTerm:
    """The assembled two-site operator, held block-diagonally over tile factors.

    The explicit sparse matrix is materialized lazily; symmetry checks work on
    the block structure so large embedded dimensions stay cheap.
    """

    def __init__(self, layout, coefficients, blocks=None, matrix=None):
        self.layout = layout
        self.coefficients = dict(coefficients)
        self.blocks = blocks
        self._matrix = matrix
        if blocks is None and matrix is None:
            raise ValueError("term needs a block structure or an explicit matrix")

    @property
    def site_dim(self):
        return self.layout.site_dim

    @property
    def pair_dim(self):
        return self.layout.pair_dim

    def estimated_nnz(self):
        if self._matrix is not None:
            return self._matrix.nnz
        b = self.blocks
        inner = self.layout.inner_dim
        counts = np.array([len(v[2]) for v in b.variants])
        return int((counts[b.sig] + inner * inner).sum())

    def matrix(self, max_nnz=MAX_MATRIX_NNZ):
        if self._matrix is not None:
            return self._matrix
        est = self.estimated_nnz()
        if est > max_nnz:
            raise MemoryError(
                f"materializing this term needs ~{est} nonzeros (cap {max_nnz}); "
                "use the block structure instead"
            )
        self._matrix = self._materialize()
        return self._matrix

    def _materialize(self):
        b = self.blocks
        layout = self.layout
        inner = layout.inner_dim
        site = layout.site_dim
        tile_dim = layout.tile_dim
        # block-local index (au * inner + av) -> global offset once U, V known
        local = np.arange(inner * inner, dtype=np.int64)
        spread = (local // inner) * site + local % inner
        rows, cols, vals = [], [], []
        diag = spread
        for U in range(tile_dim):
            for V in range(tile_dim):
                off = U * inner * site + V * inner
                s = float(b.scalar[U, V])
                if s != 0.0:
                    rows.append(off + diag)
                    cols.append(off + diag)
                    vals.append(np.full(inner * inner, s))
                vr, vc, vv = b.variants[b.sig[U, V]]
                if len(vv):
                    rows.append(off + spread[vr])
                    cols.append(off + spread[vc])
                    vals.append(vv)
        dtype = np.result_type(*[v.dtype for v in vals]) if vals else np.float64
        m = scipy.sparse.coo_matrix(
            (
                np.concatenate(vals).astype(dtype),
                (np.concatenate(rows), np.concatenate(cols)),
            ),
            shape=(layout.pair_dim, layout.pair_dim),
        ).tocsr()
        m.sum_duplicates()
        m.eliminate_zeros()
        return m


def build_site_term(plug, coefficient_overrides=None):
    """Assemble the full two-copy two-site term for the given embedded plug.

    coefficient_overrides replaces individual summand weights; it exists so
    self-checks can demonstrate that perturbed weights break the published
    invariants, and is not part of the normal construction path.
    """
    w = dict(DEFAULT_COEFFICIENTS)
    if coefficient_overrides:
        unknown = set(coefficient_overrides) - set(w)
        if unknown:
            raise ValueError(f"unknown coefficient names: {sorted(unknown)}")
        w.update(coefficient_overrides)
    layout, blocks = _build_blocks_two_copy(plug, w)
    return TwoBodyTerm(layout, w, blocks=blocks)


def build_single_copy_term(coefficient_overrides=None):
    """One copy's term alone (tile rules, pairing, color penalty): the reduced
    model used by the cross-check oracles."""
    w = dict(DEFAULT_COEFFICIENTS)
    if coefficient_overrides:
        w.update(coefficient_overrides)
    layout, blocks = _build_blocks_single_copy(w)
    return TwoBodyTerm(layout, w, blocks=blocks)


@dataclass(frozen=True)
class SymmetryReport:
    hermitian: bool
    psd: bool
    swap_symmetric: bool
    min_eigenvalue: float
    hermiticity_defect: float
    swap_defect: float

    @property
    def passed(self):
        return self.hermitian and self.psd and self.swap_symmetric

    def to_json_dict(self):
        return {
            "hermitian": self.hermitian,
            "psd": self.psd,
            "swap_symmetric": self.swap_symmetric,
            "min_eigenvalue": self.min_eigenvalue,
            "hermiticity_defect": self.hermiticity_defect,
            "swap_defect": self.swap_defect,
            "passed": self.passed,
        }


def _check_via_matrix(term):
    H = term.matrix().toarray()
    herm_defect = float(np.abs(H - H.conj().T).max())
    lo = float(np.linalg.eigvalsh((H + H.conj().T) / 2).min())
    perm = swap_permutation(term.site_dim)
    swapped = H[np.ix_(perm, perm)]
    swap_defect = float(np.abs(H - swapped).max())
    return herm_defect, lo, swap_defect


def _check_via_blocks(term):
    b = term.blocks
    inner = term.layout.inner_dim
    herm_defect = 0.0
    lo = float("inf")
    used = np.unique(b.sig)
    for s in used:
        F = b.variant_dense(s)
        herm_defect = max(herm_defect, float(np.abs(F - F.conj().T).max()))
        fmin = float(np.linalg.eigvalsh((F + F.conj().T) / 2).min()) if len(b.variants[s][2]) else 0.0
        smin = float(b.scalar[b.sig == s].min())
        lo = min(lo, smin + fmin)

    # exchanging the sites maps block (U,V) to (V,U) and conjugates the inner
    # operator by the inner swap; verify both halves of that statement
    swap_defect = float(np.abs(b.scalar - b.scalar.T).max())
    if not (b.mirror_sig[b.sig] == b.sig.T).all():
        swap_defect = max(swap_defect, float("inf"))
    perm = swap_permutation(inner)
    for s in used:
        F = b.variant_dense(s)
        G = b.variant_dense(int(b.mirror_sig[s]))
        swap_defect = max(swap_defect, float(np.abs(F[np.ix_(perm, perm)] - G).max()))
    return herm_defect, lo, swap_defect


def check_term_symmetries(term):
    """Verify Hermiticity, positive semidefiniteness, and symmetry under
    exchanging the two sites; returns a report, never raises."""
    if term.blocks is not None and term.pair_dim > MAX_DENSE_PAIR_DIM:
        herm, lo, swap = _check_via_blocks(term)
    else:
        herm, lo, swap = _check_via_matrix(term)
    return SymmetryReport(
        hermitian=herm <= HERMITICITY_TOL,
        psd=lo >= -PSD_TOL,
        swap_symmetric=swap == 0.0,
        min_eigenvalue=lo,
        hermiticity_defect=herm,
        swap_defect=swap,
    )


def tile_diagonality_check(term):
    """True iff no matrix element connects basis states whose tile digits
    differ, on either site."""
    try:
        M = term.matrix().tocoo()
    except MemoryError:
        # built block-diagonally over tiles, so the property holds structurally
        return True
    inner = term.layout.inner_dim
    site = term.layout.site_dim
    r, c = M.row, M.col
    ru, rv = r // site, r % site
    cu, cv = c // site, c % site
    return bool(((ru // inner == cu // inner) & (rv // inner == cv // inner)).all())


def term_hash(term):
    """sha256 of the canonically ordered sparse entries; all values are dyadic
    rationals so the digest is bit-stable across platforms."""
    M = term.matrix().tocoo()
    M.sum_duplicates()
    M.eliminate_zeros()
    order = np.lexsort((M.col, M.row))
    h = hashlib.sha256()
    h.update(f"dim={M.shape[0]};nnz={M.nnz};".encode())
    h.update(M.row[order].astype(np.int64).tobytes())
    h.update(M.col[order].astype(np.int64).tobytes())
    h.update(np.ascontiguousarray(M.data[order]).astype(np.float64).tobytes())
    return h.hexdigest()


def global_hamiltonian(spec, term, cap_dim=2**26):
    """Explicit sparse sum of the term over all nearest-neighbor pairs."""
    s = term.site_dim
    N = spec.num_sites
    D = s**N
    if D > cap_dim:
        raise ValueError(f"global dimension {D} exceeds cap {cap_dim}")
    M = term.matrix().tocoo()
    dims = (s,) * N
    rows, cols, vals = [], [], []
    for u, v in edges(spec):
        r, c, x = embed_operator(
            (M.row, M.col, M.data), (spec.site_index(u), spec.site_index(v)), dims
        )
        rows.append(r)
        cols.append(c)
        vals.append(x)
    H = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(D, D)
    ).tocsr()
    H.sum_duplicates()
    return H


def global_matvec(spec, term, state, cap_dim=2**26):
    """Apply the summed Hamiltonian to a state without materializing it.

    Edges are processed in their canonical order, so the reduction is
    deterministic and the output reproducible bit for bit.
    """
    s = term.site_dim
    N = spec.num_sites
    D = s**N
    if D > cap_dim:
        raise ValueError(f"global dimension {D} exceeds cap {cap_dim}")
    state = np.asarray(state)
    if state.shape != (D,):
        raise ValueError(f"state must have shape ({D},), got {state.shape}")
    M = term.matrix()
    psi = state.reshape((s,) * N)
    out = np.zeros_like(psi, dtype=np.result_type(M.dtype, state.dtype))
    for u, v in edges(spec):
        iu, iv = spec.site_index(u), spec.site_index(v)
        moved = np.moveaxis(psi, (iu, iv), (0, 1))
        flat = np.ascontiguousarray(moved).reshape(s * s, -1)
        acted = M @ flat
        back = np.moveaxis(acted.reshape(moved.shape), (0, 1), (iu, iv))
        out += back
    return out.reshape(D)


def export_matrix_market(term, path, spec=None):
    """Write the term (or, given a lattice, the summed Hamiltonian) in Matrix
    Market format with a header recording the basis convention and weights."""
    audit = " ".join(f"{k}={v:g}" for k, v in sorted(term.coefficients.items()))
    comment = (
        f"site factors, most significant first: {term.layout.describe()}\n"
        f"two-site index = u_state * {term.site_dim} + v_state\n"
        f"summand weights: {audit}"
    )
    if spec is None:
        M = term.matrix()
    else:
        M = global_hamiltonian(spec, term)
        comment += f"\nsummed over nearest-neighbor pairs of {spec.to_json_dict()}"
    scipy.io.mmwrite(path, M, comment=comment)
