"""Problem instances: prime-based side lengths and the decision wrapper.

The side length carries the input string in its binary layout: n = 3p where
p is a prime whose most significant third of bits spells the input.  The
two-body interaction never changes with the input; only the lattice grows.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from rih.hamiltonian import build_site_term, term_hash, toy_plugs
from rih.lattice import LatticeSpec

MR_ROUNDS = 64  # composite escape probability below 4^-64
DEFAULT_TRIAL_BUDGET = 200_000

_SMALL_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


class TrialBudgetError(RuntimeError):
    """The randomized prime search ran out of attempts."""


def is_probable_prime(m, rounds=MR_ROUNDS, rng=None):
    """Miller-Rabin with independent uniform bases."""
    if m < 2:
        return False
    for q in _SMALL_PRIMES:
        if m % q == 0:
            return m == q
    d = m - 1
    s = (d & -d).bit_length() - 1
    d >>= s
    rng = rng if rng is not None else random.Random(0x5EED)
    for _ in range(rounds):
        a = rng.randrange(2, m - 1)
        x = pow(a, d, m)
        if x == 1 or x == m - 1:
            continue
        for _ in range(s - 1):
            x = x * x % m
            if x == m - 1:
                break
        else:
            return False
    return True


def _check_bits(x):
    if not x or set(x) - {"0", "1"}:
        raise ValueError(f"input must be a nonempty bit string, got {x!r}")
    if x[0] != "1":
        raise ValueError("input must have a leading 1 bit")


@dataclass(frozen=True)
class InstanceEncoding:
    """Side length n = 3p with the input spelled in p's top bits.

    p has exactly 3*len(x) bits; primality is established by the search that
    produced the encoding, not re-proved here.
    """

    x: str
    p: int
    n: int

    def __post_init__(self):
        _check_bits(self.x)
        bits = len(self.x)
        if self.p.bit_length() != 3 * bits:
            raise ValueError(
                f"p has {self.p.bit_length()} bits, layout wants {3 * bits}"
            )
        if self.p >> (2 * bits) != int(self.x, 2):
            raise ValueError("top third of p's bits does not spell the input")
        if self.n != 3 * self.p:
            raise ValueError("side length is not three times p")

    def primality_check(self, rounds=MR_ROUNDS, rng=None):
        return is_probable_prime(self.p, rounds, rng)

    def to_json_dict(self):
        return {"x": self.x, "p": self.p, "n": self.n}

    @classmethod
    def from_json_dict(cls, obj):
        return cls(x=obj["x"], p=obj["p"], n=obj["n"])


def f_search(x, seed=0, max_trials=DEFAULT_TRIAL_BUDGET):
    """Randomized search for a prime p whose top third of bits equals x.

    The low two thirds are redrawn on every failure; the final bit is pinned
    to 1 since every candidate is at least 3 bits long.  Deterministic for a
    given (x, seed).
    """
    _check_bits(x)
    bits = len(x)
    low_bits = 2 * bits
    hi = int(x, 2) << low_bits
    rng = random.Random(f"f-search:{seed}:{x}")
    for _ in range(max_trials):
        candidate = hi | rng.getrandbits(low_bits) | 1
        if is_probable_prime(candidate, MR_ROUNDS, rng):
            return InstanceEncoding(x=x, p=candidate, n=3 * candidate)
    raise TrialBudgetError(
        f"no prime with top bits {x} found in {max_trials} trials"
    )


def _poly_eval(coeffs, n):
    # lowest power first
    acc = 0.0
    for k, c in enumerate(coeffs):
        acc += c * n**k
    return acc


@dataclass(frozen=True)
class DecisionSpec:
    """One decision configuration: dimension, interaction choice, and the
    two threshold polynomials, plus the witness-quality polynomial used when
    reporting how tight the satisfiable side is."""

    r: int
    plug: str
    p_coeffs: tuple
    q_coeffs: tuple
    g_coeffs: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("dimension must be positive")
        for name in ("p_coeffs", "q_coeffs", "g_coeffs"):
            object.__setattr__(
                self, name, tuple(float(c) for c in getattr(self, name))
            )
        if not any(self.q_coeffs):
            raise ValueError("q must not be identically zero")

    def p_of(self, n):
        return _poly_eval(self.p_coeffs, n)

    def q_of(self, n):
        return _poly_eval(self.q_coeffs, n)

    def g_of(self, n):
        return _poly_eval(self.g_coeffs, n)

    def completeness_bound(self, n):
        """Satisfiable-side energy target: the witness value plus the
        residual allowed by the witness-quality polynomial."""
        return 4.0 * n**self.r * (self.r - 1) + 1.0 / self.g_of(n)

    @classmethod
    def main_configuration(cls, r, plug="zero", g_coeffs=(0.0, 0.0, 1.0)):
        # unit promise gap denominator: q(n) = 1
        p_coeffs = (0.0,) * r + (4.0 * (r - 1),)
        return cls(r=r, plug=plug, p_coeffs=p_coeffs, q_coeffs=(1.0,), g_coeffs=g_coeffs)

    def to_json_dict(self):
        return {
            "r": self.r,
            "plug": self.plug,
            "p_coeffs": list(self.p_coeffs),
            "q_coeffs": list(self.q_coeffs),
            "g_coeffs": list(self.g_coeffs),
        }

    @classmethod
    def from_json_dict(cls, obj):
        return cls(
            r=obj["r"],
            plug=obj["plug"],
            p_coeffs=tuple(obj["p_coeffs"]),
            q_coeffs=tuple(obj["q_coeffs"]),
            g_coeffs=tuple(obj.get("g_coeffs", (0.0, 0.0, 1.0))),
        )


def resolve_plug(plug):
    """Accept a plug object, a catalog name, or None for the trivial plug."""
    if plug is None:
        return toy_plugs()["zero"]
    if isinstance(plug, str):
        catalog = toy_plugs()
        if plug not in catalog:
            raise ValueError(f"unknown plug {plug!r}; choose from {sorted(catalog)}")
        return catalog[plug]
    return plug


@dataclass(frozen=True)
class ReducedInstance:
    encoding: InstanceEncoding
    lattice: LatticeSpec
    term: object

    def term_hash(self):
        return term_hash(self.term)


def reduction(x, r, plug="zero", seed=0, max_trials=DEFAULT_TRIAL_BUDGET):
    """Map an input string to a periodic lattice of side f(x) carrying the
    fixed two-body term.  The term depends on neither x nor r."""
    if r < 1:
        raise ValueError("dimension must be positive")
    enc = f_search(x, seed=seed, max_trials=max_trials)
    spec = LatticeSpec(r=r, n=enc.n, boundary="periodic")
    term = build_site_term(resolve_plug(plug))
    return ReducedInstance(encoding=enc, lattice=spec, term=term)


def verify_claims(profile="fast", coefficient_overrides=None, threads=None):
    """Run the acceptance criteria and return the suite report."""
    from rih.acceptance import run_criteria

    return run_criteria(
        profile=profile,
        coefficient_overrides=coefficient_overrides,
        threads=threads,
    )
