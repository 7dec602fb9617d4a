import random

import pytest
from hypothesis import given, settings, strategies as st

from rih.hamiltonian import term_hash
from rih.instance import (
    DecisionSpec,
    InstanceEncoding,
    TrialBudgetError,
    f_search,
    is_probable_prime,
    reduction,
    resolve_plug,
)
from rih.lattice import LatticeSpec


def slow_is_prime(m):
    if m < 2:
        return False
    k = 2
    while k * k <= m:
        if m % k == 0:
            return False
        k += 1
    return True


class TestPrimality:
    def test_matches_trial_division_below_ten_thousand(self):
        rng = random.Random(1)
        for m in range(10_000):
            assert is_probable_prime(m, rounds=16, rng=rng) == slow_is_prime(m), m

    @pytest.mark.parametrize("m", [561, 1105, 1729, 6601, 8911, 2821])
    def test_carmichael_numbers_rejected(self, m):
        assert not is_probable_prime(m, rng=random.Random(2))

    @pytest.mark.parametrize("m", [2**31 - 1, 2**61 - 1, 4547337172376300111955330758342147474062293202868155909489])
    def test_large_primes_accepted(self, m):
        assert is_probable_prime(m, rng=random.Random(3))


class TestFSearch:
    def test_shortest_input(self):
        enc = f_search("1", seed=0)
        # the only 3-bit candidates with top bit set are 4..7; the primes are 5 and 7
        assert enc.p in (5, 7)
        assert enc.n == 3 * enc.p

    def test_two_bit_input(self):
        enc = f_search("10", seed=0)
        assert enc.p.bit_length() == 6
        assert enc.p >> 4 == 0b10
        assert slow_is_prime(enc.p)

    def test_deterministic_given_seed(self):
        assert f_search("1011", seed=9) == f_search("1011", seed=9)

    def test_seed_can_change_outcome(self):
        outcomes = {f_search("1", seed=s).p for s in range(30)}
        assert outcomes == {5, 7}

    @pytest.mark.parametrize("bad", ["", "0", "011", "12", "abc"])
    def test_bad_inputs_rejected(self, bad):
        with pytest.raises(ValueError):
            f_search(bad)

    def test_budget_surfaced(self):
        with pytest.raises(TrialBudgetError):
            f_search("1", max_trials=0)

    @settings(max_examples=60, deadline=None)
    @given(
        tail=st.text(alphabet="01", max_size=11),
        seed=st.integers(min_value=0, max_value=2**20),
    )
    def test_bit_layout_invariant(self, tail, seed):
        x = "1" + tail
        enc = f_search(x, seed=seed)
        assert enc.n == 3 * enc.p
        assert enc.p.bit_length() == 3 * len(x)
        assert enc.p >> (2 * len(x)) == int(x, 2)
        assert enc.primality_check(rounds=64, rng=random.Random(4))


class TestInstanceEncoding:
    def test_layout_validated(self):
        with pytest.raises(ValueError):
            InstanceEncoding(x="1", p=11, n=33)  # 4 bits, layout wants 3
        with pytest.raises(ValueError):
            InstanceEncoding(x="11", p=0b100111, n=3 * 0b100111)  # top bits 10
        with pytest.raises(ValueError):
            InstanceEncoding(x="1", p=5, n=16)

    def test_json_round_trip(self):
        enc = f_search("110", seed=1)
        assert InstanceEncoding.from_json_dict(enc.to_json_dict()) == enc


class TestDecisionSpec:
    def test_main_configuration(self):
        ds = DecisionSpec.main_configuration(2)
        assert ds.q_coeffs == (1.0,)
        assert ds.p_of(3) == 36.0
        assert ds.q_of(17) == 1.0
        assert ds.completeness_bound(3) == pytest.approx(36.0 + 1 / 9)
        three = DecisionSpec.main_configuration(3)
        assert three.p_of(3) == 8.0 * 27

    def test_zero_q_rejected(self):
        with pytest.raises(ValueError):
            DecisionSpec(r=2, plug="zero", p_coeffs=(1.0,), q_coeffs=(0.0,))

    def test_json_round_trip(self):
        ds = DecisionSpec(r=3, plug="afm", p_coeffs=(1, 2), q_coeffs=(1,), g_coeffs=(0, 5))
        assert DecisionSpec.from_json_dict(ds.to_json_dict()) == ds


class TestReduction:
    def test_shortest_input_geometry(self):
        red = reduction("1", r=2, plug="zero", seed=0)
        assert red.lattice == LatticeSpec(r=2, n=red.encoding.n, boundary="periodic")
        assert red.lattice.n in (15, 21)

    def test_term_constant_across_r(self):
        a = reduction("1", r=2, seed=0)
        b = reduction("1", r=3, seed=0)
        assert a.term_hash() == b.term_hash()

    def test_term_constant_across_inputs(self):
        a = reduction("1", r=2, seed=0)
        b = reduction("10", r=2, seed=0)
        assert term_hash(a.term) == term_hash(b.term)

    def test_plug_resolution(self):
        assert resolve_plug(None).name == "zero"
        assert resolve_plug("afm").name == "afm"
        with pytest.raises(ValueError):
            resolve_plug("nope")
        with pytest.raises(ValueError):
            reduction("1", r=0)
