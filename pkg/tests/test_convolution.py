import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from fractlab import (BudgetError, DyadicMeasure, ParameterError, commute_check, convolve,
                      discretize, entropy, flattening_experiment, lq_norm, lq_power_sum,
                      self_power)
from fractlab.zoo import cantor_measure, lebesgue


def random_measure(rng, d, k, n=None):
    n = n or int(rng.integers(1, 40))
    return discretize(rng.random((n, d)) * rng.uniform(0.1, 2), rng.dirichlet(np.ones(n)), k)


def as_dict(mu):
    return {tuple(c): m for c, m in zip(mu.coords.tolist(), mu.masses.tolist())}


def assert_same(a, b, tol=1e-12):
    assert np.array_equal(a.coords, b.coords)
    np.testing.assert_allclose(a.masses, b.masses, rtol=0, atol=tol * max(a.masses.max(), 1e-300))


pairs = st.builds(
    lambda seed, d: tuple(random_measure(np.random.default_rng(seed), d, int(k))
                          for k in [np.random.default_rng(seed).integers(2, 8)] * 2),
    st.integers(0, 2**32 - 1), st.integers(1, 2),
)


class TestConvolve:
    def test_dirac_identity(self):
        nu = random_measure(np.random.default_rng(1), 2, 6)
        out = convolve(DyadicMeasure.dirac([0, 0], 6), nu)
        assert np.array_equal(out.coords, nu.coords)
        np.testing.assert_array_equal(out.masses, nu.masses)

    def test_two_cell_square(self):
        mu = DyadicMeasure.from_arrays([[0], [1]], [0.5, 0.5], 1)
        out = convolve(mu, mu)
        assert out.coords.ravel().tolist() == [0, 1, 2]
        assert out.masses.tolist() == [0.25, 0.5, 0.25]

    def test_bilinear_total(self):
        mu = DyadicMeasure.from_arrays([[0], [3]], [0.25, 0.25], 4)
        nu = DyadicMeasure.from_arrays([[1]], [0.5], 4)
        assert convolve(mu, nu).total == 0.25

    def test_matches_naive_sum(self):
        rng = np.random.default_rng(5)
        for d in (1, 2, 3):
            mu, nu = random_measure(rng, d, 5), random_measure(rng, d, 5)
            ref = oracles.naive_convolve(as_dict(mu), as_dict(nu))
            out = as_dict(convolve(mu, nu))
            assert out.keys() == ref.keys()
            for key in ref:
                assert out[key] == pytest.approx(ref[key], rel=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(pair=pairs)
    def test_direct_and_fft_agree(self, pair):
        mu, nu = pair
        a = convolve(mu, nu, method="direct")
        b = convolve(mu, nu, method="fft")
        # the transform path drops ringing below 1e-14 of the total, so
        # compare on the union of supports with an absolute tolerance
        da, db = as_dict(a), as_dict(b)
        for key in da.keys() | db.keys():
            assert abs(da.get(key, 0.0) - db.get(key, 0.0)) <= 1e-10 * a.masses.max()

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_commutative_and_associative(self, seed):
        rng = np.random.default_rng(seed)
        d, k = int(rng.integers(1, 3)), int(rng.integers(2, 7))
        a, b, c = (random_measure(rng, d, k) for _ in range(3))
        assert_same(convolve(a, b), convolve(b, a))
        assert_same(convolve(convolve(a, b), c), convolve(a, convolve(b, c)))

    @settings(max_examples=50, deadline=None)
    @given(pair=pairs, q=st.sampled_from([1.5, 2, 3, "inf"]))
    def test_young_and_entropy_monotone(self, pair, q):
        mu, nu = pair
        mu, nu = mu.normalized(), nu.normalized()
        out = convolve(mu, nu)
        assert lq_norm(out, q) <= lq_norm(nu, q) * (1 + 1e-12)
        assert entropy(out) >= entropy(nu) - 1e-12

    def test_auto_switches_to_fft(self):
        mu = lebesgue(1, 10)
        a = convolve(mu, mu, direct_threshold=0)
        b = convolve(mu, mu, method="direct")
        assert_same(a, b, tol=1e-10)

    def test_thread_count_does_not_change_fft(self):
        mu = cantor_measure(12)
        a = convolve(mu, mu, method="fft", threads=1)
        b = convolve(mu, mu, method="fft", threads=4)
        assert np.array_equal(a.coords, b.coords)
        assert np.array_equal(a.masses, b.masses)

    def test_errors(self):
        with pytest.raises(ParameterError):
            convolve(lebesgue(1, 3), lebesgue(1, 4))
        with pytest.raises(ParameterError):
            convolve(lebesgue(1, 3), lebesgue(1, 3), method="magic")
        far = DyadicMeasure.from_arrays([[0], [2**40]], [0.5, 0.5], 3)
        with pytest.raises(BudgetError):
            convolve(far, far, method="fft")


class TestSelfPower:
    def test_first_power_is_identity(self):
        mu = cantor_measure(8)
        assert self_power(mu, 1) is mu

    def test_square_is_convolution(self):
        mu = cantor_measure(10)
        assert_same(self_power(mu, 2), convolve(mu, mu))

    def test_odd_power_matches_sequential(self):
        mu = random_measure(np.random.default_rng(2), 1, 6)
        assert_same(self_power(mu, 3), convolve(convolve(mu, mu), mu))

    def test_cantor_square_flattens(self):
        mu = cantor_measure(12)
        sq = self_power(mu, 2)
        assert lq_power_sum(sq, 2) < lq_power_sum(mu, 2)
        assert lq_power_sum(sq, 2) == pytest.approx(0.00029465524249394637, rel=1e-9)

    def test_rejects_nonpositive(self):
        with pytest.raises(ParameterError):
            self_power(lebesgue(1, 2), 0)


class TestCommuteCheck:
    def test_lattice_diracs(self):
        assert commute_check(([0.25], [1.0]), ([0.5], [1.0]), 4) == 1.0

    def test_boundary_free_atoms(self):
        # quarter-cell offsets sum to half-cell offsets, away from every boundary
        pm = (np.arange(8) + 0.25) / 64
        pn = (np.arange(8) + 0.25) / 64
        w = np.full(8, 1 / 8)
        assert commute_check((pm, w), (pn, w), 6) == pytest.approx(1.0, rel=1e-12)

    def test_random_atoms_ratio_bounded(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            mu = (rng.random(100), rng.dirichlet(np.ones(100)))
            nu = (rng.random(100), rng.dirichlet(np.ones(100)))
            assert 0.25 <= commute_check(mu, nu, 10) <= 4


class TestFlattening:
    def test_lebesgue_is_already_flat(self):
        rep = flattening_experiment(lambda k: lebesgue(1, k), 2, range(6, 11), 3)
        for est in rep.dims:
            assert est.slope == pytest.approx(1.0, abs=0.01)
        # a bounded-factor loss, log2(3/2)/2 for the triangle, so eta decays like 1/k
        assert all(0 <= e * rep.eta_scale <= 0.5 * np.log2(1.5) + 1e-3 for e in rep.eta_hat)

    def test_dirac_stays_dirac(self):
        rep = flattening_experiment(lambda k: DyadicMeasure.dirac([0], k), 2, range(4, 9), 3)
        assert [est.slope for est in rep.dims] == [0.0, 0.0, 0.0]
        assert rep.eta_hat == [0.0, 0.0]

    def test_report_serializes(self):
        rep = flattening_experiment(cantor_measure, "inf", range(6, 9), 2)
        doc = rep.as_dict()
        assert doc["q"] == "inf"
        assert doc["n_values"] == [1, 2]
        assert len(doc["dims"]) == 2
