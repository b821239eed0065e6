import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from fractlab import (AffineSubspace, DyadicMeasure, InputError, ParameterError, anc_scan,
                      discretize, hyperplane_decay_fit, sqrt_friendly_check, tube_mass)
from fractlab.nonconc import loglog_fit, sample_hyperplanes, slab_masses
from fractlab.zoo import build_measure, lebesgue, line_measure

CC = {"kind": "product", "factors": [{"kind": "cantor"}, {"kind": "cantor"}]}
EPS = [2.0 ** -e for e in range(1, 7)]


@pytest.fixture(scope="module")
def cantor_square():
    return build_measure(CC, 12)


class TestAffineSubspace:
    def test_hyperplane_distance(self):
        W = AffineSubspace.hyperplane([0, 0.5], [0, 2])
        np.testing.assert_allclose(W.distance(np.array([[3.0, 0.5], [0.0, 1.5]])), [0.0, 1.0])
        np.testing.assert_allclose(W.normal(), [0, 1])

    def test_span_in_three_dimensions(self):
        L = AffineSubspace.from_span([0, 0, 0], [[1, 0, 0]])
        assert L.m == 1 and L.d == 3
        np.testing.assert_allclose(L.distance(np.array([[5.0, 3.0, 4.0]])), [5.0])

    def test_doubled(self):
        W = AffineSubspace.hyperplane([0.25, 0.25], [1, 1])
        V = W.doubled()
        np.testing.assert_allclose(V.point, [0.5, 0.5])
        assert V.distance(np.array([[1.0, 0.0]]))[0] == pytest.approx(0.0, abs=1e-15)


class TestTubeMass:
    def test_segment_is_full(self):
        mu = line_measure(8, 0.5)
        W = AffineSubspace.hyperplane([0, 0.5], [0, 1])
        assert tube_mass(mu, W, 0.01, [0.5, 0.5], 1.0) == pytest.approx(1.0)

    def test_lebesgue_slab_in_ball(self):
        mu = lebesgue(2, 8)
        W = AffineSubspace.hyperplane([0, 0.5], [0, 1])
        # slab of half-width 0.05 through the unit-diameter disc: about 0.1 area
        val = tube_mass(mu, W, 0.1, [0.5, 0.5], 0.5)
        assert val == pytest.approx(0.1, abs=2 * 2.0 ** -8 * 4)

    def test_cantor_square_slab_is_cantor_mass(self, cantor_square):
        W = AffineSubspace.hyperplane([0, 0], [0, 1])
        for j in range(1, 7):
            eps = 3.0 ** -j
            assert tube_mass(cantor_square, W, eps) == pytest.approx(
                oracles.cantor_interval_mass(0, eps), abs=1e-6)

    def test_monotone_in_eps_and_rho(self):
        rng = np.random.default_rng(0)
        mu = discretize(rng.random((300, 2)), np.full(300, 1 / 300), 8)
        W = AffineSubspace.hyperplane([0.3, 0.4], [1, 2])
        grid = [0.01, 0.05, 0.1, 0.3]
        for rho in (0.1, 0.3, 0.6):
            vals = [tube_mass(mu, W, e, [0.5, 0.5], rho) for e in grid]
            assert vals == sorted(vals)
        vals = [tube_mass(mu, W, 0.2, [0.5, 0.5], r) for r in (0.1, 0.2, 0.4, 0.8)]
        assert vals == sorted(vals)

    def test_slab_masses_agree(self, cantor_square):
        W = AffineSubspace.hyperplane([0.2, 0.1], [1, 3])
        np.testing.assert_allclose(slab_masses(cantor_square, W, EPS),
                                   [tube_mass(cantor_square, W, e) for e in EPS])

    def test_parameters(self):
        with pytest.raises(ParameterError):
            tube_mass(lebesgue(2, 3), AffineSubspace.hyperplane([0, 0], [0, 1]), 0)


class TestAncScan:
    def test_line_is_fully_concentrated(self):
        rep = anc_scan(line_measure(8), 0.25, 1, 6, eps_grid=[0.5, 0.25, 0.125, 0.0625])
        assert all(v == pytest.approx(1.0) for _, v in rep.delta_curve)
        assert rep.exceptional_fraction == 1.0

    def test_lebesgue_has_no_exceptional_points(self):
        rep = anc_scan(lebesgue(2, 8), 0.25, 1, 6, eps_grid=[0.5, 0.25, 0.125, 0.0625])
        assert rep.exceptional_fraction == 0.0
        # grid inflation is part of the reported effective width
        for (e, v), e_eff in zip(rep.delta_curve, rep.eps_effective):
            assert v <= 4 * e_eff

    @pytest.mark.parametrize("theta,r", [(0.1, 1), (0.5, 2)])
    def test_lebesgue_any_parameters(self, theta, r):
        rep = anc_scan(lebesgue(2, 8), theta, r, 3, direction_samples=16, n_points=8)
        assert rep.exceptional_fraction == 0.0

    def test_rotated_cantor_square_decays(self):
        spec = dict(CC, rotate=30)
        rep = anc_scan(build_measure(spec, 12), 0.25, 1, 6, eps_grid=EPS)
        values = [v for _, v in rep.delta_curve]
        assert values == sorted(values)
        assert rep.fitted_power == pytest.approx(oracles.LOG2_LOG3, abs=0.05)

    def test_deterministic_across_threads(self):
        mu = build_measure(CC, 9)
        a = anc_scan(mu, 0.25, 1, 4, threads=1).as_dict()
        b = anc_scan(mu, 0.25, 1, 4, threads=4).as_dict()
        assert a == b

    def test_sampled_offsets(self):
        mu = lebesgue(2, 7)
        exact = anc_scan(mu, 0.25, 1, 3, n_points=4, direction_samples=8)
        sampled = anc_scan(mu, 0.25, 1, 3, n_points=4, direction_samples=8, offset_samples=9)
        for (_, a), (_, b) in zip(exact.delta_curve, sampled.delta_curve):
            assert b <= a + 1e-12

    def test_parameters(self):
        with pytest.raises(ParameterError):
            anc_scan(lebesgue(2, 4), 1.5, 1, 4)
        with pytest.raises(ParameterError):
            anc_scan(lebesgue(2, 4), 0.5, 0, 4)


class TestHyperplaneDecay:
    def test_line_has_zero_exponent(self):
        mu = line_measure(10, 0.5)
        W = AffineSubspace.hyperplane(mu.anchors()[0], [0, 1])
        assert hyperplane_decay_fit(mu, [W], EPS).kappa == 0.0

    def test_lebesgue_exponent_one(self):
        family = [AffineSubspace.hyperplane([0.5, 0.5], e) for e in np.eye(2)]
        assert hyperplane_decay_fit(lebesgue(2, 10), family, EPS).kappa == pytest.approx(1, abs=0.05)

    def test_cantor_square_triadic_grid(self, cantor_square):
        # on triadic widths the slab masses are exact powers of two
        family = [AffineSubspace.hyperplane([0, 0], e) for e in np.eye(2)]
        eps = [3.0 ** -j for j in range(1, 7)]
        fit = hyperplane_decay_fit(cantor_square, family, eps)
        assert fit.kappa == pytest.approx(oracles.LOG2_LOG3, abs=1e-6)

    def test_restricted_family_is_no_worse(self, cantor_square):
        full = sample_hyperplanes(cantor_square, 16, 4, seed=3)
        vertical = [W for W in full if abs(W.normal()[1]) < 0.5] or full[:1]
        k_full = hyperplane_decay_fit(cantor_square, full, EPS).kappa
        k_sub = hyperplane_decay_fit(cantor_square, vertical, EPS).kappa
        assert k_sub >= k_full

    def test_censoring(self):
        slope, _, _, used = loglog_fit([0.5, 0.25, 0.125, 0.0625], [0.5, 0, 0, 0])
        assert math.isinf(slope) and used == 1

    def test_grid_validation(self):
        W = [AffineSubspace.hyperplane([0, 0], [0, 1])]
        with pytest.raises(ParameterError):
            hyperplane_decay_fit(lebesgue(2, 4), W, [0.5, 0.25, 0.1, 0.01])
        with pytest.raises(ParameterError):
            hyperplane_decay_fit(lebesgue(2, 4), W, [0.5, 0.25])
        with pytest.raises(ParameterError):
            hyperplane_decay_fit(lebesgue(2, 4), [], EPS)


class TestSqrtFriendly:
    def test_lebesgue(self):
        rep = sqrt_friendly_check(lebesgue(2, 8), AffineSubspace.hyperplane([0.5, 0.5], [0, 1]), EPS)
        assert rep.passed
        assert rep.alpha == pytest.approx(1.0, abs=0.15)
        for e, m in zip(rep.eps, rep.mass_W):
            assert m <= 2 * e ** 0.5

    def test_dirac_off_hyperplane_is_vacuous(self):
        rep = sqrt_friendly_check(DyadicMeasure.dirac([10, 10], 8),
                                  AffineSubspace.hyperplane([0.5, 0], [1, 0]), EPS)
        assert rep.passed
        assert rep.mass_V == [0.0] * len(EPS) and rep.mass_W == [0.0] * len(EPS)

    def test_cantor_square(self):
        mu = build_measure(CC, 10)
        eps = [3.0 ** -j for j in range(1, 6)]
        rep = sqrt_friendly_check(mu, AffineSubspace.hyperplane([0, 0], [0, 1]), eps)
        assert rep.passed
        assert rep.alpha == pytest.approx(2 * oracles.LOG2_LOG3, abs=0.1)
        assert rep.kappa_W == pytest.approx(oracles.LOG2_LOG3, abs=0.1)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_always_passes(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 40))
        mu = discretize(rng.random((n, 2)), rng.dirichlet(np.ones(n)), int(rng.integers(4, 8)))
        t = rng.uniform(0, math.pi)
        W = AffineSubspace.hyperplane(rng.random(2), [math.cos(t), math.sin(t)])
        assert sqrt_friendly_check(mu, W, EPS).passed


def test_dimension_mismatch_rejected():
    with pytest.raises((InputError, ParameterError, ValueError)):
        AffineSubspace.hyperplane([0, 0, 0], [0, 1])
