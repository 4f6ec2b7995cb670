"""Tests for closed-form moment evolution."""

from __future__ import annotations

import math

import numpy as np
import pytest

from robust_ensembles.core.ensemble import member_state
from robust_ensembles.core.exceptions import InvalidParameterError
from robust_ensembles.core.models import EnsembleParams, GaussianState, ModelParams
from robust_ensembles.core.moments import (
    covariance_ellipse,
    decay_factors,
    evolve_moments,
    moment_rates,
    params_from_physical,
    purity_of,
    tilt_angle,
)
from robust_ensembles.core.oracles import integrate_moments, rates_residual


def _as_tuple(state: GaussianState) -> tuple[float, ...]:
    return (state.mean_x, state.mean_y, state.var_x, state.cov_xy, state.var_y)


def _random_member(rng: np.random.Generator) -> GaussianState:
    ensemble = EnsembleParams(beta=float(rng.uniform(-2, 2)), gamma=float(rng.uniform(0.05, 1)))
    return member_state(ensemble, float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2)))


class TestDecayFactors:
    """decay_factors stays accurate for tiny times."""

    def test_series_branch(self) -> None:
        w, z, t_minus_z = decay_factors(1e-10)
        assert w == pytest.approx(1.0 - 1e-10, rel=1e-15)
        assert z == pytest.approx(1e-10, rel=1e-9)
        assert t_minus_z == pytest.approx(5e-21, rel=1e-9)

    @pytest.mark.parametrize("t", [0.999e-3, 1e-3, 1.001e-3])
    def test_branches_agree_at_cutoff(self, t: float) -> None:
        expected = t * t / 2 - t**3 / 6 + t**4 / 24
        assert decay_factors(t)[2] == pytest.approx(expected, rel=1e-9)

    def test_large_time(self) -> None:
        w, z, t_minus_z = decay_factors(5.0)
        assert w == pytest.approx(math.exp(-5.0))
        assert z + w == pytest.approx(1.0)
        assert t_minus_z == pytest.approx(4.0 + math.exp(-5.0))


class TestEvolveMoments:
    """evolve_moments reproduces known solutions."""

    def test_zero_time_is_identity(self) -> None:
        state = GaussianState(0.3, -0.2, 0.5, 0.1, 2.02)
        assert evolve_moments(state, ModelParams(chi=5.0), 0.0) is state

    def test_negative_time_rejected(self) -> None:
        with pytest.raises(InvalidParameterError):
            evolve_moments(GaussianState.coherent(), ModelParams(chi=0.0), -1.0)

    def test_non_finite_time_rejected(self) -> None:
        with pytest.raises(InvalidParameterError):
            evolve_moments(GaussianState.coherent(), ModelParams(chi=0.0), math.inf)

    def test_coherent_free_phase_diffusion(self, free_params: ModelParams) -> None:
        state = evolve_moments(GaussianState.coherent(1.0, 0.0), free_params, 2.0)
        assert state.var_x == pytest.approx(1.0)
        assert state.cov_xy == pytest.approx(0.0, abs=1e-15)
        assert state.var_y == pytest.approx(5.0)
        assert state.mean_x == pytest.approx(math.exp(-2.0))

    def test_excess_phase_noise(self) -> None:
        state = evolve_moments(GaussianState.coherent(), ModelParams(chi=0.0, nu=3.0), 2.0)
        assert state.var_y == pytest.approx(1.0 + 5.0 * 2.0)

    def test_stationary_limit(self) -> None:
        params = ModelParams(chi=3.0)
        state = evolve_moments(GaussianState(0.0, 0.0, 0.2, 0.4, 5.8), params, 60.0)
        assert state.var_x == pytest.approx(1.0)
        assert state.cov_xy == pytest.approx(-3.0)

    def test_self_energy_shears_mean(self) -> None:
        state = evolve_moments(GaussianState.coherent(1.0, 0.0), ModelParams(chi=2.0), 1.0)
        assert state.mean_y == pytest.approx(-2.0 * (1.0 - math.exp(-1.0)))

    def test_semigroup(self, rng: np.random.Generator) -> None:
        for _ in range(20):
            state = _random_member(rng)
            params = ModelParams(chi=float(rng.uniform(0, 20)), nu=float(rng.uniform(0, 5)))
            t1, t2 = (float(v) for v in rng.uniform(0, 2, size=2))
            two_step = evolve_moments(evolve_moments(state, params, t1), params, t2)
            one_step = evolve_moments(state, params, t1 + t2)
            assert _as_tuple(two_step) == pytest.approx(_as_tuple(one_step), rel=1e-10, abs=1e-10)

    def test_matches_numerical_integration(self, rng: np.random.Generator) -> None:
        for _ in range(10):
            state = _random_member(rng)
            params = ModelParams(chi=float(rng.uniform(0, 10)), nu=float(rng.uniform(0, 5)))
            t = float(rng.uniform(0.01, 3))
            closed = evolve_moments(state, params, t)
            numeric = integrate_moments(state, params, t)
            assert _as_tuple(closed) == pytest.approx(_as_tuple(numeric), rel=1e-8, abs=1e-9)

    def test_purity_never_exceeds_one(self, rng: np.random.Generator) -> None:
        for _ in range(20):
            state = _random_member(rng)
            params = ModelParams(chi=float(rng.uniform(0, 50)), nu=float(rng.uniform(0, 5)))
            evolved = evolve_moments(state, params, float(rng.uniform(0, 5)))
            assert evolved.determinant >= 1.0 - 1e-9
            assert purity_of(evolved) <= 1.0


class TestMomentRates:
    """moment_rates is the derivative of evolve_moments."""

    def test_coherent_rates(self) -> None:
        rates = moment_rates(GaussianState.coherent(1.0, 0.0), ModelParams(chi=2.0, nu=1.0))
        np.testing.assert_allclose(rates, [-1.0, -2.0, 0.0, -2.0, 3.0])

    def test_matches_finite_difference(self, rng: np.random.Generator) -> None:
        for _ in range(10):
            params = ModelParams(chi=float(rng.uniform(0, 5)), nu=float(rng.uniform(0, 2)))
            assert rates_residual(_random_member(rng), params) < 1e-5


class TestParamsFromPhysical:
    """params_from_physical maps rates to χ and ν."""

    def test_mapping(self) -> None:
        params = params_from_physical(0.5, 0.25, mu=100.0, lam=0.2)
        assert params.chi == pytest.approx(200.0)
        assert params.nu == pytest.approx(100.0)
        assert params.mu == 100.0
        assert params.lam == 0.2

    def test_rejects_non_positive_mu(self) -> None:
        with pytest.raises(InvalidParameterError):
            params_from_physical(0.1, 0.0, mu=0.0)

    def test_rejects_negative_rate(self) -> None:
        with pytest.raises(InvalidParameterError):
            params_from_physical(-0.1, 0.0, mu=10.0)


class TestGeometry:
    """Tilt and covariance ellipse of a state."""

    def test_coherent_has_no_tilt(self) -> None:
        assert tilt_angle(GaussianState.coherent()) == 0.0

    def test_positive_covariance_tilts_toward_x(self) -> None:
        state = GaussianState(0.0, 0.0, 0.1, 0.225, 10.50625)
        assert math.degrees(tilt_angle(state)) == pytest.approx(1.24, abs=0.01)

    def test_axis_aligned_ellipse(self) -> None:
        major, minor, angle = covariance_ellipse(GaussianState(0.0, 0.0, 4.0, 0.0, 0.25))
        assert major == pytest.approx(2.0)
        assert minor == pytest.approx(0.5)
        assert abs(math.sin(angle)) < 1e-12

    def test_ellipse_area_of_pure_state(self) -> None:
        major, minor, _ = covariance_ellipse(GaussianState(0.0, 0.0, 0.3, 0.4, 3.8666666666666667))
        assert major * minor == pytest.approx(1.0)
