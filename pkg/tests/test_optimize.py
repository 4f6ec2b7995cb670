"""Tests for the robustness optimizer, contour grids and transition search."""

from __future__ import annotations

import math

import numpy as np
import pytest

from robust_ensembles.core.ensemble import (
    is_physically_realizable,
    member_state,
    pr_interval,
)
from robust_ensembles.core.exceptions import (
    InvalidParameterError,
    OptimizationError,
    TransitionNotFoundError,
)
from robust_ensembles.core.models import (
    EnsembleParams,
    ModelParams,
    OptimizerOptions,
    RobustnessMeasure,
    SweepParameter,
)
from robust_ensembles.core.moments import tilt_angle
from robust_ensembles.core.optimize import (
    EDGE_GAMMA,
    beta_bounds,
    contour_grid,
    detect_transition,
    evaluate_cells,
    maximize_robustness,
    restart_spread,
    search_box,
)
from robust_ensembles.core.robustness import survival_time


def _tilt_degrees(beta: float, gamma: float) -> float:
    return math.degrees(tilt_angle(member_state(EnsembleParams(beta=beta, gamma=gamma), 0.0)))


class TestSearchBox:
    """Search region and feasible β intervals."""

    def test_free_box(self, free_params: ModelParams) -> None:
        assert search_box(free_params) == (1e-4, 4.0)

    def test_box_grows_with_chi(self) -> None:
        floor, half_width = search_box(ModelParams(chi=1e4))
        assert half_width == pytest.approx(400.0)
        assert floor == pytest.approx(1e-4 * 1e4 ** (-2 / 3))

    def test_unconstrained_bounds(self, strong_chi_params: ModelParams) -> None:
        assert beta_bounds(0.1, strong_chi_params, False, 5.0) == (-5.0, 5.0)

    def test_constrained_bounds_clip_to_realizable(self, strong_chi_params: ModelParams) -> None:
        interval = pr_interval(0.1, strong_chi_params)
        bounds = beta_bounds(0.1, strong_chi_params, True, 5.0)
        assert interval is not None and bounds is not None
        assert bounds == (-5.0, interval[1])


class TestEvaluateCells:
    """Grid evaluation keeps order and marks unreachable cells."""

    def test_order_and_nan(self, free_params: ModelParams) -> None:
        taus = evaluate_cells(
            [(0.0, 1.0), (0.0, 0.5)], free_params, RobustnessMeasure.SURVIVAL, t_max=3.5
        )
        assert taus[0] == pytest.approx(3.0, rel=1e-8)
        expected = survival_time(EnsembleParams(beta=0.0, gamma=0.5), free_params, t_max=3.5)
        assert taus[1] == pytest.approx(expected)

    def test_unreachable_is_nan(self, free_params: ModelParams) -> None:
        taus = evaluate_cells([(0.0, 1.0)], free_params, RobustnessMeasure.SURVIVAL, t_max=1.0)
        assert math.isnan(taus[0])


class TestMaximizeRobustness:
    """Global optimum of the survival time."""

    @pytest.mark.parametrize("constrained", [False, True])
    def test_coherent_optimal_without_self_energy(
        self, free_params: ModelParams, constrained: bool
    ) -> None:
        result = maximize_robustness(free_params, constrained=constrained)
        assert result.gamma_star == 1.0
        assert result.beta_star == pytest.approx(0.0, abs=1e-3)
        assert result.tau_star == pytest.approx(3.0, rel=1e-6)
        assert result.on_boundary

    def test_unconstrained_headline_optimum(self, strong_chi_params: ModelParams) -> None:
        result = maximize_robustness(strong_chi_params, constrained=False)
        assert result.gamma_star == pytest.approx(0.100, abs=0.005)
        assert result.beta_star == pytest.approx(0.225, abs=0.015)
        assert result.tau_star == pytest.approx(0.100, abs=0.003)
        assert result.alpha_star == pytest.approx(result.ensemble.alpha)
        assert _tilt_degrees(result.beta_star, result.gamma_star) == pytest.approx(1.2, abs=0.15)

    def test_constrained_headline_optimum(self, strong_chi_params: ModelParams) -> None:
        result = maximize_robustness(strong_chi_params, constrained=True)
        assert result.gamma_star == pytest.approx(0.092, abs=0.005)
        assert result.beta_star == pytest.approx(-0.092, abs=0.010)
        assert result.tau_star == pytest.approx(0.098, abs=0.003)
        assert result.on_boundary
        assert is_physically_realizable(result.ensemble, strong_chi_params)
        assert _tilt_degrees(result.beta_star, result.gamma_star) == pytest.approx(-0.48, abs=0.1)

    def test_constraint_never_helps(self, strong_chi_params: ModelParams) -> None:
        free = maximize_robustness(strong_chi_params, constrained=False)
        constrained = maximize_robustness(strong_chi_params, constrained=True)
        assert constrained.tau_star <= free.tau_star * (1 + 1e-9)

    def test_beats_coherent_ensemble(self, strong_chi_params: ModelParams) -> None:
        result = maximize_robustness(strong_chi_params, constrained=True)
        coherent = survival_time(EnsembleParams.coherent(), strong_chi_params)
        assert result.tau_star > coherent

    def test_tau_star_is_attained(self, strong_chi_params: ModelParams) -> None:
        result = maximize_robustness(strong_chi_params, constrained=True)
        assert survival_time(result.ensemble, strong_chi_params) == pytest.approx(result.tau_star)

    def test_purity_measure(self, fast_options: OptimizerOptions) -> None:
        params = ModelParams(chi=1000.0)
        result = maximize_robustness(
            params, constrained=False, measure=RobustnessMeasure.PURITY, options=fast_options
        )
        assert result.measure is RobustnessMeasure.PURITY
        assert 0.0 < result.gamma_star < 0.5 < EDGE_GAMMA

    def test_deterministic(
        self, strong_chi_params: ModelParams, fast_options: OptimizerOptions
    ) -> None:
        first = maximize_robustness(strong_chi_params, False, options=fast_options)
        second = maximize_robustness(strong_chi_params, False, options=fast_options)
        assert first == second

    def test_no_finite_cell(self, free_params: ModelParams) -> None:
        options = OptimizerOptions(t_max=1e-3)
        with pytest.raises(OptimizationError):
            maximize_robustness(free_params, options=options)


class TestContourGrid:
    """τ over a regular (γ, β) grid."""

    def test_shape_and_mask(self, strong_chi_params: ModelParams) -> None:
        grid = contour_grid(strong_chi_params, (0.05, 1.0), (-1.0, 1.0), (4, 5))
        assert grid.tau.shape == (4, 5)
        for i, gamma in enumerate(grid.gamma_axis):
            for j, beta in enumerate(grid.beta_axis):
                ensemble = EnsembleParams(beta=float(beta), gamma=float(gamma))
                assert grid.pr_mask[i, j] == is_physically_realizable(ensemble, strong_chi_params)
        assert np.all(grid.tau[np.isfinite(grid.tau)] > 0)

    def test_rejects_bad_gamma_range(self, strong_chi_params: ModelParams) -> None:
        with pytest.raises(InvalidParameterError):
            contour_grid(strong_chi_params, (0.0, 1.0), (-1.0, 1.0), 3)

    def test_rejects_reversed_beta_range(self, strong_chi_params: ModelParams) -> None:
        with pytest.raises(InvalidParameterError):
            contour_grid(strong_chi_params, (0.1, 1.0), (1.0, -1.0), 3)


class TestDetectTransition:
    """Location of the jump between the coherent edge and the interior."""

    def test_rejects_lambda(self, free_params: ModelParams) -> None:
        with pytest.raises(InvalidParameterError):
            detect_transition(free_params, SweepParameter.LAMBDA, 0.1, 0.5)

    def test_rejects_reversed_interval(self, free_params: ModelParams) -> None:
        with pytest.raises(InvalidParameterError):
            detect_transition(free_params, SweepParameter.CHI, 10.0, 5.0)

    def test_no_sign_change(self, free_params: ModelParams, fast_options: OptimizerOptions) -> None:
        with pytest.raises(TransitionNotFoundError):
            detect_transition(
                free_params, SweepParameter.CHI, 30.0, 60.0, options=fast_options
            )

    def test_reported_optimum_keeps_tie_rule(self, free_params: ModelParams) -> None:
        """Just above the jump the reported optimum stays coherent inside the tie band."""
        result = maximize_robustness(
            free_params.with_value(SweepParameter.NU, 2.6), constrained=True
        )
        assert result.gamma_star >= EDGE_GAMMA
        assert result.runner_up is not None
        assert result.runner_up.gamma < EDGE_GAMMA
        assert result.runner_up.tau > result.tau_star

    def test_indicator_is_strict(self, free_params: ModelParams) -> None:
        """The jump is placed where the interior first wins, not where it wins by the tie band."""
        value = detect_transition(
            free_params, SweepParameter.NU, 2.0, 3.0, constrained=True, rtol=0.05
        )
        assert value == pytest.approx(2.4, abs=0.1)
        assert value < 2.6

    @pytest.mark.slow
    def test_self_energy_transition(self, free_params: ModelParams) -> None:
        steps: list[tuple[float, bool]] = []
        value = detect_transition(
            free_params,
            SweepParameter.CHI,
            5.0,
            10.0,
            on_step=lambda v, edge: steps.append((v, edge)),
        )
        assert value == pytest.approx(7.7, abs=0.3)
        assert steps[0] == (5.0, True)

    @pytest.mark.slow
    def test_phase_noise_transition(self, free_params: ModelParams) -> None:
        value = detect_transition(
            free_params, SweepParameter.NU, 1.0, 5.0, constrained=True
        )
        assert value == pytest.approx(2.3, abs=0.2)

    @pytest.mark.slow
    def test_phase_noise_transition_grows_as_threshold_drops(
        self, free_params: ModelParams
    ) -> None:
        half = detect_transition(free_params, SweepParameter.NU, 1.0, 5.0, constrained=True)
        low = detect_transition(
            free_params.with_value(SweepParameter.LAMBDA, 0.2),
            SweepParameter.NU,
            5.0,
            30.0,
            constrained=True,
        )
        assert low > half


class TestCoexistingMaxima:
    """Near the self-energy jump the edge and the interior hold comparable maxima."""

    @pytest.mark.slow
    def test_optimizer_sees_both(self) -> None:
        result = maximize_robustness(ModelParams(chi=7.7), constrained=False)
        assert result.runner_up is not None
        on_edge = [result.gamma_star >= EDGE_GAMMA, result.runner_up.gamma >= EDGE_GAMMA]
        assert sorted(on_edge) == [False, True]
        assert result.runner_up.tau == pytest.approx(result.tau_star, rel=0.02)

    @pytest.mark.slow
    def test_contour_has_two_maxima(self) -> None:
        params = ModelParams(chi=7.7)
        tau_star = maximize_robustness(params, constrained=False).tau_star
        grid = contour_grid(params, (0.05, 1.0), (-1.0, 1.0), (39, 41))
        tau = np.where(np.isfinite(grid.tau), grid.tau, 0.0)
        interior = tau[:-3]
        row, _ = np.unravel_index(np.argmax(interior), interior.shape)
        assert tau[-1].max() >= 0.95 * tau_star
        assert interior.max() >= 0.95 * tau_star
        assert row < interior.shape[0] - 1


class TestRestartSpread:
    """Randomized restarts agree on the optimum."""

    @pytest.mark.slow
    def test_spread_is_small(self, strong_chi_params: ModelParams) -> None:
        assert restart_spread(strong_chi_params, constrained=True, n_restarts=3) < 0.02
