"""Tests for sweeps, power-law fits and asymptotic formulas."""

from __future__ import annotations

import math
from unittest.mock import patch

import numpy as np
import pytest

from robust_ensembles.core.analysis import (
    dominant_parameter,
    fit_power_law,
    fit_sweep_exponents,
    log_grid,
    predicted_scalings,
    purity_tau_quartic_check,
    qsd_ensemble,
    regime_checks,
    scaling_timescales,
    sweep,
    tau_coherent_asymptotic,
    tau_coherent_leading_order,
    with_fits,
)
from robust_ensembles.core.ensemble import coherent_ensemble
from robust_ensembles.core.exceptions import (
    InvalidParameterError,
    OptimizationError,
    RegimeError,
)
from robust_ensembles.core.models import (
    Candidate,
    EnsembleParams,
    ModelParams,
    OptimizerOptions,
    RobustnessMeasure,
    RobustnessResult,
    SweepParameter,
    SweepRow,
    SweepTable,
)
from robust_ensembles.core.optimize import maximize_robustness
from robust_ensembles.core.robustness import survival_time


def _fake_result(params: ModelParams) -> RobustnessResult:
    ensemble = EnsembleParams(beta=0.1, gamma=0.5)
    return RobustnessResult(
        beta_star=ensemble.beta,
        gamma_star=ensemble.gamma,
        alpha_star=ensemble.alpha,
        tau_star=0.2,
        constrained=True,
        measure=RobustnessMeasure.SURVIVAL,
        on_boundary=False,
        n_evals=1,
        params=params,
    )


class TestFitPowerLaw:
    """Log-log least squares."""

    def test_exact_power_law(self) -> None:
        xs = np.geomspace(1.0, 1e3, 8)
        fit = fit_power_law(xs, 3.0 * xs ** (-2 / 3))
        assert fit.exponent == pytest.approx(-2 / 3, abs=1e-10)
        assert fit.prefactor == pytest.approx(3.0, rel=1e-9)
        assert fit.fit_range == pytest.approx((1.0, 1e3))

    def test_too_few_points(self) -> None:
        with pytest.raises(InvalidParameterError):
            fit_power_law([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])

    def test_non_positive_data(self) -> None:
        with pytest.raises(InvalidParameterError):
            fit_power_law([1.0, 2.0, 3.0, 4.0], [1.0, 0.0, 3.0, 4.0])

    def test_length_mismatch(self) -> None:
        with pytest.raises(InvalidParameterError):
            fit_power_law([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0])


class TestFitSweepExponents:
    """Exponents fitted from a sweep table."""

    def test_default_window(self, power_law_table: SweepTable) -> None:
        fits = fit_sweep_exponents(power_law_table)
        assert fits["alpha"].exponent == pytest.approx(2 / 3, abs=1e-9)
        assert fits["gamma"].exponent == pytest.approx(-2 / 3, abs=1e-9)
        assert fits["tau"].exponent == pytest.approx(-2 / 3, abs=1e-9)
        assert fits["beta_mag"].exponent == pytest.approx(-1 / 3, abs=1e-9)
        assert fits["tau_coherent"].exponent == pytest.approx(-1.0, abs=1e-9)
        assert fits["gamma"].fit_range == pytest.approx((100.0, 1e4))

    def test_explicit_window(self, power_law_table: SweepTable) -> None:
        fits = fit_sweep_exponents(power_law_table, window=(1.0, 100.0))
        assert fits["alpha"].prefactor == pytest.approx(2.0, rel=1e-9)
        assert fits["alpha"].fit_range == pytest.approx((1.0, 100.0))

    def test_window_too_narrow(self, power_law_table: SweepTable) -> None:
        assert fit_sweep_exponents(power_law_table, window=(3e3, 1e4)) == {}

    def test_zero_beta_is_skipped(self) -> None:
        xs = np.geomspace(1.0, 100.0, 9)
        rows = tuple(
            SweepRow(
                param_value=float(x),
                beta_star=0.0,
                gamma_star=float(x**-0.5),
                alpha_star=float(x**0.5),
                tau_star=float(x**-0.5),
                tau_coherent=float(2.0 / x),
            )
            for x in xs
        )
        table = SweepTable(
            param_name=SweepParameter.NU,
            rows=rows,
            constrained=True,
            measure=RobustnessMeasure.SURVIVAL,
            template=ModelParams(chi=0.0),
        )
        fits = fit_sweep_exponents(table)
        assert "beta_mag" not in fits
        assert fits["gamma"].exponent == pytest.approx(-0.5, abs=1e-9)

    def test_with_fits_attaches(self, power_law_table: SweepTable) -> None:
        fitted = with_fits(power_law_table)
        assert set(fitted.fitted_exponents) == {
            "alpha",
            "gamma",
            "tau",
            "beta_mag",
            "tau_coherent",
        }
        assert power_law_table.fitted_exponents == {}


class TestPredictedScalings:
    """Expected asymptotic exponents."""

    def test_self_energy_survival(self) -> None:
        predicted = predicted_scalings(SweepParameter.CHI)
        assert predicted["gamma"] == pytest.approx(-2 / 3)
        assert predicted["beta_mag"] == pytest.approx(-1 / 3)
        assert predicted["tau_coherent"] == -1.0

    def test_same_for_unconstrained(self) -> None:
        assert predicted_scalings(SweepParameter.NU, constrained=False) == predicted_scalings(
            SweepParameter.NU
        )

    def test_purity(self) -> None:
        predicted = predicted_scalings(SweepParameter.CHI, RobustnessMeasure.PURITY)
        assert predicted["tau"] == -0.5

    @pytest.mark.parametrize(
        ("param", "measure"),
        [
            (SweepParameter.LAMBDA, RobustnessMeasure.SURVIVAL),
            (SweepParameter.NU, RobustnessMeasure.PURITY),
        ],
    )
    def test_unknown_combination(self, param: SweepParameter, measure: RobustnessMeasure) -> None:
        with pytest.raises(RegimeError):
            predicted_scalings(param, measure)


class TestAsymptotics:
    """Dominance rule and large-parameter formulas."""

    @pytest.mark.parametrize(
        ("chi", "nu", "expected"),
        [(10.0, 1.0, SweepParameter.CHI), (0.0, 5.0, SweepParameter.NU)],
    )
    def test_dominant_parameter(self, chi: float, nu: float, expected: SweepParameter) -> None:
        assert dominant_parameter(ModelParams(chi=chi, nu=nu)) is expected

    @pytest.mark.parametrize(("chi", "nu"), [(1.0, 10.0), (0.0, 0.0)])
    def test_no_dominant_parameter(self, chi: float, nu: float) -> None:
        with pytest.raises(RegimeError):
            dominant_parameter(ModelParams(chi=chi, nu=nu))

    def test_self_energy_asymptotes(self) -> None:
        params = ModelParams(chi=100.0)
        quoted = tau_coherent_asymptotic(params)
        leading = tau_coherent_leading_order(params)
        assert quoted == pytest.approx(math.sqrt(8.0) / 100.0)
        assert leading / quoted == pytest.approx(math.sqrt(1.5))

    def test_leading_order_approaches_exact(self) -> None:
        params = ModelParams(chi=1e3)
        exact = survival_time(coherent_ensemble(), params)
        assert tau_coherent_leading_order(params) == pytest.approx(exact, rel=1e-2)

    def test_phase_noise_leading_order_is_exact(self) -> None:
        params = ModelParams(chi=0.0, nu=10.0)
        assert tau_coherent_leading_order(params) == pytest.approx(0.5)
        assert survival_time(coherent_ensemble(), params) == pytest.approx(0.5, rel=1e-6)
        assert tau_coherent_asymptotic(params) == pytest.approx(0.2)

    def test_qsd_ensemble_self_energy(self) -> None:
        ensemble = qsd_ensemble(ModelParams(chi=1e4))
        assert ensemble.gamma == pytest.approx(0.014142, abs=1e-6)
        assert ensemble.beta == -1.0

    def test_qsd_ensemble_phase_noise(self) -> None:
        ensemble = qsd_ensemble(ModelParams(chi=0.0, nu=200.0))
        assert ensemble.gamma == pytest.approx(0.1)
        assert ensemble.beta == 0.0

    def test_qsd_ensemble_too_small(self) -> None:
        with pytest.raises(RegimeError):
            qsd_ensemble(ModelParams(chi=1.0))

    def test_scaling_timescales(self) -> None:
        ensemble = EnsembleParams(beta=0.225, gamma=0.1)
        scales = scaling_timescales(ensemble, ModelParams(chi=50.0))
        assert scales.phase_motion == pytest.approx(math.sqrt(ensemble.alpha) / 50.0)
        assert scales.shear_cancellation == pytest.approx(0.225 / 5.0)
        assert scales.amplitude_diffusion == 0.1

    def test_scaling_timescales_without_self_energy(self, free_params: ModelParams) -> None:
        scales = scaling_timescales(coherent_ensemble(), free_params)
        assert math.isinf(scales.phase_motion)


class TestRegimeChecks:
    """Coherence and linearization conditions at finite μ."""

    def test_coherent_regime(self) -> None:
        report = regime_checks(ModelParams(chi=10.0, mu=100.0))
        assert report.output_coherent
        assert report.linearization_valid
        assert not report.conditional_coherence
        assert report.chi_margin == pytest.approx(100.0)
        assert math.isinf(report.nu_margin)

    def test_conditional_coherence_window(self) -> None:
        report = regime_checks(ModelParams(chi=5000.0, mu=100.0))
        assert not report.output_coherent
        assert report.conditional_coherence
        assert report.purity_mean_field

    def test_beyond_purity_bound(self) -> None:
        report = regime_checks(ModelParams(chi=2e4, mu=100.0))
        assert not report.purity_mean_field
        assert not report.conditional_coherence

    def test_needs_mu(self) -> None:
        with pytest.raises(RegimeError):
            regime_checks(ModelParams(chi=10.0))


class TestQuarticCheck:
    """Small-time purity condition."""

    def test_free_coherent(self) -> None:
        assert purity_tau_quartic_check(0.0, 1.0, 0.0) == pytest.approx(1.5)

    def test_root_solves_condition(self) -> None:
        beta, gamma, chi = 0.3, 0.05, 200.0
        tau = purity_tau_quartic_check(beta, gamma, chi)
        residual = (
            2 * (1 + beta**2) * tau / gamma
            - 2 * chi * beta * tau**2
            + 2 * chi**2 * gamma * tau**3 / 3
            + chi**2 * tau**4 / 3
        )
        assert tau > 0
        assert residual == pytest.approx(3.0, rel=1e-8)

    def test_rejects_non_positive_gamma(self) -> None:
        with pytest.raises(InvalidParameterError):
            purity_tau_quartic_check(0.0, 0.0, 1.0)


class TestLogGrid:
    """Log-spaced sweep values."""

    def test_density_and_endpoints(self) -> None:
        grid = log_grid(1.0, 100.0)
        assert len(grid) == 27
        assert grid[0] == pytest.approx(1.0)
        assert grid[-1] == pytest.approx(100.0)

    def test_rejects_bad_range(self) -> None:
        with pytest.raises(InvalidParameterError):
            log_grid(10.0, 1.0)


class TestSweep:
    """Parameter sweeps over the optimizer."""

    @pytest.mark.parametrize("values", [[], [0.0, 1.0], [2.0, 1.0]])
    def test_rejects_bad_values(self, free_params: ModelParams, values: list[float]) -> None:
        with pytest.raises(InvalidParameterError):
            sweep(free_params, SweepParameter.CHI, values)

    def test_failures_are_recorded(self, free_params: ModelParams) -> None:
        def fake_optimize(params: ModelParams, *args: object) -> RobustnessResult:
            if params.chi == 2.0:
                raise OptimizationError("no admissible cell")
            return _fake_result(params)

        seen: list[SweepRow] = []
        with patch(
            "robust_ensembles.core.analysis.maximize_robustness", side_effect=fake_optimize
        ) as mock_optimize:
            table = sweep(free_params, SweepParameter.CHI, [1.0, 2.0, 3.0], on_point=seen.append)

        assert len(table.rows) == 3
        assert table.failures == 1
        assert [row.param_value for row in table.rows] == [1.0, 2.0, 3.0]
        assert "no admissible cell" in table.rows[1].error
        assert math.isnan(table.rows[1].tau_star)
        assert seen == list(table.rows)
        # The last successful optimum seeds the point after a failure.
        assert mock_optimize.call_args_list[2].args[4] == (Candidate(0.1, 0.5, 0.2),)
        assert table.column("param").tolist() == [1.0, 3.0]

    def test_cold_start_passes_no_seeds(self, free_params: ModelParams) -> None:
        with patch(
            "robust_ensembles.core.analysis.maximize_robustness",
            side_effect=lambda params, *args: _fake_result(params),
        ) as mock_optimize:
            sweep(free_params, SweepParameter.CHI, [1.0, 2.0], warm_start=False)
        assert all(call.args[4] == () for call in mock_optimize.call_args_list)

    def test_below_phase_noise_transition(
        self, free_params: ModelParams, fast_options: OptimizerOptions
    ) -> None:
        table = sweep(
            free_params, SweepParameter.NU, [0.5, 1.0], constrained=True, options=fast_options
        )
        assert table.failures == 0
        for row in table.rows:
            assert row.gamma_star == 1.0
            assert row.tau_coherent == pytest.approx(6.0 / (2.0 + row.param_value), rel=1e-8)
            assert row.tau_star == pytest.approx(row.tau_coherent, rel=1e-4)

    @pytest.mark.slow
    def test_self_energy_exponents(self, free_params: ModelParams) -> None:
        table = with_fits(
            sweep(free_params, SweepParameter.CHI, log_grid(100.0, 1e4, 4), constrained=True)
        )
        fits = table.fitted_exponents
        assert fits["gamma"].exponent == pytest.approx(-2 / 3, abs=0.05)
        assert fits["tau"].exponent == pytest.approx(-2 / 3, abs=0.05)
        assert fits["alpha"].exponent == pytest.approx(2 / 3, abs=0.05)
        assert fits["tau_coherent"].exponent == pytest.approx(-1.0, abs=0.02)
        assert fits["beta_mag"].exponent == pytest.approx(-1 / 3, abs=0.05)

    @pytest.mark.slow
    def test_phase_noise_exponents(self, free_params: ModelParams) -> None:
        table = with_fits(
            sweep(free_params, SweepParameter.NU, log_grid(100.0, 1e4, 4), constrained=True)
        )
        fits = table.fitted_exponents
        assert fits["alpha"].exponent == pytest.approx(0.5, abs=0.05)
        assert fits["gamma"].exponent == pytest.approx(-0.5, abs=0.05)
        assert fits["tau"].exponent == pytest.approx(-0.5, abs=0.05)
        assert "beta_mag" not in fits
        assert np.max(table.column("beta_mag")) < 1e-3


class TestThresholdDependence:
    """Scaling and ordering of the optimum across survival thresholds."""

    @pytest.mark.slow
    @pytest.mark.parametrize("lam", [0.2, 0.1])
    def test_self_energy_exponents_hold(self, lam: float) -> None:
        table = with_fits(
            sweep(
                ModelParams(chi=0.0, lam=lam),
                SweepParameter.CHI,
                log_grid(100.0, 1e4, 4),
                constrained=True,
            )
        )
        fits = table.fitted_exponents
        assert fits["alpha"].exponent == pytest.approx(2 / 3, abs=0.05)
        assert fits["tau"].exponent == pytest.approx(-2 / 3, abs=0.05)

    @pytest.mark.slow
    def test_tau_star_grows_as_threshold_drops(self) -> None:
        results = [
            maximize_robustness(ModelParams(chi=1e4, lam=lam), constrained=True)
            for lam in (0.5, 0.2, 0.1, 0.05)
        ]
        taus = [result.tau_star for result in results]
        assert taus == sorted(taus)
        assert len(set(taus)) == len(taus)
        half, lowest = results[0], results[-1]
        assert 0.8 <= half.tau_star / half.gamma_star <= 1.25
        assert lowest.tau_star / lowest.gamma_star > 1.25


@pytest.fixture(scope="module")
def purity_table() -> SweepTable:
    """Constrained purity-half-life sweep over the top two χ decades."""
    return with_fits(
        sweep(
            ModelParams(chi=0.0),
            SweepParameter.CHI,
            log_grid(100.0, 1e4, 4),
            constrained=True,
            measure=RobustnessMeasure.PURITY,
        )
    )


@pytest.mark.slow
class TestPurityMeasure:
    """Optimum of the purity half-life under strong self-energy."""

    def test_exponents(self, purity_table: SweepTable) -> None:
        fits = purity_table.fitted_exponents
        assert fits["alpha"].exponent == pytest.approx(0.5, abs=0.05)
        assert fits["gamma"].exponent == pytest.approx(-0.5, abs=0.05)
        assert fits["tau"].exponent == pytest.approx(-0.5, abs=0.05)

    def test_constrained_shear_on_boundary(self, purity_table: SweepTable) -> None:
        row = purity_table.rows[-1]
        expected = -row.param_value * row.gamma_star**2 / 4
        assert row.beta_star == pytest.approx(expected, rel=0.1)

    def test_unconstrained_shear(self) -> None:
        result = maximize_robustness(
            ModelParams(chi=1e4), constrained=False, measure=RobustnessMeasure.PURITY
        )
        assert result.beta_star == pytest.approx(1.8, abs=0.2)

    def test_purity_outlasts_survival(self, purity_table: SweepTable) -> None:
        survival = maximize_robustness(ModelParams(chi=1e4), constrained=True)
        assert purity_table.rows[-1].tau_star / survival.tau_star > 3.0

    def test_qsd_width_matches_purity_optimum(self, purity_table: SweepTable) -> None:
        chis = purity_table.column("param")
        widths = [qsd_ensemble(ModelParams(chi=float(chi))).gamma for chi in chis]
        qsd_fit = fit_power_law(chis, np.array(widths))
        assert abs(qsd_fit.exponent - purity_table.fitted_exponents["gamma"].exponent) < 0.05
