"""Parameter sweeps, power-law fits and asymptotic comparisons."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np
from scipy.stats import linregress

from robust_ensembles.core.ensemble import coherent_ensemble
from robust_ensembles.core.exceptions import (
    InvalidParameterError,
    NoPositiveRootError,
    RegimeError,
    RobustEnsemblesError,
)
from robust_ensembles.core.models import (
    Candidate,
    EnsembleParams,
    ModelParams,
    OptimizerOptions,
    PowerLawFit,
    RegimeReport,
    RobustnessMeasure,
    RobustnessResult,
    ScalingTimescales,
    SweepParameter,
    SweepRow,
    SweepTable,
)
from robust_ensembles.core.optimize import maximize_robustness
from robust_ensembles.core.robustness import robustness_time

logger = logging.getLogger(__name__)

# Sweep columns whose exponents are fitted.
FIT_COLUMNS = ("alpha", "gamma", "tau", "beta_mag", "tau_coherent")
MIN_FIT_POINTS = 4
# Width of the default fit window, ending at the largest swept value.
FIT_WINDOW_DECADES = 2.0
# |β*| below this along a whole window is treated as identically zero.
BETA_ZERO = 1e-3
# One parameter dominates when its contribution to phase diffusion is this many times larger.
DOMINANCE_RATIO = 100.0

PointCallback = Callable[[SweepRow], None]


def log_grid(lo: float, hi: float, points_per_decade: int = 13) -> np.ndarray:
    """Log-spaced values with a fixed density per decade, endpoints included."""
    if not 0.0 < lo < hi:
        raise InvalidParameterError(f"Need 0 < lo < hi, got lo={lo}, hi={hi}")
    count = max(2, round(points_per_decade * math.log10(hi / lo)) + 1)
    return np.geomspace(lo, hi, count)


def _sweep_point(
    args: tuple[
        ModelParams,
        bool,
        RobustnessMeasure,
        OptimizerOptions,
        tuple[Candidate, ...],
    ],
) -> tuple[SweepRow, RobustnessResult | None]:
    params, constrained, measure, options, seeds = args
    try:
        result = maximize_robustness(params, constrained, measure, options, seeds)
    except RobustEnsemblesError as exc:
        return _failed_row(params, exc), None
    try:
        tau_coherent = robustness_time(coherent_ensemble(), params, measure, options.t_max)
    except RobustEnsemblesError:
        tau_coherent = math.nan
    row = SweepRow(
        param_value=math.nan,
        beta_star=result.beta_star,
        gamma_star=result.gamma_star,
        alpha_star=result.alpha_star,
        tau_star=result.tau_star,
        tau_coherent=tau_coherent,
        on_boundary=result.on_boundary,
    )
    return row, result


def _failed_row(params: ModelParams, exc: Exception) -> SweepRow:
    logger.warning(
        "Sweep point chi=%g nu=%g lambda=%g failed: %s", params.chi, params.nu, params.lam, exc
    )
    nan = math.nan
    return SweepRow(
        param_value=nan,
        beta_star=nan,
        gamma_star=nan,
        alpha_star=nan,
        tau_star=nan,
        tau_coherent=nan,
        error=str(exc),
    )


def sweep(
    template: ModelParams,
    param: SweepParameter,
    values: Sequence[float],
    constrained: bool = True,
    measure: RobustnessMeasure = RobustnessMeasure.SURVIVAL,
    options: OptimizerOptions | None = None,
    warm_start: bool = True,
    on_point: PointCallback | None = None,
) -> SweepTable:
    """Optimize at each swept value; failed points are recorded, not raised.

    With warm_start the previous optimum seeds the next point and points run
    serially. Without it points are independent and run on ``options.workers``
    processes.

    Raises:
        InvalidParameterError: if values are empty, unsorted or non-positive.
    """
    options = options or OptimizerOptions()
    values = [float(v) for v in values]
    if not values:
        raise InvalidParameterError("A sweep needs at least one value")
    if any(v <= 0 for v in values):
        raise InvalidParameterError("Swept values must be positive")
    if any(b <= a for a, b in zip(values, values[1:], strict=False)):
        raise InvalidParameterError("Swept values must be strictly increasing")

    point_params = [template.with_value(param, v) for v in values]
    rows: list[SweepRow] = []

    if warm_start or options.workers == 1:
        seeds: tuple[Candidate, ...] = ()
        for value, params in zip(values, point_params, strict=True):
            row, result = _sweep_point((params, constrained, measure, options, seeds))
            if result is not None and warm_start:
                seeds = (Candidate(result.beta_star, result.gamma_star, result.tau_star),)
            row = replace(row, param_value=value)
            rows.append(row)
            if on_point is not None:
                on_point(row)
    else:
        # Points run serially inside each worker.
        serial = replace(options, workers=1)
        jobs = [(p, constrained, measure, serial, ()) for p in point_params]
        with ProcessPoolExecutor(max_workers=options.workers) as pool:
            for value, (row, _) in zip(values, pool.map(_sweep_point, jobs), strict=True):
                row = replace(row, param_value=value)
                rows.append(row)
                if on_point is not None:
                    on_point(row)

    table = SweepTable(
        param_name=param,
        rows=tuple(rows),
        constrained=constrained,
        measure=measure,
        template=template,
    )
    if table.failures:
        logger.warning("%d of %d sweep points failed", table.failures, len(rows))
    return table


def fit_power_law(xs: Sequence[float], ys: Sequence[float]) -> PowerLawFit:
    """Fit y = A·x^k by least squares in log-log space.

    Raises:
        InvalidParameterError: on fewer than four points or non-positive data.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape:
        raise InvalidParameterError("xs and ys must have the same length")
    if len(x) < MIN_FIT_POINTS:
        raise InvalidParameterError(f"Need at least {MIN_FIT_POINTS} points, got {len(x)}")
    if not (np.all(x > 0) and np.all(y > 0)):
        raise InvalidParameterError("Power-law fits need strictly positive data")
    fit = linregress(np.log(x), np.log(y))
    return PowerLawFit(
        exponent=float(fit.slope),
        prefactor=float(math.exp(fit.intercept)),
        stderr=float(fit.stderr),
        fit_range=(float(x.min()), float(x.max())),
    )


def fit_sweep_exponents(
    table: SweepTable, window: tuple[float, float] | None = None
) -> dict[str, PowerLawFit]:
    """Exponents of each sweep column over the fit window.

    The default window is the top two decades of the swept range. Columns
    that are not strictly positive in the window (β* ≡ 0 along a ν sweep)
    are skipped.
    """
    xs = table.column("param")
    if xs.size == 0:
        return {}
    if window is None:
        top = float(xs.max())
        window = (top / 10**FIT_WINDOW_DECADES, top)
    in_window = (xs >= window[0] * (1 - 1e-12)) & (xs <= window[1] * (1 + 1e-12))

    fits: dict[str, PowerLawFit] = {}
    for name in FIT_COLUMNS:
        ys = table.column(name)[in_window]
        x = xs[in_window]
        if name == "beta_mag" and ys.size and float(np.nanmax(ys)) < BETA_ZERO:
            continue
        usable = np.isfinite(ys) & (ys > 0)
        if usable.sum() < MIN_FIT_POINTS or not usable.all():
            logger.debug("Skipping fit of %s: %d usable points", name, int(usable.sum()))
            continue
        fits[name] = fit_power_law(x, ys)
    return fits


def with_fits(table: SweepTable, window: tuple[float, float] | None = None) -> SweepTable:
    return replace(table, fitted_exponents=fit_sweep_exponents(table, window))


def predicted_scalings(
    param: SweepParameter,
    measure: RobustnessMeasure = RobustnessMeasure.SURVIVAL,
    constrained: bool = True,
) -> dict[str, float]:
    """Asymptotic exponents of the optimal ensemble versus the swept parameter.

    Constrained and unconstrained optima share these exponents.

    Raises:
        RegimeError: for combinations with no known power law.
    """
    if param is SweepParameter.CHI and measure is RobustnessMeasure.SURVIVAL:
        return {
            "alpha": 2 / 3,
            "beta_mag": -1 / 3,
            "gamma": -2 / 3,
            "tau": -2 / 3,
            "tilt": -1.0,
            "tau_coherent": -1.0,
        }
    if param is SweepParameter.NU and measure is RobustnessMeasure.SURVIVAL:
        return {"alpha": 0.5, "gamma": -0.5, "tau": -0.5, "tau_coherent": -1.0}
    if param is SweepParameter.CHI and measure is RobustnessMeasure.PURITY:
        return {"alpha": 0.5, "gamma": -0.5, "tau": -0.5, "beta_mag": 0.0}
    raise RegimeError(
        f"No asymptotic scaling for {measure} versus {param}"
        f" ({'constrained' if constrained else 'unconstrained'})"
    )


def dominant_parameter(params: ModelParams) -> SweepParameter:
    """Which of χ, ν controls the phase diffusion, comparing 2χ² with ν.

    Raises:
        RegimeError: if neither dominates by DOMINANCE_RATIO, or both vanish.
    """
    chi_rate = 2.0 * params.chi * params.chi
    if params.chi > 0 and chi_rate >= DOMINANCE_RATIO * params.nu:
        return SweepParameter.CHI
    if params.nu > 0 and params.nu >= DOMINANCE_RATIO * chi_rate:
        return SweepParameter.NU
    raise RegimeError(
        f"Neither chi={params.chi} nor nu={params.nu} dominates; no asymptotic formula applies"
    )


def tau_coherent_asymptotic(params: ModelParams) -> float:
    """Quoted large-parameter survival time of the coherent ensemble.

    χ-dominant: √8/χ. ν-dominant: the short-time estimate 4(1 - Λ)/ν from
    S ≈ 1 - νt/4, good only for Λ near 1.
    """
    if dominant_parameter(params) is SweepParameter.CHI:
        return math.sqrt(8.0) / params.chi
    return 4.0 * (1.0 - params.lam) / params.nu


def tau_coherent_leading_order(params: ModelParams) -> float:
    """Leading large-parameter survival time of the coherent ensemble, exact prefactor.

    At large χ the coherent survival is 1/√(1 + χ²t²/4), giving
    2√(Λ⁻² - 1)/χ. With χ = 0 it is 1/√(1 + (2 + ν)t/2) exactly.
    """
    inverse_square = 1.0 / (params.lam * params.lam) - 1.0
    if dominant_parameter(params) is SweepParameter.CHI:
        return 2.0 * math.sqrt(inverse_square) / params.chi
    return 2.0 * inverse_square / (2.0 + params.nu)


def qsd_ensemble(params: ModelParams) -> EnsembleParams:
    """Asymptotic ensemble produced by quantum state diffusion.

    Raises:
        RegimeError: if no parameter dominates or the dominant one is below 2 (γ > 1).
    """
    dominant = dominant_parameter(params)
    value = params.value_of(dominant)
    gamma = math.sqrt(2.0 / value)
    if gamma > 1.0:
        raise RegimeError(f"{dominant}={value} is too small for the asymptotic QSD ensemble")
    beta = -1.0 if dominant is SweepParameter.CHI else 0.0
    return EnsembleParams(beta=beta, gamma=gamma)


def regime_checks(params: ModelParams) -> RegimeReport:
    """Coherence and linearization conditions for a finite boson number μ.

    Output coherence and linearization both need χ ≪ μ^{3/2} and ν ≪ μ².
    Purity-based robustness only needs χ ≪ μ², opening a window
    μ^{3/2} ≲ χ ≪ μ² where states are robust but not coherent.

    Raises:
        RegimeError: if μ is not set.
    """
    if params.mu is None:
        raise RegimeError("Regime checks need the mean boson number mu")
    mu = params.mu
    chi_bound = mu**1.5
    nu_bound = mu**2
    purity_bound = mu**2

    def margin(bound: float, value: float) -> float:
        return math.inf if value == 0 else bound / value

    coherent = params.chi < chi_bound and params.nu < nu_bound
    purity_ok = params.chi < purity_bound
    return RegimeReport(
        mu=mu,
        chi=params.chi,
        nu=params.nu,
        output_coherent=coherent,
        linearization_valid=coherent,
        conditional_coherence=chi_bound <= params.chi < purity_bound,
        purity_mean_field=purity_ok,
        chi_margin=margin(chi_bound, params.chi),
        nu_margin=margin(nu_bound, params.nu),
        purity_margin=margin(purity_bound, params.chi),
    )


def purity_tau_quartic_check(beta: float, gamma: float, chi: float) -> float:
    """Smallest positive root of the small-time purity condition.

    Solves 3 = 2(1 + β²)τ/γ - 2χβτ² + 2χ²γτ³/3 + χ²τ⁴/3.

    Raises:
        InvalidParameterError: if γ ≤ 0.
        NoPositiveRootError: if no real positive root exists.
    """
    if gamma <= 0:
        raise InvalidParameterError(f"gamma must be positive, got {gamma}")
    chi2 = chi * chi
    coefficients = [
        chi2 / 3.0,
        2.0 * chi2 * gamma / 3.0,
        -2.0 * chi * beta,
        2.0 * (1.0 + beta * beta) / gamma,
        -3.0,
    ]
    roots = np.roots(np.trim_zeros(coefficients, "f"))
    positive = [
        float(r.real)
        for r in roots
        if abs(r.imag) <= 1e-9 * max(1.0, abs(r)) and r.real > 0
    ]
    if not positive:
        raise NoPositiveRootError(f"No positive root for beta={beta}, gamma={gamma}, chi={chi}")
    return min(positive)


def scaling_timescales(ensemble: EnsembleParams, params: ModelParams) -> ScalingTimescales:
    """Decay times whose balance at the optimum yields the large-χ power laws."""
    chi = params.chi
    if chi == 0:
        return ScalingTimescales(math.inf, math.inf, ensemble.gamma)
    return ScalingTimescales(
        phase_motion=math.sqrt(ensemble.alpha) / chi,
        shear_cancellation=abs(ensemble.beta) / (ensemble.gamma * chi),
        amplitude_diffusion=ensemble.gamma,
    )
