"""Survival probability, purity decay and threshold-crossing times."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence

from scipy.optimize import bisect

from robust_ensembles.core.ensemble import member_state
from robust_ensembles.core.exceptions import HorizonExceededError, InvalidParameterError
from robust_ensembles.core.models import (
    EnsembleParams,
    GaussianState,
    ModelParams,
    RobustnessMeasure,
    SurvivalCurve,
    ThresholdCrossing,
)
from robust_ensembles.core.moments import evolve_moments, purity_of

logger = logging.getLogger(__name__)

DEFAULT_T_MAX = 1e3
SCAN_GROWTH = 1.5
BISECTION_RTOL = 1e-10
PURITY_THRESHOLD = 0.5

CurveFn = Callable[[float], float]


def wigner_overlap(first: GaussianState, second: GaussianState) -> float:
    """4π ∫∫ W₁ W₂ for two Gaussian Wigner functions.

    Equals Tr[ρ₁ρ₂]; for a pure first state it is the probability of still
    finding the system in that state.
    """
    a = first.var_x + second.var_x
    b = first.cov_xy + second.cov_xy
    c = first.var_y + second.var_y
    det = a * c - b * b
    if det <= 0.0:
        raise InvalidParameterError(f"Summed covariance is singular (det={det})")
    dx = second.mean_x - first.mean_x
    dy = second.mean_y - first.mean_y
    quad = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det
    return min(1.0, 2.0 * math.exp(-0.5 * quad) / math.sqrt(det))


def member_survival(
    ensemble: EnsembleParams, xbar: float, params: ModelParams, t: float
) -> float:
    """Survival probability of the member centred at x̄ after time t."""
    if t == 0:
        return 1.0
    initial = member_state(ensemble, xbar)
    return wigner_overlap(initial, evolve_moments(initial, params, t))


def ensemble_survival(ensemble: EnsembleParams, params: ModelParams, t: float) -> float:
    """Survival probability averaged over the Gaussian distribution of x̄.

    The member overlap is 2 exp(-x̄² k / 2) / √det with k independent of x̄,
    so averaging over centres of variance 1 - γ gives
    2 / √(det (1 + (1 - γ) k)).
    """
    if t == 0:
        return 1.0
    # Unit-offset member: its displacement per unit x̄ fixes k.
    initial = member_state(ensemble, 1.0)
    evolved = evolve_moments(initial, params, t)
    a = initial.var_x + evolved.var_x
    b = initial.cov_xy + evolved.cov_xy
    c = initial.var_y + evolved.var_y
    det = a * c - b * b
    dx = evolved.mean_x - initial.mean_x
    dy = evolved.mean_y - initial.mean_y
    curvature = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det
    spread = 1.0 - ensemble.gamma
    return min(1.0, 2.0 / math.sqrt(det * (1.0 + spread * curvature)))


def ensemble_purity(ensemble: EnsembleParams, params: ModelParams, t: float) -> float:
    """Purity of every member (second moments do not depend on x̄)."""
    if t == 0:
        return 1.0
    return purity_of(evolve_moments(member_state(ensemble, 0.0), params, t))


def max_overlap_purity(purity: float) -> float:
    """Alternative purity measure 2/(1 + 1/p)."""
    if not 0.0 < purity <= 1.0:
        raise InvalidParameterError(f"purity must lie in (0, 1], got {purity}")
    return 2.0 / (1.0 + 1.0 / purity)


def threshold_time(
    curve_fn: CurveFn,
    threshold: float,
    t_max: float = DEFAULT_T_MAX,
    t_start: float = 1e-6,
    growth: float = SCAN_GROWTH,
    rtol: float = BISECTION_RTOL,
) -> ThresholdCrossing:
    """First time a decaying curve reaches the threshold.

    A geometric forward scan brackets the first sample at or below the
    threshold, then bisection narrows the bracket to the relative tolerance.

    Args:
        curve_fn: Curve with curve_fn(0) = 1.
        threshold: Target value in (0, 1).
        t_max: Search horizon.
        t_start: First scan time.
        growth: Scan step multiplier.
        rtol: Relative bracket width at which bisection stops.

    Returns:
        ThresholdCrossing; crossed is False when the horizon was reached first.

    Raises:
        InvalidParameterError: if the threshold or scan settings are invalid.
    """
    if not 0.0 < threshold < 1.0:
        raise InvalidParameterError(f"threshold must lie in (0, 1), got {threshold}")
    if not (t_max > 0.0 and 0.0 < t_start and growth > 1.0):
        raise InvalidParameterError("Scan needs t_max > 0, t_start > 0 and growth > 1")

    evaluations = 0
    lo = 0.0
    t = min(t_start, t_max)
    while True:
        value = curve_fn(t)
        evaluations += 1
        if value <= threshold:
            break
        if t >= t_max:
            logger.debug("No crossing of %.4g before t_max=%.4g", threshold, t_max)
            return ThresholdCrossing(
                crossed=False, time=None, threshold=threshold, evaluations=evaluations
            )
        lo = t
        t = min(t * growth, t_max)

    hi = t
    if value == threshold:
        return ThresholdCrossing(
            crossed=True, time=hi, threshold=threshold, evaluations=evaluations
        )
    root, info = bisect(
        lambda s: curve_fn(s) - threshold, lo, hi, xtol=1e-300, rtol=rtol, full_output=True
    )
    return ThresholdCrossing(
        crossed=True,
        time=float(root),
        threshold=threshold,
        evaluations=evaluations + info.function_calls,
    )


def scan_start(params: ModelParams) -> float:
    """First scan time: 1e-6, lengthened by 1/χ or 1/ν when either rate is below 1."""
    scale = 1.0
    for rate in (params.chi, params.nu):
        if rate > 0:
            scale = max(scale, 1.0 / rate)
    return 1e-6 * scale


def _crossing_or_raise(crossing: ThresholdCrossing, what: str, t_max: float) -> float:
    if not crossing.crossed or crossing.time is None:
        raise HorizonExceededError(f"{what} does not reach {crossing.threshold} before {t_max}")
    return crossing.time


def survival_time(
    ensemble: EnsembleParams, params: ModelParams, t_max: float = DEFAULT_T_MAX
) -> float:
    """Time for the ensemble-averaged survival probability to fall to Λ.

    Raises:
        HorizonExceededError: if the survival probability stays above Λ until t_max.
    """
    crossing = threshold_time(
        lambda t: ensemble_survival(ensemble, params, t),
        params.lam,
        t_max=t_max,
        t_start=scan_start(params),
    )
    return _crossing_or_raise(crossing, "Survival probability", t_max)


def purity_halflife(
    ensemble: EnsembleParams, params: ModelParams, t_max: float = DEFAULT_T_MAX
) -> float:
    """Time for the member purity to fall to one half.

    Raises:
        HorizonExceededError: if the purity stays above 1/2 until t_max.
    """
    crossing = threshold_time(
        lambda t: ensemble_purity(ensemble, params, t),
        PURITY_THRESHOLD,
        t_max=t_max,
        t_start=scan_start(params),
    )
    return _crossing_or_raise(crossing, "Purity", t_max)


def robustness_time(
    ensemble: EnsembleParams,
    params: ModelParams,
    measure: RobustnessMeasure,
    t_max: float = DEFAULT_T_MAX,
) -> float:
    if measure is RobustnessMeasure.PURITY:
        return purity_halflife(ensemble, params, t_max)
    return survival_time(ensemble, params, t_max)


def decay_curve(
    ensemble: EnsembleParams,
    params: ModelParams,
    times: Sequence[float],
    kind: RobustnessMeasure = RobustnessMeasure.SURVIVAL,
) -> SurvivalCurve:
    """Sample the survival or purity curve at the given times."""
    fn = ensemble_purity if kind is RobustnessMeasure.PURITY else ensemble_survival
    values = tuple(fn(ensemble, params, t) for t in times)
    return SurvivalCurve(times=tuple(times), values=values, kind=kind)


def survival_curve(
    ensemble: EnsembleParams, params: ModelParams, times: Sequence[float]
) -> SurvivalCurve:
    return decay_curve(ensemble, params, times, RobustnessMeasure.SURVIVAL)


def purity_curve(
    ensemble: EnsembleParams, params: ModelParams, times: Sequence[float]
) -> SurvivalCurve:
    return decay_curve(ensemble, params, times, RobustnessMeasure.PURITY)


def initial_decay_rate(curve_fn: CurveFn, step: float = 1e-6) -> float:
    """Slope of a curve at t=0 from a Richardson-extrapolated forward difference."""
    coarse = (curve_fn(step) - 1.0) / step
    fine = (curve_fn(0.5 * step) - 1.0) / (0.5 * step)
    return 2.0 * fine - coarse
