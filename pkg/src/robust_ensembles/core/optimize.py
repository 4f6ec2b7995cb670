"""Search for the maximally robust ensemble in the (β, γ) plane.

The search runs a coarse grid (log-spaced γ up to exactly 1, β nodes dense
near zero), refines the best cells with Nelder–Mead in (log γ, β) while
projecting every trial point onto the feasible set, and treats the γ = 1
edge as a separate one-dimensional problem.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from robust_ensembles.core.ensemble import is_physically_realizable, pr_interval
from robust_ensembles.core.exceptions import (
    HorizonExceededError,
    InvalidParameterError,
    OptimizationError,
    TransitionNotFoundError,
)
from robust_ensembles.core.models import (
    Candidate,
    ContourGrid,
    EnsembleParams,
    ModelParams,
    OptimizerOptions,
    RobustnessMeasure,
    RobustnessResult,
    SweepParameter,
)
from robust_ensembles.core.robustness import robustness_time

logger = logging.getLogger(__name__)

# γ at or above this counts as the γ = 1 box edge.
EDGE_GAMMA = 1.0 - 1e-6
# Finest β spacing of the coarse grid near β = 0.
BETA_RESOLUTION = 0.05
# |β| beyond this fraction of the box half-width is reported as railing.
RAIL_FRACTION = 0.999


def search_box(params: ModelParams) -> tuple[float, float]:
    """Return (γ floor, β half-width) of the search region."""
    gamma_scales = [1.0]
    if params.chi > 0:
        gamma_scales.append(params.chi ** (-2.0 / 3.0))
    if params.nu > 0:
        gamma_scales.append(params.nu**-0.5)
    half_width = max(4.0, 4.0 * math.sqrt(params.chi), 4.0 * math.sqrt(params.nu))
    return 1e-4 * min(gamma_scales), half_width


def beta_bounds(
    gamma: float, params: ModelParams, constrained: bool, half_width: float
) -> tuple[float, float] | None:
    """Feasible β interval at γ, or None when empty."""
    lo, hi = -half_width, half_width
    if constrained:
        interval = pr_interval(gamma, params)
        if interval is None:
            return None
        lo, hi = max(lo, interval[0]), min(hi, interval[1])
        if lo > hi:
            return None
    return lo, hi


def _beta_nodes(lo: float, hi: float, half_width: float, count: int) -> np.ndarray:
    """Grid of β in [lo, hi]: sinh-spaced nodes dense near 0 plus a uniform set."""
    if hi - lo <= 0.0:
        return np.array([lo])
    stretch = math.asinh(half_width / BETA_RESOLUTION)
    dense = BETA_RESOLUTION * np.sinh(stretch * np.linspace(-1.0, 1.0, count))
    dense = dense[(dense > lo) & (dense < hi)]
    uniform = np.linspace(lo, hi, max(3, count // 3))
    return np.unique(np.concatenate([dense, uniform]))


def _tau_or_nan(args: tuple[float, float, ModelParams, RobustnessMeasure, float]) -> float:
    beta, gamma, params, measure, t_max = args
    try:
        return robustness_time(EnsembleParams(beta=beta, gamma=gamma), params, measure, t_max)
    except HorizonExceededError:
        return math.nan


def evaluate_cells(
    cells: Sequence[tuple[float, float]],
    params: ModelParams,
    measure: RobustnessMeasure,
    t_max: float,
    workers: int = 1,
) -> list[float]:
    """τ at each (β, γ) cell; cells past the horizon come back as NaN.

    Order of the result matches the input for any worker count.
    """
    jobs = [(beta, gamma, params, measure, t_max) for beta, gamma in cells]
    if workers > 1 and len(jobs) > 1:
        chunk = max(1, len(jobs) // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_tau_or_nan, jobs, chunksize=chunk))
    return [_tau_or_nan(job) for job in jobs]


def _rank(candidate: Candidate) -> tuple[float, float, float]:
    return (candidate.tau, -candidate.gamma, candidate.beta)


class _Objective:
    """Counts τ(β, γ) evaluations; unreachable thresholds give NaN."""

    def __init__(self, params: ModelParams, measure: RobustnessMeasure, t_max: float) -> None:
        self.params = params
        self.measure = measure
        self.t_max = t_max
        self.evaluations = 0

    def __call__(self, beta: float, gamma: float) -> float:
        self.evaluations += 1
        return _tau_or_nan((beta, gamma, self.params, self.measure, self.t_max))


def _refine(
    objective: _Objective,
    start: Candidate,
    steps: tuple[float, float],
    constrained: bool,
    gamma_floor: float,
    half_width: float,
    options: OptimizerOptions,
) -> Candidate | None:
    """Nelder–Mead on -log τ over (log γ, β) with projection onto the feasible set."""
    params = objective.params

    def project(u: np.ndarray) -> tuple[float, float] | None:
        gamma = min(1.0, max(gamma_floor, math.exp(float(u[0]))))
        bounds = beta_bounds(gamma, params, constrained, half_width)
        if bounds is None:
            return None
        return min(max(float(u[1]), bounds[0]), bounds[1]), gamma

    def loss(u: np.ndarray) -> float:
        point = project(u)
        if point is None:
            return math.inf
        tau = objective(*point)
        return -math.log(tau) if tau > 0 else math.inf

    origin = np.array([math.log(start.gamma), start.beta])
    log_step, beta_step = steps
    # Step downward in log γ so the first simplex stays inside γ ≤ 1.
    simplex = np.array([origin, origin + [-log_step, 0.0], origin + [0.0, beta_step]])
    outcome = minimize(
        loss,
        origin,
        method="Nelder-Mead",
        options={
            "initial_simplex": simplex,
            "xatol": options.xatol,
            "fatol": options.fatol,
            "maxiter": options.max_iter,
        },
    )
    point = project(outcome.x)
    if point is None:
        return None
    tau = objective(*point)
    if not math.isfinite(tau):
        return None
    return Candidate(beta=point[0], gamma=point[1], tau=tau)


def _edge_candidate(
    objective: _Objective,
    edge_row: Sequence[Candidate],
    constrained: bool,
    half_width: float,
) -> Candidate | None:
    """Best ensemble on the γ = 1 edge."""
    bounds = beta_bounds(1.0, objective.params, constrained, half_width)
    if bounds is None:
        return None
    lo, hi = bounds
    if hi - lo < 1e-12:
        tau = objective(lo, 1.0)
        return Candidate(beta=lo, gamma=1.0, tau=tau) if math.isfinite(tau) else None

    scored = [c for c in edge_row if math.isfinite(c.tau)]
    if not scored:
        return None
    ordered = sorted(scored, key=lambda c: c.beta)
    best_index = max(range(len(ordered)), key=lambda i: _rank(ordered[i]))
    left = ordered[best_index - 1].beta if best_index > 0 else lo
    right = ordered[best_index + 1].beta if best_index + 1 < len(ordered) else hi
    if right - left < 1e-12:
        return ordered[best_index]

    def loss(beta: float) -> float:
        tau = objective(beta, 1.0)
        return -tau if math.isfinite(tau) else math.inf

    outcome = minimize_scalar(
        loss, bounds=(left, right), method="bounded", options={"xatol": 1e-10}
    )
    tau = objective(float(outcome.x), 1.0)
    refined = Candidate(beta=float(outcome.x), gamma=1.0, tau=tau)
    if not math.isfinite(tau):
        return ordered[best_index]
    return max((refined, ordered[best_index]), key=_rank)


def _on_pr_boundary(candidate: Candidate, params: ModelParams) -> bool:
    interval = pr_interval(candidate.gamma, params)
    if interval is None:
        return False
    tolerance = 1e-6 * max(1.0, abs(candidate.beta))
    return any(abs(candidate.beta - root) <= tolerance for root in interval)


def maximize_robustness(
    params: ModelParams,
    constrained: bool = True,
    measure: RobustnessMeasure = RobustnessMeasure.SURVIVAL,
    options: OptimizerOptions | None = None,
    seeds: Iterable[Candidate] = (),
) -> RobustnessResult:
    """Global maximizer of τ over 0 < γ ≤ 1, |β| ≤ B.

    Args:
        params: Model parameters; Λ is the survival threshold.
        constrained: Restrict to physically realizable ensembles.
        measure: Maximize survival time or purity half-life.
        options: Grid and refinement settings.
        seeds: Extra starting points, e.g. the optimum of a neighbouring sweep point.

    Returns:
        RobustnessResult whose tau_star is evaluated at (β*, γ*).

    Raises:
        OptimizationError: if no grid cell yields a finite τ.
    """
    options = options or OptimizerOptions()
    gamma_floor, half_width = search_box(params)
    gamma_axis = np.geomspace(gamma_floor, 1.0, options.grid_gamma_points)
    gamma_axis[-1] = 1.0

    cells: list[tuple[float, float]] = []
    for gamma in gamma_axis:
        bounds = beta_bounds(float(gamma), params, constrained, half_width)
        if bounds is None:
            continue
        for beta in _beta_nodes(bounds[0], bounds[1], half_width, options.grid_beta_points):
            cells.append((float(beta), float(gamma)))

    taus = evaluate_cells(cells, params, measure, options.t_max, options.workers)
    grid = [Candidate(beta=b, gamma=g, tau=t) for (b, g), t in zip(cells, taus, strict=True)]
    finite = [c for c in grid if math.isfinite(c.tau)]
    if not finite:
        raise OptimizationError(
            f"No finite {measure} time on the search grid for chi={params.chi}, nu={params.nu}"
        )

    objective = _Objective(params, measure, options.t_max)
    log_step = math.log(gamma_axis[1] / gamma_axis[0])
    interior = sorted((c for c in finite if c.gamma < EDGE_GAMMA), key=_rank, reverse=True)

    starts = interior[: options.n_starts]
    starts.extend(seeds)
    if options.n_random_starts and interior:
        rng = np.random.default_rng(options.seed)
        anchor = interior[0]
        for _ in range(options.n_random_starts):
            gamma = anchor.gamma * math.exp(log_step * float(rng.uniform(-2.0, 2.0)))
            beta = anchor.beta + BETA_RESOLUTION * float(rng.uniform(-4.0, 4.0))
            starts.append(Candidate(beta=beta, gamma=min(1.0, max(gamma_floor, gamma)), tau=0.0))

    candidates: list[Candidate] = list(finite)
    for start in starts:
        beta_step = max(BETA_RESOLUTION, 0.1 * abs(start.beta))
        refined = _refine(
            objective,
            start,
            (log_step, beta_step),
            constrained,
            gamma_floor,
            half_width,
            options,
        )
        if refined is not None:
            candidates.append(refined)

    edge_row = [c for c in grid if c.gamma >= EDGE_GAMMA]
    edge = _edge_candidate(objective, edge_row, constrained, half_width)
    if edge is not None:
        candidates.append(edge)

    chosen, runner_up = _select(candidates, options.tie_tolerance)
    on_boundary = chosen.gamma >= EDGE_GAMMA or (constrained and _on_pr_boundary(chosen, params))
    if abs(chosen.beta) >= RAIL_FRACTION * half_width:
        logger.warning(
            "Optimum beta=%.6g rails against the search box |beta| <= %.4g", chosen.beta, half_width
        )

    result = RobustnessResult(
        beta_star=chosen.beta,
        gamma_star=chosen.gamma,
        alpha_star=chosen.alpha,
        tau_star=chosen.tau,
        constrained=constrained,
        measure=measure,
        on_boundary=on_boundary,
        n_evals=len(cells) + objective.evaluations,
        params=params,
        runner_up=runner_up,
    )
    logger.debug(
        "chi=%g nu=%g lambda=%g %s%s: beta*=%.6g gamma*=%.6g tau*=%.6g (%d evals)",
        params.chi,
        params.nu,
        params.lam,
        measure,
        " constrained" if constrained else "",
        result.beta_star,
        result.gamma_star,
        result.tau_star,
        result.n_evals,
    )
    return result


def _select(
    candidates: Sequence[Candidate], tie_tolerance: float
) -> tuple[Candidate, Candidate | None]:
    """Pick the best candidate, preferring the γ = 1 edge within the tie tolerance."""
    scored = [c for c in candidates if math.isfinite(c.tau)]
    interior = [c for c in scored if c.gamma < EDGE_GAMMA]
    edge = [c for c in scored if c.gamma >= EDGE_GAMMA]
    best_interior = max(interior, key=_rank) if interior else None
    best_edge = max(edge, key=_rank) if edge else None
    if best_interior is None:
        if best_edge is None:
            raise OptimizationError("No finite candidate survived refinement")
        return best_edge, None
    if best_edge is not None and best_edge.tau >= (1.0 - tie_tolerance) * best_interior.tau:
        return best_edge, best_interior
    return best_interior, best_edge


def restart_spread(
    params: ModelParams,
    constrained: bool = True,
    measure: RobustnessMeasure = RobustnessMeasure.SURVIVAL,
    n_restarts: int = 5,
    options: OptimizerOptions | None = None,
) -> float:
    """Largest relative disagreement in (β*, γ*) over randomized restarts."""
    base = options or OptimizerOptions()
    results = [
        maximize_robustness(
            params,
            constrained,
            measure,
            replace(base, seed=base.seed + i, n_random_starts=max(3, base.n_random_starts)),
        )
        for i in range(n_restarts)
    ]
    reference = results[0]
    spread = 0.0
    for result in results[1:]:
        spread = max(
            spread,
            abs(result.gamma_star - reference.gamma_star) / reference.gamma_star,
            abs(result.beta_star - reference.beta_star) / max(abs(reference.beta_star), 1e-3),
        )
    return spread


def contour_grid(
    params: ModelParams,
    gamma_range: tuple[float, float],
    beta_range: tuple[float, float],
    resolution: int | tuple[int, int],
    measure: RobustnessMeasure = RobustnessMeasure.SURVIVAL,
    workers: int = 1,
    t_max: float = 1e3,
) -> ContourGrid:
    """τ on a regular (γ, β) grid with the realizability mask.

    Raises:
        InvalidParameterError: on a non-positive resolution or an empty range.
    """
    n_gamma, n_beta = (resolution, resolution) if isinstance(resolution, int) else resolution
    if n_gamma < 1 or n_beta < 1:
        raise InvalidParameterError(f"Resolution must be positive, got {resolution}")
    g_lo, g_hi = gamma_range
    if not 0.0 < g_lo <= g_hi <= 1.0:
        raise InvalidParameterError(f"gamma range must lie in (0, 1], got {gamma_range}")
    if beta_range[0] > beta_range[1]:
        raise InvalidParameterError(f"beta range is reversed: {beta_range}")

    gamma_axis = np.linspace(g_lo, g_hi, n_gamma)
    beta_axis = np.linspace(beta_range[0], beta_range[1], n_beta)
    cells = [(float(b), float(g)) for g in gamma_axis for b in beta_axis]
    taus = evaluate_cells(cells, params, measure, t_max, workers)
    pr_mask = [
        is_physically_realizable(EnsembleParams(beta=b, gamma=g), params) for b, g in cells
    ]
    grid = ContourGrid(
        gamma_axis=gamma_axis,
        beta_axis=beta_axis,
        tau=np.array(taus).reshape(n_gamma, n_beta),
        pr_mask=np.array(pr_mask, dtype=bool).reshape(n_gamma, n_beta),
        params=params,
        measure=measure,
    )
    if grid.failed_cells:
        logger.info("%d of %d contour cells did not cross", grid.failed_cells, len(cells))
    return grid


def detect_transition(
    template: ModelParams,
    param: SweepParameter,
    lo: float,
    hi: float,
    constrained: bool = False,
    measure: RobustnessMeasure = RobustnessMeasure.SURVIVAL,
    rtol: float = 1e-2,
    options: OptimizerOptions | None = None,
    on_step: Callable[[float, bool], None] | None = None,
) -> float:
    """Parameter value where the optimum jumps between γ = 1 and the interior.

    Bisects geometrically on whether the γ = 1 edge is at least as robust as
    the best interior ensemble, with no tie tolerance. The tie band only picks
    the reported optimum.

    Raises:
        InvalidParameterError: on a non-positive or reversed interval, or param=lambda.
        TransitionNotFoundError: if both ends give the same indicator.
    """
    if param is SweepParameter.LAMBDA:
        raise InvalidParameterError("Transitions are located in chi or nu only")
    if not 0.0 < lo < hi:
        raise InvalidParameterError(f"Need 0 < lo < hi, got lo={lo}, hi={hi}")

    strict = replace(options or OptimizerOptions(), tie_tolerance=0.0)

    def at_edge(value: float) -> bool:
        params = template.with_value(param, value)
        result = maximize_robustness(params, constrained, measure, strict)
        edge = result.gamma_star >= EDGE_GAMMA
        if on_step is not None:
            on_step(value, edge)
        return edge

    lo_edge = at_edge(lo)
    if at_edge(hi) == lo_edge:
        raise TransitionNotFoundError(
            f"Optimum stays {'on' if lo_edge else 'off'} the gamma=1 edge "
            f"for {param} in [{lo}, {hi}]"
        )
    while hi / lo - 1.0 > rtol:
        mid = math.sqrt(lo * hi)
        if at_edge(mid) == lo_edge:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)
