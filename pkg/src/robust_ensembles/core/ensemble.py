"""Stationary Gaussian ensembles: members, weights and physical realizability."""

from __future__ import annotations

import logging
import math

from scipy.stats import norm

from robust_ensembles.core.exceptions import InvalidParameterError
from robust_ensembles.core.models import (
    EnsembleMemberWeight,
    EnsembleParams,
    GaussianState,
    ModelParams,
    StationaryMixedness,
)

logger = logging.getLogger(__name__)

PR_TOLERANCE = 1e-9

# Below this occupation the large-μ stationary formulas are only indicative.
ASYMPTOTIC_MU = 10.0


def coherent_ensemble() -> EnsembleParams:
    """Ensemble of coherent states, (β, γ) = (0, 1)."""
    return EnsembleParams.coherent()


def member_state(ensemble: EnsembleParams, xbar: float, ybar: float = 0.0) -> GaussianState:
    """Pure member of the ensemble centred at (x̄, ȳ)."""
    return GaussianState(
        mean_x=xbar,
        mean_y=ybar,
        var_x=ensemble.gamma,
        cov_xy=ensemble.beta,
        var_y=ensemble.alpha,
    )


def weight_density(ensemble: EnsembleParams, xbar: float) -> float:
    """Density of member centres along x̄; members are spread uniformly in ȳ.

    The centres are normal with variance 1 - γ, so the ensemble reproduces the
    unit stationary variance of x. At γ = 1 the distribution collapses to a
    point mass at x̄ = 0 and the density is reported as +inf there, 0 elsewhere.
    """
    spread = 1.0 - ensemble.gamma
    if spread <= 0.0:
        return math.inf if xbar == 0.0 else 0.0
    return float(norm.pdf(xbar, loc=0.0, scale=math.sqrt(spread)))


def member_weight(ensemble: EnsembleParams, xbar: float) -> EnsembleMemberWeight:
    return EnsembleMemberWeight(xbar=xbar, density=weight_density(ensemble, xbar))


def pr_margin(ensemble: EnsembleParams, params: ModelParams) -> float:
    """Left side of the realizability inequality; non-negative iff realizable."""
    beta, gamma, chi = ensemble.beta, ensemble.gamma, params.chi
    return (2.0 + params.nu - 2.0 * chi * beta) * (2.0 - 2.0 * gamma) - (beta + chi * gamma) ** 2


def is_physically_realizable(
    ensemble: EnsembleParams, params: ModelParams, tolerance: float = PR_TOLERANCE
) -> bool:
    """Whether some continuous measurement of the output unravels into this ensemble."""
    return pr_margin(ensemble, params) >= -tolerance


def pr_boundary_betas(gamma: float, params: ModelParams) -> tuple[float, ...]:
    """β values where the realizability margin vanishes at fixed γ.

    The margin is a downward parabola in β, so the realizable set is the
    closed interval between the returned roots (a single root at γ = 1).

    Raises:
        InvalidParameterError: if γ is outside (0, 1].
    """
    if not 0.0 < gamma <= 1.0:
        raise InvalidParameterError(f"gamma must lie in (0, 1], got {gamma}")

    chi, nu = params.chi, params.nu
    half_slope = chi * (2.0 - gamma)
    discriminant = 2.0 * (1.0 - gamma) * (2.0 * chi * chi + 2.0 + nu)
    if discriminant < 0.0:
        return ()
    if discriminant == 0.0:
        return (-half_slope,)

    # Roots of β² + 2bβ - K = 0; the second from Vieta's product.
    constant = (2.0 + nu) * (2.0 - 2.0 * gamma) - chi * chi * gamma * gamma
    outer = -(half_slope + math.sqrt(discriminant))
    inner = -constant / outer
    return (min(outer, inner), max(outer, inner))


def pr_interval(gamma: float, params: ModelParams) -> tuple[float, float] | None:
    """Closed β interval of realizable ensembles at γ, or None when empty."""
    roots = pr_boundary_betas(gamma, params)
    if not roots:
        return None
    return roots[0], roots[-1]


def stationary_mixedness(mu: float) -> StationaryMixedness:
    """Purity and largest eigenvalue of the stationary state at large μ.

    Raises:
        InvalidParameterError: if μ ≤ 0.
    """
    if not (math.isfinite(mu) and mu > 0):
        raise InvalidParameterError(f"mu must be positive, got {mu}")
    if mu < ASYMPTOTIC_MU:
        logger.warning(
            "mu=%.3g is below %.0f; large-mu stationary mixedness is only indicative",
            mu,
            ASYMPTOTIC_MU,
        )
    return StationaryMixedness(
        purity=1.0 / math.sqrt(4.0 * math.pi * mu),
        max_eigenvalue=1.0 / math.sqrt(2.0 * math.pi * mu),
    )


def validate_threshold(lam: float, mu: float) -> bool:
    """Whether Λ is strictly between the stationary purity and 1."""
    return stationary_mixedness(mu).purity < lam < 1.0
