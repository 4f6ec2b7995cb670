"""Closed-form Gaussian moment dynamics of the linearized laser mode.

Time is measured in units of the inverse field damping rate. With
w = e^{-t} and z = 1 - w the moments evolve as

    mean_x = x̄ w
    mean_y = ȳ - χ x̄ z
    var_x  = var_x0 w² + z (2 - z)
    cov_xy = cov0 w - χ z (var_x0 w + z)
    var_y  = var_y0 + (2 + ν) t - 2 χ cov0 z + 2 χ² [(t - z) - (1 - var_x0) z² / 2]

which is the stable rearrangement of the exponential solution.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from robust_ensembles.core.exceptions import InvalidParameterError
from robust_ensembles.core.models import GaussianState, ModelParams

logger = logging.getLogger(__name__)

# Below this t the difference t - (1 - e^{-t}) is taken from its series.
_SERIES_CUTOFF = 1e-3


def decay_factors(t: float) -> tuple[float, float, float]:
    """Return (e^{-t}, 1 - e^{-t}, t - (1 - e^{-t})) without cancellation."""
    z = -math.expm1(-t)
    if t < _SERIES_CUTOFF:
        t_minus_z = t * t * (0.5 - t * (1 / 6 - t * (1 / 24 - t * (1 / 120 - t / 720))))
    else:
        t_minus_z = t - z
    return math.exp(-t), z, t_minus_z


def params_from_physical(
    self_energy: float, phase_noise: float, mu: float, lam: float = 0.5
) -> ModelParams:
    """Map physical rates to the dimensionless model parameters.

    Args:
        self_energy: Scaled self-interaction rate C.
        phase_noise: Scaled excess phase-diffusion rate N.
        mu: Mean boson number of the mode.
        lam: Survival threshold carried into the result.

    Returns:
        ModelParams with χ = 4μC and ν = 4μN.

    Raises:
        InvalidParameterError: if μ ≤ 0 or a rate is negative.
    """
    if not (math.isfinite(mu) and mu > 0):
        raise InvalidParameterError(f"mu must be positive, got {mu}")
    if self_energy < 0:
        raise InvalidParameterError(f"C must be non-negative, got {self_energy}")
    if phase_noise < 0:
        raise InvalidParameterError(f"N must be non-negative, got {phase_noise}")
    return ModelParams(chi=4.0 * mu * self_energy, nu=4.0 * mu * phase_noise, lam=lam, mu=mu)


def evolve_moments(state: GaussianState, params: ModelParams, t: float) -> GaussianState:
    """Propagate moments under the linearized master equation for time t.

    Raises:
        InvalidParameterError: if t is negative or not finite.
    """
    if not (math.isfinite(t) and t >= 0):
        raise InvalidParameterError(f"Evolution time must be non-negative, got {t}")
    if t == 0:
        return state

    w, z, t_minus_z = decay_factors(t)
    chi, nu = params.chi, params.nu
    vx0, c0 = state.var_x, state.cov_xy

    return GaussianState(
        mean_x=state.mean_x * w,
        mean_y=state.mean_y - chi * state.mean_x * z,
        var_x=vx0 * w * w + z * (2.0 - z),
        cov_xy=c0 * w - chi * z * (vx0 * w + z),
        var_y=(
            state.var_y
            + (2.0 + nu) * t
            - 2.0 * chi * c0 * z
            + 2.0 * chi * chi * (t_minus_z - 0.5 * (1.0 - vx0) * z * z)
        ),
    )


def moment_rates(state: GaussianState, params: ModelParams) -> np.ndarray:
    """Time derivatives of (mean_x, mean_y, var_x, cov_xy, var_y)."""
    chi, nu = params.chi, params.nu
    return np.array(
        [
            -state.mean_x,
            -chi * state.mean_x,
            2.0 - 2.0 * state.var_x,
            -state.cov_xy - chi * state.var_x,
            2.0 + nu - 2.0 * chi * state.cov_xy,
        ]
    )


def purity_of(state: GaussianState) -> float:
    """Tr ρ² of a Gaussian state, det(Σ)^{-1/2}."""
    return min(1.0, 1.0 / math.sqrt(state.determinant))


def tilt_angle(state: GaussianState) -> float:
    """Angle (radians) of the major axis from the phase (y) axis, positive toward +x."""
    return 0.5 * math.atan2(2.0 * state.cov_xy, state.var_y - state.var_x)


def covariance_ellipse(state: GaussianState) -> tuple[float, float, float]:
    """One-standard-deviation ellipse of the Wigner function.

    Returns:
        (semi_major, semi_minor, angle) with angle measured from the x axis
        in radians.
    """
    eigenvalues, eigenvectors = np.linalg.eigh(state.covariance)
    major = eigenvectors[:, 1]
    angle = math.atan2(float(major[1]), float(major[0]))
    return math.sqrt(eigenvalues[1]), math.sqrt(eigenvalues[0]), angle
