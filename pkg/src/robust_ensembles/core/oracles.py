"""Independent numerical cross-checks of the closed forms.

These are slow and only used by tests and the ``report`` command.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy.integrate import dblquad, solve_ivp

from robust_ensembles.core.ensemble import member_state
from robust_ensembles.core.exceptions import InvalidParameterError
from robust_ensembles.core.models import EnsembleParams, GaussianState, ModelParams
from robust_ensembles.core.moments import evolve_moments, moment_rates
from robust_ensembles.core.robustness import member_survival

logger = logging.getLogger(__name__)

GAUSS_HERMITE_NODES = 64


def integrate_moments(
    state: GaussianState,
    params: ModelParams,
    t: float,
    rtol: float = 1e-12,
    atol: float = 1e-12,
) -> GaussianState:
    """Integrate the linear moment equations numerically (DOP853)."""
    if t < 0:
        raise InvalidParameterError(f"Evolution time must be non-negative, got {t}")
    if t == 0:
        return state

    def rhs(_: float, y: np.ndarray) -> np.ndarray:
        # Rates are linear; no Heisenberg check on intermediate vectors.
        mx, my, vx, cxy, vy = y
        return np.array(
            [
                -mx,
                -params.chi * mx,
                2.0 - 2.0 * vx,
                -cxy - params.chi * vx,
                2.0 + params.nu - 2.0 * params.chi * cxy,
            ]
        )

    y0 = np.array([state.mean_x, state.mean_y, state.var_x, state.cov_xy, state.var_y])
    solution = solve_ivp(rhs, (0.0, t), y0, method="DOP853", rtol=rtol, atol=atol)
    if not solution.success:
        raise InvalidParameterError(f"Moment integration failed: {solution.message}")
    mx, my, vx, cxy, vy = (float(v) for v in solution.y[:, -1])
    return GaussianState(mean_x=mx, mean_y=my, var_x=vx, cov_xy=cxy, var_y=vy)


def rates_residual(state: GaussianState, params: ModelParams, step: float = 1e-6) -> float:
    """Max mismatch between a centred difference of evolve_moments and the rates."""
    ahead = evolve_moments(state, params, 2.0 * step)
    mid = evolve_moments(state, params, step)
    numeric = (_as_vector(ahead) - _as_vector(state)) / (2.0 * step)
    return float(np.max(np.abs(numeric - moment_rates(mid, params))))


def _as_vector(state: GaussianState) -> np.ndarray:
    return np.array([state.mean_x, state.mean_y, state.var_x, state.cov_xy, state.var_y])


def ensemble_survival_gauss_hermite(
    ensemble: EnsembleParams,
    params: ModelParams,
    t: float,
    nodes: int = GAUSS_HERMITE_NODES,
) -> float:
    """Average member survival over x̄ with Gauss–Hermite quadrature."""
    spread = 1.0 - ensemble.gamma
    if spread <= 0.0:
        return member_survival(ensemble, 0.0, params, t)
    points, weights = np.polynomial.hermite.hermgauss(nodes)
    scale = math.sqrt(2.0 * spread)
    total = sum(
        float(w) * member_survival(ensemble, scale * float(u), params, t)
        for u, w in zip(points, weights, strict=True)
    )
    return total / math.sqrt(math.pi)


def _wigner(state: GaussianState) -> tuple[np.ndarray, np.ndarray, float]:
    cov = state.covariance
    return state.mean, np.linalg.inv(cov), 1.0 / (2.0 * math.pi * math.sqrt(state.determinant))


def member_survival_quadrature(
    ensemble: EnsembleParams,
    xbar: float,
    params: ModelParams,
    t: float,
    width: float = 12.0,
) -> float:
    """4π ∫∫ W(0) W(t) by adaptive 2-D quadrature over a box around the overlap."""
    initial = member_state(ensemble, xbar)
    evolved = evolve_moments(initial, params, t)
    m0, p0, n0 = _wigner(initial)
    m1, p1, n1 = _wigner(evolved)

    # The integrand is the product Gaussian; centre the box on it.
    precision = p0 + p1
    product_cov = np.linalg.inv(precision)
    centre = product_cov @ (p0 @ m0 + p1 @ m1)
    sx, sy = (width * math.sqrt(float(product_cov[i, i])) for i in (0, 1))

    def integrand(y: float, x: float) -> float:
        point = np.array([x, y])
        d0, d1 = point - m0, point - m1
        return n0 * n1 * math.exp(-0.5 * (d0 @ p0 @ d0 + d1 @ p1 @ d1))

    value, error = dblquad(
        integrand,
        centre[0] - sx,
        centre[0] + sx,
        centre[1] - sy,
        centre[1] + sy,
        epsabs=1e-13,
        epsrel=1e-11,
    )
    logger.debug("Overlap quadrature %.12g (estimated error %.2g)", value, error)
    return 4.0 * math.pi * value
