"""Frozen dataclasses for the Robust Ensembles domain model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import StrEnum
from pathlib import Path
from typing import NamedTuple

import numpy as np

from robust_ensembles.core.exceptions import InvalidParameterError, InvalidStateError

# Absolute slack on det(Σ) - 1 before a state counts as unphysical.
HEISENBERG_TOLERANCE = 1e-9


class RobustnessMeasure(StrEnum):
    """Figure of merit maximized over ensembles (also the kind of a decay curve)."""

    SURVIVAL = "survival"
    PURITY = "purity"


class SweepParameter(StrEnum):
    """Model parameter varied along a sweep."""

    CHI = "chi"
    NU = "nu"
    LAMBDA = "lambda"


class Command(StrEnum):
    """Sub-commands understood by the CLI."""

    EVOLVE = "evolve"
    SURVIVAL = "survival"
    TAU = "tau"
    OPTIMIZE = "optimize"
    SWEEP = "sweep"
    CONTOUR = "contour"
    TRANSITION = "transition"
    REPORT = "report"


class OutputFormat(StrEnum):
    """Artifact format written by the CLI."""

    CSV = "csv"
    JSON = "json"
    SVG = "svg"


def _require_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise InvalidParameterError(f"{name} must be finite, got {value}")


@dataclass(frozen=True)
class GaussianState:
    """First and second phase-space moments of a Wigner-Gaussian state.

    Quadratures follow a = √μ + (x + iy)/2, so a coherent state has unit
    variances and the Heisenberg bound reads var_x·var_y − cov_xy² ≥ 1.
    """

    mean_x: float
    mean_y: float
    var_x: float
    cov_xy: float
    var_y: float

    def __post_init__(self) -> None:
        for name in ("mean_x", "mean_y", "var_x", "cov_xy", "var_y"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidStateError(f"{name} must be finite")
        if self.var_x <= 0 or self.var_y <= 0:
            raise InvalidStateError(
                f"Variances must be positive (var_x={self.var_x}, var_y={self.var_y})"
            )
        if self.determinant < 1.0 - HEISENBERG_TOLERANCE:
            raise InvalidStateError(
                f"Moment determinant {self.determinant} violates the Heisenberg bound"
            )

    @classmethod
    def coherent(cls, mean_x: float = 0.0, mean_y: float = 0.0) -> GaussianState:
        """Minimum-uncertainty circular state."""
        return cls(mean_x=mean_x, mean_y=mean_y, var_x=1.0, cov_xy=0.0, var_y=1.0)

    @property
    def determinant(self) -> float:
        return self.var_x * self.var_y - self.cov_xy * self.cov_xy

    @property
    def is_pure(self) -> bool:
        return abs(self.determinant - 1.0) <= HEISENBERG_TOLERANCE

    @property
    def mean(self) -> np.ndarray:
        return np.array([self.mean_x, self.mean_y])

    @property
    def covariance(self) -> np.ndarray:
        return np.array([[self.var_x, self.cov_xy], [self.cov_xy, self.var_y]])

    @property
    def normalized_moments(self) -> tuple[float, float, float]:
        """(α, β, γ): second moments divided by the determinant."""
        det = self.determinant
        return self.var_y / det, self.cov_xy / det, self.var_x / det


@dataclass(frozen=True)
class ModelParams:
    """Dimensionless parameters of the linearized laser master equation."""

    chi: float
    nu: float = 0.0
    lam: float = 0.5
    mu: float | None = None

    def __post_init__(self) -> None:
        _require_finite("chi", self.chi)
        _require_finite("nu", self.nu)
        _require_finite("lambda", self.lam)
        if self.chi < 0:
            raise InvalidParameterError(f"chi must be non-negative, got {self.chi}")
        if self.nu < 0:
            raise InvalidParameterError(f"nu must be non-negative, got {self.nu}")
        if not 0.0 < self.lam < 1.0:
            raise InvalidParameterError(f"lambda must lie in (0, 1), got {self.lam}")
        if self.mu is not None and not (math.isfinite(self.mu) and self.mu > 0):
            raise InvalidParameterError(f"mu must be positive, got {self.mu}")

    def with_value(self, param: SweepParameter, value: float) -> ModelParams:
        """Copy with one swept parameter replaced."""
        if param is SweepParameter.CHI:
            return replace(self, chi=value)
        if param is SweepParameter.NU:
            return replace(self, nu=value)
        return replace(self, lam=value)

    def value_of(self, param: SweepParameter) -> float:
        if param is SweepParameter.CHI:
            return self.chi
        if param is SweepParameter.NU:
            return self.nu
        return self.lam

    def as_dict(self) -> dict[str, float | None]:
        return {"chi": self.chi, "nu": self.nu, "lambda": self.lam, "mu": self.mu}


@dataclass(frozen=True)
class EnsembleParams:
    """Stationary ensemble of pure Gaussian states sharing (β, γ)."""

    beta: float
    gamma: float

    def __post_init__(self) -> None:
        _require_finite("beta", self.beta)
        _require_finite("gamma", self.gamma)
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidParameterError(f"gamma must lie in (0, 1], got {self.gamma}")

    @classmethod
    def coherent(cls) -> EnsembleParams:
        return cls(beta=0.0, gamma=1.0)

    @property
    def alpha(self) -> float:
        """Phase-quadrature variance fixed by purity: αγ − β² = 1."""
        return (1.0 + self.beta * self.beta) / self.gamma


@dataclass(frozen=True)
class EnsembleMemberWeight:
    """Weight of the member centred at x̄ (flat in ȳ)."""

    xbar: float
    density: float


class StationaryMixedness(NamedTuple):
    """Large-μ purity and largest eigenvalue of the stationary state."""

    purity: float
    max_eigenvalue: float


@dataclass(frozen=True)
class SurvivalCurve:
    """Sampled survival-probability or purity decay of an ensemble."""

    times: tuple[float, ...]
    values: tuple[float, ...]
    kind: RobustnessMeasure

    def __post_init__(self) -> None:
        if not self.times:
            raise InvalidParameterError("A decay curve needs at least one sample")
        if len(self.times) != len(self.values):
            raise InvalidParameterError("times and values must have the same length")
        if any(b <= a for a, b in zip(self.times, self.times[1:], strict=False)):
            raise InvalidParameterError("times must be strictly increasing")
        if self.times[0] == 0.0 and abs(self.values[0] - 1.0) > 1e-12:
            raise InvalidParameterError("A pure start must have value 1 at t=0")


@dataclass(frozen=True)
class ThresholdCrossing:
    """Outcome of a first-crossing search; time is None when the horizon was hit."""

    crossed: bool
    time: float | None
    threshold: float
    evaluations: int


@dataclass(frozen=True)
class Candidate:
    """A scored point of the (β, γ) plane."""

    beta: float
    gamma: float
    tau: float

    @property
    def alpha(self) -> float:
        return (1.0 + self.beta * self.beta) / self.gamma


@dataclass(frozen=True)
class OptimizerOptions:
    """Knobs of the multistart search (built from settings by the CLI)."""

    grid_gamma_points: int = 24
    grid_beta_points: int = 25
    n_starts: int = 4
    n_random_starts: int = 0
    seed: int = 1729
    tie_tolerance: float = 1e-3
    t_max: float = 1e3
    xatol: float = 1e-8
    fatol: float = 1e-11
    max_iter: int = 2000
    workers: int = 1

    def __post_init__(self) -> None:
        if self.grid_gamma_points < 2 or self.grid_beta_points < 3:
            raise InvalidParameterError("Search grid needs at least 2 gamma and 3 beta points")
        if self.n_starts < 1:
            raise InvalidParameterError("n_starts must be at least 1")
        if self.workers < 1:
            raise InvalidParameterError("workers must be at least 1")
        if self.t_max <= 0:
            raise InvalidParameterError("t_max must be positive")


@dataclass(frozen=True)
class RobustnessResult:
    """Optimal ensemble for one parameter set and measure."""

    beta_star: float
    gamma_star: float
    alpha_star: float
    tau_star: float
    constrained: bool
    measure: RobustnessMeasure
    on_boundary: bool
    n_evals: int
    params: ModelParams
    runner_up: Candidate | None = None

    @property
    def ensemble(self) -> EnsembleParams:
        return EnsembleParams(beta=self.beta_star, gamma=self.gamma_star)


@dataclass(frozen=True, eq=False)
class ContourGrid:
    """τ evaluated on a (γ, β) grid; rows follow gamma_axis, columns beta_axis."""

    gamma_axis: np.ndarray
    beta_axis: np.ndarray
    tau: np.ndarray
    pr_mask: np.ndarray
    params: ModelParams
    measure: RobustnessMeasure = RobustnessMeasure.SURVIVAL

    def __post_init__(self) -> None:
        shape = (len(self.gamma_axis), len(self.beta_axis))
        if self.tau.shape != shape or self.pr_mask.shape != shape:
            raise InvalidParameterError(
                f"Grid matrices must have shape {shape}, got {self.tau.shape} "
                f"and {self.pr_mask.shape}"
            )

    @property
    def failed_cells(self) -> int:
        return int(np.count_nonzero(~np.isfinite(self.tau)))


@dataclass(frozen=True)
class PowerLawFit:
    """Least-squares line through (log x, log y)."""

    exponent: float
    prefactor: float
    stderr: float
    fit_range: tuple[float, float]


@dataclass(frozen=True)
class SweepRow:
    """Optimum and coherent-ensemble time at one swept value (NaN when failed)."""

    param_value: float
    beta_star: float
    gamma_star: float
    alpha_star: float
    tau_star: float
    tau_coherent: float
    on_boundary: bool = False
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


@dataclass(frozen=True)
class SweepTable:
    """Optima along one parameter, with optional fitted exponents."""

    param_name: SweepParameter
    rows: tuple[SweepRow, ...]
    constrained: bool
    measure: RobustnessMeasure
    template: ModelParams
    fitted_exponents: dict[str, PowerLawFit] = field(default_factory=dict)

    def __post_init__(self) -> None:
        values = [row.param_value for row in self.rows]
        if values != sorted(values):
            raise InvalidParameterError("Sweep rows must be sorted by parameter value")

    def column(self, name: str, *, successful_only: bool = True) -> np.ndarray:
        """Column as an array; 'beta_mag' gives |β*|."""
        rows = [r for r in self.rows if r.ok] if successful_only else list(self.rows)
        if name == "param":
            return np.array([r.param_value for r in rows])
        if name == "beta_mag":
            return np.array([abs(r.beta_star) for r in rows])
        if name in ("alpha", "beta", "gamma", "tau"):
            name = f"{name}_star"
        return np.array([getattr(r, name) for r in rows])

    @property
    def failures(self) -> int:
        return sum(1 for r in self.rows if not r.ok)


@dataclass(frozen=True)
class RegimeReport:
    """Validity of the linearization and coherence conditions for given μ.

    Margins are bound/value ratios; a margin ≫ 1 means the condition holds
    comfortably.
    """

    mu: float
    chi: float
    nu: float
    output_coherent: bool
    linearization_valid: bool
    conditional_coherence: bool
    purity_mean_field: bool
    chi_margin: float
    nu_margin: float
    purity_margin: float


class ScalingTimescales(NamedTuple):
    """Heuristic decay times whose balance fixes the large-χ power laws."""

    phase_motion: float
    shear_cancellation: float
    amplitude_diffusion: float


@dataclass(frozen=True)
class EllipseSeries:
    """Ensemble members at several times, for one-standard-deviation plots."""

    times: tuple[float, ...]
    states: tuple[tuple[GaussianState, ...], ...]
    label: str = ""

    def __post_init__(self) -> None:
        if len(self.times) != len(self.states):
            raise InvalidParameterError("Each time needs its own tuple of states")


@dataclass
class RunProgress:
    """Mutable progress tracker for long CLI runs."""

    total: int = 0
    completed: int = 0
    failed: int = 0
    current_stage: str = "idle"


@dataclass(frozen=True)
class RunConfig:
    """Fully merged CLI options for one command."""

    command: Command
    chi: float = 0.0
    nu: float = 0.0
    lam: float = 0.5
    mu: float | None = None
    beta: float = 0.0
    gamma: float = 1.0
    xbars: tuple[float, ...] = (0.0,)
    times: tuple[float, ...] = ()
    t_max: float = 1e3
    points: int = 53
    param: SweepParameter | None = None
    lo: float | None = None
    hi: float | None = None
    constrained: bool = False
    measure: RobustnessMeasure = RobustnessMeasure.SURVIVAL
    gamma_range: tuple[float, float] = (0.01, 1.0)
    beta_range: tuple[float, float] = (-1.0, 1.0)
    resolution: int = 41
    fit: bool = False
    warm_start: bool = True
    output: Path | None = None
    fmt: OutputFormat = OutputFormat.JSON
    timestamp: bool = True
    seed: int | None = None
    threads: int | None = None

    @property
    def model_params(self) -> ModelParams:
        return ModelParams(chi=self.chi, nu=self.nu, lam=self.lam, mu=self.mu)

    @property
    def ensemble(self) -> EnsembleParams:
        return EnsembleParams(beta=self.beta, gamma=self.gamma)
