"""Shared fixtures for Robust Ensembles tests."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from robust_ensembles.config.settings import RobustEnsemblesSettings
from robust_ensembles.core.models import (
    EnsembleParams,
    ModelParams,
    OptimizerOptions,
    RobustnessMeasure,
    SweepParameter,
    SweepRow,
    SweepTable,
)


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for randomized property checks."""
    return np.random.default_rng(20240917)


@pytest.fixture
def free_params() -> ModelParams:
    """No self-energy, no excess phase noise, Λ = ½."""
    return ModelParams(chi=0.0, nu=0.0, lam=0.5)


@pytest.fixture
def strong_chi_params() -> ModelParams:
    """Self-energy dominated regime used for the headline optimum."""
    return ModelParams(chi=50.0, nu=0.0, lam=0.5)


@pytest.fixture
def squeezed_ensemble() -> EnsembleParams:
    """A generic amplitude-squeezed, tilted ensemble."""
    return EnsembleParams(beta=0.2, gamma=0.3)


@pytest.fixture
def fast_options() -> OptimizerOptions:
    """Coarser search grid for quick optimizer tests."""
    return OptimizerOptions(grid_gamma_points=16, grid_beta_points=17, n_starts=3)


@pytest.fixture
def power_law_table() -> SweepTable:
    """Synthetic χ sweep following the large-χ power laws exactly."""
    xs = np.geomspace(1.0, 1e4, 13)
    rows = tuple(
        SweepRow(
            param_value=float(x),
            beta_star=float(-0.3 * x ** (-1 / 3)),
            gamma_star=float(0.5 * x ** (-2 / 3)),
            alpha_star=float(2.0 * x ** (2 / 3)),
            tau_star=float(x ** (-2 / 3)),
            tau_coherent=float(np.sqrt(8.0) / x),
        )
        for x in xs
    )
    return SweepTable(
        param_name=SweepParameter.CHI,
        rows=rows,
        constrained=True,
        measure=RobustnessMeasure.SURVIVAL,
        template=ModelParams(chi=1.0),
    )


@pytest.fixture
def tmp_output_dir(tmp_path: Path) -> Path:
    """Temporary output directory for tests."""
    output = tmp_path / "output"
    output.mkdir()
    return output


@pytest.fixture
def tmp_db_path(tmp_path: Path) -> Path:
    """Temporary database path for tests."""
    return tmp_path / "test.db"


@pytest.fixture
def tmp_settings(tmp_path: Path) -> RobustEnsemblesSettings:
    """Settings pointing to temporary directories, with the run ledger on."""
    return RobustEnsemblesSettings(
        output_dir=tmp_path / "output",
        ledger_path=tmp_path / "data" / "runs.db",
        record_runs=True,
        svg_timestamp=False,
        grid_gamma_points=16,
        grid_beta_points=17,
        n_starts=3,
    )
