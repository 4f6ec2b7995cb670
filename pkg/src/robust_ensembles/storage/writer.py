"""CSV and JSON result writer with a provenance header."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from robust_ensembles.core.models import (
    ContourGrid,
    PowerLawFit,
    RobustnessResult,
    SurvivalCurve,
    SweepParameter,
    SweepTable,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

SWEEP_COLUMNS = (
    "param",
    "beta_star",
    "gamma_star",
    "alpha_star",
    "tau_star",
    "tau_coherent",
    "constrained",
    "measure",
    "lambda",
)


def format_value(value: object) -> str:
    """Render a cell: 17 significant digits for floats, lower-case booleans."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float | np.floating):
        return "nan" if math.isnan(value) else f"{float(value):.17g}"
    return str(value)


def to_jsonable(value: Any) -> Any:
    """Convert results, arrays and non-finite floats to JSON-safe values."""
    if isinstance(value, bool | str | int) or value is None:
        return value
    if isinstance(value, float | np.floating):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, Mapping):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, Sequence):
        return [to_jsonable(v) for v in value]
    return str(value)


def result_to_dict(result: RobustnessResult) -> dict[str, Any]:
    runner_up = result.runner_up
    return {
        "beta_star": result.beta_star,
        "gamma_star": result.gamma_star,
        "alpha_star": result.alpha_star,
        "tau_star": result.tau_star,
        "constrained": result.constrained,
        "measure": str(result.measure),
        "on_boundary": result.on_boundary,
        "n_evals": result.n_evals,
        "params": result.params.as_dict(),
        "runner_up": (
            None
            if runner_up is None
            else {"beta": runner_up.beta, "gamma": runner_up.gamma, "tau": runner_up.tau}
        ),
    }


def fits_to_dict(fits: Mapping[str, PowerLawFit]) -> dict[str, Any]:
    return {
        name: {
            "exponent": fit.exponent,
            "prefactor": fit.prefactor,
            "stderr": fit.stderr,
            "fit_range": list(fit.fit_range),
        }
        for name, fit in sorted(fits.items())
    }


def sweep_to_dict(table: SweepTable) -> dict[str, Any]:
    return {
        "param_name": str(table.param_name),
        "constrained": table.constrained,
        "measure": str(table.measure),
        "template": table.template.as_dict(),
        "rows": [
            {
                "param": row.param_value,
                "beta_star": row.beta_star,
                "gamma_star": row.gamma_star,
                "alpha_star": row.alpha_star,
                "tau_star": row.tau_star,
                "tau_coherent": row.tau_coherent,
                "on_boundary": row.on_boundary,
                "error": row.error or None,
            }
            for row in table.rows
        ],
        "fitted_exponents": fits_to_dict(table.fitted_exponents),
    }


def grid_to_dict(grid: ContourGrid) -> dict[str, Any]:
    return {
        "params": grid.params.as_dict(),
        "measure": str(grid.measure),
        "gamma_axis": grid.gamma_axis,
        "beta_axis": grid.beta_axis,
        "tau": grid.tau,
        "pr_mask": grid.pr_mask.tolist(),
    }


def curve_to_dict(curve: SurvivalCurve) -> dict[str, Any]:
    return {"kind": str(curve.kind), "times": list(curve.times), "values": list(curve.values)}


class TableWriter:
    """Write tables and results under an output directory.

    Every file starts with its provenance: a ``# provenance: {...}`` comment
    line for CSV, a top-level ``provenance`` key for JSON. Output is
    deterministic for identical inputs.
    """

    def __init__(self, output_dir: Path) -> None:
        self._output_dir = output_dir
        self._output_dir.mkdir(parents=True, exist_ok=True)

    def _resolve(self, filename: str | Path) -> Path:
        # Absolute paths replace the output directory.
        path = self._output_dir / filename
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def write_rows_csv(
        self,
        filename: str | Path,
        columns: Sequence[str],
        rows: Iterable[Sequence[object]],
        provenance: Mapping[str, Any],
    ) -> Path:
        """Write a CSV with a provenance comment line and a header row.

        Returns:
            Path to the written file.
        """
        buffer = io.StringIO()
        buffer.write(f"# provenance: {json.dumps(to_jsonable(provenance), sort_keys=True)}\n")
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(v) for v in row])

        filepath = self._resolve(filename)
        filepath.write_text(buffer.getvalue(), encoding="utf-8")
        logger.debug("Wrote CSV: %s", filepath)
        return filepath

    def write_sweep_csv(
        self, filename: str | Path, table: SweepTable, provenance: Mapping[str, Any]
    ) -> Path:
        """Write a sweep with the fixed column set; failed points appear as nan."""
        rows = [
            (
                row.param_value,
                row.beta_star,
                row.gamma_star,
                row.alpha_star,
                row.tau_star,
                row.tau_coherent,
                table.constrained,
                str(table.measure),
                row.param_value
                if table.param_name is SweepParameter.LAMBDA
                else table.template.lam,
            )
            for row in table.rows
        ]
        return self.write_rows_csv(filename, SWEEP_COLUMNS, rows, provenance)

    def write_grid_csv(
        self, filename: str | Path, grid: ContourGrid, provenance: Mapping[str, Any]
    ) -> Path:
        """Write a contour grid in long form, one row per cell."""
        rows = [
            (float(g), float(b), float(grid.tau[i, j]), bool(grid.pr_mask[i, j]))
            for i, g in enumerate(grid.gamma_axis)
            for j, b in enumerate(grid.beta_axis)
        ]
        return self.write_rows_csv(filename, ("gamma", "beta", "tau", "pr"), rows, provenance)

    def write_json(
        self, filename: str | Path, result: Mapping[str, Any], provenance: Mapping[str, Any]
    ) -> Path:
        """Write a versioned JSON document with sorted keys."""
        document = {
            "schema": SCHEMA_VERSION,
            "provenance": to_jsonable(provenance),
            "result": to_jsonable(result),
        }
        filepath = self._resolve(filename)
        filepath.write_text(
            json.dumps(document, sort_keys=True, indent=2, allow_nan=False) + "\n",
            encoding="utf-8",
        )
        logger.debug("Wrote JSON: %s", filepath)
        return filepath
