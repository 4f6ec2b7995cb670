"""Command orchestrator: compute → write artifacts → record the run."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from robust_ensembles.config.settings import RobustEnsemblesSettings
from robust_ensembles.core.analysis import (
    predicted_scalings,
    qsd_ensemble,
    regime_checks,
    scaling_timescales,
    sweep,
    tau_coherent_asymptotic,
    tau_coherent_leading_order,
    with_fits,
)
from robust_ensembles.core.ensemble import (
    coherent_ensemble,
    is_physically_realizable,
    member_state,
    pr_margin,
    stationary_mixedness,
    validate_threshold,
)
from robust_ensembles.core.exceptions import (
    ConfigError,
    FigureError,
    RegimeError,
    RobustEnsemblesError,
)
from robust_ensembles.core.models import (
    Candidate,
    Command,
    EllipseSeries,
    EnsembleParams,
    ModelParams,
    OptimizerOptions,
    OutputFormat,
    RobustnessMeasure,
    RunConfig,
    RunProgress,
    SweepParameter,
    SweepRow,
    SweepTable,
)
from robust_ensembles.core.moments import evolve_moments, purity_of, tilt_angle
from robust_ensembles.core.optimize import contour_grid, detect_transition, maximize_robustness
from robust_ensembles.core.oracles import ensemble_survival_gauss_hermite
from robust_ensembles.core.robustness import (
    decay_curve,
    ensemble_survival,
    robustness_time,
)
from robust_ensembles.storage.figures import emit_figure
from robust_ensembles.storage.ledger import RunLedger
from robust_ensembles.storage.writer import (
    TableWriter,
    curve_to_dict,
    fits_to_dict,
    grid_to_dict,
    result_to_dict,
    sweep_to_dict,
)

logger = logging.getLogger(__name__)

ARTIFACT = "robust-ensembles"
ARTIFACT_VERSION = "0.1.0"

# Samples of a decay curve when no times are given, spanning [0, 2τ].
DEFAULT_CURVE_SAMPLES = 41

OPTIMUM_COLUMNS = (
    "beta_star",
    "gamma_star",
    "alpha_star",
    "tau_star",
    "tilt_deg",
    "on_boundary",
    "constrained",
    "measure",
    "lambda",
)

EVOLVE_COLUMNS = (
    "t",
    "xbar",
    "mean_x",
    "mean_y",
    "var_x",
    "cov_xy",
    "var_y",
    "purity",
    "tilt_deg",
)


@dataclass
class RunOutcome:
    """Artifacts written and human-readable lines for stdout."""

    artifacts: list[Path] = field(default_factory=list)
    lines: list[str] = field(default_factory=list)
    points_completed: int = 0
    points_failed: int = 0


def provenance(config: RunConfig) -> dict[str, Any]:
    """Everything needed to reproduce an artifact; no timestamps."""
    parameters = {
        key: value
        for key, value in asdict(config).items()
        if key not in ("command", "output", "fmt", "timestamp", "threads")
    }
    return {
        "artifact": ARTIFACT,
        "version": ARTIFACT_VERSION,
        "command": str(config.command),
        "parameters": parameters,
    }


class ReproductionRunner:
    """Runs one CLI command end to end.

    Each ``run_*`` method computes its result, writes the artifact in the
    requested format and returns the lines the CLI prints. Progress of long
    commands (sweeps, transitions, contours) is reported via ``on_progress``.
    """

    def __init__(
        self,
        settings: RobustEnsemblesSettings | None = None,
        on_progress: Callable[[RunProgress], None] | None = None,
    ) -> None:
        self._settings = settings or RobustEnsemblesSettings()
        self._on_progress = on_progress
        self._progress = RunProgress()

        # Components initialized lazily
        self._writer: TableWriter | None = None
        self._ledger: RunLedger | None = None

    @property
    def on_progress(self) -> Callable[[RunProgress], None] | None:
        return self._on_progress

    @on_progress.setter
    def on_progress(self, callback: Callable[[RunProgress], None] | None) -> None:
        self._on_progress = callback

    @property
    def progress(self) -> RunProgress:
        return self._progress

    def _ensure_writer(self) -> TableWriter:
        if self._writer is None:
            self._settings.ensure_directories()
            self._writer = TableWriter(self._settings.output_dir)
        return self._writer

    def _ensure_ledger(self) -> RunLedger | None:
        if not self._settings.record_runs:
            return None
        if self._ledger is None:
            self._ledger = RunLedger(self._settings.ledger_path)
            self._ledger.connect()
        return self._ledger

    def run_history(self, limit: int = 20) -> tuple[dict[str, int], list[dict[str, Any]]]:
        """Run counts by status and the most recent runs, read from the ledger file."""
        path = self._settings.ledger_path
        if not path.exists():
            return {}, []
        with RunLedger(path) as ledger:
            return ledger.count_by_status(), ledger.list_runs(limit)

    def close(self) -> None:
        if self._ledger is not None:
            self._ledger.close()
            self._ledger = None

    def _notify(self) -> None:
        if self._on_progress:
            self._on_progress(self._progress)

    def _options(self, config: RunConfig) -> OptimizerOptions:
        options = self._settings.optimizer_options(config.threads)
        seed = config.seed if config.seed is not None else options.seed
        return replace(options, seed=seed, t_max=config.t_max)

    # ------------------------------------------------------------------
    # Dispatch
    # ------------------------------------------------------------------

    def execute(self, config: RunConfig) -> RunOutcome:
        """Run a validated config, recording it in the ledger when enabled.

        Raises:
            RobustEnsemblesError: on numerical or configuration failures.
            OSError: if an artifact cannot be written.
        """
        handlers: dict[Command, Callable[[RunConfig], RunOutcome]] = {
            Command.EVOLVE: self.run_evolve,
            Command.SURVIVAL: self.run_survival,
            Command.TAU: self.run_tau,
            Command.OPTIMIZE: self.run_optimize,
            Command.SWEEP: self.run_sweep,
            Command.CONTOUR: self.run_contour,
            Command.TRANSITION: self.run_transition,
            Command.REPORT: self.run_report,
        }
        ledger = self._ensure_ledger()
        run_id = ledger.start_run(str(config.command), provenance(config)) if ledger else 0
        self._progress = RunProgress(current_stage=str(config.command))
        self._notify()
        try:
            outcome = handlers[config.command](config)
        except Exception as e:
            self._progress.current_stage = f"error: {e}"
            self._notify()
            if ledger:
                ledger.fail_run(run_id, exit_code_for(e), str(e))
            raise
        self._progress.current_stage = "complete"
        self._notify()
        if ledger:
            ledger.complete_run(
                run_id,
                artifacts=[str(p) for p in outcome.artifacts],
                points_completed=outcome.points_completed,
                points_failed=outcome.points_failed,
            )
        return outcome

    def _target(self, config: RunConfig) -> Path:
        if config.output is not None:
            return config.output
        return Path(f"{config.command}.{config.fmt}")

    def _write(
        self,
        config: RunConfig,
        payload: dict[str, Any],
        columns: tuple[str, ...],
        rows: list[tuple[object, ...]],
        required: bool = True,
    ) -> list[Path]:
        """Write payload as JSON or rows as CSV; SVG is handled by callers."""
        if not required and config.output is None:
            return []
        target = self._target(config)
        writer = self._ensure_writer()
        if config.fmt is OutputFormat.CSV:
            return [writer.write_rows_csv(target, columns, rows, provenance(config))]
        return [writer.write_json(target, payload, provenance(config))]

    def _svg_path(self, config: RunConfig) -> Path:
        self._ensure_writer()
        return self._settings.output_dir / self._target(config)

    # ------------------------------------------------------------------
    # Commands
    # ------------------------------------------------------------------

    def run_evolve(self, config: RunConfig) -> RunOutcome:
        """Members of the configured ensemble at the requested times."""
        params, ensemble = config.model_params, config.ensemble
        times = config.times or self._default_times(ensemble, params, config)
        states = tuple(
            tuple(evolve_moments(member_state(ensemble, x), params, t) for x in config.xbars)
            for t in times
        )
        columns = EVOLVE_COLUMNS
        rows = [
            (
                t,
                xbar,
                s.mean_x,
                s.mean_y,
                s.var_x,
                s.cov_xy,
                s.var_y,
                purity_of(s),
                math.degrees(tilt_angle(s)),
            )
            for t, row in zip(times, states, strict=True)
            for xbar, s in zip(config.xbars, row, strict=True)
        ]
        outcome = RunOutcome(lines=[f"{r[0]:.6g} {r[1]:.6g} purity={r[7]:.6f}" for r in rows])
        if config.fmt is OutputFormat.SVG:
            label = _label(params, ensemble)
            series = EllipseSeries(times=tuple(times), states=states, label=label)
            outcome.artifacts.append(self._emit(config, series))
        else:
            payload = {"rows": [dict(zip(columns, r, strict=True)) for r in rows]}
            outcome.artifacts.extend(self._write(config, payload, columns, rows))
        return outcome

    def _default_times(
        self, ensemble: EnsembleParams, params: ModelParams, config: RunConfig
    ) -> tuple[float, ...]:
        tau = robustness_time(ensemble, params, config.measure, config.t_max)
        return (0.0, tau, 2.0 * tau)

    def run_survival(self, config: RunConfig) -> RunOutcome:
        """Survival or purity curve of the configured ensemble."""
        params, ensemble = config.model_params, config.ensemble
        times = config.times
        if not times:
            tau = robustness_time(ensemble, params, config.measure, config.t_max)
            times = tuple(float(t) for t in np.linspace(0.0, 2.0 * tau, DEFAULT_CURVE_SAMPLES))
        curve = decay_curve(ensemble, params, times, config.measure)
        threshold = params.lam if config.measure is RobustnessMeasure.SURVIVAL else 0.5
        outcome = RunOutcome(
            lines=[f"{t:.6g} {v:.10f}" for t, v in zip(curve.times, curve.values, strict=True)]
        )
        if config.fmt is OutputFormat.SVG:
            outcome.artifacts.append(
                self._emit(config, curve, labels=[_label(params, ensemble)], threshold=threshold)
            )
        else:
            rows = list(zip(curve.times, curve.values, strict=True))
            outcome.artifacts.extend(
                self._write(config, curve_to_dict(curve), ("t", str(curve.kind)), rows)
            )
        return outcome

    def run_tau(self, config: RunConfig) -> RunOutcome:
        """Survival time (or purity half-life) of one ensemble."""
        tau = robustness_time(config.ensemble, config.model_params, config.measure, config.t_max)
        outcome = RunOutcome(lines=[f"{tau:.6f}"])
        payload = {"tau": tau, "measure": str(config.measure)}
        outcome.artifacts.extend(
            self._write(
                config, payload, ("tau", "measure"), [(tau, str(config.measure))], required=False
            )
        )
        return outcome

    def run_optimize(self, config: RunConfig) -> RunOutcome:
        """Maximally robust ensemble at one parameter set."""
        params = config.model_params
        result = maximize_robustness(
            params, config.constrained, config.measure, self._options(config)
        )
        tilt = math.degrees(tilt_angle(member_state(result.ensemble, 0.0)))
        lines = [
            f"beta_star={result.beta_star:.6f}",
            f"gamma_star={result.gamma_star:.6f}",
            f"alpha_star={result.alpha_star:.6f}",
            f"tau_star={result.tau_star:.6f}",
            f"tilt_deg={tilt:.4f}",
            f"on_boundary={str(result.on_boundary).lower()}",
        ]
        outcome = RunOutcome(lines=lines)
        if config.fmt is OutputFormat.SVG:
            tau = result.tau_star
            times = (0.0, tau, 2.0 * tau)
            xbars = config.xbars if config.xbars != (0.0,) else _member_offsets(result.gamma_star)
            states = tuple(
                tuple(evolve_moments(member_state(result.ensemble, x), params, t) for x in xbars)
                for t in times
            )
            label = _label(params, result.ensemble)
            outcome.artifacts.append(self._emit(config, EllipseSeries(times, states, label)))
        else:
            payload = {**result_to_dict(result), "tilt_deg": tilt}
            row = (
                result.beta_star,
                result.gamma_star,
                result.alpha_star,
                result.tau_star,
                tilt,
                result.on_boundary,
                result.constrained,
                str(result.measure),
                params.lam,
            )
            outcome.artifacts.extend(self._write(config, payload, OPTIMUM_COLUMNS, [row]))
        return outcome

    def run_sweep(self, config: RunConfig) -> RunOutcome:
        """Optima along a parameter range, optionally with fitted exponents."""
        param, lo, hi = _swept_range(config)
        values = np.geomspace(lo, hi, config.points)
        self._progress.total = len(values)
        self._progress.current_stage = f"sweep {param}"
        self._notify()

        def on_point(row: SweepRow) -> None:
            self._progress.completed += 1
            if not row.ok:
                self._progress.failed += 1
            self._notify()

        table = sweep(
            config.model_params,
            param,
            values,
            constrained=config.constrained,
            measure=config.measure,
            options=self._options(config),
            warm_start=config.warm_start,
            on_point=on_point,
        )
        lines: list[str] = []
        if config.fit:
            table = with_fits(table)
            try:
                predicted = predicted_scalings(param, config.measure, config.constrained)
            except RegimeError:
                predicted = {}
            lines.append("exponents:")
            for name, fit in sorted(table.fitted_exponents.items()):
                expected = predicted.get(name)
                suffix = f" (predicted {expected:+.4f})" if expected is not None else ""
                lines.append(f"  {name}: {fit.exponent:+.4f} ± {fit.stderr:.4f}{suffix}")

        outcome = RunOutcome(
            lines=lines,
            points_completed=len(table.rows) - table.failures,
            points_failed=table.failures,
        )
        target = self._target(config)
        if config.fmt is OutputFormat.SVG:
            outcome.artifacts.append(self._emit(config, table))
        elif config.fmt is OutputFormat.CSV:
            writer = self._ensure_writer()
            outcome.artifacts.append(writer.write_sweep_csv(target, table, provenance(config)))
        else:
            writer = self._ensure_writer()
            outcome.artifacts.append(
                writer.write_json(target, sweep_to_dict(table), provenance(config))
            )
        if table.fitted_exponents and config.fmt is not OutputFormat.JSON:
            outcome.artifacts.append(self._write_fits(config, table))
        return outcome

    def _write_fits(self, config: RunConfig, table: SweepTable) -> Path:
        """Exponents beside a CSV or SVG sweep, as <stem>.fits.json."""
        target = self._target(config)
        payload = {
            "param_name": str(table.param_name),
            "constrained": table.constrained,
            "measure": str(table.measure),
            "fits": fits_to_dict(table.fitted_exponents),
        }
        writer = self._ensure_writer()
        return writer.write_json(target.with_suffix(".fits.json"), payload, provenance(config))

    def run_contour(self, config: RunConfig) -> RunOutcome:
        """τ over a (γ, β) grid with the realizability mask."""
        params = config.model_params
        self._progress.total = config.resolution * config.resolution
        self._notify()
        options = self._options(config)
        grid = contour_grid(
            params,
            config.gamma_range,
            config.beta_range,
            config.resolution,
            measure=config.measure,
            workers=options.workers,
            t_max=config.t_max,
        )
        self._progress.completed = grid.tau.size - grid.failed_cells
        self._progress.failed = grid.failed_cells
        self._notify()
        outcome = RunOutcome(
            lines=[f"cells={grid.tau.size} failed={grid.failed_cells}"],
            points_completed=self._progress.completed,
            points_failed=grid.failed_cells,
        )
        target = self._target(config)
        if config.fmt is OutputFormat.SVG:
            result = maximize_robustness(params, config.constrained, config.measure, options)
            marker = Candidate(result.beta_star, result.gamma_star, result.tau_star)
            outcome.artifacts.append(self._emit(config, grid, optimum=marker))
        elif config.fmt is OutputFormat.CSV:
            writer = self._ensure_writer()
            outcome.artifacts.append(writer.write_grid_csv(target, grid, provenance(config)))
        else:
            writer = self._ensure_writer()
            outcome.artifacts.append(
                writer.write_json(target, grid_to_dict(grid), provenance(config))
            )
        return outcome

    def run_transition(self, config: RunConfig) -> RunOutcome:
        """Parameter value where the optimum leaves the coherent edge."""
        param, lo, hi = _swept_range(config)

        def on_step(value: float, edge: bool) -> None:
            self._progress.completed += 1
            self._progress.current_stage = f"transition {param}={value:.4g} edge={edge}"
            self._notify()

        value = detect_transition(
            config.model_params,
            param,
            lo,
            hi,
            constrained=config.constrained,
            measure=config.measure,
            options=self._options(config),
            on_step=on_step,
        )
        outcome = RunOutcome(lines=[f"{value:.6f}"])
        payload = {"param": str(param), "transition": value}
        outcome.artifacts.extend(
            self._write(
                config, payload, ("param", "transition"), [(str(param), value)], required=False
            )
        )
        return outcome

    def run_report(self, config: RunConfig) -> RunOutcome:
        """Regime checks, asymptotic estimates and a closed-form cross-check."""
        params, ensemble = config.model_params, config.ensemble
        report: dict[str, Any] = {"params": params.as_dict()}
        lines: list[str] = []

        if params.mu is not None:
            regime = regime_checks(params)
            mixedness = stationary_mixedness(params.mu)
            report["regime"] = asdict(regime)
            report["stationary"] = mixedness._asdict()
            report["threshold_valid"] = validate_threshold(params.lam, params.mu)
            lines.append(
                f"output_coherent={regime.output_coherent} "
                f"linearization_valid={regime.linearization_valid} "
                f"conditional_coherence={regime.conditional_coherence}"
            )
        else:
            report["regime"] = None
            lines.append("regime checks skipped: no --mu given")

        try:
            report["tau_coherent_asymptotic"] = tau_coherent_asymptotic(params)
            report["tau_coherent_leading_order"] = tau_coherent_leading_order(params)
            qsd = qsd_ensemble(params)
            report["qsd_ensemble"] = {"beta": qsd.beta, "gamma": qsd.gamma, "alpha": qsd.alpha}
        except RegimeError as e:
            report["asymptotics"] = str(e)
            lines.append(f"asymptotics skipped: {e}")

        try:
            report["tau_coherent"] = robustness_time(
                coherent_ensemble(), params, config.measure, config.t_max
            )
        except RobustEnsemblesError as e:
            report["tau_coherent"] = None
            lines.append(f"coherent ensemble: {e}")

        t_check = report.get("tau_coherent") or 0.1
        closed = ensemble_survival(ensemble, params, t_check)
        quadrature = ensemble_survival_gauss_hermite(ensemble, params, t_check)
        report["ensemble"] = {
            "beta": ensemble.beta,
            "gamma": ensemble.gamma,
            "alpha": ensemble.alpha,
            "pr_margin": pr_margin(ensemble, params),
            "realizable": is_physically_realizable(ensemble, params),
            "tilt_deg": math.degrees(tilt_angle(member_state(ensemble, 0.0))),
            "timescales": scaling_timescales(ensemble, params)._asdict(),
            "survival_check": {
                "t": t_check,
                "closed_form": closed,
                "gauss_hermite": quadrature,
                "abs_diff": abs(closed - quadrature),
            },
        }
        lines.append(
            f"closed-form vs quadrature survival at t={t_check:.6g}: {abs(closed - quadrature):.2e}"
        )
        outcome = RunOutcome(lines=lines)
        outcome.artifacts.extend(
            self._write(config, report, ("key", "value"), list(_flatten(report)))
        )
        return outcome

    def _emit(self, config: RunConfig, data: Any, **kwargs: Any) -> Path:
        return emit_figure(
            data,
            self._svg_path(config),
            provenance=provenance(config),
            timestamp=config.timestamp and self._settings.svg_timestamp,
            **kwargs,
        )


def exit_code_for(error: BaseException) -> int:
    """Process exit status for an error raised by a command."""
    if isinstance(error, ConfigError):
        return 2
    if isinstance(error, FigureError | OSError):
        return 4
    if isinstance(error, RobustEnsemblesError):
        return 3
    if isinstance(error, KeyboardInterrupt):
        return 130
    return 1


def _swept_range(config: RunConfig) -> tuple[SweepParameter, float, float]:
    if config.param is None or config.lo is None or config.hi is None:
        raise ConfigError(f"{config.command} needs --param, --from and --to")
    return config.param, config.lo, config.hi


def _member_offsets(gamma: float) -> tuple[float, ...]:
    """x̄ = 0 and ± one standard deviation of the member distribution."""
    spread = math.sqrt(max(0.0, 1.0 - gamma))
    return (0.0,) if spread == 0.0 else (-spread, 0.0, spread)


def _label(params: ModelParams, ensemble: EnsembleParams) -> str:
    return (
        f"chi={params.chi:g} nu={params.nu:g} "
        f"beta={ensemble.beta:.4g} gamma={ensemble.gamma:.4g}"
    )


def _flatten(data: Any, prefix: str = "") -> list[tuple[str, object]]:
    if isinstance(data, dict):
        items: list[tuple[str, object]] = []
        for key, value in data.items():
            items.extend(_flatten(value, f"{prefix}.{key}" if prefix else str(key)))
        return items
    return [(prefix, data)]
