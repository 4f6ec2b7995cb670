"""Command-line front end for the robust-ensembles toolkit."""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

from robust_ensembles.config.settings import (
    RobustEnsemblesSettings,
    load_settings,
    read_config_file,
)
from robust_ensembles.core.exceptions import (
    ConfigError,
    InvalidParameterError,
    RobustEnsemblesError,
)
from robust_ensembles.core.models import (
    Command,
    OutputFormat,
    RobustnessMeasure,
    RunConfig,
    RunProgress,
    SweepParameter,
)
from robust_ensembles.pipeline.runner import ReproductionRunner, exit_code_for

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_INTERRUPTED = 130

# Commands that print a number instead of drawing anything.
NO_FIGURE_COMMANDS = {Command.TAU, Command.TRANSITION, Command.REPORT}

# Ledger query with no RunConfig.
RUNS_COMMAND = "runs"


def setup_logging(level: str) -> None:
    """Configure logging with timestamp and module info."""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )


def on_progress(progress: RunProgress) -> None:
    """Print progress updates to stderr, keeping stdout for results."""
    if progress.total == 0:
        return
    print(
        f"[{progress.current_stage}] "
        f"completed={progress.completed}/{progress.total} "
        f"failed={progress.failed}",
        end="\r",
        file=sys.stderr,
        flush=True,
    )


def _float_list(raw: str) -> tuple[float, ...]:
    """Parse a comma-separated list of floats."""
    try:
        return tuple(float(part) for part in raw.split(",") if part.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {raw}") from e


def _parse_bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {raw}")


# Config-file key → parser dest, for flags whose dest differs from the flag name.
FILE_KEY_ALIASES = {"lambda": "lam", "from": "lo", "to": "hi", "format": "fmt", "xbar": "xbars"}

FILE_CONVERTERS: dict[str, Callable[[str], Any]] = {
    **dict.fromkeys(
        (
            "chi",
            "nu",
            "lam",
            "mu",
            "beta",
            "gamma",
            "t_max",
            "lo",
            "hi",
            "gamma_min",
            "gamma_max",
            "beta_min",
            "beta_max",
        ),
        float,
    ),
    **dict.fromkeys(("points", "resolution", "seed", "threads"), int),
    **dict.fromkeys(("constrained", "fit", "cold_start", "no_timestamp"), _parse_bool),
    "xbars": _float_list,
    "times": _float_list,
    "param": SweepParameter,
    "measure": RobustnessMeasure,
    "fmt": OutputFormat,
    "output": Path,
}


def _add_model_args(subparser: argparse.ArgumentParser) -> None:
    """Model parameters, measure and horizon shared by every command."""
    subparser.add_argument("--chi", type=float, default=None, help="Self-energy strength χ")
    subparser.add_argument("--nu", type=float, default=None, help="Phase-noise strength ν")
    subparser.add_argument(
        "--lambda", type=float, default=None, dest="lam", help="Survival threshold Λ in (0, 1)"
    )
    subparser.add_argument(
        "--mu", type=float, default=None, help="Mean boson number (regime checks only)"
    )
    subparser.add_argument(
        "--measure",
        type=RobustnessMeasure,
        choices=list(RobustnessMeasure),
        default=None,
        help="Robustness measure (default: survival)",
    )
    subparser.add_argument(
        "--t-max", type=float, default=None, dest="t_max", help="Threshold search horizon"
    )


def _add_output_args(subparser: argparse.ArgumentParser) -> None:
    """Output, reproducibility and config-file flags shared by every command."""
    subparser.add_argument("--config", type=Path, default=None, help="key=value config file")
    subparser.add_argument(
        "--output", "-o", type=Path, default=None, help="Output file (relative to output_dir)"
    )
    subparser.add_argument(
        "--format",
        type=OutputFormat,
        choices=list(OutputFormat),
        default=None,
        dest="fmt",
        help="Artifact format (default: json)",
    )
    subparser.add_argument(
        "--no-timestamp",
        action="store_true",
        default=None,
        dest="no_timestamp",
        help="Omit the generation timestamp comment from SVG output",
    )
    subparser.add_argument("--seed", type=int, default=None, help="Multistart seed")
    subparser.add_argument(
        "--threads", type=int, default=None, help="Worker processes for sweeps and contours"
    )


def _add_ensemble_args(subparser: argparse.ArgumentParser) -> None:
    """Explicit ensemble (β, γ) and member selection."""
    subparser.add_argument("--beta", type=float, default=None, help="Ensemble β (default 0)")
    subparser.add_argument("--gamma", type=float, default=None, help="Ensemble γ (default 1)")
    subparser.add_argument(
        "--xbar",
        type=_float_list,
        default=None,
        dest="xbars",
        help="Comma-separated member offsets x̄",
    )
    subparser.add_argument(
        "--times", type=_float_list, default=None, help="Comma-separated sample times"
    )


def _add_search_args(subparser: argparse.ArgumentParser) -> None:
    subparser.add_argument(
        "--constrained",
        action="store_true",
        default=None,
        help="Restrict to physically realizable ensembles",
    )


def _add_range_args(subparser: argparse.ArgumentParser) -> None:
    """Swept parameter and its interval."""
    subparser.add_argument(
        "--param",
        type=SweepParameter,
        choices=list(SweepParameter),
        default=None,
        help="Parameter to vary",
    )
    subparser.add_argument("--from", type=float, default=None, dest="lo", help="Lower end")
    subparser.add_argument("--to", type=float, default=None, dest="hi", help="Upper end")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robust-ensembles",
        description="Robust Ensembles - maximally robust pure-state ensembles of a laser",
    )
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    helps = {
        Command.EVOLVE: "Evolve ensemble members and report their moments",
        Command.SURVIVAL: "Sample the survival (or purity) curve of an ensemble",
        Command.TAU: "Survival time (or purity half-life) of one ensemble",
        Command.OPTIMIZE: "Find the maximally robust ensemble",
        Command.SWEEP: "Optimize along a parameter range",
        Command.CONTOUR: "Map τ over the (γ, β) plane with the realizability mask",
        Command.TRANSITION: "Locate where the optimum leaves the coherent state",
        Command.REPORT: "Regime checks, asymptotics and closed-form cross-checks",
    }
    subs: dict[Command, argparse.ArgumentParser] = {}
    for command, help_text in helps.items():
        sub = subs[command] = subparsers.add_parser(str(command), help=help_text)
        _add_model_args(sub)
        _add_output_args(sub)
        if command in (Command.EVOLVE, Command.SURVIVAL, Command.TAU, Command.REPORT):
            _add_ensemble_args(sub)
        if command in (Command.OPTIMIZE, Command.SWEEP, Command.CONTOUR, Command.TRANSITION):
            _add_search_args(sub)
        if command in (Command.SWEEP, Command.TRANSITION):
            _add_range_args(sub)

    sweep_parser = subs[Command.SWEEP]
    sweep_parser.add_argument("--points", type=int, default=None, help="Geometric grid size")
    sweep_parser.add_argument(
        "--fit", action="store_true", default=None, help="Fit and print power-law exponents"
    )
    sweep_parser.add_argument(
        "--cold-start",
        action="store_true",
        default=None,
        dest="cold_start",
        help="Optimize each point independently (parallel with --threads)",
    )

    contour_parser = subs[Command.CONTOUR]
    for flag, help_text in (
        ("--gamma-min", "Smallest γ (default 0.01)"),
        ("--gamma-max", "Largest γ (default 1)"),
        ("--beta-min", "Smallest β (default -1)"),
        ("--beta-max", "Largest β (default 1)"),
    ):
        contour_parser.add_argument(flag, type=float, default=None, help=help_text)
    contour_parser.add_argument(
        "--resolution", type=int, default=None, help="Grid points per axis (default 41)"
    )

    runs_parser = subparsers.add_parser(RUNS_COMMAND, help="Show recorded runs by status")
    runs_parser.add_argument(
        "--limit", type=int, default=20, help="Most recent runs to list (default 20)"
    )
    return parser


def _file_values(path: Path | None) -> dict[str, Any]:
    """Typed values from a config file, keyed by parser dest.

    Raises:
        ConfigError: on a missing file, an unknown key or an unparsable value.
    """
    if path is None:
        return {}
    values: dict[str, Any] = {}
    for key, raw in read_config_file(path).items():
        dest = FILE_KEY_ALIASES.get(key, key)
        converter = FILE_CONVERTERS.get(dest)
        if converter is None:
            raise ConfigError(f"Unknown key {key!r} in {path}")
        try:
            values[dest] = converter(raw)
        except (ValueError, argparse.ArgumentTypeError) as e:
            raise ConfigError(f"Bad value for {key!r} in {path}: {raw!r}") from e
    return values


def build_run_config(
    args: argparse.Namespace, settings: RobustEnsemblesSettings | None = None
) -> RunConfig:
    """Merge flags, the optional config file and settings into a RunConfig.

    Precedence: explicit flags > config file > settings > built-in defaults.

    Raises:
        ConfigError: if the config file cannot be used.
    """
    settings = settings or RobustEnsemblesSettings()
    merged = _file_values(getattr(args, "config", None))
    merged.update(
        {key: value for key, value in vars(args).items() if value is not None and key != "config"}
    )

    def pick(key: str, default: Any) -> Any:
        return merged.get(key, default)

    defaults = RunConfig(command=Command(merged["command"]))
    return RunConfig(
        command=defaults.command,
        chi=pick("chi", defaults.chi),
        nu=pick("nu", defaults.nu),
        lam=pick("lam", defaults.lam),
        mu=pick("mu", defaults.mu),
        beta=pick("beta", defaults.beta),
        gamma=pick("gamma", defaults.gamma),
        xbars=pick("xbars", defaults.xbars),
        times=pick("times", defaults.times),
        t_max=pick("t_max", settings.t_max),
        points=pick("points", defaults.points),
        param=pick("param", defaults.param),
        lo=pick("lo", defaults.lo),
        hi=pick("hi", defaults.hi),
        constrained=pick("constrained", defaults.constrained),
        measure=pick("measure", defaults.measure),
        gamma_range=(
            pick("gamma_min", defaults.gamma_range[0]),
            pick("gamma_max", defaults.gamma_range[1]),
        ),
        beta_range=(
            pick("beta_min", defaults.beta_range[0]),
            pick("beta_max", defaults.beta_range[1]),
        ),
        resolution=pick("resolution", defaults.resolution),
        fit=pick("fit", defaults.fit),
        warm_start=not pick("cold_start", False),
        output=pick("output", defaults.output),
        fmt=pick("fmt", defaults.fmt),
        timestamp=not pick("no_timestamp", False),
        seed=pick("seed", defaults.seed),
        threads=pick("threads", defaults.threads),
    )


def validate_run_config(config: RunConfig) -> None:
    """Reject inconsistent flag combinations before any computation.

    Raises:
        ConfigError: describing the first problem found.
    """
    try:
        params = config.model_params
        _ = config.ensemble
    except InvalidParameterError as e:
        raise ConfigError(str(e)) from e

    if config.fmt is OutputFormat.SVG and config.command in NO_FIGURE_COMMANDS:
        raise ConfigError(f"{config.command} has no figure; use --format json or csv")
    if not config.t_max > 0:
        raise ConfigError(f"--t-max must be positive, got {config.t_max}")
    if config.threads is not None and config.threads < 1:
        raise ConfigError(f"--threads must be at least 1, got {config.threads}")
    if not config.xbars:
        raise ConfigError("--xbar needs at least one offset")
    if any(t < 0 for t in config.times):
        raise ConfigError("--times must be non-negative")
    if any(b <= a for a, b in zip(config.times, config.times[1:], strict=False)):
        raise ConfigError("--times must be strictly increasing")

    if config.command in (Command.SWEEP, Command.TRANSITION):
        if config.param is None or config.lo is None or config.hi is None:
            raise ConfigError(f"{config.command} needs --param, --from and --to")
        if not 0.0 < config.lo < config.hi:
            raise ConfigError(f"Need 0 < --from < --to, got {config.lo} and {config.hi}")
        if config.param is SweepParameter.LAMBDA:
            if config.command is Command.TRANSITION:
                raise ConfigError("transition varies chi or nu, not lambda")
            if config.hi >= 1.0:
                raise ConfigError("lambda sweeps must stay below 1")
        if config.command is Command.SWEEP and config.points < 1:
            raise ConfigError(f"--points must be at least 1, got {config.points}")
        if config.fit and config.points < 4:
            raise ConfigError("--fit needs at least 4 points")

    if config.command is Command.CONTOUR:
        g_lo, g_hi = config.gamma_range
        if not 0.0 < g_lo <= g_hi <= 1.0:
            raise ConfigError(f"gamma range must lie in (0, 1], got {config.gamma_range}")
        if config.beta_range[0] > config.beta_range[1]:
            raise ConfigError(f"beta range is reversed: {config.beta_range}")
        if config.resolution < 1:
            raise ConfigError(f"--resolution must be at least 1, got {config.resolution}")

    if config.command is Command.REPORT and params.mu is None:
        logger.info("No --mu given; regime checks will be skipped")


def run(
    config: RunConfig,
    settings: RobustEnsemblesSettings,
    progress: Callable[[RunProgress], None] | None = on_progress,
) -> int:
    """Execute one validated command and return its exit status."""
    runner = ReproductionRunner(settings=settings, on_progress=progress)
    try:
        outcome = runner.execute(config)
    except KeyboardInterrupt:
        print("\n\nInterrupted by user", file=sys.stderr)
        return EXIT_INTERRUPTED
    except (RobustEnsemblesError, OSError) as e:
        print(f"\nError: {e}", file=sys.stderr)
        return exit_code_for(e)
    except Exception:
        logger.exception("Unexpected failure in %s", config.command)
        return EXIT_UNEXPECTED
    finally:
        runner.close()

    if progress is not None and runner.progress.total:
        print(file=sys.stderr)
    for line in outcome.lines:
        print(line)
    for path in outcome.artifacts:
        logger.info("Wrote %s", path)
    return EXIT_OK


def show_runs(settings: RobustEnsemblesSettings, limit: int) -> int:
    """Print ledger counts by status and the most recent runs."""
    if limit < 1:
        print(f"Error: --limit must be at least 1, got {limit}", file=sys.stderr)
        return EXIT_CONFIG
    runner = ReproductionRunner(settings=settings)
    try:
        counts, recent = runner.run_history(limit)
    except OSError as e:
        print(f"\nError: {e}", file=sys.stderr)
        return exit_code_for(e)
    finally:
        runner.close()

    if not counts:
        print(f"No runs recorded in {settings.ledger_path}")
        return EXIT_OK
    print("Runs by status:")
    for status, count in sorted(counts.items()):
        print(f"  {status}: {count}")
    print("Recent runs:")
    for row in recent:
        line = (
            f"  #{row['run_id']} {row['command']} {row['status']} "
            f"completed={row['points_completed']} failed={row['points_failed']} "
            f"started={row['started_at']}"
        )
        if row["error_message"]:
            line += f" error={row['error_message']}"
        print(line)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> None:
    """CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        sys.exit(EXIT_UNEXPECTED)

    if args.command == RUNS_COMMAND:
        settings = load_settings()
        setup_logging(settings.log_level)
        sys.exit(show_runs(settings, args.limit))

    try:
        settings = load_settings()
        setup_logging(settings.log_level)
        config = build_run_config(args, settings)
        validate_run_config(config)
    except ConfigError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)

    sys.exit(run(config, settings))


if __name__ == "__main__":
    main()
