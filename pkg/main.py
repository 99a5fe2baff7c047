"""windward - GNSS-independent return-to-home.

Entry point for the command-line tool.
"""

import argparse
import itertools
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Iterator, Sequence

import numpy as np
from pydantic import BaseModel, ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.table import Table

import config as config_module
import evaluator
import lasso as lasso_module
import logstore
import plotting
from deadreckon import Path as Route, integrate_path, total_distance, write_path_csv
from errors import ConfigError, ScenarioError, WindwardError
from frames import Angle, WindSample
from planner_lasso import LassoPlanConfig, plan_backward_lasso
from planner_weighted import plan_backward_weighted, write_commands_csv
from system_info import get_host_info, write_host_json
from version import VERSION
from windsim import apply_gamma, read_truth_csv, simulate, write_truth_csv

logger = logging.getLogger("windward")

console = Console()
err_console = Console(stderr=True)


def _setup_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(message)s",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )


def _validated(model: type[BaseModel], **values: Any) -> Any:
    try:
        return model(**values)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def _seed(text: str) -> int:
    try:
        seed = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= seed < 2**63:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2**63), got {seed}")
    return seed


def _positive(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _open_text(path: str):
    try:
        return open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise ConfigError(f"cannot open {path}: {exc.strerror}") from exc


def _write(out: Path, name: str, fill: Callable[[Any], None]) -> Path:
    target = out / name
    with open(target, "w", encoding="utf-8", newline="") as fh:
        fill(fh)
    logger.info("wrote %s", target)
    return target


def _echo(out: Path, command: str, settings: dict[str, Any]) -> None:
    _write(
        out,
        config_module.RESOLVED_NAME,
        lambda fh: config_module.write_resolved(fh, command, settings),
    )


def _args_settings(args: argparse.Namespace, *names: str) -> dict[str, Any]:
    return {name: getattr(args, name) for name in names}


def _scenario_overrides(args: argparse.Namespace) -> dict[str, Any]:
    overrides: dict[str, Any] = {
        "seed": args.seed,
        "planner": getattr(args, "planner", None),
        "alpha": getattr(args, "alpha", None),
        "beta": getattr(args, "beta", None),
        "compensation": getattr(args, "compensation", None),
        "repetitions": getattr(args, "repetitions", None),
    }
    gamma = getattr(args, "gamma", None)
    if gamma is not None:
        overrides["gamma_wind_backward"] = config_module.parse_gamma(gamma)
    forward_gamma = getattr(args, "forward_gamma", None)
    if forward_gamma is not None:
        overrides["gamma_wind_forward"] = config_module.parse_gamma(forward_gamma)
    return overrides


def cmd_simulate(args: argparse.Namespace) -> None:
    scenario, _ = config_module.load_scenario(args.scenario, _scenario_overrides(args))
    wind_seed = evaluator.spawn_seeds(scenario.seed, 4)[0]
    wind = scenario.wind.model_copy(update={"seed": wind_seed})
    record, truth = simulate(scenario.script.build(), wind, scenario.plant, scenario.scenario_id)

    out = _out_dir(args)
    _write(out, "flight.csv", lambda fh: logstore.write_flight_csv(record.telemetry, fh))
    _write(out, "anemometer.csv", lambda fh: logstore.write_anemometer_csv(record.wind, fh))
    _write(out, "flight.record", lambda fh: logstore.save_record(record, fh))
    _write(out, "truth.csv", lambda fh: write_truth_csv(truth, fh, record.sample_dt))
    _echo(out, "simulate", config_module.resolved_settings(scenario))
    console.print(
        f"simulated {scenario.scenario_id}: {len(record)} samples, "
        f"end ({truth.end[0]:.2f} m N, {truth.end[1]:.2f} m E)"
    )


def cmd_ingest(args: argparse.Namespace) -> None:
    strict = not args.lenient
    with _open_text(args.flight) as fh:
        telemetry = logstore.parse_flight_csv(fh, strict=strict)
    with _open_text(args.wind) as fh:
        wind = logstore.parse_anemometer_csv(fh, strict=strict)
    meta = _validated(logstore.FlightMeta, flight_id=args.flight_id, sample_dt=args.sample_dt)
    record = logstore.align(telemetry, wind, args.sample_dt, meta)

    out = _out_dir(args)
    _write(out, "flight.record", lambda fh: logstore.save_record(record, fh))
    settings = _args_settings(args, "flight", "wind", "flight_id", "sample_dt", "lenient")
    settings["skipped_rows"] = {"flight": telemetry.skipped, "wind": wind.skipped}
    _echo(out, "ingest", settings)
    console.print(f"ingested {len(record)} aligned samples")


def _load_record(path: str) -> logstore.FlightRecord:
    with _open_text(path) as fh:
        return logstore.load_record(fh)


def _track_deviation(path: Route, track: Sequence[tuple[float, float, float]]) -> float:
    """Largest horizontal distance between the dead-reckoned points and a
    reference track sampled on the same grid."""
    if len(track) != len(path):
        logger.warning(
            "reference track has %d points, route has %d; comparing the common prefix",
            len(track),
            len(path),
        )
    n = min(len(track), len(path))
    route = np.array([(p.north, p.east) for p in path.points[:n]])
    ref = np.asarray(track[:n], dtype=float)[:, :2]
    return float(np.max(np.hypot(*(route - ref).T)))


def cmd_reconstruct(args: argparse.Namespace) -> None:
    record = _load_record(args.record)
    path = integrate_path(record)
    track = None
    if args.truth:
        with _open_text(args.truth) as fh:
            track = read_truth_csv(fh)

    out = _out_dir(args)
    title = record.meta.flight_id
    _write(out, "path.csv", lambda fh: write_path_csv(path, fh))
    plotting.plot_path(path, out / "route.svg", title=title, reference=track)
    plotting.plot_path_3d(path, out / "route_3d.svg", title=title, reference=track)
    _echo(out, "reconstruct", _args_settings(args, "record", "truth"))
    console.print(
        f"{record.meta.flight_id}: {len(path)} points, "
        f"{total_distance(path):.1f} m flown, "
        f"end ({path.end[0]:.2f} m N, {path.end[1]:.2f} m E)"
    )
    if track is not None:
        console.print(f"max deviation from reference: {_track_deviation(path, track):.3f} m")


def _mirrored_readings(
    record: logstore.FlightRecord, gamma: tuple[float, float] | None, seed: int
) -> Iterator[tuple[WindSample, Angle]]:
    """The forward log's readings in reverse, scaled per step by gamma;
    the first reading is held once the log runs out."""
    if gamma is not None:
        record = apply_gamma(record, gamma, seed)
    pairs = [(wind, tel.yaw) for tel, wind in reversed(record.samples)]
    return itertools.chain(pairs, itertools.repeat(pairs[-1]))


def cmd_plan(args: argparse.Namespace) -> None:
    record = _load_record(args.record)
    if args.live:
        live_record = _load_record(args.live)
        readings: Any = ((wind, tel.yaw) for tel, wind in live_record.samples)
        seed = None
    else:
        seed = args.seed if args.seed is not None else config_module.draw_seed()
        gamma = config_module.parse_gamma(args.gamma) if args.gamma else None
        readings = _mirrored_readings(record, gamma, seed)

    if args.planner == "weighted":
        params = config_module.weighted_params(args.alpha, args.beta)
        commands = list(plan_backward_weighted(record, readings, params))
        settings = {"planner": "weighted", "weighted": params.model_dump(mode="json")}
    else:
        if not args.models:
            raise ConfigError("the lasso planner needs --models (see `windward train`)")
        with _open_text(args.models) as fh:
            models = lasso_module.load_models(fh)
        cfg = _validated(LassoPlanConfig, sample_dt=record.sample_dt)
        start = integrate_path(record).end
        height = record.telemetry[-1].height
        commands = list(plan_backward_lasso(start, models, readings, cfg, height))
        settings = {"planner": "lasso", "lasso": cfg.model_dump(mode="json")}

    out = _out_dir(args)
    _write(out, "commands.csv", lambda fh: write_commands_csv(commands, fh))
    settings |= _args_settings(args, "record", "live", "models", "gamma")
    settings["seed"] = seed
    _echo(out, "plan", settings)
    console.print(f"planned {len(commands)} backward steps")


def cmd_train(args: argparse.Namespace) -> None:
    records = [_load_record(p) for p in args.records]
    result = lasso_module.train_axis_models(records, args.lam, args.robust_trim)
    logger.info("trained %s", result.nice())

    out = _out_dir(args)
    _write(out, "models.json", lambda fh: lasso_module.save_models(result.models, fh))
    for axis, model, label in (
        ("north", result.models.north, "northR (m/s)"),
        ("east", result.models.east, "eastR (m/s)"),
    ):
        data = lasso_module.Dataset1D.from_records(records, axis)
        plotting.plot_fit(data, model, out / f"fit_{axis}.svg", xlabel=label, title=axis)
    settings = _args_settings(args, "records", "lam", "robust_trim")
    settings["diagnostics"] = result.model_dump(mode="json", exclude={"models"})
    _echo(out, "train", settings)

    table = Table(title="LASSO fit")
    for column in ("axis", "slope", "intercept", "lambda", "pearson r", "R²"):
        table.add_column(column)
    for axis, model, r, r2 in (
        ("north", result.models.north, result.pearson_north, result.r2_north),
        ("east", result.models.east, result.pearson_east, result.r2_east),
    ):
        table.add_row(
            axis, f"{model.slope:+.4f}", f"{model.intercept:+.4f}", f"{model.lam:.3g}",
            f"{r:+.3f}", f"{r2:.3f}",
        )
    console.print(table)


def _print_summary(reports: list[evaluator.RunReport]) -> None:
    table = Table(title="arrival error")
    for column in ("scenario", "runs", "median |err| m", "mean x m", "mean y m", "ms/step"):
        table.add_column(column)
    for row in evaluator.summarize(reports):
        table.add_row(
            row.group,
            str(row.runs),
            f"{row.median_err_m:.3f}",
            f"{row.mean_x_err_m:+.3f}",
            f"{row.mean_y_err_m:+.3f}",
            f"{row.mean_step_ms:.4f}",
        )
    console.print(table)


def _emit(
    args: argparse.Namespace,
    command: str,
    reports: list[evaluator.RunReport],
    settings: dict[str, Any],
) -> None:
    out = _out_dir(args)
    evaluator.emit_report(reports, out, plots=not args.no_plots)
    if not args.no_timing:
        host = get_host_info()
        logger.info("latencies measured on %s", host.nice())
        _write(out, "host.json", lambda fh: write_host_json(host, fh))
    settings |= {"workers": args.workers, "timing": not args.no_timing}
    _echo(out, command, settings)
    _print_summary(reports)


def cmd_evaluate(args: argparse.Namespace) -> None:
    scenario, _ = config_module.load_scenario(args.scenario, _scenario_overrides(args))
    reports = evaluator.run_many(
        evaluator.expand(scenario),
        workers=args.workers,
        timing=not args.no_timing,
        progress=not args.quiet,
    )
    _emit(args, "evaluate", reports, config_module.resolved_settings(scenario))


def cmd_sweep(args: argparse.Namespace) -> None:
    scenario, sweep_spec = config_module.load_scenario(args.scenario, _scenario_overrides(args))
    axis = args.axis or (sweep_spec.axis if sweep_spec else None)
    if axis is None:
        raise ConfigError("sweep needs --axis or a sweep section in the scenario file")
    if args.values:
        values = config_module.parse_values(args.values, axis)
    elif sweep_spec is not None and sweep_spec.axis == axis:
        values = sweep_spec.values
    else:
        raise ConfigError(f"no values to sweep along {axis}; pass --values")
    sweep_spec = config_module.SweepSpec(axis=axis, values=values)
    reports = evaluator.sweep(
        scenario,
        sweep_spec.axis,
        sweep_spec.values,
        workers=args.workers,
        timing=not args.no_timing,
        progress=not args.quiet,
    )
    _emit(args, "sweep", reports, config_module.resolved_settings(scenario, sweep_spec))


SEED_HELP = "random seed in [0, 2**63); drawn and echoed if omitted"
TIMED_SEED_HELP = (
    SEED_HELP + "; latency columns and host.json vary between runs unless --no-timing"
)


def _add_common(p: argparse.ArgumentParser, out_default: str, seed_help: str = SEED_HELP) -> None:
    p.add_argument("--out", default=out_default, help="output directory (default: %(default)s)")
    p.add_argument("--seed", type=_seed, default=None, help=seed_help)


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", help="YAML scenario file")
    p.add_argument("--planner", choices=evaluator.PLANNERS, default=None)
    p.add_argument("--alpha", type=float, default=None, help="weight on forward speed")
    p.add_argument("--beta", type=float, default=None, help="weight on the wind ratio")
    p.add_argument("--gamma", default=None, help="backward wind multiplier range lo:hi")
    p.add_argument("--forward-gamma", default=None, help="forward wind multiplier range lo:hi")
    p.add_argument(
        "--compensation", type=float, default=None, help="autopilot wind compensation in [0, 1]"
    )


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--repetitions", type=int, default=None, help="seeded repetitions per scenario")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument(
        "--no-timing", action="store_true", help="skip latency measurement (byte-stable reports)"
    )
    p.add_argument("--no-plots", action="store_true", help="write the CSV report only")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="windward", description="GNSS-independent return-to-home")
    parser.add_argument("--version", action="version", version=f"windward {VERSION}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="fly a scripted forward flight in simulated wind")
    _add_scenario_flags(p)
    _add_common(p, "out/simulate")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("ingest", help="align a flight CSV and an anemometer CSV into a record")
    p.add_argument("--flight", required=True, help="telemetry CSV")
    p.add_argument("--wind", required=True, help="anemometer CSV")
    p.add_argument("--flight-id", default="flight")
    p.add_argument("--sample-dt", type=_positive, default=logstore.DEFAULT_SAMPLE_DT)
    p.add_argument("--lenient", action="store_true", help="skip malformed rows instead of failing")
    _add_common(p, "out/ingest")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("reconstruct", help="dead-reckon the forward route of a record")
    p.add_argument("record")
    p.add_argument("--truth", help="reference track CSV (truth.csv from simulate) to overlay")
    _add_common(p, "out/reconstruct")
    p.set_defaults(handler=cmd_reconstruct)

    p = sub.add_parser("plan", help="compute backward commands for a record")
    p.add_argument("record")
    p.add_argument("--live", help="record holding the wind met on the way back")
    p.add_argument("--planner", choices=evaluator.PLANNERS, default="weighted")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--gamma", default=None, help="scale the mirrored forward wind by lo:hi")
    p.add_argument("--models", help="LASSO models JSON for --planner lasso")
    _add_common(p, "out/plan")
    p.set_defaults(handler=cmd_plan)

    p = sub.add_parser("train", help="fit the per-axis LASSO models")
    p.add_argument("records", nargs="+")
    p.add_argument(
        "--lambda",
        dest="lam",
        type=float,
        default=None,
        help="fixed penalty; cross-validated if omitted",
    )
    p.add_argument("--robust-trim", action="store_true")
    _add_common(p, "out/train")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("evaluate", help="run a scenario in closed loop")
    _add_scenario_flags(p)
    _add_run_flags(p)
    _add_common(p, "out/evaluate", TIMED_SEED_HELP)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("sweep", help="run a scenario across one parameter axis")
    _add_scenario_flags(p)
    _add_run_flags(p)
    p.add_argument("--axis", choices=evaluator.SWEEP_AXES, default=None)
    p.add_argument("--values", default=None, help="comma-separated values; lo:hi for gamma axes")
    _add_common(p, "out/sweep", TIMED_SEED_HELP)
    p.set_defaults(handler=cmd_sweep)
    return parser


def run(argv: list[str] | None = None) -> int:
    """Parse, dispatch and map errors to exit codes: 0 ok, 1 runtime, 2 usage."""
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose, args.quiet)
    try:
        args.handler(args)
    except ConfigError as exc:
        err_console.print(f"[red]config error:[/red] {escape(str(exc))}")
        return 2
    except ScenarioError as exc:
        err_console.print(f"[red]error:[/red] {escape(str(exc))}")
        return 2 if isinstance(exc.cause, ConfigError) else 1
    except (WindwardError, OSError) as exc:
        err_console.print(f"[red]error:[/red] {escape(str(exc))}")
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
