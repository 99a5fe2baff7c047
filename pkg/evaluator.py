"""Experiment harness: forward flight in the simulator, backward plan flown
in closed loop against the same plant, arrival error and per-step planner
latency measured on the way.
"""

import csv
import logging
import math
import re
import time
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path as FilePath
from typing import Any, Iterable, Literal, Sequence, TextIO

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from rich.console import Console
from rich.progress import track

from deadreckon import arrival_error, integrate_path
from errors import (
    ConfigError,
    EmptyInputError,
    NonArrivalError,
    RecordFormatError,
    ScenarioError,
    WindwardError,
)
from lasso import AxisModels, Dataset1D, fit_lasso, load_models
from logstore import FlightRecord, load_record
from planner_lasso import LassoPlanConfig, LassoPlanner
from planner_weighted import WeightedParams, WeightedPlanner
from plotting import plot_run
from windsim import (
    ClosedLoop,
    FieldWind,
    GroundTruth,
    MirroredWind,
    PlantConfig,
    ScaledWind,
    ScriptSpec,
    WindField,
    WindSource,
    apply_gamma,
    simulate,
    truth_from_record,
)

logger = logging.getLogger(__name__)

_progress_console = Console(stderr=True)

REPORT_COLUMNS = (
    "scenario_id",
    "alpha",
    "beta",
    "gamma_lo",
    "gamma_hi",
    "compensation",
    "x_err_m",
    "y_err_m",
    "err_mag_m",
    "mean_step_ms",
    "p99_step_ms",
)
SWEEP_AXES = ("alpha_beta", "gamma", "forward_gamma", "compensation")
PLANNERS = ("weighted", "lasso")
DEFAULT_GAMMA_REPETITIONS = 30

GammaRange = tuple[float, float]
Trace = tuple[tuple[float, float], ...]


class Scenario(BaseModel):
    """One experiment: a forward flight, the wind on the way back and the
    planner that brings the drone home.

    gamma_wind_forward scales the wind logged on the way out, as seen by the
    planner; gamma_wind_backward scales the wind met on the way back.
    """

    model_config = ConfigDict(frozen=True)

    scenario_id: str = "scenario"
    script: ScriptSpec = ScriptSpec()
    record_path: str | None = None
    wind: WindField = WindField()
    plant: PlantConfig = PlantConfig()
    planner: Literal["weighted", "lasso"] = "weighted"
    weighted: WeightedParams = WeightedParams()
    lasso: LassoPlanConfig = LassoPlanConfig()
    lasso_lambda: float | None = Field(None, ge=0)
    models_path: str | None = None
    training_flights: int = Field(10, ge=1)
    backward_wind: Literal["field", "mirrored"] = "field"
    gamma_wind_forward: GammaRange | None = None
    gamma_wind_backward: GammaRange | None = None
    seed: int = Field(0, ge=0, lt=2**63)
    repetitions: int = Field(1, ge=1)

    @field_validator("gamma_wind_forward", "gamma_wind_backward")
    @classmethod
    def _gamma_range(cls, v: GammaRange | None) -> GammaRange | None:
        if v is None:
            return v
        lo, hi = v
        if not (math.isfinite(lo) and math.isfinite(hi) and 0 < lo <= hi):
            raise ValueError(f"gamma range must satisfy 0 < lo <= hi, got [{lo}, {hi}]")
        return v


class ReportRow(BaseModel):
    """The flat CSV view of a run."""

    model_config = ConfigDict(frozen=True)

    scenario_id: str
    alpha: float | None
    beta: float | None
    gamma_lo: float | None
    gamma_hi: float | None
    compensation: float
    x_err_m: float
    y_err_m: float
    err_mag_m: float
    mean_step_ms: float
    p99_step_ms: float


class RunReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    scenario_id: str
    planner: str
    seed: int
    alpha: float | None
    beta: float | None
    gamma_lo: float | None
    gamma_hi: float | None
    compensation: float
    x_err_m: float
    y_err_m: float
    err_mag_m: float
    mean_step_ms: float
    p99_step_ms: float
    steps: int
    forward_trace: Trace
    backward_trace: Trace

    def row(self) -> ReportRow:
        return ReportRow(**{c: getattr(self, c) for c in REPORT_COLUMNS})

    def nice(self) -> str:
        return (
            f"{self.scenario_id}: error ({self.x_err_m:+.2f}, {self.y_err_m:+.2f}) m "
            f"|{self.err_mag_m:.2f}| m in {self.steps} steps, "
            f"{self.mean_step_ms:.3f} ms/step"
        )


class SummaryRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    group: str
    runs: int
    median_err_m: float
    mean_err_m: float
    mean_x_err_m: float
    mean_y_err_m: float
    mean_step_ms: float


def spawn_seeds(seed: int, n: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def _validated(model: type[BaseModel], **values: Any) -> Any:
    try:
        return model(**values)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def expand(scenario: Scenario) -> list[Scenario]:
    """One single-run scenario per repetition, each with its own seed."""
    if scenario.repetitions == 1:
        return [scenario]
    seeds = spawn_seeds(scenario.seed, scenario.repetitions)
    return [
        scenario.model_copy(
            update={
                "scenario_id": f"{scenario.scenario_id}/r{k:03d}",
                "seed": s >> 1,
                "repetitions": 1,
            }
        )
        for k, s in enumerate(seeds)
    ]


def _forward(scenario: Scenario, wind: WindField) -> tuple[FlightRecord, GroundTruth]:
    if scenario.record_path:
        try:
            with open(scenario.record_path, encoding="utf-8") as fh:
                record = load_record(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read record {scenario.record_path}: {exc}") from exc
        return record, truth_from_record(record)
    return simulate(scenario.script.build(), wind, scenario.plant, scenario.scenario_id)


def _train(scenario: Scenario, record: FlightRecord, seed: int) -> AxisModels:
    if scenario.models_path:
        try:
            with open(scenario.models_path, encoding="utf-8") as fh:
                return load_models(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read models {scenario.models_path}: {exc}") from exc

    if scenario.record_path:
        records = [record]
    else:
        # same script under a spread of wind strengths
        n = scenario.training_flights
        strengths = np.random.Generator(np.random.PCG64(seed)).uniform(0.5, 1.5, size=n)
        script = scenario.script.build()
        records = []
        for i, (s, k) in enumerate(zip(spawn_seeds(seed, n), strengths.tolist())):
            mean = (scenario.wind.mean[0] * k, scenario.wind.mean[1] * k)
            wind = scenario.wind.model_copy(update={"seed": s, "mean": mean})
            flight, _ = simulate(script, wind, scenario.plant, f"{scenario.scenario_id}-train{i}")
            records.append(flight)

    lam = scenario.lasso_lambda
    return AxisModels(
        north=fit_lasso(Dataset1D.from_records(records, "north"), lam),
        east=fit_lasso(Dataset1D.from_records(records, "east"), lam),
    )


def _finished(planner: WeightedPlanner | LassoPlanner) -> bool:
    if isinstance(planner, WeightedPlanner):
        return planner.done
    if planner.arrived:
        return True
    if planner.steps >= planner.cfg.max_steps:
        raise NonArrivalError(planner.position, planner.steps)
    return False


def _fly(
    planner: WeightedPlanner | LassoPlanner, loop: ClosedLoop, timing: bool
) -> tuple[int, list[int]]:
    steps = 0
    latencies: list[int] = []
    while not _finished(planner):
        wind, yaw = loop.sense()
        if timing:
            started = time.perf_counter_ns()
            command = planner.step(wind, yaw)
            latencies.append(time.perf_counter_ns() - started)
        else:
            command = planner.step(wind, yaw)
        loop.apply(command)
        steps += 1
    return steps, latencies


def _run(scenario: Scenario, timing: bool) -> RunReport:
    wind_seed, forward_seed, backward_seed, train_seed = spawn_seeds(scenario.seed, 4)
    wind = scenario.wind.model_copy(update={"seed": wind_seed})
    record, truth = _forward(scenario, wind)
    if not record.samples:
        raise EmptyInputError("forward flight has no samples")

    observed = record
    if scenario.gamma_wind_forward:
        observed = apply_gamma(record, scenario.gamma_wind_forward, forward_seed)

    dt = record.sample_dt
    t_end = len(record) * dt
    source: WindSource
    if scenario.backward_wind == "mirrored":
        source = MirroredWind(truth)
    else:
        source = FieldWind(wind, t_end, dt)
    if scenario.gamma_wind_backward:
        source = ScaledWind(source, scenario.gamma_wind_backward, backward_seed)

    last = record.telemetry[-1]
    loop = ClosedLoop(
        scenario.plant, source, (truth.end[0], truth.end[1], last.height), last.yaw, t_end
    )
    if scenario.planner == "weighted":
        planner: WeightedPlanner | LassoPlanner = WeightedPlanner(observed, scenario.weighted)
        alpha, beta = scenario.weighted.alpha, scenario.weighted.beta
    else:
        models = _train(scenario, record, train_seed)
        start = integrate_path(observed).end
        planner = LassoPlanner(start, models, scenario.lasso, last.height)
        alpha = beta = None

    steps, latencies = _fly(planner, loop, timing)

    error = arrival_error(loop.position)
    if latencies:
        ms = np.asarray(latencies, dtype=float) / 1e6
        mean_ms, p99_ms = float(ms.mean()), float(np.percentile(ms, 99))
    else:
        mean_ms = p99_ms = 0.0
    gamma_lo, gamma_hi = scenario.gamma_wind_backward or (None, None)

    forward = tuple((p[0], p[1]) for p in truth.positions) + (truth.end,)
    report = RunReport(
        scenario_id=scenario.scenario_id,
        planner=scenario.planner,
        seed=scenario.seed,
        alpha=alpha,
        beta=beta,
        gamma_lo=gamma_lo,
        gamma_hi=gamma_hi,
        compensation=scenario.plant.compensation,
        x_err_m=error.x_err,
        y_err_m=error.y_err,
        err_mag_m=error.magnitude,
        mean_step_ms=mean_ms,
        p99_step_ms=p99_ms,
        steps=steps,
        forward_trace=forward,
        backward_trace=tuple((n, e) for n, e, _ in loop.trace),
    )
    logger.info("%s", report.nice())
    return report


def run_scenario(scenario: Scenario, timing: bool = True) -> RunReport:
    """Fly one scenario; timing=False leaves the latency columns at 0."""
    try:
        return _run(scenario, timing)
    except ScenarioError:
        raise
    except (WindwardError, ValidationError) as exc:
        raise ScenarioError(scenario.scenario_id, exc) from exc


def _run_all(
    scenarios: Sequence[Scenario], workers: int, timing: bool, progress: bool
) -> list[RunReport]:
    run = partial(run_scenario, timing=timing)
    if workers > 1 and len(scenarios) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(run, scenarios)
            if progress:
                results = track(
                    results,
                    total=len(scenarios),
                    description="running",
                    console=_progress_console,
                )
            return list(results)
    items = (
        track(scenarios, description="running", console=_progress_console)
        if progress
        else scenarios
    )
    return [run(s) for s in items]


def run_many(
    scenarios: Iterable[Scenario],
    workers: int = 1,
    timing: bool = True,
    progress: bool = False,
) -> list[RunReport]:
    """Run independent scenarios; reports come back sorted by scenario id."""
    reports = _run_all(list(scenarios), workers, timing, progress)
    return sorted(reports, key=lambda r: r.scenario_id)


def _label(value: Any) -> str:
    if isinstance(value, (tuple, list)):
        return "-".join(f"{v:g}" for v in value)
    return f"{value:g}"


def _as_range(value: Any) -> GammaRange:
    if isinstance(value, (int, float)):
        return (float(value), float(value))
    lo, hi = value
    return (float(lo), float(hi))


def with_axis(base: Scenario, axis: str, value: Any) -> Scenario:
    """Copy of `base` with one swept parameter replaced and validated."""
    if axis == "alpha_beta":
        params = base.weighted.model_dump(exclude={"alpha", "beta"})
        update = {"weighted": _validated(WeightedParams, alpha=1.0 - value, beta=value, **params)}
        name = f"beta={_label(value)}"
    elif axis == "gamma":
        update = {"gamma_wind_backward": _as_range(value)}
        name = f"gamma={_label(value)}"
    elif axis == "forward_gamma":
        update = {"gamma_wind_forward": _as_range(value)}
        name = f"forward_gamma={_label(value)}"
    elif axis == "compensation":
        plant = base.plant.model_dump() | {"compensation": value}
        update = {"plant": _validated(PlantConfig, **plant)}
        name = f"c={_label(value)}"
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}; valid axes: {', '.join(SWEEP_AXES)}")
    fields = base.model_dump() | update | {"scenario_id": f"{base.scenario_id}:{name}"}
    return _validated(Scenario, **fields)


def sweep(
    base: Scenario,
    axis: str,
    values: Sequence[Any],
    workers: int = 1,
    timing: bool = True,
    progress: bool = False,
) -> list[RunReport]:
    """One run per value (times repetitions), every other input held fixed.

    Reports come back in the order of `values`.
    """
    if not values:
        raise EmptyInputError(f"no values to sweep along {axis}")
    scenarios = [s for v in values for s in expand(with_axis(base, axis, v))]
    return _run_all(scenarios, workers, timing, progress)


def _group(scenario_id: str) -> str:
    return re.sub(r"/r\d+$", "", scenario_id)


def summarize(reports: Iterable[RunReport]) -> list[SummaryRow]:
    """Median and mean arrival error per scenario, pooling repetitions."""
    groups: dict[str, list[RunReport]] = {}
    for r in reports:
        groups.setdefault(_group(r.scenario_id), []).append(r)
    rows = []
    for name in sorted(groups):
        runs = groups[name]
        mags = np.array([r.err_mag_m for r in runs])
        rows.append(
            SummaryRow(
                group=name,
                runs=len(runs),
                median_err_m=float(np.median(mags)),
                mean_err_m=float(mags.mean()),
                mean_x_err_m=float(np.mean([r.x_err_m for r in runs])),
                mean_y_err_m=float(np.mean([r.y_err_m for r in runs])),
                mean_step_ms=float(np.mean([r.mean_step_ms for r in runs])),
            )
        )
    return rows


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report_csv(reports: Iterable[RunReport], sink: TextIO) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for r in reports:
        row = r.row()
        writer.writerow([_cell(getattr(row, c)) for c in REPORT_COLUMNS])


def read_report_csv(source: TextIO) -> list[ReportRow]:
    reader = csv.DictReader(source)
    if reader.fieldnames is None or tuple(reader.fieldnames) != REPORT_COLUMNS:
        raise RecordFormatError(f"unexpected report header {reader.fieldnames!r}")
    rows = []
    for line in reader:
        values = {k: (v if v != "" else None) for k, v in line.items()}
        try:
            rows.append(ReportRow(**values))
        except ValidationError as exc:
            raise RecordFormatError(f"malformed report row {line!r}: {exc}") from exc
    return rows


def _slug(scenario_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._=-]+", "_", scenario_id)


def emit_report(
    reports: Iterable[RunReport], out_dir: FilePath, plots: bool = True
) -> list[FilePath]:
    """Write report.csv plus one path-overlay SVG per run into out_dir."""
    ordered = sorted(reports, key=lambda r: r.scenario_id)
    if not ordered:
        raise EmptyInputError("no reports to emit")
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "report.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        write_report_csv(ordered, fh)
    written = [csv_path]
    if plots:
        for r in ordered:
            written.append(
                plot_run(
                    r.forward_trace,
                    r.backward_trace,
                    out_dir / "plots" / f"{_slug(r.scenario_id)}.svg",
                    title=f"{r.scenario_id}  error {r.err_mag_m:.2f} m",
                )
            )
    logger.info("wrote %d report files to %s", len(written), out_dir)
    return written
