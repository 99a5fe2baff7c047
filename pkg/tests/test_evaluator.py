import io
import pickle

import numpy as np
import pytest

from errors import (
    ConfigError,
    EmptyInputError,
    NonArrivalError,
    RecordFormatError,
    ScenarioError,
)
from evaluator import (
    REPORT_COLUMNS,
    RunReport,
    Scenario,
    emit_report,
    expand,
    read_report_csv,
    run_many,
    run_scenario,
    summarize,
    sweep,
    with_axis,
    write_report_csv,
)
from lasso import AxisModels, LassoModel, save_models
from planner_lasso import LassoPlanConfig
from planner_weighted import WeightedParams
from windsim import PlantConfig, ScriptSpec, WindField

GUSTY = WindField(model="piecewise-gust", mean=(2.0, 1.0), gust_amplitude=1.5)
SHORT = ScriptSpec(name="square", scale=20.0, speed=4.0)
L_SHAPE = ScriptSpec(name="l_shape", scale=30.0, speed=5.0)


def _scenario(**kwargs):
    fields = dict(
        scenario_id="test",
        script=SHORT,
        wind=GUSTY,
        plant=PlantConfig(compensation=1.0),
        seed=5,
    )
    fields.update(kwargs)
    return Scenario(**fields)


def _fake_report(scenario_id, err, x=0.0, y=0.0, planner="weighted"):
    return RunReport(
        scenario_id=scenario_id,
        planner=planner,
        seed=0,
        alpha=0.9 if planner == "weighted" else None,
        beta=0.1 if planner == "weighted" else None,
        gamma_lo=None,
        gamma_hi=None,
        compensation=1.0,
        x_err_m=x,
        y_err_m=y,
        err_mag_m=err,
        mean_step_ms=0.0,
        p99_step_ms=0.0,
        steps=1,
        forward_trace=((0.0, 0.0), (1.0, 1.0)),
        backward_trace=((1.0, 1.0), (0.0, 0.0)),
    )


def test_zero_beta_returns_exactly():
    report = run_scenario(_scenario(weighted=WeightedParams(alpha=1.0, beta=0.0)), timing=False)
    assert report.err_mag_m < 1e-6
    assert report.steps == 100
    assert (report.alpha, report.beta) == (1.0, 0.0)


def test_zero_wind_returns_exactly():
    report = run_scenario(_scenario(wind=WindField()), timing=False)
    assert report.err_mag_m < 1e-6


def test_mirrored_wind_retraces_exactly_over_many_flights():
    rng = np.random.default_rng(77)
    for seed in rng.integers(0, 2**62, size=100).tolist():
        scenario = _scenario(
            seed=seed,
            backward_wind="mirrored",
            wind=WindField(
                model="mean-reverting-noise", mean=(2.0, -1.0), noise_scale=1.0
            ),
            weighted=WeightedParams(alpha=0.9, beta=0.1),
        )
        assert run_scenario(scenario, timing=False).err_mag_m < 1e-6


def test_error_grows_with_beta():
    base = _scenario(
        wind=WindField(model="mean-reverting-noise", mean=(2.5, -1.0), noise_scale=0.8),
        script=ScriptSpec(name="square", scale=40.0, speed=4.0),
    )
    reports = sweep(base, "alpha_beta", [0.0, 0.05, 0.10, 0.15], timing=False)
    errors = [r.err_mag_m for r in reports]
    assert errors[0] < 1e-6
    assert all(b >= a - 1e-9 for a, b in zip(errors, errors[1:]))
    assert errors[-1] > errors[0]
    assert [r.beta for r in reports] == [0.0, 0.05, 0.10, 0.15]


def test_backward_gamma_mismatch_degrades_in_order():
    base = _scenario(
        wind=WindField(mean=(2.0, 1.0)),
        backward_wind="mirrored",
        repetitions=30,
    )
    reports = sweep(base, "gamma", [1.0, (2.0, 3.0), (3.0, 5.0)], timing=False)
    assert len(reports) == 90
    median = {row.group: row.median_err_m for row in summarize(reports)}
    assert median["test:gamma=3-5"] > median["test:gamma=2-3"] > median["test:gamma=1"]
    assert median["test:gamma=1"] < 1e-6


def test_forward_gamma_changes_error_less_than_twofold():
    base = _scenario(
        script=ScriptSpec(name="l_shape", scale=50.0, speed=5.0),
        wind=WindField(mean=(2.0, 1.0)),
        plant=PlantConfig(compensation=0.5),
    )
    plain = run_scenario(base, timing=False)
    scaled = run_scenario(with_axis(base, "forward_gamma", (3.0, 5.0)), timing=False)
    assert plain.x_err_m == pytest.approx(20.0, abs=1e-6)
    assert plain.y_err_m == pytest.approx(10.0, abs=1e-6)
    assert 0.5 < scaled.err_mag_m / plain.err_mag_m < 2.0
    assert scaled.gamma_lo is None


def test_lasso_returns_home_in_closed_loop():
    scenario = _scenario(
        planner="lasso",
        script=L_SHAPE,
        wind=WindField(mean=(2.0, 1.0)),
        training_flights=4,
    )
    report = run_scenario(scenario, timing=False)
    assert report.err_mag_m < 1.0
    assert report.alpha is None and report.beta is None


def test_lasso_with_saved_models(tmp_path):
    models = AxisModels(
        north=LassoModel(intercept=4.0, slope=0.0), east=LassoModel(intercept=3.0, slope=0.0)
    )
    path = tmp_path / "models.json"
    with open(path, "w", encoding="utf-8") as fh:
        save_models(models, fh)
    scenario = _scenario(planner="lasso", script=L_SHAPE, models_path=str(path))
    report = run_scenario(scenario, timing=False)
    assert report.steps > 10
    assert report.err_mag_m < 1.0


def test_planner_latency_is_within_bounds():
    weighted = run_scenario(_scenario())
    flat_wind = _scenario(
        planner="lasso",
        script=L_SHAPE,
        wind=WindField(mean=(2.0, 1.0)),
        training_flights=2,
        lasso_lambda=0.0,
    )
    lasso = run_scenario(flat_wind)
    assert 0 < weighted.mean_step_ms < 5.8
    assert 0 < lasso.mean_step_ms < 4.8
    assert weighted.p99_step_ms >= 0


def test_timing_off_reports_zero_latency():
    report = run_scenario(_scenario(), timing=False)
    assert (report.mean_step_ms, report.p99_step_ms) == (0.0, 0.0)


def test_runs_are_deterministic():
    assert run_scenario(_scenario(), timing=False) == run_scenario(_scenario(), timing=False)


def test_expand():
    runs = expand(_scenario(repetitions=3))
    assert [r.scenario_id for r in runs] == ["test/r000", "test/r001", "test/r002"]
    assert len({r.seed for r in runs}) == 3
    assert all(r.repetitions == 1 for r in runs)
    assert expand(runs[0]) == [runs[0]]
    assert expand(_scenario(repetitions=3)) == runs


def test_singleton_sweep_equals_single_run():
    base = _scenario()
    [swept] = sweep(base, "alpha_beta", [0.1], timing=False)
    assert swept == run_scenario(with_axis(base, "alpha_beta", 0.1), timing=False)
    assert swept.scenario_id == "test:beta=0.1"


def test_sweep_is_repeatable():
    base = _scenario(repetitions=2)
    first = sweep(base, "compensation", [0.5, 1.0], timing=False)
    assert first == sweep(base, "compensation", [0.5, 1.0], timing=False)
    assert [r.compensation for r in first] == [0.5, 0.5, 1.0, 1.0]


def test_parallel_runs_match_sequential():
    wind = WindField(model="piecewise-gust", mean=(1.0, 1.0), gust_amplitude=1.0)
    scenarios = expand(_scenario(repetitions=4, wind=wind))
    sequential = run_many(scenarios, workers=1, timing=False)
    parallel = run_many(reversed(scenarios), workers=2, timing=False)
    assert parallel == sequential


@pytest.mark.parametrize(
    "axis, value",
    [("altitude", 1.0), ("alpha_beta", 1.5), ("compensation", 2.0), ("gamma", (3.0, 2.0))],
)
def test_with_axis_rejects_bad_values(axis, value):
    with pytest.raises(ConfigError):
        with_axis(_scenario(), axis, value)


def test_empty_sweep():
    with pytest.raises(EmptyInputError):
        sweep(_scenario(), "gamma", [])


def test_scenario_errors_carry_the_id(tmp_path):
    missing = _scenario(scenario_id="lost", record_path=str(tmp_path / "none.record"))
    with pytest.raises(ScenarioError, match="lost") as info:
        run_scenario(missing)
    assert isinstance(info.value.cause, ConfigError)

    stuck = _scenario(
        scenario_id="stuck",
        planner="lasso",
        script=L_SHAPE,
        lasso=LassoPlanConfig(max_steps=3),
        training_flights=1,
    )
    with pytest.raises(ScenarioError) as info:
        run_scenario(stuck, timing=False)
    assert isinstance(info.value.cause, NonArrivalError)


def test_scenario_error_survives_pickling():
    err = ScenarioError("x", NonArrivalError((1.0, 2.0), 3))
    copy = pickle.loads(pickle.dumps(err))
    assert str(copy) == str(err)
    assert copy.cause.final_offset == (1.0, 2.0)


def test_summarize_pools_repetitions():
    reports = [
        _fake_report("a/r000", 1.0, x=1.0),
        _fake_report("a/r001", 3.0, x=3.0),
        _fake_report("a/r002", 8.0, x=8.0),
        _fake_report("b", 2.0),
    ]
    rows = summarize(reports)
    assert [r.group for r in rows] == ["a", "b"]
    assert (rows[0].runs, rows[0].median_err_m, rows[0].mean_err_m) == (3, 3.0, 4.0)
    assert rows[0].mean_x_err_m == 4.0


def test_emit_report(tmp_path):
    report = run_scenario(_scenario(), timing=False)
    written = emit_report([report], tmp_path)
    assert written == [tmp_path / "report.csv", tmp_path / "plots" / "test.svg"]
    lines = (tmp_path / "report.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS)
    assert len(lines) == 2
    assert (tmp_path / "plots" / "test.svg").read_text(encoding="utf-8").startswith("<?xml")


def test_emit_report_is_byte_stable(tmp_path):
    reports = sweep(_scenario(), "alpha_beta", [0.0, 0.1], timing=False)
    a = emit_report(reports, tmp_path / "a")
    b = emit_report(list(reversed(reports)), tmp_path / "b")
    assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]


def test_emit_report_without_plots(tmp_path):
    emit_report([_fake_report("x", 1.0)], tmp_path, plots=False)
    assert not (tmp_path / "plots").exists()


def test_emit_nothing(tmp_path):
    with pytest.raises(EmptyInputError):
        emit_report([], tmp_path)


def test_report_csv_round_trip():
    reports = [_fake_report("w", 1.5, x=0.3, y=-1.47), _fake_report("l", 0.2, planner="lasso")]
    sink = io.StringIO()
    write_report_csv(reports, sink)
    assert read_report_csv(io.StringIO(sink.getvalue())) == [r.row() for r in reports]


def test_report_csv_bad_header():
    with pytest.raises(RecordFormatError):
        read_report_csv(io.StringIO("scenario,error\nx,1\n"))
