import io
import itertools
import math

import numpy as np
import pytest
from pydantic import ValidationError

from deadreckon import arrival_error
from errors import TruncationError
from frames import Angle, WindSample
from planner_weighted import (
    WeightedParams,
    plan_backward_weighted,
    weighted_step,
    write_commands_csv,
)
from windsim import ClosedLoop, MirroredWind, simulate

CALM = (WindSample(t=0.0, u=0.0, v=0.0), Angle(degrees=0.0))


def _params(alpha, beta, **kwargs):
    return WeightedParams(alpha=alpha, beta=beta, **kwargs)


@pytest.mark.parametrize("north_rf, north_rb", [(2.0, 2.0), (1.0, -7.0), (0.0, 3.0)])
def test_pure_retrace_ignores_wind(north_rf, north_rb):
    assert weighted_step(4.0, north_rf, north_rb, _params(1.0, 0.0)) == 4.0


def test_equal_winds_keep_speed():
    assert weighted_step(4.0, 2.0, 2.0, _params(0.9, 0.1)) == pytest.approx(4.0)


@pytest.mark.parametrize("params", [_params(0.9, 0.1), _params(0.5, 0.5), _params(0.0, 1.0)])
def test_zero_forward_wind_keeps_speed(params):
    assert weighted_step(4.0, 0.0, 7.0, params) == 4.0


def test_near_zero_forward_wind_takes_guarded_branch():
    assert weighted_step(4.0, 1e-12, 7.0, _params(0.5, 0.5)) == 4.0


def test_minus_sign_variant():
    params = _params(0.9, 0.1, sign="minus")
    assert weighted_step(4.0, 2.0, 2.0, params) == pytest.approx(3.2)


def test_ratio_is_clamped():
    assert weighted_step(4.0, 1.0, 100.0, _params(0.9, 0.1)) == pytest.approx(7.6)
    assert weighted_step(4.0, 1.0, -100.0, _params(0.9, 0.1)) == pytest.approx(-0.4)


@pytest.mark.parametrize("alpha, beta", [(0.9, 0.2), (-0.1, 1.1), (0.5, 0.4)])
def test_weights_must_sum_to_one(alpha, beta):
    with pytest.raises(ValidationError):
        WeightedParams(alpha=alpha, beta=beta)


def test_from_beta():
    params = WeightedParams.from_beta(0.15)
    assert params.alpha == pytest.approx(0.85)


def test_zero_beta_commands_mirror_the_forward_speeds(make_record):
    speeds = [(1.0, 2.0), (3.0, -1.0), (0.5, 0.0)]
    record = make_record(speeds, winds=[(1.0, 1.0)] * 3)
    commands = list(plan_backward_weighted(record, itertools.repeat(CALM), _params(1.0, 0.0)))
    assert [(c.x_speed_cmd, c.y_speed_cmd) for c in commands] == [
        (-x, -y) for x, y in reversed(speeds)
    ]
    assert all(c.duration == 0.2 and c.target_height == 10.0 for c in commands)


def test_live_stream_too_short(make_record):
    record = make_record([(1.0, 0.0)] * 5)
    with pytest.raises(TruncationError) as info:
        list(plan_backward_weighted(record, [CALM] * 3, _params(0.9, 0.1)))
    assert info.value.step == 3
    assert info.value.expected == 5


def test_commands_are_finite_and_capped(make_record):
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = int(rng.integers(1, 30))
        speeds = [tuple(v) for v in rng.uniform(-12, 12, size=(n, 2)).tolist()]
        winds = rng.uniform(-8, 8, size=(n, 2))
        winds[rng.random(size=(n, 2)) < 0.3] = 0.0
        yaws = rng.uniform(-180, 180, size=n).tolist()
        record = make_record(speeds, winds=[tuple(w) for w in winds.tolist()], yaws=yaws)
        live = [
            (WindSample(t=0.0, u=float(u), v=float(v)), Angle(degrees=float(g)))
            for u, v, g in rng.uniform(-8, 8, size=(n, 3)).tolist()
        ]
        params = WeightedParams.from_beta(float(rng.uniform(0, 1)))
        for cmd in plan_backward_weighted(record, live, params):
            assert math.isfinite(cmd.x_speed_cmd) and math.isfinite(cmd.y_speed_cmd)
            assert cmd.speed() <= params.max_speed + 1e-9


def _closed_loop(record, truth, plant, params):
    loop = ClosedLoop(plant, MirroredWind(truth), (*truth.end, 10.0), Angle(degrees=0.0))

    def readings():
        while True:
            yield loop.sense()

    for cmd in plan_backward_weighted(record, readings(), params):
        loop.apply(cmd)
    return arrival_error(loop.position)


def test_mirrored_wind_gives_exact_return(square_script, gusty_wind, ideal_plant):
    record, truth = simulate(square_script, gusty_wind, ideal_plant)
    err = _closed_loop(record, truth, ideal_plant, _params(0.9, 0.1))
    assert err.magnitude < 1e-6


def test_zero_wind_gives_exact_return(square_script, still_air, ideal_plant):
    record, truth = simulate(square_script, still_air, ideal_plant)
    err = _closed_loop(record, truth, ideal_plant, _params(1.0, 0.0))
    assert (err.x_err, err.y_err) == pytest.approx((0.0, 0.0), abs=1e-9)


def test_write_commands_csv(make_record):
    record = make_record([(1.0, 0.0)] * 3)
    sink = io.StringIO()
    write_commands_csv(plan_backward_weighted(record, [CALM] * 3, _params(1.0, 0.0)), sink)
    lines = sink.getvalue().splitlines()
    assert lines[0] == "step,x_cmd_ms,y_cmd_ms,height_m"
    assert lines[1] == "0,-1.0,-0.0,10.0"
    assert len(lines) == 4
