import pytest

from frames import Angle, TelemetrySample, WindSample
from logstore import FlightMeta, FlightRecord
from windsim import PlantConfig, WindField, builtin_script


def _record(speeds, winds=None, yaws=None, dt=0.2, height=10.0, flight_id="test"):
    winds = winds or [(0.0, 0.0)] * len(speeds)
    yaws = yaws or [0.0] * len(speeds)
    samples = tuple(
        (
            TelemetrySample(t=k * dt, x_speed=x, y_speed=y, height=height, yaw=Angle(degrees=g)),
            WindSample(t=k * dt, u=u, v=v),
        )
        for k, ((x, y), (u, v), g) in enumerate(zip(speeds, winds, yaws))
    )
    return FlightRecord(meta=FlightMeta(flight_id=flight_id, sample_dt=dt), samples=samples)


@pytest.fixture
def make_record():
    """Factory: speeds [(x, y)], optional body winds [(u, v)] and yaws."""
    return _record


@pytest.fixture
def square_script():
    return builtin_script("square", scale=40.0, speed=4.0)


@pytest.fixture
def ideal_plant():
    return PlantConfig(compensation=1.0)


@pytest.fixture
def still_air():
    return WindField()


@pytest.fixture
def steady_wind():
    return WindField(mean=(2.0, 1.0))


@pytest.fixture
def gusty_wind():
    return WindField(model="piecewise-gust", mean=(2.0, 1.0), gust_amplitude=1.5, seed=3)
