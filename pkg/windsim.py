"""Deterministic synthetic flights: wind fields, a kinematic drone plant and
an anemometer model.

Wind vectors inside the simulator are air velocities in the true frame
(north, east): a wind of (1, 0) pushes the drone north. The anemometer
reports the opposite vector, i.e. where the wind blows from, which is the
convention TrueWind documents, rotated into the body frame.
"""

import csv
import logging
import math
from typing import TYPE_CHECKING, Literal, Protocol, TextIO

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from deadreckon import integrate_path
from errors import ConfigError, EmptyInputError, InvalidInputError, RowError, SchemaError
from frames import (
    Angle,
    TelemetrySample,
    TrueWind,
    WindSample,
    to_body_frame,
    to_true_north_east,
)
from logstore import DEFAULT_SAMPLE_DT, FlightMeta, FlightRecord

if TYPE_CHECKING:
    from planner_weighted import BackwardCommand

logger = logging.getLogger(__name__)

Vec2 = tuple[float, float]

DEFAULT_WIND_CAP = 25.0
LINE_OF_SIGHT_RADIUS = 300.0


class WindField(BaseModel):
    """Seeded wind model.

    constant: always `mean`.
    piecewise-gust: `mean` plus a gust redrawn every `gust_period` seconds,
        each component uniform in [-gust_amplitude, gust_amplitude].
    mean-reverting-noise: x[k+1] = x[k] + theta (mean - x[k]) dt
        + sigma sqrt(dt) xi[k], started at `initial` (or `mean`).
    """

    model_config = ConfigDict(frozen=True)

    model: Literal["constant", "piecewise-gust", "mean-reverting-noise"] = "constant"
    mean: Vec2 = (0.0, 0.0)
    gust_amplitude: float = Field(0.0, ge=0)
    gust_period: float = Field(5.0, gt=0)
    reversion_rate: float = Field(0.5, ge=0)
    noise_scale: float = Field(0.0, ge=0)
    initial: Vec2 | None = None
    cap: float = Field(DEFAULT_WIND_CAP, gt=0)
    tick: float = Field(DEFAULT_SAMPLE_DT, gt=0)
    seed: int = Field(0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _stable(self) -> "WindField":
        if self.reversion_rate * self.tick > 1.0:
            raise ValueError("reversion_rate * tick must be <= 1 for a stable process")
        return self


class PlantConfig(BaseModel):
    """Kinematic drone with a partial wind-cancelling autopilot.

    compensation is the fraction of the true wind the autopilot cancels;
    1 means the ground track follows the command exactly.
    """

    model_config = ConfigDict(frozen=True)

    compensation: float = Field(0.9, ge=0.0, le=1.0)
    max_speed: float = Field(15.0, gt=0)
    apparent_wind_sensing: bool = False
    sample_dt: float = Field(DEFAULT_SAMPLE_DT, gt=0)
    climb_rate: float = Field(3.0, gt=0)


class Leg(BaseModel):
    model_config = ConfigDict(frozen=True)

    velocity: Vec2
    duration: float = Field(gt=0)
    height: float = Field(10.0, ge=0)
    yaw_policy: Literal["face-velocity", "fixed"] = "face-velocity"
    yaw_deg: float = 0.0

    def speed(self) -> float:
        return math.hypot(*self.velocity)


class FlightScript(BaseModel):
    model_config = ConfigDict(frozen=True)

    legs: tuple[Leg, ...]
    max_radius: float = LINE_OF_SIGHT_RADIUS

    @model_validator(mode="after")
    def _within_line_of_sight(self) -> "FlightScript":
        if not self.legs:
            raise ValueError("a flight script needs at least one leg")
        north = east = 0.0
        for leg in self.legs:
            north += leg.velocity[0] * leg.duration
            east += leg.velocity[1] * leg.duration
            if math.hypot(north, east) > self.max_radius + 1e-9:
                raise ValueError(
                    f"script leaves the {self.max_radius:g} m line-of-sight radius"
                )
        return self


class GroundTruth(BaseModel):
    """True positions and air velocity per tick, on the record's grid."""

    model_config = ConfigDict(frozen=True)

    positions: tuple[tuple[float, float, float], ...]
    true_wind: tuple[Vec2, ...]
    end: Vec2


def _cap(vec: Vec2, limit: float) -> Vec2:
    mag = math.hypot(*vec)
    if mag > limit:
        scale = limit / mag
        return (vec[0] * scale, vec[1] * scale)
    return vec


class WindSampler:
    """Sequential sampler of a WindField on its tick.

    Values are generated in order from t=0 and cached, so any query is a
    deterministic function of (field, t).
    """

    def __init__(self, field: WindField):
        self.field = field
        self._rng = np.random.Generator(np.random.PCG64(field.seed))
        self._values: list[Vec2] = []
        start = field.initial if field.initial is not None else field.mean
        self._state = np.array(start, dtype=float)
        self._gust = np.zeros(2)
        self._segment = -1

    def _next(self) -> Vec2:
        f = self.field
        k = len(self._values)
        mean = np.asarray(f.mean, dtype=float)
        if f.model == "constant":
            value = mean
        elif f.model == "piecewise-gust":
            segment = math.floor(k * f.tick / f.gust_period + 1e-9)
            while self._segment < segment:
                self._gust = self._rng.uniform(-f.gust_amplitude, f.gust_amplitude, size=2)
                self._segment += 1
            value = mean + self._gust
        else:
            value = self._state.copy()
            xi = self._rng.standard_normal(2)
            self._state = (
                self._state
                + f.reversion_rate * (mean - self._state) * f.tick
                + f.noise_scale * math.sqrt(f.tick) * xi
            )
        return _cap((float(value[0]), float(value[1])), f.cap)

    def at(self, t: float) -> Vec2:
        if t < 0:
            raise InvalidInputError(f"wind queried at negative time {t!r}")
        k = round(t / self.field.tick)
        while len(self._values) <= k:
            self._values.append(self._next())
        return self._values[k]


def sample_wind(field: WindField, t: float) -> Vec2:
    """Air velocity (north, east) of the field at time t."""
    return WindSampler(field).at(t)


def clamp_speed(vec: Vec2, max_speed: float) -> Vec2:
    return _cap(vec, max_speed)


def anemometer_reading(air: Vec2, yaw: Angle, t: float) -> WindSample:
    """What the nose-aligned anemometer logs for a given relative air velocity."""
    return to_body_frame(TrueWind(north_r=-air[0], east_r=-air[1]), yaw, t)


def _heading(velocity: Vec2, previous: Angle) -> Angle:
    if velocity[0] == 0.0 and velocity[1] == 0.0:
        return previous
    return Angle(degrees=math.degrees(math.atan2(velocity[1], velocity[0])))


def _climb(height: float, target: float, rate: float, dt: float) -> float:
    step = rate * dt
    if abs(target - height) <= step:
        return max(target, 0.0)
    return max(height + math.copysign(step, target - height), 0.0)


def simulate(
    script: FlightScript,
    field: WindField,
    plant: PlantConfig,
    flight_id: str = "sim",
) -> tuple[FlightRecord, GroundTruth]:
    """Fly a script through a wind field and log what the drone would log."""
    for i, leg in enumerate(script.legs):
        if leg.speed() > plant.max_speed:
            raise ConfigError(
                f"leg {i} commands {leg.speed():.2f} m/s, above max_speed {plant.max_speed} m/s"
            )

    dt = plant.sample_dt
    kappa = 1.0 if plant.apparent_wind_sensing else 0.0
    sampler = WindSampler(field)
    north = east = height = 0.0
    yaw = Angle(degrees=0.0)
    samples, positions, winds = [], [], []
    k = 0
    for leg in script.legs:
        for _ in range(round(leg.duration / dt)):
            t = k * dt
            w = sampler.at(t)
            if leg.yaw_policy == "fixed":
                yaw = Angle(degrees=leg.yaw_deg)
            else:
                yaw = _heading(leg.velocity, yaw)
            v = clamp_speed(
                (
                    leg.velocity[0] + (1.0 - plant.compensation) * w[0],
                    leg.velocity[1] + (1.0 - plant.compensation) * w[1],
                ),
                plant.max_speed,
            )
            air = (w[0] - kappa * v[0], w[1] - kappa * v[1])
            samples.append(
                (
                    TelemetrySample(t=t, x_speed=v[0], y_speed=v[1], height=height, yaw=yaw),
                    anemometer_reading(air, yaw, t),
                )
            )
            positions.append((north, east, height))
            winds.append(w)
            north = north + v[0] * dt
            east = east + v[1] * dt
            height = _climb(height, leg.height, plant.climb_rate, dt)
            k += 1

    logger.debug(
        "simulated %s: %d ticks, end (%.2f, %.2f) m", flight_id, k, north, east
    )
    record = FlightRecord(
        meta=FlightMeta(flight_id=flight_id, takeoff="origin", sample_dt=dt),
        samples=tuple(samples),
    )
    truth = GroundTruth(positions=tuple(positions), true_wind=tuple(winds), end=(north, east))
    return record, truth


def apply_gamma(record: FlightRecord, gamma_range: tuple[float, float], seed: int) -> FlightRecord:
    """Scale each wind sample by its own uniform draw from gamma_range."""
    lo, hi = gamma_range
    if not (math.isfinite(lo) and math.isfinite(hi) and 0 < lo <= hi):
        raise InvalidInputError(f"invalid gamma range [{lo}, {hi}]")
    rng = np.random.Generator(np.random.PCG64(seed))
    factors = rng.uniform(lo, hi, size=len(record))
    samples = tuple(
        (tel, wind.model_copy(update={"u": wind.u * g, "v": wind.v * g}))
        for (tel, wind), g in zip(record.samples, factors.tolist())
    )
    return FlightRecord(meta=record.meta, samples=samples)


class WindSource(Protocol):
    def at(self, step: int) -> Vec2: ...


class FieldWind:
    """The wind field continued in time after the Forward Phase."""

    def __init__(self, field: WindField, t_start: float, dt: float):
        self._sampler = WindSampler(field)
        self._t_start = t_start
        self._dt = dt

    def at(self, step: int) -> Vec2:
        return self._sampler.at(self._t_start + step * self._dt)


class MirroredWind:
    """The forward flight's true wind replayed in reverse order.

    Past the start of the forward flight the first forward value is held.
    """

    def __init__(self, truth: GroundTruth):
        self._wind = truth.true_wind

    def at(self, step: int) -> Vec2:
        n = len(self._wind)
        return self._wind[max(n - 1 - step, 0)]


class ScaledWind:
    """Per-step random gamma multiplier over another source."""

    def __init__(self, source: WindSource, gamma_range: tuple[float, float], seed: int):
        lo, hi = gamma_range
        if not (math.isfinite(lo) and math.isfinite(hi) and 0 < lo <= hi):
            raise InvalidInputError(f"invalid gamma range [{lo}, {hi}]")
        self._source = source
        self._lo, self._hi = lo, hi
        self._rng = np.random.Generator(np.random.PCG64(seed))
        self._factors: list[float] = []

    def at(self, step: int) -> Vec2:
        while len(self._factors) <= step:
            self._factors.append(float(self._rng.uniform(self._lo, self._hi)))
        g = self._factors[step]
        w = self._source.at(step)
        return (w[0] * g, w[1] * g)


class ClosedLoop:
    """The plant flying planner commands during the Backward Phase.

    Each step: sense() returns the anemometer reading and yaw the planner
    sees, then apply() moves the drone for the command's duration.
    """

    def __init__(
        self,
        plant: PlantConfig,
        wind: WindSource,
        start: tuple[float, float, float],
        yaw: Angle,
        t_start: float = 0.0,
    ):
        self.plant = plant
        self._wind = wind
        self.north, self.east, self.height = start
        self.yaw = yaw
        self._t = t_start
        self._step = 0
        self._w: Vec2 = (0.0, 0.0)
        self._v: Vec2 = (0.0, 0.0)
        self.trace: list[tuple[float, float, float]] = [start]

    @property
    def position(self) -> Vec2:
        return (self.north, self.east)

    def sense(self) -> tuple[WindSample, Angle]:
        self._w = self._wind.at(self._step)
        kappa = 1.0 if self.plant.apparent_wind_sensing else 0.0
        air = (self._w[0] - kappa * self._v[0], self._w[1] - kappa * self._v[1])
        return anemometer_reading(air, self.yaw, self._t), self.yaw

    def apply(self, command: "BackwardCommand") -> None:
        c = self.plant.compensation
        cmd = (command.x_speed_cmd, command.y_speed_cmd)
        v = clamp_speed(
            (cmd[0] + (1.0 - c) * self._w[0], cmd[1] + (1.0 - c) * self._w[1]),
            self.plant.max_speed,
        )
        dt = command.duration
        self.yaw = _heading(cmd, self.yaw)
        self.north = self.north + v[0] * dt
        self.east = self.east + v[1] * dt
        self.height = _climb(self.height, command.target_height, self.plant.climb_rate, dt)
        self._v = v
        self._t += dt
        self._step += 1
        self.trace.append((self.north, self.east, self.height))


def _leg(north: float, east: float, speed: float, height: float) -> Leg:
    length = math.hypot(north, east)
    return Leg(
        velocity=(north / length * speed, east / length * speed),
        duration=length / speed,
        height=height,
    )


def builtin_script(
    name: str, scale: float = 50.0, speed: float = 5.0, height: float = 10.0
) -> FlightScript:
    """Named flight patterns; `scale` is the leg length in meters."""
    if name == "square":
        moves = [(scale, 0.0), (0.0, scale), (-scale, 0.0), (0.0, -scale)]
    elif name == "line":
        moves = [(scale, 0.0)]
    elif name == "out_and_back":
        moves = [(scale, 0.0), (-scale, 0.0)]
    elif name == "l_shape":
        moves = [(scale, 0.0), (0.0, scale)]
    elif name == "survey":
        lane = scale / 4
        moves = [(scale, 0.0), (0.0, lane), (-scale, 0.0), (0.0, lane), (scale, 0.0)]
    else:
        raise ConfigError(
            f"unknown script {name!r}; valid names: {', '.join(BUILTIN_SCRIPTS)}"
        )
    return FlightScript(legs=tuple(_leg(n, e, speed, height) for n, e in moves))


BUILTIN_SCRIPTS = ("square", "line", "out_and_back", "l_shape", "survey")


class ScriptSpec(BaseModel):
    """Scenario-file form of a flight script: a built-in pattern or legs."""

    model_config = ConfigDict(frozen=True)

    name: str | None = "l_shape"
    scale: float = Field(50.0, gt=0)
    speed: float = Field(5.0, gt=0)
    height: float = Field(10.0, ge=0)
    legs: tuple[Leg, ...] | None = None

    def build(self) -> FlightScript:
        if self.legs:
            return FlightScript(legs=self.legs)
        if not self.name:
            raise ConfigError("script needs either a name or explicit legs")
        return builtin_script(self.name, self.scale, self.speed, self.height)


def truth_from_record(record: FlightRecord) -> GroundTruth:
    """Best available truth for a logged flight: its dead-reckoned route and
    the air velocity implied by the anemometer, taken as true wind."""
    path = integrate_path(record)
    winds = []
    for tel, wind in record.samples:
        true = to_true_north_east(wind, tel.yaw)
        winds.append((-true.north_r, -true.east_r))
    return GroundTruth(
        positions=tuple((p.north, p.east, p.height) for p in path.points),
        true_wind=tuple(winds),
        end=path.end,
    )


TRUTH_COLUMNS = ("time_s", "north_m", "east_m", "height_m", "wind_north_ms", "wind_east_ms")


def write_truth_csv(truth: GroundTruth, sink: TextIO, sample_dt: float = DEFAULT_SAMPLE_DT) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(TRUTH_COLUMNS)
    for k, ((north, east, height), (wn, we)) in enumerate(zip(truth.positions, truth.true_wind)):
        writer.writerow([repr(v) for v in (k * sample_dt, north, east, height, wn, we)])


def read_truth_csv(source: TextIO) -> tuple[tuple[float, float, float], ...]:
    """(north, east, height) per tick from a file written by write_truth_csv."""
    reader = csv.DictReader(source)
    if not reader.fieldnames:
        raise EmptyInputError("truth track: file is empty")
    for column in TRUTH_COLUMNS[1:4]:
        if column not in reader.fieldnames:
            raise SchemaError(column, "truth track")
    track = []
    for row in reader:
        try:
            point = tuple(float(row[c]) for c in ("north_m", "east_m", "height_m"))
        except (TypeError, ValueError):
            raise RowError(reader.line_num, "non-numeric position") from None
        if not all(math.isfinite(v) for v in point):
            raise RowError(reader.line_num, "non-finite position")
        track.append(point)
    if not track:
        raise EmptyInputError("truth track: no data rows")
    return tuple(track)
