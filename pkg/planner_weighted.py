"""Backward Phase by the Weighted Proportion Method.

The drone retraces the forward route in reverse, each stored ground speed
rescaled by how the wind met now compares with the wind logged at the same
point on the way out:

    xSpeedB = xSpeedF * (alpha + beta * northRB / northRF)

and likewise on the east axis.
"""

import csv
import logging
import math
from typing import Iterable, Iterator, Literal, TextIO

from pydantic import BaseModel, ConfigDict, Field, model_validator

from deadreckon import reverse_series
from errors import InvalidInputError, TruncationError
from frames import Angle, WindSample, to_true_north_east
from logstore import FlightRecord

logger = logging.getLogger(__name__)

COMMAND_COLUMNS = ("step", "x_cmd_ms", "y_cmd_ms", "height_m")


class WeightedParams(BaseModel):
    """alpha weighs the forward speed, beta the wind ratio; alpha + beta = 1.

    sign="minus" evaluates the subtracted form of the speed update instead of
    the additive one, for comparison runs only.
    """

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(0.9, ge=0.0)
    beta: float = Field(0.1, ge=0.0)
    sign: Literal["plus", "minus"] = "plus"
    ratio_clamp: float = Field(10.0, gt=0)
    zero_wind_tolerance: float = Field(1e-9, ge=0)
    max_speed: float = Field(15.0, gt=0)

    @model_validator(mode="after")
    def _weights_sum_to_one(self) -> "WeightedParams":
        if abs(self.alpha + self.beta - 1.0) > 1e-9:
            raise ValueError(f"alpha + beta must be 1, got {self.alpha} + {self.beta}")
        return self

    @classmethod
    def from_beta(cls, beta: float, **kwargs) -> "WeightedParams":
        return cls(alpha=1.0 - beta, beta=beta, **kwargs)


class BackwardCommand(BaseModel):
    """One commanded step: ground speed per axis held for `duration`."""

    model_config = ConfigDict(frozen=True)

    x_speed_cmd: float
    y_speed_cmd: float
    duration: float
    target_height: float

    def speed(self) -> float:
        return math.hypot(self.x_speed_cmd, self.y_speed_cmd)


def weighted_step(
    x_speed_f: float, north_rf: float, north_rb: float, params: WeightedParams
) -> float:
    """Rescale one forward speed component by the backward/forward wind ratio.

    A forward wind component of (near) zero keeps the forward speed as is.
    """
    if abs(north_rf) <= params.zero_wind_tolerance:
        return x_speed_f
    ratio = north_rb / north_rf
    ratio = max(-params.ratio_clamp, min(params.ratio_clamp, ratio))
    if params.sign == "minus":
        return x_speed_f * (params.alpha - params.beta * ratio)
    return x_speed_f * (params.alpha + params.beta * ratio)


def _clamp(x: float, y: float, limit: float) -> tuple[float, float]:
    mag = math.hypot(x, y)
    if mag > limit:
        return x * limit / mag, y * limit / mag
    return x, y


class WeightedPlanner:
    """Sequential planner consuming one live wind reading per step."""

    def __init__(self, record: FlightRecord, params: WeightedParams):
        self.params = params
        self.series = reverse_series(record)
        self.dt = record.sample_dt
        self.step_index = 0

    def __len__(self) -> int:
        return len(self.series)

    @property
    def done(self) -> bool:
        return self.step_index >= len(self.series)

    def step(self, live_wind: WindSample, yaw: Angle) -> BackwardCommand:
        if self.done:
            raise InvalidInputError("weighted plan already complete")
        i = self.step_index
        tel = self.series.telemetry[i]
        forward = to_true_north_east(self.series.wind[i], tel.yaw)
        backward = to_true_north_east(live_wind, yaw)
        x = weighted_step(tel.x_speed, forward.north_r, backward.north_r, self.params)
        y = weighted_step(tel.y_speed, forward.east_r, backward.east_r, self.params)
        # flying the leg the other way round
        x, y = _clamp(-x, -y, self.params.max_speed)
        self.step_index += 1
        return BackwardCommand(
            x_speed_cmd=x, y_speed_cmd=y, duration=self.dt, target_height=tel.height
        )


def plan_backward_weighted(
    record: FlightRecord,
    live_wind: Iterable[tuple[WindSample, Angle]],
    params: WeightedParams,
) -> Iterator[BackwardCommand]:
    """Yield one command per reversed sample, driven by the live wind stream."""
    planner = WeightedPlanner(record, params)
    readings = iter(live_wind)
    while not planner.done:
        try:
            wind, yaw = next(readings)
        except StopIteration:
            raise TruncationError(planner.step_index, len(planner)) from None
        yield planner.step(wind, yaw)
    logger.debug("weighted plan complete: %d steps", len(planner))


def write_commands_csv(commands: Iterable[BackwardCommand], sink: TextIO) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(COMMAND_COLUMNS)
    for i, cmd in enumerate(commands):
        writer.writerow([i, repr(cmd.x_speed_cmd), repr(cmd.y_speed_cmd), repr(cmd.target_height)])
