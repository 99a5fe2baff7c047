"""Backward Phase by the ML-based method.

The drone climbs by `height_raise`, then flies a straight line home. The
two axis models turn the live wind into an achievable ground speed; in
`direct` guidance that speed is flown along the unit vector from the
dead-reckoned position toward the origin. `raw` guidance commands the two
per-axis predictions as they come, for comparison.
"""

import logging
import math
from typing import Iterable, Iterator, Literal

from pydantic import BaseModel, ConfigDict, Field

from errors import NonArrivalError, TruncationError
from frames import Angle, WindSample, to_true_north_east
from lasso import AxisModels, predict
from logstore import DEFAULT_SAMPLE_DT
from planner_weighted import BackwardCommand

logger = logging.getLogger(__name__)


class LassoPlanConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    height_raise: float = Field(20.0, ge=0)
    arrival_radius: float = Field(1.0, gt=0)
    max_steps: int = Field(10_000, gt=0)
    speed_floor: float = Field(0.5, gt=0)
    max_speed: float = Field(15.0, gt=0)
    sample_dt: float = Field(DEFAULT_SAMPLE_DT, gt=0)
    guidance: Literal["direct", "raw"] = "direct"


class LassoPlanner:
    """Sequential planner; one live wind reading per emitted command."""

    def __init__(
        self,
        start_offset: tuple[float, float],
        models: AxisModels,
        cfg: LassoPlanConfig,
        start_height: float = 0.0,
    ):
        self.models = models
        self.cfg = cfg
        self.north, self.east = start_offset
        self.target_height = start_height + cfg.height_raise
        self.steps = 0
        self._climbed = False

    @property
    def position(self) -> tuple[float, float]:
        return (self.north, self.east)

    def distance(self) -> float:
        return math.hypot(self.north, self.east)

    @property
    def arrived(self) -> bool:
        return self.distance() < self.cfg.arrival_radius

    def step(self, live_wind: WindSample, yaw: Angle) -> BackwardCommand:
        dt = self.cfg.sample_dt
        self.steps += 1
        if not self._climbed:
            self._climbed = True
            return BackwardCommand(
                x_speed_cmd=0.0, y_speed_cmd=0.0, duration=dt, target_height=self.target_height
            )

        wind = to_true_north_east(live_wind, yaw)
        sx = predict(self.models.north, wind.north_r)
        sy = predict(self.models.east, wind.east_r)
        if self.cfg.guidance == "raw":
            x, y = sx, sy
            mag = math.hypot(x, y)
            if mag > self.cfg.max_speed:
                x, y = x * self.cfg.max_speed / mag, y * self.cfg.max_speed / mag
        else:
            d = self.distance()
            speed = min(max(self.cfg.speed_floor, math.hypot(sx, sy)), self.cfg.max_speed)
            # do not fly past home on the last step
            speed = max(self.cfg.speed_floor, min(speed, d / dt))
            x, y = -self.north / d * speed, -self.east / d * speed

        self.north = self.north + x * dt
        self.east = self.east + y * dt
        return BackwardCommand(
            x_speed_cmd=x, y_speed_cmd=y, duration=dt, target_height=self.target_height
        )


def plan_backward_lasso(
    start_offset: tuple[float, float],
    models: AxisModels,
    live_wind: Iterable[tuple[WindSample, Angle]],
    cfg: LassoPlanConfig,
    start_height: float = 0.0,
) -> Iterator[BackwardCommand]:
    """Yield commands until the dead-reckoned position is within
    arrival_radius of the origin."""
    planner = LassoPlanner(start_offset, models, cfg, start_height)
    if planner.arrived:
        return
    readings = iter(live_wind)
    while planner.steps < cfg.max_steps:
        try:
            wind, yaw = next(readings)
        except StopIteration:
            raise TruncationError(planner.steps, cfg.max_steps) from None
        yield planner.step(wind, yaw)
        if planner.arrived:
            logger.debug("lasso plan arrived after %d steps", planner.steps)
            return
    raise NonArrivalError(planner.position, planner.steps)
