"""Core value types and the body-frame to true-frame wind transform.

Angles are kept in degrees, the unit the logs use, and only converted to
radians inside trig calls. Speeds are m/s everywhere past ingestion.
"""

import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, ValidationInfo, field_validator

from errors import InvalidInputError

MPH_TO_MS = 0.44704


def _finite(name: str, value: float) -> float:
    if not math.isfinite(value):
        raise InvalidInputError(f"{name} must be finite, got {value!r}")
    return value


def normalize_angle(deg: float) -> "Angle":
    """Wrap an angle in degrees into [-180, 180)."""
    return Angle(degrees=_wrap(_finite("angle", deg)))


def _wrap(deg: float) -> float:
    if -180.0 <= deg < 180.0:
        return deg
    wrapped = (deg + 180.0) % 360.0 - 180.0
    # float modulo can land exactly on the open end
    if wrapped >= 180.0:
        wrapped -= 360.0
    return wrapped


def mph_to_ms(value: float) -> float:
    return value * MPH_TO_MS


def ms_to_mph(value: float) -> float:
    return value / MPH_TO_MS


class Angle(BaseModel):
    """Heading in degrees, always normalized to [-180, 180)."""

    model_config = ConfigDict(frozen=True)

    degrees: float

    @field_validator("degrees")
    @classmethod
    def _normalize(cls, v: float) -> float:
        return _wrap(_finite("angle", v))

    def radians(self) -> float:
        return math.radians(self.degrees)

    def __add__(self, other: "Angle | float") -> "Angle":
        delta = other.degrees if isinstance(other, Angle) else other
        return Angle(degrees=self.degrees + delta)

    def __sub__(self, other: "Angle | float") -> "Angle":
        delta = other.degrees if isinstance(other, Angle) else other
        return Angle(degrees=self.degrees - delta)

    def __neg__(self) -> "Angle":
        return Angle(degrees=-self.degrees)


class Speed(BaseModel):
    """A speed with its unit; MPH only appears at ingestion."""

    model_config = ConfigDict(frozen=True)

    value: float
    unit: Literal["mph", "m/s"] = "m/s"

    @classmethod
    def from_mph(cls, value: float) -> "Speed":
        return cls(value=value, unit="mph")

    def to_ms(self) -> float:
        return self.value if self.unit == "m/s" else mph_to_ms(self.value)

    def to_mph(self) -> float:
        return self.value if self.unit == "mph" else ms_to_mph(self.value)


class TelemetrySample(BaseModel):
    """One drone state row.

    x_speed is ground speed along true North (+ northbound), y_speed along
    true East (+ eastbound), both in m/s. Height is meters above takeoff.
    """

    model_config = ConfigDict(frozen=True)

    t: float
    x_speed: float
    y_speed: float
    height: float
    yaw: Angle

    @field_validator("t", "x_speed", "y_speed", "height")
    @classmethod
    def _check(cls, v: float, info: ValidationInfo) -> float:
        _finite(info.field_name, v)
        if info.field_name in ("t", "height") and v < 0:
            raise InvalidInputError(f"{info.field_name} must be >= 0, got {v!r}")
        return v


class WindSample(BaseModel):
    """One anemometer row in the body frame.

    v runs along the nose, u 90 degrees clockwise from it (east of nose).
    """

    model_config = ConfigDict(frozen=True)

    t: float
    u: float
    v: float

    @field_validator("t", "u", "v")
    @classmethod
    def _check(cls, v: float, info: ValidationInfo) -> float:
        return _finite(info.field_name, v)

    def magnitude(self) -> float:
        return wind_magnitude(self.u, self.v)


class TrueWind(BaseModel):
    """Wind resolved on true North/East.

    Sign convention: north_r = +10 means a 10 m/s wind blowing from the
    north toward the south. Likewise a positive east_r blows from the east.
    """

    model_config = ConfigDict(frozen=True)

    north_r: float
    east_r: float

    def magnitude(self) -> float:
        return wind_magnitude(self.north_r, self.east_r)


def wind_magnitude(u: float, v: float) -> float:
    """Return the wind power sqrt(u^2 + v^2)."""
    return math.hypot(_finite("u", u), _finite("v", v))


def to_true_north_east(wind: WindSample, yaw: Angle) -> TrueWind:
    """Rotate a body-frame anemometer reading onto true North/East.

    With the nose at yaw g and the east-of-nose axis at a = g - 90:
        northV = cos(g) v,   eastV = sin(g) v
        northU = -cos(a) u,  eastU = -sin(a) u
    which collapses to a plain rotation valid for every yaw.
    """
    g = yaw.radians()
    c, s = math.cos(g), math.sin(g)
    return TrueWind(north_r=c * wind.v - s * wind.u, east_r=s * wind.v + c * wind.u)


def to_body_frame(true_wind: TrueWind, yaw: Angle, t: float = 0.0) -> WindSample:
    """Inverse of to_true_north_east: what the anemometer reads at this yaw."""
    g = yaw.radians()
    c, s = math.cos(g), math.sin(g)
    return WindSample(
        t=t,
        v=c * true_wind.north_r + s * true_wind.east_r,
        u=-s * true_wind.north_r + c * true_wind.east_r,
    )
