"""Forward Phase: rebuild the flown route from logged ground speeds."""

import csv
import math
from typing import TextIO

import numpy as np
from pydantic import BaseModel, ConfigDict

from errors import InvalidInputError
from frames import TelemetrySample, WindSample
from logstore import FlightRecord

PATH_COLUMNS = ("time_s", "north_m", "east_m", "height_m")


class PathPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    t: float
    north: float
    east: float
    height: float


class Path(BaseModel):
    """Dead-reckoned route on the record's time grid.

    points[k] is the position at the start of sample k, so points[0] is the
    origin. `end` is where the last sample's interval leaves the drone.
    """

    model_config = ConfigDict(frozen=True)

    points: tuple[PathPoint, ...]
    end: tuple[float, float]

    def __len__(self) -> int:
        return len(self.points)

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """North and east coordinates including the end point, for plotting."""
        north = np.array([p.north for p in self.points] + [self.end[0]])
        east = np.array([p.east for p in self.points] + [self.end[1]])
        return north, east

    def heights(self) -> np.ndarray:
        """Heights matching as_arrays; the end point keeps the last logged height."""
        return np.array([p.height for p in self.points] + [self.points[-1].height])


class ReversedSeries(BaseModel):
    model_config = ConfigDict(frozen=True)

    telemetry: tuple[TelemetrySample, ...]
    wind: tuple[WindSample, ...]

    def __len__(self) -> int:
        return len(self.telemetry)


class ArrivalError(BaseModel):
    model_config = ConfigDict(frozen=True)

    x_err: float
    y_err: float
    magnitude: float


def integrate_path(record: FlightRecord, origin: tuple[float, float] = (0.0, 0.0)) -> Path:
    """Euler-integrate x/ySpeed at the log rate; heights are copied as logged."""
    if not record.samples:
        raise InvalidInputError("cannot integrate an empty flight record")
    dt = record.sample_dt
    north, east = origin
    points = []
    for tel in record.telemetry:
        points.append(PathPoint(t=tel.t, north=north, east=east, height=tel.height))
        north = north + tel.x_speed * dt
        east = east + tel.y_speed * dt
    return Path(points=tuple(points), end=(north, east))


def reverse_series(record: FlightRecord) -> ReversedSeries:
    """Reverse telemetry and wind lists for the Backward Phase."""
    if not record.samples:
        raise InvalidInputError("cannot reverse an empty flight record")
    return ReversedSeries(telemetry=record.telemetry[::-1], wind=record.wind[::-1])


def arrival_error(
    path_true_end: tuple[float, float], takeoff: tuple[float, float] = (0.0, 0.0)
) -> ArrivalError:
    """Displacement of the landing point from takeoff; x is north, y is east."""
    x_err = path_true_end[0] - takeoff[0]
    y_err = path_true_end[1] - takeoff[1]
    return ArrivalError(x_err=x_err, y_err=y_err, magnitude=math.hypot(x_err, y_err))


def total_distance(path: Path) -> float:
    north, east = path.as_arrays()
    return float(np.sum(np.hypot(np.diff(north), np.diff(east))))


def write_path_csv(path: Path, sink: TextIO) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(PATH_COLUMNS)
    for p in path.points:
        writer.writerow([repr(p.t), repr(p.north), repr(p.east), repr(p.height)])
