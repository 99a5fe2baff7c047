"""Flight and anemometer log parsing, alignment and record persistence.

Input files follow the canonical CSV schemas of a DJI .TXT export plus the
anemometer log:

    time_s,xSpeed_mph,ySpeed_mph,height_m,yaw_deg
    time_s,u_ms,v_ms

An aligned FlightRecord is persisted as one CSV with a version header and a
trailing CRC32 line.
"""

import csv
import datetime
import io
import logging
import math
import zlib
from functools import cached_property
from typing import Iterable, TextIO

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from errors import (
    AlignmentError,
    EmptyInputError,
    InvalidInputError,
    RecordFormatError,
    RowError,
    SchemaError,
)
from frames import Angle, Speed, TelemetrySample, WindSample, ms_to_mph

logger = logging.getLogger(__name__)

FLIGHT_COLUMNS = ("time_s", "xSpeed_mph", "ySpeed_mph", "height_m", "yaw_deg")
WIND_COLUMNS = ("time_s", "u_ms", "v_ms")
RECORD_COLUMNS = (
    "time_s",
    "x_speed_ms",
    "y_speed_ms",
    "height_m",
    "yaw_deg",
    "u_ms",
    "v_ms",
)
RECORD_HEADER = "# windward-record v1"
DEFAULT_SAMPLE_DT = 0.2
MAX_WIND_MS = 75.0

# grid tolerance for float timestamps such as 3 * 0.2
_TIME_EPS = 1e-9


class RawLogRow(BaseModel):
    """One CSV line as loose strings, before typing."""

    line: int
    cells: dict[str, str]

    def number(self, column: str) -> float:
        raw = (self.cells.get(column) or "").strip()
        try:
            value = float(raw)
        except ValueError:
            raise RowError(self.line, f"{column}={raw!r} is not a number") from None
        if not math.isfinite(value):
            raise RowError(self.line, f"{column}={raw!r} is not finite")
        return value


class ParseResult(list):
    """Parsed samples; `skipped` lists line numbers dropped in lenient mode."""

    def __init__(self, items: Iterable = (), skipped: Iterable[int] = ()):
        super().__init__(items)
        self.skipped = list(skipped)


class FlightMeta(BaseModel):
    model_config = ConfigDict(frozen=True)

    flight_id: str = "flight"
    takeoff: str = "home"
    sample_dt: float = DEFAULT_SAMPLE_DT
    created_at: datetime.datetime | None = None

    @field_validator("flight_id", "takeoff")
    @classmethod
    def _single_line(cls, v: str) -> str:
        if "\n" in v or "\r" in v:
            raise ValueError("labels must fit on one line")
        return v

    @field_validator("sample_dt")
    @classmethod
    def _positive_dt(cls, v: float) -> float:
        if not (math.isfinite(v) and v > 0):
            raise ValueError(f"sample_dt must be > 0, got {v!r}")
        return v


class FlightRecord(BaseModel):
    """Telemetry and wind paired on a uniform time grid."""

    model_config = ConfigDict(frozen=True)

    meta: FlightMeta = FlightMeta()
    samples: tuple[tuple[TelemetrySample, WindSample], ...] = ()

    @model_validator(mode="after")
    def _uniform_grid(self) -> "FlightRecord":
        dt = self.meta.sample_dt
        if not self.samples:
            return self
        t0 = self.samples[0][0].t
        for k, (tel, wind) in enumerate(self.samples):
            if abs(tel.t - wind.t) > _TIME_EPS:
                raise ValueError(f"sample {k}: telemetry/wind timestamps differ")
            if abs(tel.t - (t0 + k * dt)) > 1e-6:
                raise ValueError(f"sample {k}: t={tel.t!r} is off the {dt} s grid")
        return self

    def __len__(self) -> int:
        return len(self.samples)

    @cached_property
    def telemetry(self) -> tuple[TelemetrySample, ...]:
        return tuple(tel for tel, _ in self.samples)

    @cached_property
    def wind(self) -> tuple[WindSample, ...]:
        return tuple(wind for _, wind in self.samples)

    @property
    def sample_dt(self) -> float:
        return self.meta.sample_dt


def _read_rows(stream: TextIO, columns: tuple[str, ...], source: str):
    reader = csv.DictReader(stream)
    header = reader.fieldnames
    if not header:
        raise EmptyInputError(f"{source}: file is empty")
    header = [name.strip() for name in header]
    reader.fieldnames = header
    for column in columns:
        if column not in header:
            raise SchemaError(column, source)
    for cells in reader:
        yield RawLogRow(line=reader.line_num, cells={k: v for k, v in cells.items() if k})


def _parse(stream, columns, source, build, strict) -> ParseResult:
    samples, skipped = [], []
    for row in _read_rows(stream, columns, source):
        try:
            samples.append(build(row))
        except (RowError, ValidationError, InvalidInputError) as exc:
            error = exc if isinstance(exc, RowError) else RowError(row.line, str(exc))
            if strict:
                raise error from None
            logger.warning("%s: skipping %s", source, error)
            skipped.append(row.line)
    if not samples:
        raise EmptyInputError(f"{source}: no data rows")
    return ParseResult(samples, skipped)


def parse_flight_csv(stream: TextIO, strict: bool = True) -> ParseResult:
    """Parse a flight telemetry CSV into TelemetrySamples (speeds in m/s)."""

    def build(row: RawLogRow) -> TelemetrySample:
        return TelemetrySample(
            t=row.number("time_s"),
            x_speed=Speed.from_mph(row.number("xSpeed_mph")).to_ms(),
            y_speed=Speed.from_mph(row.number("ySpeed_mph")).to_ms(),
            height=row.number("height_m"),
            yaw=Angle(degrees=row.number("yaw_deg")),
        )

    return _parse(stream, FLIGHT_COLUMNS, "flight log", build, strict)


def parse_anemometer_csv(
    stream: TextIO, strict: bool = True, max_wind: float = MAX_WIND_MS
) -> ParseResult:
    """Parse an anemometer CSV into body-frame WindSamples."""

    def build(row: RawLogRow) -> WindSample:
        sample = WindSample(t=row.number("time_s"), u=row.number("u_ms"), v=row.number("v_ms"))
        if abs(sample.u) > max_wind or abs(sample.v) > max_wind:
            raise RowError(row.line, f"wind component beyond {max_wind} m/s")
        return sample

    return _parse(stream, WIND_COLUMNS, "anemometer log", build, strict)


def write_flight_csv(samples: Iterable[TelemetrySample], sink: TextIO) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(FLIGHT_COLUMNS)
    for s in samples:
        writer.writerow(
            [
                repr(s.t),
                repr(ms_to_mph(s.x_speed)),
                repr(ms_to_mph(s.y_speed)),
                repr(s.height),
                repr(s.yaw.degrees),
            ]
        )


def write_anemometer_csv(samples: Iterable[WindSample], sink: TextIO) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(WIND_COLUMNS)
    for s in samples:
        writer.writerow([repr(s.t), repr(s.u), repr(s.v)])


def _nearest(times: np.ndarray, grid: np.ndarray, tol: float) -> np.ndarray:
    """Index of the nearest sample for each grid point, earlier one on ties."""
    right = np.clip(np.searchsorted(times, grid, side="left"), 0, len(times) - 1)
    left = np.clip(right - 1, 0, len(times) - 1)
    pick = np.where(np.abs(times[left] - grid) <= np.abs(times[right] - grid), left, right)
    gaps = np.abs(times[pick] - grid) > tol
    if gaps.any():
        t_gap = float(grid[np.argmax(gaps)])
        raise AlignmentError(f"no sample within {tol:.3g} s of grid time {t_gap:.3f} s")
    return pick


def align(
    telemetry: list[TelemetrySample],
    wind: list[WindSample],
    sample_dt: float = DEFAULT_SAMPLE_DT,
    meta: FlightMeta | None = None,
) -> FlightRecord:
    """Resample both series onto {0, dt, 2dt, ...} by nearest neighbour.

    The grid is truncated to the interval both series cover; every grid
    point must have a sample within dt/2 in each series.
    """
    if not telemetry or not wind:
        raise EmptyInputError("align needs non-empty telemetry and wind series")
    if not (math.isfinite(sample_dt) and sample_dt > 0):
        raise InvalidInputError(f"sample_dt must be > 0, got {sample_dt!r}")
    tel_t = np.array([s.t for s in telemetry])
    wind_t = np.array([s.t for s in wind])
    for name, times in (("telemetry", tel_t), ("wind", wind_t)):
        if np.any(np.diff(times) < 0):
            raise AlignmentError(f"{name} timestamps are not monotone")

    start = max(tel_t[0], wind_t[0])
    end = min(tel_t[-1], wind_t[-1])
    k_lo = math.ceil(start / sample_dt - _TIME_EPS)
    k_hi = math.floor(end / sample_dt + _TIME_EPS)
    if start > end or k_lo > k_hi:
        raise AlignmentError(
            f"no temporal overlap on a {sample_dt} s grid "
            f"(telemetry {tel_t[0]:.3f}-{tel_t[-1]:.3f} s, wind {wind_t[0]:.3f}-{wind_t[-1]:.3f} s)"
        )

    ks = np.arange(k_lo, k_hi + 1)
    grid = ks * sample_dt
    tol = sample_dt / 2 + _TIME_EPS
    tel_idx = _nearest(tel_t, grid, tol)
    wind_idx = _nearest(wind_t, grid, tol)

    samples = []
    for k, i, j in zip(ks, tel_idx, wind_idx):
        t = int(k) * sample_dt
        samples.append(
            (
                telemetry[i].model_copy(update={"t": t}),
                wind[j].model_copy(update={"t": t}),
            )
        )
    dropped = max(len(telemetry), len(wind)) - len(samples)
    if dropped:
        logger.info(
            "aligned %d samples at %.3g s, %d rows outside the grid", len(samples), sample_dt, dropped
        )

    meta = (meta or FlightMeta()).model_copy(update={"sample_dt": sample_dt})
    return FlightRecord(meta=meta, samples=tuple(samples))


def dump_record(record: FlightRecord) -> str:
    """Serialize a record to its versioned text form."""
    if not record.samples:
        raise InvalidInputError("refusing to save an empty flight record")
    meta = record.meta
    buf = io.StringIO()
    buf.write(f"{RECORD_HEADER}\n")
    buf.write(f"# flight_id: {meta.flight_id}\n")
    buf.write(f"# takeoff: {meta.takeoff}\n")
    buf.write(f"# sample_dt: {meta.sample_dt!r}\n")
    buf.write(f"# created_at: {meta.created_at.isoformat() if meta.created_at else ''}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORD_COLUMNS)
    for tel, wind in record.samples:
        writer.writerow(
            [
                repr(v)
                for v in (tel.t, tel.x_speed, tel.y_speed, tel.height, tel.yaw.degrees, wind.u, wind.v)
            ]
        )
    body = buf.getvalue()
    return f"{body}# crc32: {zlib.crc32(body.encode('utf-8')):08x}\n"


def save_record(record: FlightRecord, sink: TextIO) -> None:
    sink.write(dump_record(record))


def _meta_item(line: str) -> tuple[str, str]:
    if not line.startswith("# ") or ": " not in line:
        raise RecordFormatError(f"bad metadata line {line!r}")
    key, value = line[2:].split(": ", 1)
    return key, value


def load_record(source: TextIO) -> FlightRecord:
    """Read a record written by save_record, verifying version and checksum."""
    text = source.read()
    if not text:
        raise RecordFormatError("record file is empty")
    first = text.split("\n", 1)[0]
    if first != RECORD_HEADER:
        if first.startswith("# windward-record"):
            raise RecordFormatError(f"unsupported record version: {first[2:]!r}")
        raise RecordFormatError("not a windward record (bad header line)")

    body, sep, trailer = text.rstrip("\n").rpartition("\n")
    if not sep or not trailer.startswith("# crc32: "):
        raise RecordFormatError("record is truncated: checksum line missing")
    body += "\n"
    expected = trailer.removeprefix("# crc32: ").strip()
    actual = f"{zlib.crc32(body.encode('utf-8')):08x}"
    if expected != actual:
        raise RecordFormatError(f"checksum mismatch (file {expected}, computed {actual})")

    lines = body.split("\n")
    try:
        meta_lines = dict(_meta_item(line) for line in lines[1:5])
        created = meta_lines.get("created_at", "")
        meta = FlightMeta(
            flight_id=meta_lines["flight_id"],
            takeoff=meta_lines["takeoff"],
            sample_dt=float(meta_lines["sample_dt"]),
            created_at=datetime.datetime.fromisoformat(created) if created else None,
        )
        reader = csv.reader(lines[5:])
        if tuple(next(reader)) != RECORD_COLUMNS:
            raise RecordFormatError("unexpected record columns")
        samples = []
        for row in reader:
            if not row:
                continue
            t, xs, ys, h, yaw, u, v = (float(cell) for cell in row)
            samples.append(
                (
                    TelemetrySample(t=t, x_speed=xs, y_speed=ys, height=h, yaw=Angle(degrees=yaw)),
                    WindSample(t=t, u=u, v=v),
                )
            )
        return FlightRecord(meta=meta, samples=tuple(samples))
    except RecordFormatError:
        raise
    except (KeyError, ValueError, StopIteration) as exc:
        raise RecordFormatError(f"malformed record: {exc}") from exc
