"""Univariate LASSO regression relating a true-frame wind component to the
ground speed the drone logged along the same axis.

Objective, on x standardized to zero mean and unit variance:

    (1/2n) * sum (y - b0 - w z)^2 + lam * |w|

solved by coordinate descent with soft-thresholding; b0 is not penalized.
Coefficients are mapped back to the original x scale after fitting.
"""

import json
import logging
import math
from typing import Iterable, Literal, TextIO

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from errors import (
    ConvergenceError,
    InvalidInputError,
    RecordFormatError,
    UndefinedCorrelationError,
    UndefinedScoreError,
)
from frames import to_true_north_east
from logstore import FlightRecord

logger = logging.getLogger(__name__)

MODEL_FORMAT = "windward-lasso"
MODEL_VERSION = 1
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000


class Dataset1D(BaseModel):
    model_config = ConfigDict(frozen=True)

    xs: tuple[float, ...]
    ys: tuple[float, ...]

    @field_validator("xs", "ys")
    @classmethod
    def _finite(cls, v: tuple[float, ...]) -> tuple[float, ...]:
        if not all(math.isfinite(x) for x in v):
            raise ValueError("dataset values must be finite")
        return v

    @model_validator(mode="after")
    def _paired(self) -> "Dataset1D":
        if len(self.xs) != len(self.ys):
            raise ValueError(f"xs has {len(self.xs)} values, ys has {len(self.ys)}")
        if len(self.xs) < 2:
            raise ValueError("a dataset needs at least 2 points")
        return self

    def __len__(self) -> int:
        return len(self.xs)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.xs, dtype=float), np.asarray(self.ys, dtype=float)

    def subset(self, idx: np.ndarray) -> "Dataset1D":
        x, y = self.arrays()
        return Dataset1D(xs=tuple(x[idx].tolist()), ys=tuple(y[idx].tolist()))

    @classmethod
    def from_records(
        cls, records: Iterable[FlightRecord], axis: Literal["north", "east"]
    ) -> "Dataset1D":
        """Pairs (northR, xSpeed) or (eastR, ySpeed) over every sample."""
        xs, ys = [], []
        for record in records:
            for tel, wind in record.samples:
                true = to_true_north_east(wind, tel.yaw)
                if axis == "north":
                    xs.append(true.north_r)
                    ys.append(tel.x_speed)
                else:
                    xs.append(true.east_r)
                    ys.append(tel.y_speed)
        return cls(xs=tuple(xs), ys=tuple(ys))


class LassoModel(BaseModel):
    """Fitted affine model y = intercept + slope * x."""

    model_config = ConfigDict(frozen=True)

    intercept: float
    slope: float
    lam: float = 0.0
    x_mean: float = 0.0
    x_std: float = 1.0
    iterations: int = 0


def _checked(data: Dataset1D) -> tuple[np.ndarray, np.ndarray]:
    if not isinstance(data, Dataset1D):
        raise InvalidInputError("expected a Dataset1D")
    return data.arrays()


def pearson(xs: Iterable[float], ys: Iterable[float]) -> float:
    """Pearson correlation coefficient of two equal-length series."""
    x = np.asarray(list(xs), dtype=float)
    y = np.asarray(list(ys), dtype=float)
    if len(x) != len(y) or len(x) < 2:
        raise InvalidInputError("pearson needs two series of equal length >= 2")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation is undefined for a constant series")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def soft_threshold(rho: float, lam: float) -> float:
    if rho > lam:
        return rho - lam
    if rho < -lam:
        return rho + lam
    return 0.0


def _standardize(x: np.ndarray) -> tuple[np.ndarray, float, float]:
    mean = float(x.mean())
    std = float(x.std())
    if std == 0.0:
        return np.zeros_like(x), mean, 1.0
    return (x - mean) / std, mean, std


def lambda_max(data: Dataset1D) -> float:
    """Smallest lam at which the slope is shrunk to exactly zero."""
    x, y = _checked(data)
    z, _, _ = _standardize(x)
    return abs(float(np.mean(z * (y - np.mean(y)))))


def _descend(
    data: Dataset1D, lam: float, tol: float, max_iter: int
) -> LassoModel:
    x, y = _checked(data)
    z, mean, std = _standardize(x)
    zz = float(np.mean(z * z))
    b0 = w = 0.0
    for it in range(1, max_iter + 1):
        b0 = float(np.mean(y - w * z))
        rho = float(np.mean(z * (y - b0)))
        w_new = soft_threshold(rho, lam) / zz if zz > 0 else 0.0
        delta = abs(w_new - w)
        w = w_new
        if delta < tol:
            break
    else:
        raise ConvergenceError(w / std, b0 - w / std * mean, max_iter)
    slope = w / std
    return LassoModel(
        intercept=b0 - slope * mean,
        slope=slope,
        lam=lam,
        x_mean=mean,
        x_std=std,
        iterations=it,
    )


def fit_lasso(
    data: Dataset1D,
    lam: float | None = None,
    *,
    robust_trim: bool = False,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> LassoModel:
    """Fit by coordinate descent; lam=None picks it by cross-validation.

    robust_trim drops the top 1% absolute residuals and refits once.
    """
    if lam is None:
        lam = select_lambda(data)
    if not (math.isfinite(lam) and lam >= 0):
        raise InvalidInputError(f"lambda must be >= 0, got {lam!r}")
    model = _descend(data, lam, tol, max_iter)
    if robust_trim:
        x, y = data.arrays()
        residuals = np.abs(y - predict_many(model, x))
        drop = max(1, int(0.01 * len(x)))
        if len(x) - drop >= 2:
            keep = np.sort(np.argsort(residuals, kind="stable")[: len(x) - drop])
            logger.debug("robust trim: dropping %d of %d points", drop, len(x))
            model = _descend(data.subset(keep), lam, tol, max_iter)
    return model


def predict(model: LassoModel, x: float) -> float:
    if not math.isfinite(x):
        raise InvalidInputError(f"cannot predict at {x!r}")
    return model.intercept + model.slope * x


def predict_many(model: LassoModel, x: np.ndarray) -> np.ndarray:
    return model.intercept + model.slope * np.asarray(x, dtype=float)


def r2_score(model: LassoModel, data: Dataset1D) -> float:
    """Coefficient of determination 1 - SS_res / SS_tot."""
    x, y = _checked(data)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedScoreError("R² is undefined for constant targets")
    ss_res = float(np.sum((y - predict_many(model, x)) ** 2))
    return 1.0 - ss_res / ss_tot


def select_lambda(data: Dataset1D, folds: int = 5, grid: int = 20) -> float:
    """Blocked k-fold cross-validation over a log grid below lambda_max.

    Folds are contiguous because samples come from time series; ties go to
    the larger lambda.
    """
    top = lambda_max(data)
    if top == 0.0:
        return 0.0
    candidates = np.geomspace(top, top * 1e-4, grid)
    k = max(2, min(folds, len(data) // 2))
    splits = np.array_split(np.arange(len(data)), k)
    x, y = data.arrays()
    scores = []
    for lam in candidates:
        errors = []
        for held in splits:
            train = np.setdiff1d(np.arange(len(data)), held)
            if len(train) < 2 or len(held) == 0:
                continue
            model = _descend(data.subset(train), float(lam), DEFAULT_TOL, DEFAULT_MAX_ITER)
            errors.append(float(np.mean((y[held] - predict_many(model, x[held])) ** 2)))
        scores.append(np.mean(errors) if errors else math.inf)
    best = float(candidates[int(np.argmin(scores))])
    logger.debug("cross-validated lambda %.4g (lambda_max %.4g)", best, top)
    return best


class AxisModels(BaseModel):
    """The pair of models used on the way home: xSpeed from northR and
    ySpeed from eastR."""

    model_config = ConfigDict(frozen=True)

    north: LassoModel
    east: LassoModel


class TrainingResult(BaseModel):
    models: AxisModels
    pearson_north: float
    pearson_east: float
    r2_north: float
    r2_east: float
    samples: int

    def nice(self) -> str:
        return (
            f"north: r={self.pearson_north:+.2f} R²={self.r2_north:.2f} | "
            f"east: r={self.pearson_east:+.2f} R²={self.r2_east:.2f} | "
            f"{self.samples} samples"
        )


def train_axis_models(
    records: Iterable[FlightRecord], lam: float | None = None, robust_trim: bool = False
) -> TrainingResult:
    records = list(records)
    north = Dataset1D.from_records(records, "north")
    east = Dataset1D.from_records(records, "east")
    models = AxisModels(
        north=fit_lasso(north, lam, robust_trim=robust_trim),
        east=fit_lasso(east, lam, robust_trim=robust_trim),
    )
    return TrainingResult(
        models=models,
        pearson_north=pearson(north.xs, north.ys),
        pearson_east=pearson(east.xs, east.ys),
        r2_north=r2_score(models.north, north),
        r2_east=r2_score(models.east, east),
        samples=len(north),
    )


def save_models(models: AxisModels, sink: TextIO) -> None:
    payload = {"format": MODEL_FORMAT, "version": MODEL_VERSION, **models.model_dump()}
    sink.write(json.dumps(payload, indent=2) + "\n")


def load_models(source: TextIO) -> AxisModels:
    try:
        payload = json.load(source)
    except json.JSONDecodeError as exc:
        raise RecordFormatError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise RecordFormatError("not a windward lasso model file")
    if payload.get("version") != MODEL_VERSION:
        raise RecordFormatError(f"unsupported model version {payload.get('version')!r}")
    try:
        return AxisModels(north=payload["north"], east=payload["east"])
    except (KeyError, ValidationError) as exc:
        raise RecordFormatError(f"malformed model file: {exc}") from exc
