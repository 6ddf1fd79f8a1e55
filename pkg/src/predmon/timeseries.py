"""Ingestion, windowing and normalization of multi-channel time series."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import (
    ConstantChannel,
    DimensionMismatch,
    EmptyAfterFiltering,
    FrameTooShort,
    IrregularSampling,
    MissingColumn,
    NonFiniteData,
    NonMonotonicTimestamps,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeSeriesFrame:
    timestamps: np.ndarray
    channels: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps)
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim == 1:
            vals = vals[:, None]
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "channels", tuple(self.channels))
        if vals.shape != (len(ts), len(self.channels)):
            raise DimensionMismatch(
                f"values shape {vals.shape} != ({len(ts)}, {len(self.channels)})"
            )
        if len(ts) > 1 and np.any(np.diff(ts) <= 0):
            raise NonMonotonicTimestamps("timestamps must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise NonFiniteData("frame contains non-finite values")

    def __len__(self) -> int:
        return len(self.timestamps)

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.channels.index(name)]
        except ValueError:
            raise MissingColumn(name) from None

    def select(self, channels: Sequence[str]) -> "TimeSeriesFrame":
        idx = [self.channels.index(c) if c in self.channels else -1 for c in channels]
        missing = [c for c, i in zip(channels, idx) if i < 0]
        if missing:
            raise MissingColumn(", ".join(missing))
        return TimeSeriesFrame(self.timestamps, tuple(channels), self.values[:, idx])

    def slice(self, start: int, stop: int) -> "TimeSeriesFrame":
        return TimeSeriesFrame(self.timestamps[start:stop], self.channels, self.values[start:stop])

    def to_csv(self, path: str | Path, timestamp_column: str = "t") -> None:
        df = pd.DataFrame(self.values, columns=list(self.channels))
        df.insert(0, timestamp_column, self.timestamps)
        # shortest round-trip repr, so load_csv gives back the identical floats
        df.to_csv(path, index=False, lineterminator="\n")


@dataclass
class IngestConfig:
    timestamp_column: str = "t"
    channels: list[str] | None = None
    nan_policy: str = "drop"  # drop | error
    gap_tolerance: float = 0.0  # relative deviation allowed from the modal interval
    allow_gaps: bool = False


def load_csv(path: str | Path, schema: IngestConfig | None = None) -> TimeSeriesFrame:
    """Read a headered CSV into a validated frame.

    Sampling regularity is checked on the raw timestamp column, before any
    rows are dropped for bad values, so that a dropped row does not count
    as a gap.
    """
    schema = schema or IngestConfig()
    if schema.nan_policy not in ("drop", "error"):
        raise ValueError(f"unknown nan_policy {schema.nan_policy!r}")
    df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    df.columns = [c.strip() for c in df.columns]
    tcol = schema.timestamp_column
    if tcol not in df.columns:
        raise MissingColumn(tcol)
    channels = schema.channels or [c for c in df.columns if c != tcol]
    missing = [c for c in channels if c not in df.columns]
    if missing:
        raise MissingColumn(", ".join(missing))
    if not channels:
        raise MissingColumn("no channel columns")

    ts = _parse_column(df[tcol])
    if not np.all(np.isfinite(ts)):
        raise NonMonotonicTimestamps("unparseable timestamp")
    if len(ts) > 1 and np.any(np.diff(ts) <= 0):
        raise NonMonotonicTimestamps("timestamps must be strictly increasing without duplicates")
    _check_sampling(ts, schema)

    vals = np.column_stack(
        [_parse_column(df[c]) for c in channels]
    ) if len(df) else np.empty((0, len(channels)))
    ok = np.all(np.isfinite(vals), axis=1)
    n_bad = int((~ok).sum())
    if n_bad:
        if schema.nan_policy == "error":
            raise NonFiniteData(f"{n_bad} rows with unparseable or non-finite values")
        log.info("dropped %d rows with unparseable or non-finite values from %s", n_bad, path)
    ts, vals = ts[ok], vals[ok]
    if len(ts) == 0:
        raise EmptyAfterFiltering(str(path))
    if np.all(ts == np.round(ts)):
        ts = ts.astype(np.int64)
    return TimeSeriesFrame(ts, tuple(channels), vals)


def _to_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return np.nan


def _parse_column(col: pd.Series) -> np.ndarray:
    # Python's float() is correctly rounded; pandas' fast parser is not always
    return np.array([_to_float(x) for x in col], dtype=np.float64)


def _check_sampling(ts: np.ndarray, schema: IngestConfig) -> None:
    if schema.allow_gaps or len(ts) < 3:
        return
    d = np.diff(ts)
    step = float(np.median(d))
    bad = np.abs(d - step) > schema.gap_tolerance * step + 1e-9 * abs(step)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise IrregularSampling(f"interval {d[i]} at row {i + 1} deviates from {step}")


@dataclass(frozen=True)
class WindowedDataset:
    inputs: np.ndarray   # (n, W, C)
    targets: np.ndarray  # (n, H, C)
    window_length: int
    horizon: int
    anchors: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.inputs)

    def split(self, val_fraction: float) -> tuple["WindowedDataset", "WindowedDataset"]:
        """Temporal split: the last ``val_fraction`` of examples are held out."""
        n = len(self)
        n_val = int(round(n * val_fraction))
        if n_val == 0 or n_val >= n:
            return self, self.take(slice(n, n))
        cut = n - n_val
        return self.take(slice(0, cut)), self.take(slice(cut, n))

    def take(self, idx) -> "WindowedDataset":
        return WindowedDataset(
            self.inputs[idx], self.targets[idx], self.window_length, self.horizon, self.anchors[idx]
        )


def make_windows(frame: TimeSeriesFrame | np.ndarray, W: int, H: int, stride: int = 1) -> WindowedDataset:
    if W < 1 or H < 1 or stride < 1:
        raise ValueError("W, H and stride must be positive")
    values = frame.values if isinstance(frame, TimeSeriesFrame) else np.asarray(frame, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    rows = len(values)
    if rows < W + H:
        raise FrameTooShort(f"need at least {W + H} rows, got {rows}")
    n = (rows - W - H) // stride + 1
    starts = np.arange(n) * stride
    inputs = np.stack([values[s:s + W] for s in starts])
    targets = np.stack([values[s + W:s + W + H] for s in starts])
    return WindowedDataset(inputs, targets, W, H, starts + W - 1)


@dataclass(frozen=True)
class NormalizationSpec:
    shift: np.ndarray
    scale: np.ndarray
    method: str = "minmax"

    def apply(self, data):
        return (np.asarray(data, dtype=np.float64) - self.shift) / self.scale

    def invert(self, data):
        return np.asarray(data, dtype=np.float64) * self.scale + self.shift

    def to_dict(self) -> dict:
        return {"shift": self.shift.tolist(), "scale": self.scale.tolist(), "method": self.method}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationSpec":
        return cls(np.asarray(d["shift"], dtype=np.float64), np.asarray(d["scale"], dtype=np.float64), d["method"])


def fit_normalizer(frame: TimeSeriesFrame | np.ndarray, method: str = "minmax") -> NormalizationSpec:
    values = frame.values if isinstance(frame, TimeSeriesFrame) else np.asarray(frame, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if method == "minmax":
        lo, hi = values.min(axis=0), values.max(axis=0)
        rng = hi - lo
        if np.any(rng <= 0):
            raise ConstantChannel(f"zero range in channel(s) {np.flatnonzero(rng <= 0).tolist()}")
        return NormalizationSpec(lo, rng, method)
    if method == "zscore":
        mu, sd = values.mean(axis=0), values.std(axis=0)
        if np.any(sd <= 0):
            raise ConstantChannel(f"zero variance in channel(s) {np.flatnonzero(sd <= 0).tolist()}")
        return NormalizationSpec(mu, sd, method)
    raise ValueError(f"unknown normalization method {method!r}")


def apply(spec: NormalizationSpec, data):
    return spec.apply(data)


def invert(spec: NormalizationSpec, data):
    return spec.invert(data)
