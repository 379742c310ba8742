"""Record ingestion, 10 s gridding, sliding windows and min-max scaling.

CSV schema (header is exact)::

    timestamp_s,i_a,i_b,i_c,t_hs,label

``label`` is 0 (healthy) or 1 (anomalous).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

logger = logging.getLogger(__name__)

CSV_HEADER = ("timestamp_s", "i_a", "i_b", "i_c", "t_hs", "label")
HEALTHY, ANOMALOUS = 0, 1

# Online normalization ranges (device nameplate, never fitted to data).
PHYSICAL_CURRENT_RANGE = (0.0, 15.0)
PHYSICAL_TEMPERATURE_RANGE = (20.0, 100.0)


class DatasetError(ValueError):
    """Malformed dataset file or record stream."""


@dataclass(frozen=True)
class RawRecord:
    timestamp: float
    i_a: float
    i_b: float
    i_c: float
    t_hs: float
    label: int = HEALTHY


@dataclass(frozen=True)
class WindowSpec:
    sample_period: float = 10.0
    window_len: int = 180

    @property
    def span_seconds(self) -> float:
        return self.sample_period * self.window_len


@dataclass
class WindowSet:
    """Windowed samples in engineering units, one row per window."""

    x: np.ndarray  # (n, window_len) mean rms current, oldest first
    y: np.ndarray  # (n,) heat-sink temperature at window end
    t: np.ndarray  # (n,) grid index of the window's last record
    label: np.ndarray  # (n,) label of the window's last record
    skipped: int = 0  # windows dropped because they spanned a gap

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "WindowSet":
        return WindowSet(self.x[idx], self.y[idx], self.t[idx], self.label[idx], 0)

    @staticmethod
    def concat(parts: Sequence["WindowSet"]) -> "WindowSet":
        return WindowSet(
            np.concatenate([p.x for p in parts]),
            np.concatenate([p.y for p in parts]),
            np.concatenate([p.t for p in parts]),
            np.concatenate([p.label for p in parts]),
            sum(p.skipped for p in parts),
        )


def mean_rms_current(r: RawRecord) -> float:
    return (r.i_a + r.i_b + r.i_c) / 3.0


def downsample(records: Iterable[RawRecord], period: float = 10.0) -> list[RawRecord | None]:
    """Grid a record stream at ``period`` seconds without interpolation.

    Grid point ``g`` takes the latest record with timestamp in ``(g - period, g]``
    and is re-stamped to ``g``. Grid points with no such record become ``None``.
    The grid starts at the first multiple of ``period`` at or after the first
    record and ends at the first multiple at or after the last one.
    """
    records = list(records)
    if not records:
        return []
    for k in range(1, len(records)):
        if records[k].timestamp < records[k - 1].timestamp:
            raise DatasetError(
                f"timestamps decrease at record {k}: "
                f"{records[k].timestamp} < {records[k - 1].timestamp}"
            )
    first = int(np.ceil(records[0].timestamp / period))
    last = int(np.ceil(records[-1].timestamp / period))
    out: list[RawRecord | None] = []
    j = 0
    for k in range(first, last + 1):
        g = k * period
        latest = None
        while j < len(records) and records[j].timestamp <= g:
            latest = records[j]
            j += 1
        if latest is None or latest.timestamp <= g - period:
            out.append(None)
        else:
            out.append(
                RawRecord(g, latest.i_a, latest.i_b, latest.i_c, latest.t_hs, latest.label)
            )
    return out


def _columns(stream: Sequence[RawRecord | None]):
    n = len(stream)
    i_out = np.zeros(n)
    t_hs = np.zeros(n)
    label = np.zeros(n, dtype=np.int64)
    valid = np.zeros(n, dtype=bool)
    for k, r in enumerate(stream):
        if r is None:
            continue
        i_out[k] = mean_rms_current(r)
        t_hs[k] = r.t_hs
        label[k] = r.label
        valid[k] = True
    return i_out, t_hs, label, valid


def make_windows(stream: Sequence[RawRecord | None], spec: WindowSpec = WindowSpec()) -> WindowSet:
    """Stride-1 windows of ``spec.window_len`` contiguous gridded records.

    Windows touching a missing grid point are skipped and counted.
    """
    w = spec.window_len
    i_out, t_hs, label, valid = _columns(stream)
    n = len(i_out)
    if n < w:
        return WindowSet(np.zeros((0, w)), np.zeros(0), np.zeros(0, dtype=np.int64),
                         np.zeros(0, dtype=np.int64), 0)
    n_windows = n - w + 1
    # a window is usable iff it contains no invalid point
    bad = np.concatenate([[0], np.cumsum(~valid)])
    ok = (bad[w:] - bad[:-w]) == 0
    ends = np.arange(w - 1, n)[ok]
    x = sliding_window_view(i_out, w)[ok].copy()
    skipped = int(n_windows - ok.sum())
    if skipped:
        logger.info("skipped %d windows spanning gaps", skipped)
    return WindowSet(x, t_hs[ends].copy(), ends.astype(np.int64), label[ends].copy(), skipped)


@dataclass(frozen=True)
class Normalizer:
    """Affine map of currents and temperatures onto [0, 1]."""

    x_min: float = PHYSICAL_CURRENT_RANGE[0]
    x_max: float = PHYSICAL_CURRENT_RANGE[1]
    y_min: float = PHYSICAL_TEMPERATURE_RANGE[0]
    y_max: float = PHYSICAL_TEMPERATURE_RANGE[1]
    mode: str = "fixed_physical"

    def __post_init__(self) -> None:
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("normalizer needs max > min for every feature")

    @classmethod
    def fit(cls, windows: WindowSet) -> "Normalizer":
        """Ranges fitted on a training split (offline baselines only)."""
        return cls(
            float(windows.x.min()), float(windows.x.max()),
            float(windows.y.min()), float(windows.y.max()),
            mode="dataset_fitted",
        )

    def normalize_x(self, x):
        return (np.asarray(x, dtype=np.float64) - self.x_min) / (self.x_max - self.x_min)

    def normalize_y(self, y):
        return (np.asarray(y, dtype=np.float64) - self.y_min) / (self.y_max - self.y_min)

    def denormalize_x(self, x):
        return np.asarray(x) * (self.x_max - self.x_min) + self.x_min

    def denormalize_y(self, y):
        return np.asarray(y) * (self.y_max - self.y_min) + self.y_min

    def apply(self, windows: WindowSet) -> WindowSet:
        return WindowSet(
            self.normalize_x(windows.x), self.normalize_y(windows.y),
            windows.t, windows.label, windows.skipped,
        )


def _fmt(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def write_dataset(path, records: Iterable[RawRecord]) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow(
                [_fmt(r.timestamp), _fmt(r.i_a), _fmt(r.i_b), _fmt(r.i_c), _fmt(r.t_hs), str(int(r.label))]
            )
    tmp.replace(path)


def read_dataset(path) -> list[RawRecord]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file, expected header") from None
        missing = [c for c in CSV_HEADER if c not in header]
        if missing:
            raise DatasetError(f"{path}: missing column(s) {', '.join(missing)}")
        cols = [header.index(c) for c in CSV_HEADER]
        out = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                ts, ia, ib, ic, th, lab = (row[c] for c in cols)
                label = int(lab)
                if label not in (HEALTHY, ANOMALOUS):
                    raise ValueError(f"label must be 0 or 1, got {lab!r}")
                out.append(RawRecord(float(ts), float(ia), float(ib), float(ic), float(th), label))
            except (ValueError, IndexError) as exc:
                raise DatasetError(f"{path}:{line_no}: {exc}") from None
    return out


def iter_samples(windows: WindowSet) -> Iterator[tuple[np.ndarray, float, int, int]]:
    for k in range(len(windows)):
        yield windows.x[k], float(windows.y[k]), int(windows.t[k]), int(windows.label[k])


def load_windows(path, spec: WindowSpec = WindowSpec()) -> WindowSet:
    """Read a CSV, grid it and cut windows (engineering units)."""
    return make_windows(downsample(read_dataset(path), spec.sample_period), spec)
