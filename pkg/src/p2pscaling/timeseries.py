"""Fixed-width packet arrival counts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .records import Direction, PacketRecord, Transport

DEFAULT_BIN_WIDTH = 0.02


class EmptySeriesError(ValueError):
    pass


@dataclass(frozen=True)
class TimeSeries:
    """Arrival counts in consecutive bins of ``bin_width`` seconds from ``start``."""

    bin_width: float
    start: float
    counts: np.ndarray

    def __len__(self):
        return len(self.counts)

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (self.bin_width == other.bin_width and self.start == other.start
                and np.array_equal(self.counts, other.counts))

    __hash__ = None

    def aggregate(self, factor: int = 2) -> "TimeSeries":
        """Sum groups of ``factor`` adjacent bins (the last group may be partial)."""
        n = -(-len(self.counts) // factor) * factor
        padded = np.zeros(n, dtype=self.counts.dtype)
        padded[: len(self.counts)] = self.counts
        return TimeSeries(self.bin_width * factor, self.start,
                          padded.reshape(-1, factor).sum(axis=1))

    def slice(self, lo: int, hi: int) -> "TimeSeries":
        return TimeSeries(self.bin_width, self.start + lo * self.bin_width,
                          self.counts[lo:hi].copy())


def _to_us(seconds) -> np.ndarray:
    return np.rint(np.asarray(seconds, dtype=float) * 1e6).astype(np.int64)


def bin_counts(records: Iterable[PacketRecord], bin_width: float = DEFAULT_BIN_WIDTH,
               direction: Direction | str | None = Direction.DOWNLOAD,
               payload_only: bool = True) -> TimeSeries:
    """Count packet arrivals per bin for one direction.

    Bins are anchored at the first packet that passes the filters. With
    ``payload_only`` TCP packets without payload (bare ACKs) are dropped;
    UDP packets are always counted. ``direction=None`` counts both
    directions. Binning runs on integer microseconds, so bin edges are exact.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    width_us = int(round(bin_width * 1e6))
    if width_us < 1:
        raise ValueError("bin_width below timestamp resolution (1 us)")
    if direction is not None:
        direction = Direction(direction)
    stamps = [
        r.timestamp for r in records
        if (direction is None or r.direction is direction)
        and not (payload_only and r.transport is Transport.TCP and r.payload_len == 0)
    ]
    if not stamps:
        raise EmptySeriesError("empty series")
    t = _to_us(stamps)
    start = t.min()
    idx = (t - start) // width_us
    counts = np.bincount(idx, minlength=int(idx.max()) + 1).astype(np.int64)
    return TimeSeries(bin_width=width_us / 1e6, start=start / 1e6, counts=counts)


class ArrivalBinner(TransformerMixin, BaseEstimator):
    """Transformer wrapper around :func:`bin_counts`.

    Stateless, so ``fit`` only validates parameters.
    """

    def __init__(self, bin_width=DEFAULT_BIN_WIDTH, direction="Download", payload_only=True):
        self.bin_width = bin_width
        self.direction = direction
        self.payload_only = payload_only

    def fit(self, X=None, y=None):
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")
        if self.direction is not None:
            Direction(self.direction)
        return self

    def transform(self, X):
        return bin_counts(X, self.bin_width, self.direction, self.payload_only)


def write_series_csv(path, series: TimeSeries, **meta) -> None:
    """Write ``bin_index,count`` with a leading comment line of metadata."""
    tags = {"bin_width": f"{series.bin_width:.6g}", "start": f"{series.start:.6f}"}
    tags.update({k: str(v) for k, v in meta.items()})
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in tags.items()) + "\n")
        fh.write("bin_index,count\n")
        for i, c in enumerate(series.counts):
            fh.write(f"{i},{c:g}\n" if isinstance(c, (float, np.floating)) else f"{i},{c}\n")


def read_series_csv(path) -> TimeSeries:
    bin_width, start = DEFAULT_BIN_WIDTH, 0.0
    values = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    key, _, val = tok.partition("=")
                    if key == "bin_width":
                        bin_width = float(val)
                    elif key == "start":
                        start = float(val)
                continue
            if line.startswith("bin_index"):
                continue
            values.append(float(line.split(",")[1]))
    counts = np.asarray(values)
    if np.all(counts == np.round(counts)):
        counts = counts.astype(np.int64)
    return TimeSeries(bin_width, start, counts)
