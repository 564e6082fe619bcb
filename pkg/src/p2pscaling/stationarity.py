"""Stationarity check by comparing the logscale diagrams of equal parts."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .timeseries import TimeSeries
from .wavelets import (LogscaleDiagram, SeriesTooShortError, dwt_details, logscale_diagram,
                       required_length)


@dataclass
class StationarityReport:
    diagrams: list  # one LogscaleDiagram per part
    octaves: np.ndarray  # octaves present in every part
    agree: np.ndarray  # bool per entry of `octaves`
    stationary_up_to: int  # 0 when the finest octave already disagrees

    @property
    def max_octave(self) -> int:
        return int(self.octaves.max()) if len(self.octaves) else 0

    @property
    def fully_stationary(self) -> bool:
        return bool(self.agree.all())

    def overlay_rows(self) -> list[dict]:
        rows = []
        for k, j in enumerate(self.octaves):
            row = {"octave": int(j)}
            for p, ld in enumerate(self.diagrams, start=1):
                row[f"y{p}"] = float(ld.y[ld.index(int(j))])
            for p, ld in enumerate(self.diagrams, start=1):
                row[f"ci{p}"] = float(ld.ci_half[ld.index(int(j))])
            row["agree"] = bool(self.agree[k])
            rows.append(row)
        return rows

    def to_dict(self) -> dict:
        return {
            "n_parts": len(self.diagrams),
            "octaves": self.octaves.tolist(),
            "agree": self.agree.tolist(),
            "stationary_up_to": self.stationary_up_to,
            "max_octave": self.max_octave,
        }


def split_parts(series: TimeSeries, n_parts: int = 3, vanishing_moments: int = 3) -> list[TimeSeries]:
    """Cut a series into ``n_parts`` contiguous equal parts; the remainder is dropped."""
    if n_parts < 2:
        raise ValueError("need at least 2 parts")
    size = len(series) // n_parts
    need = required_length(vanishing_moments)
    if size < need:
        raise SeriesTooShortError(
            f"series of length {len(series)} too short for {n_parts} parts of >= {need} bins")
    return [series.slice(k * size, (k + 1) * size) for k in range(n_parts)]


def split_thirds(series: TimeSeries, vanishing_moments: int = 3) -> list[TimeSeries]:
    return split_parts(series, 3, vanishing_moments)


def _intervals_overlap(ya, ca, yb, cb) -> bool:
    return max(ya - ca, yb - cb) <= min(ya + ca, yb + cb)


def agreement(diagrams: list[LogscaleDiagram]) -> tuple[np.ndarray, np.ndarray]:
    """Octaves shared by all diagrams and whether all pairwise CIs overlap there."""
    common = set(diagrams[0].octaves.tolist())
    for ld in diagrams[1:]:
        common &= set(ld.octaves.tolist())
    octaves = np.array(sorted(common), dtype=int)
    agree = []
    for j in octaves:
        pts = [(ld.y[ld.index(j)], ld.ci_half[ld.index(j)]) for ld in diagrams]
        ok = all(np.isfinite(a[0]) and np.isfinite(b[0]) and _intervals_overlap(*a, *b)
                 for a, b in combinations(pts, 2))
        # parts that are all silent at this octave agree trivially
        if not ok and all(np.isneginf(p[0]) for p in pts):
            ok = True
        agree.append(ok)
    return octaves, np.asarray(agree, dtype=bool)


def _stationary_up_to(octaves: np.ndarray, agree: np.ndarray) -> int:
    last = 0
    for j, ok in zip(octaves, agree):
        if not ok:
            break
        last = int(j)
    return last


def compare_parts(parts: list, vanishing_moments: int = 3) -> StationarityReport:
    """Logscale diagram of every part, with per-octave CI agreement."""
    diagrams = []
    for k, part in enumerate(parts, start=1):
        try:
            diagrams.append(logscale_diagram(dwt_details(part, vanishing_moments)))
        except SeriesTooShortError as exc:
            raise SeriesTooShortError(f"part {k}: {exc}") from exc
    octaves, agree = agreement(diagrams)
    return StationarityReport(diagrams, octaves, agree, _stationary_up_to(octaves, agree))


class StationarityTester(BaseEstimator):
    """Split a series into equal parts and compare their diagrams.

    After ``fit``: ``report_``, ``stationary_up_to_`` and ``agree_``.
    """

    def __init__(self, n_parts=3, vanishing_moments=3):
        self.n_parts = n_parts
        self.vanishing_moments = vanishing_moments

    def fit(self, X, y=None):
        if not isinstance(X, TimeSeries):
            X = TimeSeries(1.0, 0.0, np.asarray(X, dtype=float))
        parts = split_parts(X, self.n_parts, self.vanishing_moments)
        self.report_ = compare_parts(parts, self.vanishing_moments)
        self.stationary_up_to_ = self.report_.stationary_up_to
        self.agree_ = self.report_.agree
        return self

    def score(self, X=None, y=None):
        """Fraction of shared octaves on which the parts agree."""
        check_is_fitted(self, "report_")
        return float(self.agree_.mean())
