"""Wavelet logscale diagrams, scaling exponents and spectral shape features.

The transform is a Daubechies orthonormal pyramid computed with numpy.
Analysis runs in ``"valid"`` mode, where every coefficient whose filter
support would cross a series edge is dropped, so non power-of-two
lengths need no padding. ``"periodic"`` mode wraps the signal instead;
it is exactly energy preserving and is what the orthonormality checks use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special, stats
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .timeseries import TimeSeries

MIN_OCTAVES = 3
MIN_COEFFS = 4
FIT_MIN_COEFFS = 8
CI_LEVEL = 0.95
DEFAULT_MIN_J1 = 4


class SeriesTooShortError(ValueError):
    pass


@lru_cache(maxsize=None)
def daubechies_filter(vanishing_moments: int) -> tuple[float, ...]:
    """Low-pass Daubechies filter with ``vanishing_moments`` vanishing moments.

    Built by spectral factorization of the Daubechies polynomial, keeping
    the roots outside the unit circle. The result has length
    ``2 * vanishing_moments``, sums to sqrt(2) and is orthonormal to its
    even shifts.
    """
    p = int(vanishing_moments)
    if p < 1:
        raise ValueError("vanishing_moments must be >= 1")
    if p == 1:
        c = 1 / math.sqrt(2)
        return (c, c)
    if p > 20:
        raise ValueError("vanishing_moments above 20 is numerically unreliable")
    poly = [math.comb(p - 1 + k, k) for k in range(p)][::-1]
    yroots = np.roots(poly)
    q = np.poly1d([1.0])
    for y in yroots:
        part = 2 * np.sqrt(y * (y - 1))
        const = 1 - 2 * y
        z = const + part
        if abs(z) < 1:
            z = const - part
        q = q * np.poly1d([1, -z])
    h = np.real((np.poly1d([1, 1]) ** p * q).c)
    h = h / h.sum() * math.sqrt(2)
    return tuple(float(v) for v in h[::-1])


def wavelet_filter(vanishing_moments: int) -> np.ndarray:
    """High-pass (wavelet) filter paired with :func:`daubechies_filter`."""
    h = np.asarray(daubechies_filter(vanishing_moments))
    g = h[::-1].copy()
    g[1::2] *= -1
    return g


def _as_array(series) -> tuple[np.ndarray, float]:
    if isinstance(series, TimeSeries):
        return np.asarray(series.counts, dtype=float), series.bin_width
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D series, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    return x, 1.0


def _analysis_step(a: np.ndarray, h: np.ndarray, g: np.ndarray, mode: str):
    L = len(h)
    if mode == "periodic":
        n = len(a)
        idx = (2 * np.arange(n // 2)[:, None] + np.arange(L)[None, :]) % n
        win = a[idx]
    else:
        n_out = (len(a) - L) // 2 + 1
        if n_out <= 0:
            return np.empty(0), np.empty(0)
        win = np.lib.stride_tricks.sliding_window_view(a, L)[: 2 * n_out : 2]
    return win @ h, win @ g


def valid_lengths(n: int, vanishing_moments: int) -> list[int]:
    """Detail coefficient counts per octave for a series of length ``n``."""
    L = 2 * vanishing_moments
    out = []
    while True:
        n = (n - L) // 2 + 1 if n >= L else 0
        if n <= 0:
            return out
        out.append(n)


def required_length(vanishing_moments: int, n_octaves: int = MIN_OCTAVES) -> int:
    """Smallest series length giving ``n_octaves`` octaves with >= 4 coefficients."""
    n = 2 ** (n_octaves + 2)
    while sum(c >= MIN_COEFFS for c in valid_lengths(n, vanishing_moments)) < n_octaves:
        n += 1
    return n


@dataclass
class WaveletDetails:
    """Detail coefficients per octave plus the final approximation."""

    details: list  # details[j-1] holds octave j
    approximation: np.ndarray
    bin_width: float
    vanishing_moments: int
    mode: str
    length: int

    @property
    def octaves(self) -> list[int]:
        return list(range(1, len(self.details) + 1))

    def __getitem__(self, j: int) -> np.ndarray:
        return self.details[j - 1]

    def __len__(self):
        return len(self.details)


def dwt_details(series, vanishing_moments: int = 3, mode: str = "valid",
                max_octave: int | None = None) -> WaveletDetails:
    """Pyramid of detail coefficients for octaves 1..J.

    In ``valid`` mode J is the largest octave holding at least four
    coefficients. ``periodic`` mode needs a length divisible by 2**J and
    decomposes as deep as the length allows.
    """
    x, bin_width = _as_array(series)
    h = np.asarray(daubechies_filter(vanishing_moments))
    g = wavelet_filter(vanishing_moments)
    if mode == "valid":
        need = required_length(vanishing_moments)
        if len(x) < need:
            raise SeriesTooShortError(
                f"series of length {len(x)} too short: need at least {need} bins "
                f"for {MIN_OCTAVES} octaves with N={vanishing_moments}"
            )
        depth = sum(c >= MIN_COEFFS for c in valid_lengths(len(x), vanishing_moments))
    elif mode == "periodic":
        if len(x) < 2:
            raise SeriesTooShortError("series of length < 2 cannot be decomposed")
        depth = 0
        n = len(x)
        while n % 2 == 0 and n >= 2:
            depth += 1
            n //= 2
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if max_octave is not None:
        depth = min(depth, max_octave)
    details = []
    a = x
    for _ in range(depth):
        a, d = _analysis_step(a, h, g, mode)
        details.append(d)
    return WaveletDetails(details, a, bin_width, vanishing_moments, mode, len(x))


# ---------------------------------------------------------------------------
# logscale diagram


def log_bias(n):
    """Expected value of log2(mean of n squared Gaussian variates / variance)."""
    n = np.asarray(n, dtype=float)
    return special.psi(n / 2) / np.log(2) - np.log2(n / 2)


def log_variance(n):
    """Variance of log2 of a mean of ``n`` independent squared Gaussians."""
    n = np.asarray(n, dtype=float)
    return special.zeta(2, n / 2) / np.log(2) ** 2


def chi2_half_width(n, level: float = CI_LEVEL):
    """Half width in log2 units of the chi-squared interval for a variance."""
    n = np.asarray(n, dtype=float)
    a = (1 - level) / 2
    return 0.5 * np.log2(stats.chi2.ppf(1 - a, n) / stats.chi2.ppf(a, n))


@dataclass
class LogscaleDiagram:
    bin_width: float
    octaves: np.ndarray
    y: np.ndarray
    n_coeffs: np.ndarray
    ci_half: np.ndarray
    variance: np.ndarray

    @property
    def scale_seconds(self) -> np.ndarray:
        return 2.0 ** self.octaves * self.bin_width

    @property
    def usable(self) -> np.ndarray:
        """Mask of octaves with finite energy."""
        return np.isfinite(self.y)

    def index(self, j: int) -> int:
        hits = np.flatnonzero(self.octaves == j)
        if not len(hits):
            raise KeyError(f"octave {j} not in diagram")
        return int(hits[0])

    def shifted(self, dy: float) -> "LogscaleDiagram":
        return LogscaleDiagram(self.bin_width, self.octaves.copy(), self.y + dy,
                               self.n_coeffs.copy(), self.ci_half.copy(), self.variance.copy())

    def rows(self) -> list[dict]:
        return [
            {"octave": int(j), "scale_seconds": float(s), "y": float(y),
             "n_coeffs": int(n), "ci_half": float(c)}
            for j, s, y, n, c in zip(self.octaves, self.scale_seconds, self.y,
                                     self.n_coeffs, self.ci_half)
        ]


def logscale_diagram(details: WaveletDetails, bin_width: float | None = None,
                     level: float = CI_LEVEL) -> LogscaleDiagram:
    """Bias-corrected log2 mean detail energy per octave.

    Octaves with zero energy get ``y = -inf`` and are excluded from fits.
    """
    if not len(details):
        raise ValueError("empty detail pyramid")
    bw = details.bin_width if bin_width is None else bin_width
    octaves = np.asarray(details.octaves)
    n = np.array([len(d) for d in details.details])
    energy = np.array([math.fsum(d * d) / len(d) if len(d) else 0.0 for d in details.details])
    with np.errstate(divide="ignore"):
        y = np.where(energy > 0, np.log2(np.where(energy > 0, energy, 1.0)) - log_bias(n), -np.inf)
    return LogscaleDiagram(
        bin_width=bw,
        octaves=octaves,
        y=y,
        n_coeffs=n,
        ci_half=chi2_half_width(n, level),
        variance=log_variance(n),
    )


# ---------------------------------------------------------------------------
# regression


@dataclass
class ScalingEstimate:
    alpha: float
    hurst: float
    j1: int
    j2: int
    fit_quality: float
    alpha_stderr: float
    intercept: float
    level: float = CI_LEVEL

    @property
    def dispersion(self) -> float:
        """Birge ratio sqrt(chi2 / dof), floored at 1; widens the CI of poor fits."""
        dof = self.j2 - self.j1 - 1
        if dof <= 0 or self.fit_quality >= 0.5:
            return 1.0
        if self.fit_quality <= 0:
            return math.inf
        return max(1.0, math.sqrt(stats.chi2.isf(self.fit_quality, dof) / dof))

    @property
    def alpha_ci(self) -> tuple[float, float]:
        half = stats.norm.ppf(0.5 + self.level / 2) * self.alpha_stderr * self.dispersion
        return self.alpha - half, self.alpha + half

    @property
    def hurst_ci(self) -> tuple[float, float]:
        lo, hi = self.alpha_ci
        return (lo + 1) / 2, (hi + 1) / 2

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha, "hurst": self.hurst, "j1": self.j1, "j2": self.j2,
            "fit_quality": self.fit_quality, "alpha_stderr": self.alpha_stderr,
            "hurst_ci": list(self.hurst_ci), "intercept": self.intercept,
        }


def _wls(j, y, var):
    w = 1.0 / var
    s0, s1, s2 = w.sum(), (w * j).sum(), (w * j * j).sum()
    det = s0 * s2 - s1 * s1
    slope = (s0 * (w * j * y).sum() - s1 * (w * y).sum()) / det
    intercept = ((w * y).sum() - slope * s1) / s0
    chi2 = float((w * (y - intercept - slope * j) ** 2).sum())
    dof = len(j) - 2
    quality = float(stats.chi2.sf(chi2, dof)) if dof > 0 else 1.0
    return slope, intercept, math.sqrt(s0 / det), quality


def _fit_arrays(ld: LogscaleDiagram, j1: int, j2: int):
    mask = (ld.octaves >= j1) & (ld.octaves <= j2)
    if np.any(~np.isfinite(ld.y[mask])):
        bad = ld.octaves[mask & ~np.isfinite(ld.y)].tolist()
        raise ValueError(f"octaves {bad} have zero energy and cannot be fitted")
    return ld.octaves[mask].astype(float), ld.y[mask], ld.variance[mask]


def estimate_scaling(ld: LogscaleDiagram, j1: int | None = None, j2: int | None = None) -> ScalingEstimate:
    """Weighted least-squares slope of the diagram over octaves ``j1..j2``.

    Weights are the inverse variances of y. ``fit_quality`` is the
    chi-squared goodness-of-fit probability of the line. Missing bounds
    are picked by :func:`default_fit_range`.
    """
    if j1 is None or j2 is None:
        auto1, auto2 = default_fit_range(ld)
        j1 = auto1 if j1 is None else j1
        j2 = auto2 if j2 is None else j2
    available = ld.octaves.tolist()
    if j1 not in available or j2 not in available or j1 >= j2:
        raise ValueError(f"fit range {j1}..{j2} not within octaves {available[0]}..{available[-1]}")
    j, y, var = _fit_arrays(ld, j1, j2)
    if len(j) < 3:
        raise ValueError(f"need at least 3 octaves to fit, got {len(j)}")
    slope, intercept, se, quality = _wls(j, y, var)
    return ScalingEstimate(
        alpha=float(slope), hurst=(float(slope) + 1) / 2, j1=int(j1), j2=int(j2),
        fit_quality=quality, alpha_stderr=se, intercept=float(intercept),
    )


def _curvature_z(j, y, var) -> float:
    """|quadratic coefficient| / standard error for a weighted quadratic fit."""
    w = 1.0 / var
    X = np.column_stack([np.ones_like(j), j - j.mean(), (j - j.mean()) ** 2])
    cov = np.linalg.inv(X.T @ (w[:, None] * X))
    beta = cov @ (X.T @ (w * y))
    return float(abs(beta[2]) / math.sqrt(cov[2, 2]))


def default_fit_range(ld: LogscaleDiagram, min_j1: int = DEFAULT_MIN_J1,
                      curvature_z: float = 2.0) -> tuple[int, int]:
    """Automatic fit range.

    ``j2`` is the largest finite octave with at least eight coefficients.
    ``j1`` is the smallest octave, not below ``min_j1``, from which a
    weighted quadratic over ``j1..j2`` shows no significant curvature
    (|z| < ``curvature_z``). The finest octaves are skipped by default
    because the discrete series departs from pure power-law scaling there.
    """
    ok = ld.usable & (ld.n_coeffs >= FIT_MIN_COEFFS)
    if not ok.any():
        raise ValueError("no octave has enough coefficients to fit")
    j2 = int(ld.octaves[ok].max())
    finite = set(ld.octaves[ld.usable].tolist())
    lo = j2
    while lo - 1 in finite:
        lo -= 1
    if j2 - lo < 2:
        raise ValueError("fewer than 3 usable octaves for a fit")
    lo = max(lo, min(min_j1, j2 - 2))
    for j1 in range(lo, j2 - 2):
        j, y, var = _fit_arrays(ld, j1, j2)
        if _curvature_z(j, y, var) < curvature_z:
            return j1, j2
    return max(lo, j2 - 2), j2


# ---------------------------------------------------------------------------
# features


@dataclass
class SpectrumFeature:
    kind: str  # "Bump", "LinearIncrease", "Flat" or "Mixed"
    octave: int | None = None
    evidence: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "octave": self.octave, "evidence": self.evidence}


def detect_features(ld: LogscaleDiagram, bump_threshold: float = 0.5,
                    flat_threshold: float = 1.0, lrd_alpha: float = 0.2,
                    min_quality: float = 0.05, min_coeffs: int = FIT_MIN_COEFFS,
                    bump_width: int = 2) -> SpectrumFeature:
    """Classify the diagram shape.

    Only finite octaves with at least ``min_coeffs`` coefficients take part.

    * Bump: an interior strict local maximum whose y clears the upper CI
      bound of both flanks by ``bump_threshold``. A flank is the lower of
      the ``bump_width`` nearest octaves on that side, so a peak shared by
      two adjacent octaves still counts.
    * LinearIncrease: for the smallest onset j0 with at least three octaves
      up to the last one, the weighted slope has its lower confidence bound
      above ``lrd_alpha`` and fit quality >= ``min_quality``.
    * Flat: a band of height ``flat_threshold`` meets every octave's CI,
      i.e. ``max(y - ci) - min(y + ci) <= flat_threshold``.

    Precedence is Bump, then LinearIncrease, then Flat; anything else is
    Mixed. All tests use differences of y, so the result does not change
    when the series is multiplied by a positive constant.
    """
    keep = ld.usable & (ld.n_coeffs >= min_coeffs)
    j = ld.octaves[keep]
    y = ld.y[keep]
    ci = ld.ci_half[keep]
    var = ld.variance[keep]
    if len(j) < 5:
        raise ValueError(f"need at least 5 usable octaves, got {len(j)}")
    evidence: dict = {"octaves": j.tolist(), "y": y.tolist()}

    upper = y + ci
    margins = []
    for i in range(1, len(j) - 1):
        if not (y[i] > y[i - 1] and y[i] > y[i + 1]):
            continue
        # a peak may straddle two octaves, so each flank is the lower of
        # the nearest `bump_width` upper bounds on that side
        left = upper[max(0, i - bump_width):i].min()
        right = upper[i + 1:i + 1 + bump_width].min()
        margins.append((float(y[i] - max(left, right)), i))
    best_margin, best_i = max(margins) if margins else (-math.inf, 0)
    evidence["bump_margin"] = best_margin
    evidence["bump_octave"] = int(j[best_i]) if margins else None
    if best_margin >= bump_threshold:
        return SpectrumFeature("Bump", int(j[best_i]), evidence)

    jf = j.astype(float)
    z = stats.norm.ppf(0.5 + CI_LEVEL / 2)
    for start in range(len(j) - 2):
        slope, _, se, quality = _wls(jf[start:], y[start:], var[start:])
        if slope - z * se > lrd_alpha and quality >= min_quality:
            evidence.update(onset=int(j[start]), alpha=float(slope), alpha_stderr=se,
                            fit_quality=quality)
            return SpectrumFeature("LinearIncrease", int(j[start]), evidence)

    spread = float((y - ci).max() - (y + ci).min())
    evidence["spread"] = spread
    if spread <= flat_threshold:
        return SpectrumFeature("Flat", None, evidence)
    return SpectrumFeature("Mixed", None, evidence)


# ---------------------------------------------------------------------------
# estimator


class WaveletScalingEstimator(BaseEstimator):
    """Logscale diagram, scaling fit and shape feature for one series.

    Parameters
    ----------
    vanishing_moments : int
        Daubechies wavelet order N (filter length 2N).
    j1, j2 : int or None
        Fit range; ``None`` picks it automatically.
    bin_width : float or None
        Bin width used to label octaves when ``X`` is a bare array.

    Attributes set by ``fit``: ``diagram_``, ``estimate_``, ``feature_``,
    ``hurst_`` and ``n_octaves_``.
    """

    def __init__(self, vanishing_moments=3, j1=None, j2=None, bin_width=None,
                 bump_threshold=0.5, flat_threshold=1.0, lrd_alpha=0.2, min_quality=0.05):
        self.vanishing_moments = vanishing_moments
        self.j1 = j1
        self.j2 = j2
        self.bin_width = bin_width
        self.bump_threshold = bump_threshold
        self.flat_threshold = flat_threshold
        self.lrd_alpha = lrd_alpha
        self.min_quality = min_quality

    def fit(self, X, y=None):
        details = dwt_details(X, self.vanishing_moments)
        bw = self.bin_width if self.bin_width is not None else details.bin_width
        self.diagram_ = logscale_diagram(details, bw)
        self.n_octaves_ = len(details)
        self.estimate_ = estimate_scaling(self.diagram_, self.j1, self.j2)
        self.hurst_ = self.estimate_.hurst
        try:
            self.feature_ = detect_features(
                self.diagram_, self.bump_threshold, self.flat_threshold,
                self.lrd_alpha, self.min_quality)
        except ValueError:
            self.feature_ = None
        return self

    def transform(self, X):
        """Per-octave y values of each series' diagram, octaves aligned to this fit."""
        check_is_fitted(self, "diagram_")
        ld = logscale_diagram(dwt_details(X, self.vanishing_moments), self.diagram_.bin_width)
        out = np.full(len(self.diagram_.octaves), np.nan)
        m = min(len(out), len(ld.y))
        out[:m] = ld.y[:m]
        return out
