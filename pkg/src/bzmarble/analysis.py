"""Oscillation periods, spike morphology and period-versus-phi fits.

The functional API works on :class:`~bzmarble.measurement.PotentialTrace`
objects; :class:`PeriodDetector` and :class:`SegmentedPeriodRegressor` wrap
the same code in scikit-learn estimators so traces and sweep tables can go
through pipelines and model selection.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from scipy.ndimage import median_filter
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from bzmarble._validation import check_samples
from bzmarble.measurement import PotentialTrace


@dataclass
class PeriodStats:
    """Detected event times and the periods between them.

    ``mean_period``, ``sigma`` and ``frequency`` are ``None`` when fewer
    than two events were found. ``sigma`` is the population standard
    deviation of the periods.
    """

    event_times: np.ndarray
    periods: np.ndarray
    mean_period: float | None
    sigma: float | None
    frequency: float | None

    @property
    def n_events(self) -> int:
        return len(self.event_times)

    @classmethod
    def from_events(cls, event_times) -> "PeriodStats":
        times = np.asarray(event_times, dtype=float)
        periods = np.diff(times)
        if len(periods) == 0:
            return cls(times, periods, None, None, None)
        if np.any(periods <= 0):
            raise ValueError("event times must be strictly increasing")
        mean = float(periods.mean())
        return cls(times, periods, mean, float(periods.std()), 1.0 / mean)


def remove_baseline(samples, window: int) -> np.ndarray:
    """Subtract a moving median of ``window`` samples (edges held constant)."""
    x = check_samples(samples)
    if window < 1:
        raise ValueError("window must be >= 1")
    if len(x) == 0:
        return x
    return x - median_filter(x, size=int(window), mode="nearest")


def relative_thresholds(samples, hi_fraction: float = 0.4, lo_fraction: float = 0.1) -> tuple[float, float]:
    """Thresholds at fractions of the peak height above the median baseline."""
    x = check_samples(samples)
    if len(x) == 0:
        return hi_fraction, lo_fraction
    baseline = float(np.median(x))
    amplitude = float(x.max()) - baseline
    return baseline + hi_fraction * amplitude, baseline + lo_fraction * amplitude


def schmitt_events(samples, threshold_hi: float, threshold_lo: float) -> np.ndarray:
    """Indices of samples where the signal first exceeds ``threshold_hi``
    after having been below ``threshold_lo``."""
    x = check_samples(samples)
    if not threshold_hi > threshold_lo:
        raise ValueError("threshold_hi must exceed threshold_lo")
    events = []
    armed = False
    for k, value in enumerate(x):
        if value < threshold_lo:
            armed = True
        elif armed and value > threshold_hi:
            events.append(k)
            armed = False
    return np.asarray(events, dtype=np.int64)


def detect_periods(
    trace: PotentialTrace,
    threshold_hi: float | None = None,
    threshold_lo: float | None = None,
    *,
    relative: bool = False,
    detrend_window: int | None = None,
) -> PeriodStats:
    """Hysteresis (Schmitt trigger) period detection.

    With ``relative=True`` the thresholds are fractions of the peak height
    above the median (defaults 0.4 and 0.1), which makes the result
    invariant to positive rescaling of the trace. Without it both
    thresholds must be given in trace units.
    """
    x = check_samples(trace.samples)
    if detrend_window:
        x = remove_baseline(x, detrend_window)
    if relative:
        threshold_hi, threshold_lo = relative_thresholds(
            x, 0.4 if threshold_hi is None else threshold_hi, 0.1 if threshold_lo is None else threshold_lo
        )
    elif threshold_hi is None or threshold_lo is None:
        raise ValueError("absolute mode needs both thresholds")
    if len(x) == 0 or x.max() == x.min():
        return PeriodStats.from_events([])
    idx = schmitt_events(x, threshold_hi, threshold_lo)
    return PeriodStats.from_events(trace.times[idx])


def period_ratio(before: PeriodStats, after: PeriodStats) -> float:
    """Cooled over ambient period, ``p* / p``."""
    if before.mean_period is None or after.mean_period is None:
        raise ValueError("period_ratio needs a mean period on both sides")
    return after.mean_period / before.mean_period


@dataclass
class SpikeShape:
    classification: str
    peak: float
    trough: float
    peak_to_trough_interval: float
    leading: str | None = None
    gap: float = 0.0


def _run_bounds(mask: np.ndarray, k: int) -> tuple[int, int]:
    lo = k
    while lo > 0 and mask[lo - 1]:
        lo -= 1
    hi = k
    while hi < len(mask) - 1 and mask[hi + 1]:
        hi += 1
    return lo, hi


def classify_spike(trace: PotentialTrace, noise_band: float, separation: float = 0.5) -> SpikeShape:
    """Classify one wave passage as ``flat``, ``biphasic``, ``action-like``
    or ``monophasic``.

    The dominant lobes are the supra-band runs holding the maximum and the
    minimum. They count as separated (biphasic) when the samples between
    them last at least ``separation`` times the first lobe's duration;
    otherwise the first lobe runs straight into the second (action-like).
    ``leading`` gives the sign of the first lobe.
    """
    x = check_samples(trace.samples)
    if len(x) == 0:
        raise ValueError("cannot classify an empty window")
    if noise_band < 0:
        raise ValueError("noise_band must be non-negative")
    spacing = trace.sample_spacing
    k_max, k_min = int(np.argmax(x)), int(np.argmin(x))
    peak, trough = float(x[k_max]), float(x[k_min])
    interval = abs(k_min - k_max) * spacing
    if np.max(np.abs(x)) <= noise_band:
        return SpikeShape("flat", peak, trough, interval)
    has_pos, has_neg = peak > noise_band, trough < -noise_band
    if not (has_pos and has_neg):
        return SpikeShape("monophasic", peak, trough, interval, "+" if has_pos else "-")

    pos_run = _run_bounds(x > noise_band, k_max)
    neg_run = _run_bounds(x < -noise_band, k_min)
    first, second = (pos_run, neg_run) if k_max < k_min else (neg_run, pos_run)
    leading = "+" if k_max < k_min else "-"
    gap = max(second[0] - first[1] - 1, 0)
    first_len = first[1] - first[0] + 1
    kind = "biphasic" if gap >= separation * first_len else "action-like"
    return SpikeShape(kind, peak, trough, interval, leading, gap * spacing)


@dataclass
class SegmentFit:
    """Linear and cubic least-squares fits of period against phi.

    Coefficients are in powers of phi, highest first.
    """

    linear_coeffs: np.ndarray
    linear_r2: float
    cubic_coeffs: np.ndarray
    cubic_r2: float
    n_points: int = 0
    phi_range: tuple[float, float] = field(default=(math.nan, math.nan))

    def predict(self, phi, degree: int = 1) -> np.ndarray:
        coeffs = self.linear_coeffs if degree == 1 else self.cubic_coeffs
        return np.polyval(coeffs, np.asarray(phi, dtype=float))


def _polyfit(x: np.ndarray, y: np.ndarray, degree: int) -> tuple[np.ndarray, float]:
    # Polynomial.fit maps x onto [-1, 1] before the least-squares solve;
    # with fewer points than coefficients it returns the minimum-norm exact fit.
    with warnings.catch_warnings():
        # an under-determined fit is expected for three points and a cubic
        warnings.simplefilter("ignore", np.exceptions.RankWarning)
        poly = Polynomial.fit(x, y, degree)
    fitted = poly(x)
    coeffs = poly.convert().coef[::-1]
    coeffs = np.concatenate([np.zeros(degree + 1 - len(coeffs)), coeffs])
    return coeffs, r_squared(y, fitted)


def r_squared(y, fitted) -> float:
    y = np.asarray(y, dtype=float)
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res <= 1e-24 else 0.0
    return min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)


def fit_segment(phi, period) -> SegmentFit:
    x, y = np.asarray(phi, dtype=float), np.asarray(period, dtype=float)
    if len(x) < 2:
        raise ValueError("a segment needs at least two points")
    lin, lin_r2 = _polyfit(x, y, 1)
    cub, cub_r2 = _polyfit(x, y, 3)
    # nested models: the cubic can only lose to the linear fit by roundoff
    cub_r2 = max(cub_r2, lin_r2)
    return SegmentFit(lin, lin_r2, cub, cub_r2, len(x), (float(x.min()), float(x.max())))


def fit_period_curve(points, split: float = 0.05) -> tuple[SegmentFit, SegmentFit]:
    """Fit ``phi <= split`` and ``phi >= split`` separately.

    Both segments get linear and cubic fits; the low segment is meant to be
    read through its linear fit and the high one through its cubic.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be a sequence of (phi, period) pairs")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    low = pts[pts[:, 0] <= split]
    high = pts[pts[:, 0] >= split]
    if len(low) < 2 or len(high) < 2:
        raise ValueError(
            f"need >= 2 points on each side of split={split}, got {len(low)} and {len(high)}"
        )
    return fit_segment(low[:, 0], low[:, 1]), fit_segment(high[:, 0], high[:, 1])


class PeriodDetector(TransformerMixin, BaseEstimator):
    """Turn a batch of equally sampled traces into period features.

    ``transform`` maps ``X`` of shape ``(n_traces, n_samples)`` to columns
    ``mean_period, sigma, n_events, frequency`` (NaN where fewer than two
    events were found).
    """

    feature_names = ("mean_period", "sigma", "n_events", "frequency")

    def __init__(self, threshold_hi=0.4, threshold_lo=0.1, relative=True, sample_spacing=1.0, detrend_window=None):
        self.threshold_hi = threshold_hi
        self.threshold_lo = threshold_lo
        self.relative = relative
        self.sample_spacing = sample_spacing
        self.detrend_window = detrend_window

    def fit(self, X, y=None):
        X = check_array(X, ensure_2d=True)
        self.n_features_in_ = X.shape[1]
        return self

    def detect(self, samples) -> PeriodStats:
        trace = PotentialTrace(1, float(self.sample_spacing), list(np.asarray(samples, dtype=float)))
        return detect_periods(
            trace, self.threshold_hi, self.threshold_lo,
            relative=self.relative, detrend_window=self.detrend_window,
        )

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, ensure_2d=True)
        out = np.full((X.shape[0], 4), np.nan)
        for i, row in enumerate(X):
            stats = self.detect(row)
            out[i, 2] = stats.n_events
            if stats.mean_period is not None:
                out[i, 0], out[i, 1], out[i, 3] = stats.mean_period, stats.sigma, stats.frequency
        return out

    def get_feature_names_out(self, input_features=None):
        return np.asarray(self.feature_names, dtype=object)


class SegmentedPeriodRegressor(RegressorMixin, BaseEstimator):
    """Piecewise polynomial of period on phi: ``low_degree`` up to ``split``,
    ``high_degree`` above it."""

    def __init__(self, split=0.05, low_degree=1, high_degree=3):
        self.split = split
        self.low_degree = low_degree
        self.high_degree = high_degree

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_2d=False)
        phi = X.reshape(len(X), -1)[:, 0]
        self.low_fit_, self.high_fit_ = fit_period_curve(np.column_stack([phi, y]), self.split)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "low_fit_")
        X = check_array(X, ensure_2d=False)
        phi = X.reshape(len(X), -1)[:, 0]
        low = self.low_fit_.predict(phi, self.low_degree)
        high = self.high_fit_.predict(phi, self.high_degree)
        return np.where(phi <= self.split, low, high)
