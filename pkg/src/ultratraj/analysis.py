"""Dataset statistics, correlations, plot-ready exports and linear calibration."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .core import LongitudinalTrajectory
from .errors import CalibrationError, UndefinedCorrelationError

STAT_LABELS = ("speed_lv", "acc_lv", "speed_fav", "acc_fav", "space_gap")
STAT_NAMES = ("mean", "std", "min", "max")
# Correlation regressors, in table order: gap, follower speed, speed difference.
REGRESSORS = ("space_gap", "speed_fav", "speed_diff")


# -- label statistics ------------------------------------------------------------------


@dataclass(frozen=True)
class Moments:
    """Count, mean and sum of squared deviations; mergeable."""

    n: int
    mean: float
    m2: float
    lo: float
    hi: float

    @classmethod
    def of(cls, values) -> "Moments":
        x = np.asarray(values, dtype=float)
        x = x[~np.isnan(x)]
        if x.size == 0:
            return cls(0, 0.0, 0.0, math.inf, -math.inf)
        mean = float(x.mean())
        return cls(x.size, mean, float(np.sum((x - mean) ** 2)), float(x.min()), float(x.max()))

    def merge(self, other: "Moments") -> "Moments":
        if other.n == 0:
            return self
        if self.n == 0:
            return other
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return Moments(n, mean, m2, min(self.lo, other.lo), max(self.hi, other.hi))

    @property
    def std(self) -> float:
        return math.sqrt(self.m2 / (self.n - 1)) if self.n > 1 else 0.0


@dataclass(frozen=True)
class LabelStats:
    mean: float
    std: float
    min: float
    max: float


StatsSummary = dict  # label -> LabelStats


def label_stats(dataset: Sequence[LongitudinalTrajectory]) -> StatsSummary:
    """Sample mean/std/min/max per label over every record.

    Per-trajectory moments are merged in trajectory-id order.
    """
    if not dataset or sum(len(t) for t in dataset) == 0:
        raise ValueError("label_stats needs a non-empty dataset")
    out = {}
    ordered = sorted(dataset, key=lambda t: t.trajectory_id)
    for label in STAT_LABELS:
        acc = Moments(0, 0.0, 0.0, math.inf, -math.inf)
        for traj in ordered:
            acc = acc.merge(Moments.of(getattr(traj, label)))
        if acc.n == 0:
            out[label] = LabelStats(math.nan, math.nan, math.nan, math.nan)
        else:
            # Clamp: the merged mean can drift an ulp outside [min, max] on constant data.
            mean = min(max(acc.mean, acc.lo), acc.hi)
            out[label] = LabelStats(mean, acc.std, acc.lo, acc.hi)
    return out


def stats_rows(summary: StatsSummary):
    """Rows ``(Label, Statistic, Value)`` in the layout of the per-step tables."""
    for label in STAT_LABELS:
        st = summary[label]
        for name in STAT_NAMES:
            yield [label, name, float(getattr(st, name))]


# -- correlation -------------------------------------------------------------------------


def _check_pair(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D and of equal length")
    if x.size < 2:
        raise ValueError("need at least 2 observations")
    return x, y


def pearson(x, y) -> float:
    x, y = _check_pair(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("correlation undefined for a constant series")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def average_ranks(x) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    return rankdata(np.asarray(x, dtype=float), method="average")


def spearman(x, y) -> float:
    x, y = _check_pair(x, y)
    return pearson(average_ranks(x), average_ranks(y))


@dataclass(frozen=True)
class CorrelationReport:
    pearson: dict  # regressor label -> coefficient
    spearman: dict


def _pooled(dataset, label):
    return np.concatenate([getattr(t, label) for t in sorted(dataset, key=lambda t: t.trajectory_id)])


def correlation_report(dataset: Sequence[LongitudinalTrajectory]) -> CorrelationReport:
    """Correlation of raw follower acceleration with gap, speed and speed difference."""
    a = _pooled(dataset, "acc_fav")
    p, s = {}, {}
    for label in REGRESSORS:
        x = _pooled(dataset, label)
        ok = np.isfinite(a) & np.isfinite(x)
        p[label] = pearson(a[ok], x[ok])
        s[label] = spearman(a[ok], x[ok])
    return CorrelationReport(p, s)


CORRELATION_COLUMNS = ("Dataset", "Pearson_d", "Pearson_v_f", "Pearson_dv", "Spearman_d", "Spearman_v_f", "Spearman_dv")


def correlation_rows(report: CorrelationReport, dataset_name: str = "1"):
    yield [dataset_name] + [report.pearson[k] for k in REGRESSORS] + [report.spearman[k] for k in REGRESSORS]


# -- smoothing and distributions ---------------------------------------------------------


def moving_average(series, window: int = 3) -> np.ndarray:
    """Centered moving average; near the ends the window is cut to the available samples."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    x = np.asarray(series, dtype=float)
    if window == 1 or x.size == 0:
        return x.copy()
    half = window // 2
    padded = np.concatenate([np.full(half, np.nan), x, np.full(half, np.nan)])
    windows = np.lib.stride_tricks.sliding_window_view(padded, window)
    # Offsets from the center value keep constant stretches exactly constant.
    diffs = windows - x[:, None]
    return x + np.nansum(diffs, axis=1) / np.sum(~np.isnan(windows), axis=1)


@dataclass(frozen=True, eq=False)
class Histogram:
    edges: np.ndarray
    density: np.ndarray

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)


def histogram(values, bins: Optional[int] = None, bin_width: Optional[float] = None) -> Histogram:
    """Density histogram of the defined (non-NaN) values.

    Defaults to Freedman-Diaconis bin edges; a constant sample gets a single
    unit-width bin centered on its value.
    """
    x = np.asarray(values, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        raise ValueError("histogram needs at least one defined value")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        width = bin_width or 1.0
        edges = np.array([lo - width / 2, lo + width / 2])
    elif bin_width is not None:
        if not bin_width > 0:
            raise ValueError("bin_width must be positive")
        n = max(1, int(math.ceil((hi - lo) / bin_width)))
        edges = lo + bin_width * np.arange(n + 1)
        if edges[-1] < hi:
            edges = np.append(edges, edges[-1] + bin_width)
    elif bins is not None:
        if bins < 1:
            raise ValueError("bins must be at least 1")
        edges = np.histogram_bin_edges(x, bins=bins)
    else:
        edges = np.histogram_bin_edges(x, bins="fd")
    counts, edges = np.histogram(x, bins=edges)
    density = counts / (x.size * np.diff(edges))
    return Histogram(edges, density)


def histogram_rows(h: Histogram):
    for i in range(h.density.size):
        yield [float(h.edges[i]), float(h.edges[i + 1]), float(h.density[i])]


SCATTER_COLUMNS = ("a_f", "d", "v_f", "dv")


def scatter_export(dataset: Sequence[LongitudinalTrajectory], window: int = 3):
    """One row per record: smoothed follower acceleration, gap, speed, speed difference.

    Smoothing never crosses a trajectory boundary.
    """
    for traj in sorted(dataset, key=lambda t: t.trajectory_id):
        smooth = moving_average(traj.acc_fav, window)
        for i in range(len(traj)):
            yield [float(smooth[i]), float(traj.space_gap[i]), float(traj.speed_fav[i]), float(traj.speed_diff[i])]


# -- linear car-following model -----------------------------------------------------------


@dataclass(frozen=True)
class LinearCFModel:
    """``a_f = k_gap * d + k_dv * dv + k_v * v_f + bias``."""

    k_gap: float
    k_dv: float
    k_v: float
    bias: float
    rmse: float
    n: int = 0

    def predict(self, gap, speed_diff, speed_fav):
        return self.k_gap * np.asarray(gap) + self.k_dv * np.asarray(speed_diff) + self.k_v * np.asarray(speed_fav) + self.bias


def design_matrix(gap, speed_diff, speed_fav) -> np.ndarray:
    gap = np.asarray(gap, dtype=float)
    return np.column_stack([gap, np.asarray(speed_diff, dtype=float), np.asarray(speed_fav, dtype=float), np.ones_like(gap)])


def fit_linear_cf(acc, gap, speed_diff, speed_fav) -> LinearCFModel:
    X = design_matrix(gap, speed_diff, speed_fav)
    y = np.asarray(acc, dtype=float)
    ok = np.all(np.isfinite(X), axis=1) & np.isfinite(y)
    X, y = X[ok], y[ok]
    if y.size < 4:
        raise CalibrationError(f"need at least 4 records, got {y.size}")
    if np.linalg.matrix_rank(X) < 4:
        raise CalibrationError("regressors are rank deficient (constant or collinear inputs)")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    rmse = float(np.sqrt(np.mean(resid**2)))
    return LinearCFModel(float(coef[0]), float(coef[1]), float(coef[2]), float(coef[3]), rmse, int(y.size))


def calibrate_linear_cf(dataset: Sequence[LongitudinalTrajectory]) -> LinearCFModel:
    """Least-squares fit over every record of the dataset."""
    if not dataset:
        raise CalibrationError("empty dataset")
    return fit_linear_cf(
        _pooled(dataset, "acc_fav"),
        _pooled(dataset, "space_gap"),
        _pooled(dataset, "speed_diff"),
        _pooled(dataset, "speed_fav"),
    )


CALIBRATION_COLUMNS = ("k_gap", "k_dv", "k_v", "bias", "rmse", "n")


def calibration_rows(model: LinearCFModel):
    yield [model.k_gap, model.k_dv, model.k_v, model.bias, model.rmse, model.n]
