"""General (sigma-clipping) and car-following-specific (hard margin) cleaning.

Both steps share one engine: mark bad samples per label, interpolate short
runs of marks inside a trajectory, delete long runs and runs touching a
trajectory end, then split, filter and renumber the survivors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import GEOMETRY_TOL, LongitudinalTrajectory, settle_leader_position, time_grid

# Labels subject to cleaning, as trajectory attribute names.
CLEANED_LABELS = ("speed_fav", "speed_lv", "acc_fav", "acc_lv", "space_gap")


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = True

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"interval bounds out of order: {self.lo} > {self.hi}")

    def outside(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        below = x < self.lo if self.lo_closed else x <= self.lo
        above = x > self.hi if self.hi_closed else x >= self.hi
        return below | above | np.isnan(x)

    def __str__(self):
        return f"{'[' if self.lo_closed else '('}{self.lo}, {self.hi}{']' if self.hi_closed else ')'}"

    @classmethod
    def parse(cls, text: str, like: "Interval | None" = None) -> "Interval":
        """``lo,hi`` (inheriting closedness from ``like``) or bracket form ``(0,120]``."""
        text = text.strip()
        lo_closed = like.lo_closed if like else True
        hi_closed = like.hi_closed if like else True
        if text[:1] in "[(":
            lo_closed = text[0] == "["
            text = text[1:]
        if text[-1:] in "])":
            hi_closed = text[-1] == "]"
            text = text[:-1]
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 2:
            raise ValueError(f"expected 'lo,hi', got {text!r}")
        return cls(_parse_bound(parts[0], -math.inf), _parse_bound(parts[1], math.inf), lo_closed, hi_closed)


def _parse_bound(text: str, default: float) -> float:
    if text in ("", "inf", "+inf", "-inf"):
        return default if text == "" else float(text)
    return float(text)


def _default_eta():
    return {"acc_fav": 10.0, "acc_lv": 10.0, "space_gap": 10.0}


def _default_bounds():
    return {
        "speed_fav": Interval(0.1, math.inf),
        "speed_lv": Interval(0.1, math.inf),
        "acc_fav": Interval(-5.0, 5.0),
        "acc_lv": Interval(-5.0, 5.0),
        "space_gap": Interval(0.0, 120.0, lo_closed=False),
    }


@dataclass(frozen=True)
class CleaningConfig:
    eta_by_label: Mapping[str, float] = field(default_factory=_default_eta)
    consecutive_limit: int = 10
    min_trajectory_points: int = 70
    step3_bounds: Mapping[str, Interval] = field(default_factory=_default_bounds)
    scope: str = "dataset"  # sigma-clipping statistics: "dataset" or "trajectory"

    def __post_init__(self):
        for label, eta in self.eta_by_label.items():
            if label not in CLEANED_LABELS:
                raise ValueError(f"unknown label {label!r}")
            if not eta > 0:
                raise ValueError(f"eta for {label} must be positive")
        for label in self.step3_bounds:
            if label not in CLEANED_LABELS:
                raise ValueError(f"unknown label {label!r}")
        if self.consecutive_limit < 1 or self.min_trajectory_points < 1:
            raise ValueError("limits must be at least 1")
        if self.scope not in ("dataset", "trajectory"):
            raise ValueError(f"scope must be 'dataset' or 'trajectory', got {self.scope!r}")


@dataclass(frozen=True, eq=False)
class OutlierMask:
    """Per-label marks aligned with a trajectory's records."""

    marks: Mapping[str, np.ndarray]

    def __post_init__(self):
        sizes = {m.size for m in self.marks.values()}
        if len(sizes) > 1:
            raise ValueError("mask columns differ in length")

    def any(self) -> np.ndarray:
        cols = list(self.marks.values())
        out = np.zeros(cols[0].size, bool) if cols else np.zeros(0, bool)
        for m in cols:
            out |= m
        return out


# -- marking ----------------------------------------------------------------------


def _mean_std(values: np.ndarray):
    # Correctly rounded sums: the band edges then depend only on the data, not
    # on summation order, so points sitting on an edge are classified stably.
    n = values.size
    mean = math.fsum(values.tolist()) / n
    if n < 2:
        return mean, 0.0
    return mean, math.sqrt(math.fsum(((values - mean) ** 2).tolist()) / (n - 1))


def mark_outliers_iterative(series, eta: float) -> np.ndarray:
    """Sigma clipping to a fixpoint.

    Missing values (NaN) are marked from the start. Each pass recomputes the
    mean and sample standard deviation of the unmarked values and marks those
    outside ``mean +/- eta * std``; passes repeat until nothing new is marked.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    x = np.asarray(series, dtype=float)
    marked = np.isnan(x)
    while True:
        keep = ~marked
        if not keep.any():
            return marked
        mean, std = _mean_std(x[keep])
        new = keep & ((x < mean - eta * std) | (x > mean + eta * std))
        if not new.any():
            return marked
        marked = marked | new


def mark_out_of_bounds(series, interval: Interval) -> np.ndarray:
    return interval.outside(series)


# -- repair -------------------------------------------------------------------------


def marked_runs(marks: np.ndarray) -> list:
    """``(start, stop)`` of each run of consecutive marks."""
    m = np.concatenate([[0], np.asarray(marks, dtype=np.int8), [0]])
    edges = np.flatnonzero(np.diff(m))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def repair_series(values, marks, consecutive_limit: int = 10):
    """Interpolate short interior runs of marks; flag the rest for deletion.

    Returns ``(repaired, delete, interpolated)``.
    """
    x = np.array(values, dtype=float)
    marks = np.asarray(marks, dtype=bool)
    n = x.size
    delete = np.zeros(n, bool)
    interpolated = np.zeros(n, bool)
    runs = marked_runs(marks)
    if not runs:
        return x, delete, interpolated
    good = np.flatnonzero(~marks)
    for a, b in runs:
        if b - a >= consecutive_limit or a == 0 or b == n:
            delete[a:b] = True
        else:
            interpolated[a:b] = True
    if interpolated.any():
        idx = np.flatnonzero(interpolated)
        x[idx] = np.interp(idx, good, x[good])
    return x, delete, interpolated


@dataclass(frozen=True, eq=False)
class RepairResult:
    trajectory: LongitudinalTrajectory  # repaired values, deleted rows still present
    delete: np.ndarray
    interpolated: Mapping[str, np.ndarray]

    def surviving(self) -> LongitudinalTrajectory:
        return self.trajectory.take(~self.delete)


def repair_or_remove(traj: LongitudinalTrajectory, mask: OutlierMask, consecutive_limit: int = 10) -> RepairResult:
    """Apply the interpolate-or-delete rule label by label, then restore the row identities.

    Deletion is the union over labels. Dependent labels are re-derived on the
    repaired rows: ``Speed_Diff`` from the speeds, ``Space_Headway`` and
    ``Pos_LV`` from the gap.
    """
    delete = np.zeros(len(traj), bool)
    interpolated = {}
    cols = {}
    for label, marks in mask.marks.items():
        repaired, dele, interp = repair_series(getattr(traj, label), marks, consecutive_limit)
        cols[label] = repaired
        delete |= dele
        interpolated[label] = interp
    fixed = traj.replace(**cols)
    fixed = restore_identities(fixed, interpolated.get("space_gap"))
    return RepairResult(fixed, delete, interpolated)


def restore_identities(traj: LongitudinalTrajectory, gap_changed=None) -> LongitudinalTrajectory:
    """Re-derive dependent labels wherever a row violates the unified-format identities."""
    half = traj.half_length_sum
    gap = traj.space_gap
    headway = traj.space_headway
    redo = ~(np.abs(headway - gap - half) <= GEOMETRY_TOL)
    if gap_changed is not None:
        redo |= gap_changed
    redo &= np.isfinite(gap)
    headway = np.where(redo, gap + half, headway)

    pos_fav = traj.pos_fav
    if np.isnan(pos_fav).any():
        pos_fav = _fill_positions(pos_fav, traj.speed_fav, traj.delta_t)
    pos_lv, headway = settle_leader_position(pos_fav, headway, traj.pos_lv)
    # Settling may move the headway by an ulp; the gap only follows if that breaks the identity.
    gap = np.where(np.abs(headway - gap - half) <= GEOMETRY_TOL, gap, headway - half)
    return traj.replace(
        pos_fav=pos_fav,
        pos_lv=pos_lv,
        space_headway=headway,
        space_gap=gap,
        speed_diff=traj.speed_lv - traj.speed_fav,
    )


def _fill_positions(pos, speed, dt):
    """Fill missing follower positions forward from the last known one using the speed."""
    pos = pos.copy()
    for i in np.flatnonzero(np.isnan(pos)):
        if i > 0 and np.isfinite(pos[i - 1]) and np.isfinite(speed[i]):
            pos[i] = pos[i - 1] + dt * speed[i]
    return pos


# -- re-organization -------------------------------------------------------------


def reorganize(trajectories: Sequence[LongitudinalTrajectory], min_points: int = 70, delta_t: float | None = None) -> list:
    """Split at time discontinuities, drop short pieces, renumber and rebase.

    Trajectory ids restart at 0 in the order (input order, segment start);
    each survivor's ``Time_Index`` restarts at 0 and ``Pos_FAV`` at 0, with
    ``Pos_LV = Pos_FAV + Space_Headway``.
    """
    out = []
    for traj in trajectories:
        dt = traj.delta_t if delta_t is None else delta_t
        if len(traj) == 0:
            continue
        steps = np.rint(traj.time_index / dt).astype(np.int64)
        cuts = np.flatnonzero(np.diff(steps) != 1) + 1
        bounds = zip(np.concatenate([[0], cuts]), np.concatenate([cuts, [len(traj)]]))
        for a, b in bounds:
            if b - a < min_points:
                continue
            piece = traj.take(slice(a, b))
            origin = piece.pos_fav[0]
            pos_fav = piece.pos_fav - origin
            pos_lv, headway = settle_leader_position(pos_fav, piece.space_headway, piece.pos_lv - origin)
            half = piece.half_length_sum
            gap = np.where(np.abs(headway - piece.space_gap - half) <= GEOMETRY_TOL, piece.space_gap, headway - half)
            out.append(
                piece.replace(
                    trajectory_id=len(out),
                    delta_t=dt,
                    time_index=time_grid(b - a, dt),
                    pos_fav=pos_fav,
                    pos_lv=pos_lv,
                    space_headway=headway,
                    space_gap=gap,
                )
            )
    return out


# -- composed steps -------------------------------------------------------------------


def _apply(dataset, marks_per_traj, config: CleaningConfig) -> list:
    survivors = []
    for traj, marks in zip(dataset, marks_per_traj):
        result = repair_or_remove(traj, OutlierMask(marks), config.consecutive_limit)
        if not result.delete.all():
            survivors.append(result.surviving())
    return reorganize(survivors, config.min_trajectory_points)


def _split(mask: np.ndarray, dataset) -> list:
    sizes = np.cumsum([len(t) for t in dataset])[:-1]
    return np.split(mask, sizes)


def step2_marks(dataset: Sequence[LongitudinalTrajectory], config: CleaningConfig) -> list:
    """Per-trajectory dict of label -> marks for general cleaning."""
    marks = [{label: np.isnan(getattr(t, label)) for label in CLEANED_LABELS} for t in dataset]
    if not dataset:
        return marks
    for label, eta in config.eta_by_label.items():
        if config.scope == "dataset":
            whole = np.concatenate([getattr(t, label) for t in dataset])
            for m, part in zip(marks, _split(mark_outliers_iterative(whole, eta), dataset)):
                m[label] = m[label] | part
        else:
            for m, t in zip(marks, dataset):
                m[label] = m[label] | mark_outliers_iterative(getattr(t, label), eta)
    return marks


def clean_step2(dataset: Sequence[LongitudinalTrajectory], config: CleaningConfig = CleaningConfig()) -> list:
    """Longitudinal trajectory dataset (free-flow included)."""
    return _apply(dataset, step2_marks(dataset, config), config)


def step3_marks(dataset: Sequence[LongitudinalTrajectory], config: CleaningConfig) -> list:
    marks = []
    for t in dataset:
        m = {label: np.isnan(getattr(t, label)) for label in CLEANED_LABELS}
        for label, interval in config.step3_bounds.items():
            m[label] = m[label] | mark_out_of_bounds(getattr(t, label), interval)
        marks.append(m)
    return marks


def clean_step3(dataset: Sequence[LongitudinalTrajectory], config: CleaningConfig = CleaningConfig()) -> list:
    """Car-following trajectory dataset: hard margins, then the same repair engine."""
    return _apply(dataset, step3_marks(dataset, config), config)


def bound_violations(dataset: Sequence[LongitudinalTrajectory], config: CleaningConfig = CleaningConfig()) -> int:
    """Number of records outside any Step-3 bound (exhaustive scan)."""
    total = 0
    for t in dataset:
        bad = np.zeros(len(t), bool)
        for label, interval in config.step3_bounds.items():
            bad |= interval.outside(getattr(t, label))
        total += int(bad.sum())
    return total
