"""Unified record schema and the kinematic derivations every stage relies on.

Trajectories are stored column-wise: one read-only numpy array per label, with
the identifiers that are constant along a trajectory (``trajectory_id``,
``id_fav``, ``id_lv``) held as scalars.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

DEFAULT_VEHICLE_LENGTH = 4.5
HUMAN_LEADER_ID = -1

# Header of the unified CSV, in order.
LABELS = (
    "Trajectory_ID",
    "Time_Index",
    "ID_LV",
    "Pos_LV",
    "Speed_LV",
    "Acc_LV",
    "ID_FAV",
    "Pos_FAV",
    "Speed_FAV",
    "Acc_FAV",
    "Space_Gap",
    "Space_Headway",
    "Speed_Diff",
)

# Per-record float columns, as attribute names of LongitudinalTrajectory.
SERIES_FIELDS = (
    "time_index",
    "pos_lv",
    "speed_lv",
    "acc_lv",
    "pos_fav",
    "speed_fav",
    "acc_fav",
    "space_gap",
    "space_headway",
    "speed_diff",
)

# Tolerance on the headway - gap = (l_fav + l_lv)/2 identity.
GEOMETRY_TOL = 1e-6


class Vec2(NamedTuple):
    x: float
    y: float


class UnifiedRecord(NamedTuple):
    trajectory_id: int
    time_index: float
    id_lv: int
    pos_lv: float
    speed_lv: float
    acc_lv: float
    id_fav: int
    pos_fav: float
    speed_fav: float
    acc_fav: float
    space_gap: float
    space_headway: float
    speed_diff: float


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LongitudinalTrajectory:
    """One follower tracking one leader over consecutive time stamps.

    The constructor only checks shapes; :meth:`validate` checks the full set of
    invariants (contiguous time, exact speed/headway identities, geometry).
    Cleaning works on intermediate trajectories with holes in ``time_index``
    and relies on the re-organization pass to restore contiguity.
    """

    trajectory_id: int
    delta_t: float
    id_fav: int
    id_lv: int
    fav_length: float
    lv_length: float
    time_index: np.ndarray
    pos_lv: np.ndarray
    speed_lv: np.ndarray
    acc_lv: np.ndarray
    pos_fav: np.ndarray
    speed_fav: np.ndarray
    acc_fav: np.ndarray
    space_gap: np.ndarray
    space_headway: np.ndarray
    speed_diff: np.ndarray

    def __post_init__(self):
        if not self.delta_t > 0:
            raise ValueError(f"delta_t must be positive, got {self.delta_t}")
        if not (self.fav_length > 0 and self.lv_length > 0):
            raise ValueError("vehicle lengths must be positive")
        n = None
        for name in SERIES_FIELDS:
            arr = _frozen(getattr(self, name))
            if arr.ndim != 1:
                raise ValueError(f"{name} must be one-dimensional")
            if n is None:
                n = arr.size
            elif arr.size != n:
                raise ValueError(f"{name} has {arr.size} records, expected {n}")
            object.__setattr__(self, name, arr)
        if n == 0:
            raise ValueError("trajectory has no records")
        for name in ("trajectory_id", "id_fav", "id_lv"):
            object.__setattr__(self, name, int(getattr(self, name)))
        object.__setattr__(self, "delta_t", float(self.delta_t))
        object.__setattr__(self, "fav_length", float(self.fav_length))
        object.__setattr__(self, "lv_length", float(self.lv_length))

    def __len__(self):
        return self.time_index.size

    @property
    def half_length_sum(self) -> float:
        return (self.fav_length + self.lv_length) / 2.0

    @property
    def steps(self) -> np.ndarray:
        """Time stamps as integer multiples of ``delta_t``."""
        return np.rint(self.time_index / self.delta_t).astype(np.int64)

    @property
    def is_contiguous(self) -> bool:
        return bool(np.all(np.diff(self.steps) == 1))

    def replace(self, **changes) -> "LongitudinalTrajectory":
        return dataclasses.replace(self, **changes)

    def take(self, index) -> "LongitudinalTrajectory":
        """Sub-trajectory of the selected records (boolean mask or indices)."""
        return self.replace(**{name: getattr(self, name)[index] for name in SERIES_FIELDS})

    def columns(self) -> dict:
        return {name: getattr(self, name) for name in SERIES_FIELDS}

    def records(self) -> Iterator[UnifiedRecord]:
        for i in range(len(self)):
            yield UnifiedRecord(
                self.trajectory_id,
                float(self.time_index[i]),
                self.id_lv,
                float(self.pos_lv[i]),
                float(self.speed_lv[i]),
                float(self.acc_lv[i]),
                self.id_fav,
                float(self.pos_fav[i]),
                float(self.speed_fav[i]),
                float(self.acc_fav[i]),
                float(self.space_gap[i]),
                float(self.space_headway[i]),
                float(self.speed_diff[i]),
            )

    def validate(self) -> None:
        """Raise ``ValueError`` naming the first violated invariant."""
        if len(self) < 2:
            raise ValueError(f"trajectory {self.trajectory_id}: fewer than 2 records")
        t = self.time_index / self.delta_t
        if np.any(np.abs(t - np.rint(t)) > 1e-6):
            raise ValueError(f"trajectory {self.trajectory_id}: Time_Index not on the delta_t grid")
        if not self.is_contiguous:
            raise ValueError(f"trajectory {self.trajectory_id}: Time_Index has gaps")
        for rec in self.records():
            check_record(rec, self.half_length_sum)


def check_record(rec: UnifiedRecord, half_length_sum: float) -> None:
    """Per-row identities of the unified format."""
    if not rec.speed_diff == rec.speed_lv - rec.speed_fav:
        raise ValueError(f"trajectory {rec.trajectory_id} t={rec.time_index}: Speed_Diff != Speed_LV - Speed_FAV")
    if not rec.space_headway == rec.pos_lv - rec.pos_fav:
        raise ValueError(f"trajectory {rec.trajectory_id} t={rec.time_index}: Space_Headway != Pos_LV - Pos_FAV")
    if not abs(rec.space_headway - rec.space_gap - half_length_sum) <= GEOMETRY_TOL:
        raise ValueError(f"trajectory {rec.trajectory_id} t={rec.time_index}: headway - gap != mean vehicle length")


# -- kinematics -------------------------------------------------------------


def _check_dt(delta_t):
    if not delta_t > 0:
        raise ValueError(f"delta_t must be positive, got {delta_t}")


def derive_speed_series(positions: Sequence[float], delta_t: float) -> np.ndarray:
    """Forward difference ``(p[t+1] - p[t]) / dt``; one element shorter than the input."""
    p = np.asarray(positions, dtype=float)
    if p.size < 2:
        raise ValueError("need at least 2 positions to derive speeds")
    _check_dt(delta_t)
    return np.diff(p) / delta_t


def derive_accel_series(speeds: Sequence[float], delta_t: float) -> np.ndarray:
    v = np.asarray(speeds, dtype=float)
    if v.size < 2:
        raise ValueError("need at least 2 speeds to derive accelerations")
    _check_dt(delta_t)
    return np.diff(v) / delta_t


def integrate_position(initial: float, speeds: Sequence[float], delta_t: float) -> np.ndarray:
    """``p[0] = initial``, ``p[t] = p[t-1] + dt * v[t]``; ``speeds[0]`` is unused."""
    _check_dt(delta_t)
    v = np.asarray(speeds, dtype=float)
    if v.size == 0:
        return np.empty(0)
    steps = np.empty(v.size)
    steps[0] = initial
    steps[1:] = delta_t * v[1:]
    return np.cumsum(steps)


def compute_gap(headway, l_fav: float, l_lv: float):
    """Bumper-to-bumper gap from center-to-center headway."""
    if not (l_fav > 0 and l_lv > 0):
        raise ValueError("vehicle lengths must be positive")
    if np.ndim(headway):
        headway = np.asarray(headway, dtype=float)
    return headway - (l_fav + l_lv) / 2.0


def settle_leader_position(pos_fav, space_headway, pos_lv=None):
    """Return ``(pos_lv, space_headway)`` satisfying ``pos_lv - pos_fav == headway`` exactly.

    Rows that already satisfy the identity are returned untouched, so the
    operation is idempotent.
    """
    pos_fav = np.asarray(pos_fav, dtype=float)
    h = np.asarray(space_headway, dtype=float)
    new_lv = pos_fav + h
    new_h = new_lv - pos_fav
    if pos_lv is None:
        return new_lv, new_h
    pos_lv = np.asarray(pos_lv, dtype=float)
    ok = (pos_lv - pos_fav) == h
    return np.where(ok, pos_lv, new_lv), np.where(ok, h, new_h)


def build_trajectory(
    trajectory_id: int,
    delta_t: float,
    id_fav: int,
    id_lv: int,
    pos_fav,
    speed_fav,
    acc_fav,
    speed_lv,
    acc_lv,
    space_headway,
    fav_length: float = DEFAULT_VEHICLE_LENGTH,
    lv_length: float = DEFAULT_VEHICLE_LENGTH,
    space_gap=None,
    time_index=None,
) -> LongitudinalTrajectory:
    """Assemble a trajectory from its anchor series, deriving the dependent labels.

    All series are trimmed to the shortest one (derived series lose their tail).
    ``Pos_LV``, ``Speed_Diff`` and, unless given, ``Space_Gap`` are computed here.
    """
    series = [pos_fav, speed_fav, acc_fav, speed_lv, acc_lv, space_headway]
    if space_gap is not None:
        series.append(space_gap)
    n = min(len(s) for s in series)
    pos_fav = np.asarray(pos_fav, dtype=float)[:n]
    pos_lv, headway = settle_leader_position(pos_fav, np.asarray(space_headway, dtype=float)[:n])
    half = (fav_length + lv_length) / 2.0
    if space_gap is None:
        gap = headway - half
    else:
        gap = np.asarray(space_gap, dtype=float)[:n]
        bad = ~(np.abs(headway - gap - half) <= GEOMETRY_TOL) & np.isfinite(headway)
        gap = np.where(bad, headway - half, gap)
    speed_fav = np.asarray(speed_fav, dtype=float)[:n]
    speed_lv = np.asarray(speed_lv, dtype=float)[:n]
    if time_index is None:
        time_index = time_grid(n, delta_t)
    return LongitudinalTrajectory(
        trajectory_id=trajectory_id,
        delta_t=delta_t,
        id_fav=id_fav,
        id_lv=id_lv,
        fav_length=fav_length,
        lv_length=lv_length,
        time_index=np.asarray(time_index, dtype=float)[:n],
        pos_lv=pos_lv,
        speed_lv=speed_lv,
        acc_lv=np.asarray(acc_lv, dtype=float)[:n],
        pos_fav=pos_fav,
        speed_fav=speed_fav,
        acc_fav=np.asarray(acc_fav, dtype=float)[:n],
        space_gap=gap,
        space_headway=headway,
        speed_diff=speed_lv - speed_fav,
    )


def time_grid(n: int, delta_t: float, start: int = 0) -> np.ndarray:
    # Rounded so that e.g. 3 * 0.1 serializes as 0.3.
    return np.round((np.arange(n) + start) * delta_t, 9)


def record_count(dataset: Sequence[LongitudinalTrajectory]) -> int:
    return sum(len(t) for t in dataset)
