"""Per-timestamp safety, mobility, stability and fuel metrics.

Scalar helpers return ``None`` for undefined values; the ``*_series``
functions and :func:`trajectory_metrics` work on arrays and use NaN.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import LongitudinalTrajectory

# VT-Micro / MEF coefficients K[n1, n2]: n1 = speed power, n2 = acceleration power.
VT_MICRO_K = np.array(
    [
        [-7.537, 0.4438, 0.1716, -0.0420],
        [0.0973, 0.0518, 0.0029, 0.0071],
        [-0.003, -7.42e-04, 1.09e-04, 1.16e-04],
        [5.3e-05, 6e-06, -1e-05, -6e-06],
    ]
)
VSP_F = (2.48e-03, 1.98e-03, 3.97e-02, 2.01e-01, 7.93e-02, 2.48e-03)
ARRB_GAMMA = (0.666, 0.019, 0.001, 0.0005, 0.122, 0.793)


@dataclass(frozen=True)
class FuelCoefficients:
    vt_micro_K: np.ndarray = field(default_factory=lambda: VT_MICRO_K.copy())
    mef_beta: float = 0.5
    mef_T: int = 9
    vsp_delta: float = 0.0  # road grade
    vsp_f: tuple = VSP_F
    arrb_gamma: tuple = ARRB_GAMMA
    fuel_density: float = 800.0  # g/L

    def __post_init__(self):
        k = np.asarray(self.vt_micro_K, dtype=float)
        if k.shape != (4, 4):
            raise ValueError("vt_micro_K must be 4x4")
        object.__setattr__(self, "vt_micro_K", k)
        if not self.fuel_density > 0:
            raise ValueError("fuel_density must be positive")
        if len(self.vsp_f) != 6 or len(self.arrb_gamma) != 6:
            raise ValueError("vsp_f and arrb_gamma need six coefficients each")
        if self.mef_T < 1 or not 0 <= self.mef_beta <= 1:
            raise ValueError("mef_T >= 1 and mef_beta in [0, 1] required")


DEFAULT_COEFFS = FuelCoefficients()


@dataclass(frozen=True)
class MetricsRecord:
    ttc: Optional[float]
    tau: Optional[float]
    alpha: float
    f_vtm: float  # L/s
    f_mef: float  # L/s
    f_vsp: float  # g/s
    f_arrb: float  # ml/s
    f_all: float  # L/s


def _scalar(x) -> Optional[float]:
    x = float(np.asarray(x).reshape(-1)[0]) if np.ndim(x) else float(x)
    return None if np.isnan(x) else x


# -- safety / mobility / stability ---------------------------------------------------


def ttc_series(gap, v_fav, v_lv) -> np.ndarray:
    gap, v_fav, v_lv = (np.asarray(a, dtype=float) for a in (gap, v_fav, v_lv))
    closing = v_fav - v_lv
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(closing > 0, gap / closing, np.nan)


def ttc(gap: float, v_fav: float, v_lv: float) -> Optional[float]:
    """Time to collision; undefined unless the follower is faster."""
    return _scalar(ttc_series(gap, v_fav, v_lv))


def time_headway_series(headway, v_fav) -> np.ndarray:
    headway, v_fav = np.asarray(headway, dtype=float), np.asarray(v_fav, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(v_fav > 0, headway / v_fav, np.nan)


def time_headway(headway: float, v_fav: float) -> Optional[float]:
    return _scalar(time_headway_series(headway, v_fav))


def instability_alpha(accelerations) -> np.ndarray:
    """Squared deviation of each acceleration from the trajectory mean."""
    a = np.asarray(accelerations, dtype=float)
    if a.size == 0:
        raise ValueError("need at least one acceleration")
    return (a - a.mean()) ** 2


# -- fuel models ---------------------------------------------------------------------


def _vt_micro_exponent(v, a, K):
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    total = np.zeros(np.broadcast(v, a).shape)
    v_pow = np.ones_like(total)
    for n1 in range(4):
        a_pow = np.ones_like(total)
        for n2 in range(4):
            total = total + K[n1, n2] * v_pow * a_pow
            a_pow = a_pow * a
        v_pow = v_pow * v
    return total


def vt_micro(v, a, coeffs: FuelCoefficients = DEFAULT_COEFFS):
    """VT-Micro fuel rate in L/s."""
    out = np.exp(_vt_micro_exponent(v, a, coeffs.vt_micro_K))
    return float(out) if out.ndim == 0 else out


def mef_effective_acceleration(accelerations, coeffs: FuelCoefficients = DEFAULT_COEFFS) -> np.ndarray:
    """Blend of each acceleration with the mean of up to ``mef_T`` predecessors.

    With no predecessor (first record) the acceleration itself is used. The
    mean is taken as an offset from the current value so that a constant
    history reproduces that value exactly.
    """
    a = np.asarray(accelerations, dtype=float)
    n, T = a.size, coeffs.mef_T
    padded = np.concatenate([np.full(T, np.nan), a])
    # windows[t] holds a[t-T .. t-1]
    windows = np.lib.stride_tricks.sliding_window_view(padded, T)[:n]
    diffs = windows - a[:, None]
    count = np.sum(~np.isnan(diffs), axis=1)
    total = np.nansum(diffs, axis=1)
    offset = np.divide(total, count, out=np.zeros(n), where=count > 0)
    return a + (1.0 - coeffs.mef_beta) * offset


def mef(v: float, a_history: Sequence[float], coeffs: FuelCoefficients = DEFAULT_COEFFS) -> float:
    """MEF fuel rate in L/s for the last entry of ``a_history``.

    ``a_history`` ends with the current acceleration; only the preceding
    ``mef_T`` entries enter the historical mean.
    """
    hist = np.asarray(a_history, dtype=float)
    if hist.size == 0:
        raise ValueError("a_history must contain the current acceleration")
    hist = hist[-(coeffs.mef_T + 1):]
    eff = mef_effective_acceleration(hist, coeffs)[-1]
    return float(vt_micro(v, eff, coeffs))


def vsp(v, a, coeffs: FuelCoefficients = DEFAULT_COEFFS):
    """Vehicle specific power."""
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    out = v * (1.1 * a + 9.81 * coeffs.vsp_delta + 0.132) + 3.02e-4 * v**3
    return float(out) if out.ndim == 0 else out


def vsp_fuel_from_power(power, coeffs: FuelCoefficients = DEFAULT_COEFFS):
    f1, f2, f3, f4, f5, f6 = coeffs.vsp_f
    p = np.asarray(power, dtype=float)
    # The middle branch owns both endpoints.
    out = np.where(p < -10, f1, np.where(p <= 10, f2 * p**2 + f3 * p + f4, f5 * p + f6))
    return float(out) if out.ndim == 0 else out


def vsp_fuel(v, a, coeffs: FuelCoefficients = DEFAULT_COEFFS):
    """VSP-based fuel rate in g/s."""
    return vsp_fuel_from_power(vsp(v, a, coeffs), coeffs)


def arrb(v, a, coeffs: FuelCoefficients = DEFAULT_COEFFS):
    """ARRB fuel rate in ml/s."""
    g1, g2, g3, g4, g5, g6 = coeffs.arrb_gamma
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    out = g1 + g2 * v + g3 * v**2 + g4 * v**3 + g5 * v * a + g6 * v * np.maximum(0.0, a) ** 2
    return float(out) if out.ndim == 0 else out


def combine_fuel(f_vtm, f_mef, f_vsp, f_arrb, coeffs: FuelCoefficients = DEFAULT_COEFFS):
    """Average of the four models in L/s (g -> L via fuel density, ml -> L)."""
    return (f_vtm + f_mef + f_vsp / coeffs.fuel_density + f_arrb / 1000.0) / 4.0


def fuel_all(v: float, a_history: Sequence[float], coeffs: FuelCoefficients = DEFAULT_COEFFS) -> float:
    a = float(np.asarray(a_history, dtype=float)[-1])
    return float(
        combine_fuel(vt_micro(v, a, coeffs), mef(v, a_history, coeffs), vsp_fuel(v, a, coeffs), arrb(v, a, coeffs), coeffs)
    )


# -- per-trajectory -------------------------------------------------------------------

METRIC_COLUMNS = ("Trajectory_ID", "Time_Index", "TTC", "Tau", "Alpha", "F_VTM", "F_MEF", "F_VSP", "F_ARRB", "F_All")


@dataclass(frozen=True, eq=False)
class TrajectoryMetrics:
    trajectory_id: int
    time_index: np.ndarray
    ttc: np.ndarray
    tau: np.ndarray
    alpha: np.ndarray
    f_vtm: np.ndarray
    f_mef: np.ndarray
    f_vsp: np.ndarray
    f_arrb: np.ndarray
    f_all: np.ndarray

    def __len__(self):
        return self.time_index.size

    def record(self, i: int) -> MetricsRecord:
        return MetricsRecord(
            _scalar(self.ttc[i]),
            _scalar(self.tau[i]),
            float(self.alpha[i]),
            float(self.f_vtm[i]),
            float(self.f_mef[i]),
            float(self.f_vsp[i]),
            float(self.f_arrb[i]),
            float(self.f_all[i]),
        )

    def rows(self):
        for i in range(len(self)):
            yield [
                self.trajectory_id,
                float(self.time_index[i]),
                float(self.ttc[i]),
                float(self.tau[i]),
                float(self.alpha[i]),
                float(self.f_vtm[i]),
                float(self.f_mef[i]),
                float(self.f_vsp[i]),
                float(self.f_arrb[i]),
                float(self.f_all[i]),
            ]


def trajectory_metrics(traj: LongitudinalTrajectory, coeffs: FuelCoefficients = DEFAULT_COEFFS) -> TrajectoryMetrics:
    """All metrics for the follower of one trajectory."""
    v, a = traj.speed_fav, traj.acc_fav
    f_vtm = np.exp(_vt_micro_exponent(v, a, coeffs.vt_micro_K))
    f_mef = np.exp(_vt_micro_exponent(v, mef_effective_acceleration(a, coeffs), coeffs.vt_micro_K))
    f_vsp = np.asarray(vsp_fuel(v, a, coeffs))
    f_arrb = np.asarray(arrb(v, a, coeffs))
    return TrajectoryMetrics(
        trajectory_id=traj.trajectory_id,
        time_index=traj.time_index,
        ttc=ttc_series(traj.space_gap, v, traj.speed_lv),
        tau=time_headway_series(traj.space_headway, v),
        alpha=instability_alpha(a),
        f_vtm=f_vtm,
        f_mef=f_mef,
        f_vsp=f_vsp,
        f_arrb=f_arrb,
        f_all=combine_fuel(f_vtm, f_mef, f_vsp, f_arrb, coeffs),
    )


def dataset_metrics(dataset: Sequence[LongitudinalTrajectory], coeffs: FuelCoefficients = DEFAULT_COEFFS) -> list:
    return [trajectory_metrics(t, coeffs) for t in sorted(dataset, key=lambda t: t.trajectory_id)]


def metric_rows(metrics: Sequence[TrajectoryMetrics]):
    for m in metrics:
        yield from m.rows()
