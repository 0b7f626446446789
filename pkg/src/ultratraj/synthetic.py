"""Synthetic multi-agent scenes with a planted leader.

The ego drives along a road (straight, or a tight circular arc when
``curved=True``) with a smooth speed profile. The planted leader stays in the
ego lane at a bounded headway. Distractors cycle through four kinds:

* ``oncoming``: adjacent lane, opposite direction;
* ``adjacent``: adjacent lane, same direction, kept alongside the ego;
* ``perpendicular``: crosses the road well beyond the leader;
* ``ahead``: same lane, further ahead than the leader.

Every kind is placed so that the planted leader remains the nearest
same-lane preceding agent at every stamp.

The module also simulates longitudinal pairs whose follower obeys a known
linear car-following law, used to check calibration and correlation signs,
and can corrupt such data with out-of-range records.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_VEHICLE_LENGTH, LongitudinalTrajectory, build_trajectory, integrate_position, settle_leader_position
from .ingestion import AgentTrack, RawScene

LANE_WIDTH = 3.5
DISTRACTOR_KINDS = ("oncoming", "adjacent", "perpendicular", "ahead")


@dataclass(frozen=True)
class PlantedPairSpec:
    n_timestamps: int = 50
    delta_t: float = 0.1
    n_distractors: int = 3
    ego_speed: tuple = (8.0, 25.0)  # range of the mean speed, m/s
    speed_amplitude: float = 2.0  # m/s
    headway: tuple = (15.0, 45.0)  # range of the mean headway, m
    headway_amplitude: float = 4.0  # m
    curved: bool = False
    coordinate_mode: str = "euler"
    with_speeds: bool = False
    partial_presence: bool = True  # distractors may enter late / leave early
    scene_id: int = 0
    ego_id: int = 0
    leader_id: int = 1

    def __post_init__(self):
        if self.n_timestamps < 4:
            raise ValueError("need at least 4 timestamps")
        if self.ego_speed[0] - self.speed_amplitude < 0.5:
            raise ValueError("ego speed range must stay well above the 0.1 m/s stationary bound")
        if self.headway[0] - self.headway_amplitude <= DEFAULT_VEHICLE_LENGTH + 1.0:
            raise ValueError("headway range must leave a positive gap")
        if self.headway[1] + self.headway_amplitude > 110.0:
            raise ValueError("headway range must stay within the 120 m car-following bound")


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    scene: RawScene
    planted_leader: int
    # Ground truth the generator knows but the pipeline does not.
    lane_of: dict  # agent id -> lane offset (0 = ego lane), None for crossing traffic
    along: dict  # agent id -> along-road coordinate per stamp (NaN when absent)
    expected_rejected: bool


def _speed_profile(rng, t, mean, amplitude):
    omega = rng.uniform(0.15, 0.5)
    phase = rng.uniform(0, 2 * np.pi)
    amp = rng.uniform(0.3, 1.0) * amplitude
    speed = mean + amp * np.sin(omega * t + phase)
    # Exact integral of the speed profile, starting at 0.
    dist = mean * t - (amp / omega) * (np.cos(omega * t + phase) - np.cos(phase))
    return speed, dist


def _oscillation(rng, t, mean, amplitude):
    omega = rng.uniform(0.1, 0.4)
    phase = rng.uniform(0, 2 * np.pi)
    amp = rng.uniform(0.2, 1.0) * amplitude
    return mean + amp * np.sin(omega * t + phase), amp * omega * np.cos(omega * t + phase)


class _Road:
    """Maps (along, lateral) road coordinates to Euler x/y."""

    def __init__(self, rng, curved, length):
        self.origin = rng.uniform(-500, 500, size=2)
        # Headings near the axes make the y-on-x fit degenerate; the extraction
        # handles both orientations, so any heading is fair game here.
        self.heading = rng.uniform(0, 2 * np.pi)
        self.curved = curved
        # A 300-degree arc over the ego's path: far from a straight line.
        self.radius = max(length, 1.0) / np.deg2rad(300.0) if curved else None

    def xy(self, along, lateral):
        along = np.asarray(along, dtype=float)
        lateral = np.asarray(lateral, dtype=float)
        c, s = np.cos(self.heading), np.sin(self.heading)
        if not self.curved:
            x = along * c - lateral * s
            y = along * s + lateral * c
        else:
            r = self.radius - lateral
            ang = along / self.radius
            lx, ly = r * np.sin(ang), self.radius - r * np.cos(ang)
            x = lx * c - ly * s
            y = lx * s + ly * c
        return np.column_stack([self.origin[0] + x, self.origin[1] + y])


def generate_synthetic_scene(spec: PlantedPairSpec = PlantedPairSpec(), seed: int = 0) -> SyntheticScene:
    rng = np.random.default_rng(seed)
    k = spec.n_timestamps
    dt = spec.delta_t
    t = np.arange(k) * dt

    v_mean = rng.uniform(*spec.ego_speed)
    ego_v, ego_s = _speed_profile(rng, t, v_mean, spec.speed_amplitude)
    h_mean = rng.uniform(*spec.headway)
    headway, headway_rate = _oscillation(rng, t, h_mean, spec.headway_amplitude)
    lead_s = ego_s + headway
    lead_v = ego_v + headway_rate

    road = _Road(rng, spec.curved, ego_s[-1] - ego_s[0])
    lengths = {spec.ego_id: round(float(rng.uniform(4.2, 5.0)), 2), spec.leader_id: round(float(rng.uniform(4.0, 5.5)), 2)}
    along = {spec.ego_id: ego_s, spec.leader_id: lead_s}
    lateral = {spec.ego_id: np.zeros(k), spec.leader_id: np.zeros(k)}
    speeds = {spec.ego_id: ego_v, spec.leader_id: lead_v}
    lane_of = {spec.ego_id: 0, spec.leader_id: 0}
    masks = {spec.ego_id: np.ones(k, bool), spec.leader_id: np.ones(k, bool)}

    reach = lead_s.max()
    next_id = max(spec.ego_id, spec.leader_id) + 1
    for i in range(spec.n_distractors):
        kind = DISTRACTOR_KINDS[i % len(DISTRACTOR_KINDS)]
        aid = next_id + i
        if kind == "oncoming":
            v = rng.uniform(8, 20)
            s = ego_s[0] + rng.uniform(20, 120) - v * t
            lat, lane, spd = np.full(k, -LANE_WIDTH), -1, np.full(k, v)
        elif kind == "adjacent":
            # Kept within 15 m of the ego so its bearing never passes the alignment filter.
            off, rate = _oscillation(rng, t, rng.uniform(-8, 8), 6.0)
            s, lat, lane, spd = ego_s + off, np.full(k, LANE_WIDTH), 1, ego_v + rate
        elif kind == "perpendicular":
            v = rng.uniform(5, 15)
            s = np.full(k, reach + rng.uniform(30, 60))
            lat = rng.uniform(-60, -30) + v * t
            lane, spd = None, np.full(k, v)
        else:
            gap, rate = _oscillation(rng, t, rng.uniform(20, 40), 5.0)
            s, lat, lane, spd = lead_s + gap, np.zeros(k), 0, lead_v + rate
        mask = np.ones(k, bool)
        if spec.partial_presence and rng.random() < 0.5:
            a = int(rng.integers(0, k // 2))
            b = int(rng.integers(a + 2, k + 1))
            mask[:] = False
            mask[a:b] = True
        along[aid], lateral[aid], speeds[aid], lane_of[aid], masks[aid] = s, lat, spd, lane, mask
        lengths[aid] = round(float(rng.uniform(4.0, 5.5)), 2)

    tracks = {}
    for aid in along:
        mask = masks[aid]
        kw = {}
        if spec.coordinate_mode == "euler":
            xy = road.xy(along[aid], lateral[aid])
            xy[~mask] = np.nan
            kw["xy"] = xy
        else:
            if lane_of[aid] is None:
                continue  # crossing traffic has no lane in Frenet form
            s = along[aid].copy()
            s[~mask] = np.nan
            kw["s"] = s
            kw["lane"] = np.where(mask, float(lane_of[aid]), np.nan)
        if spec.with_speeds:
            kw["speed"] = np.where(mask, speeds[aid], np.nan)
        tracks[aid] = AgentTrack(agent_id=aid, mask=mask.copy(), length=lengths[aid], **kw)
        along[aid] = np.where(mask, along[aid], np.nan)

    ego = tracks.pop(spec.ego_id)
    scene = RawScene(
        scene_id=spec.scene_id,
        timestamps=np.round(t, 9),
        delta_t=dt,
        ego=ego,
        agents=tuple(tracks[a] for a in sorted(tracks)),
        coordinate_mode=spec.coordinate_mode,
    )
    return SyntheticScene(
        scene=scene,
        planted_leader=spec.leader_id,
        lane_of={a: lane_of[a] for a in along},
        along=along,
        expected_rejected=bool(spec.curved and spec.coordinate_mode == "euler"),
    )


def generate_scenes(n: int, seed: int, **spec_kw) -> list:
    """``n`` scenes with consecutive scene ids, derived deterministically from ``seed``."""
    seeds = np.random.SeedSequence(seed).spawn(n)
    out = []
    for i, ss in enumerate(seeds):
        spec = PlantedPairSpec(scene_id=i, **spec_kw)
        out.append(generate_synthetic_scene(spec, int(ss.generate_state(1)[0])))
    return out


# -- linear car-following pairs -------------------------------------------------------


@dataclass(frozen=True)
class LinearCFSpec:
    """Follower law ``a = k_gap * d + k_dv * dv + k_v * v_f + bias + noise``."""

    k_gap: float = 0.05
    k_dv: float = 0.4
    k_v: float = -0.08
    bias: float = 0.2
    noise_sigma: float = 0.0
    n_points: int = 30  # short episodes from random states, so transients dominate
    delta_t: float = 0.1
    initial_gap: tuple = (8.0, 60.0)
    initial_speed: tuple = (6.0, 25.0)
    leader_amplitude: float = 2.0
    length: float = DEFAULT_VEHICLE_LENGTH


def _simulate_pair(spec: LinearCFSpec, rng, trajectory_id: int) -> LongitudinalTrajectory:
    n, dt = spec.n_points, spec.delta_t
    t = np.arange(n + 1) * dt
    v0 = rng.uniform(*spec.initial_speed)
    v_lv, _ = _speed_profile(rng, t, v0 + rng.uniform(-2.0, 2.0), spec.leader_amplitude)
    v_lv = np.maximum(v_lv, 1.0)
    h0 = rng.uniform(*spec.initial_gap) + spec.length
    pos_lv = integrate_position(h0, v_lv, dt)
    v_f = np.empty(n + 1)
    pos_f = np.empty(n + 1)
    acc = np.empty(n)
    v_f[0], pos_f[0] = v0, 0.0
    noise = rng.normal(0.0, spec.noise_sigma, n) if spec.noise_sigma > 0 else np.zeros(n)
    for k in range(n):
        gap = (pos_lv[k] - pos_f[k]) - spec.length
        acc[k] = spec.k_gap * gap + spec.k_dv * (v_lv[k] - v_f[k]) + spec.k_v * v_f[k] + spec.bias + noise[k]
        v_f[k + 1] = v_f[k] + dt * acc[k]
        pos_f[k + 1] = pos_f[k] + dt * v_f[k + 1]
    return build_trajectory(
        trajectory_id,
        dt,
        id_fav=0,
        id_lv=-1,
        pos_fav=pos_f[:n],
        speed_fav=v_f[:n],
        acc_fav=acc,
        speed_lv=v_lv[:n],
        acc_lv=np.diff(v_lv) / dt,
        space_headway=(pos_lv - pos_f)[:n],
        fav_length=spec.length,
        lv_length=spec.length,
    )


def generate_linear_cf_dataset(n_trajectories: int, seed: int, spec: LinearCFSpec = LinearCFSpec()) -> list:
    """Trajectories whose ``Acc_FAV`` is exactly the linear law (plus optional noise)."""
    rng = np.random.default_rng(seed)
    return [_simulate_pair(spec, rng, i) for i in range(n_trajectories)]


# Out-of-range values for each cleaned label, used by :func:`inject_violations`.
_VIOLATIONS = {
    "speed_fav": (-1.0, 0.0, 0.05),
    "speed_lv": (-0.5, 0.0, 0.09),
    "acc_fav": (-9.0, 5.5, 12.0),
    "acc_lv": (-7.0, 6.0),
    "space_gap": (-2.0, 0.0, 150.0, 300.0),
}


def inject_violations(dataset, rate: float, seed: int) -> tuple:
    """Replace a ``rate`` fraction of records' labels with out-of-range values.

    Headway and leader position are kept consistent with the corrupted gap.
    Returns ``(corrupted_dataset, n_corrupted_values)``.
    """
    rng = np.random.default_rng(seed)
    out, total = [], 0
    labels = sorted(_VIOLATIONS)
    for traj in dataset:
        cols = {name: getattr(traj, name).copy() for name in labels}
        hits = np.flatnonzero(rng.random(len(traj)) < rate)
        for i in hits:
            label = labels[rng.integers(len(labels))]
            cols[label][i] = rng.choice(_VIOLATIONS[label])
            total += 1
        pos_lv, headway = settle_leader_position(traj.pos_fav, cols["space_gap"] + traj.half_length_sum)
        out.append(
            traj.replace(
                **cols,
                space_headway=headway,
                pos_lv=pos_lv,
                speed_diff=cols["speed_lv"] - cols["speed_fav"],
            )
        )
    return out, total
