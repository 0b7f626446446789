"""Leader identification and longitudinal trajectory extraction from scenes."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import (
    DEFAULT_VEHICLE_LENGTH,
    HUMAN_LEADER_ID,
    LongitudinalTrajectory,
    build_trajectory,
    derive_accel_series,
    derive_speed_series,
    integrate_position,
)
from .ingestion import RawScene

log = logging.getLogger(__name__)

# Largest bearing of a leader one lane-offset (4 ft) away at the shortest
# following distance (22 ft); cos(atan(4/22)) ~= 0.984.
ALIGNMENT_COS = 22.0 / math.hypot(22.0, 4.0)
R2_THRESHOLD = 0.9
CONSISTENCY_THRESHOLD = 0.2
# Below this net gap change the relative consistency test is replaced by an absolute one.
CONSISTENCY_FLOOR = 0.5
# Slack for threshold comparisons made inclusive at the boundary.
_EPS = 1e-12


@dataclass(frozen=True)
class CandidateFilterParams:
    r2_threshold: float = R2_THRESHOLD
    alignment_cos_threshold: float = ALIGNMENT_COS
    consistency_rel_threshold: float = CONSISTENCY_THRESHOLD
    max_leader_gap: float = math.inf

    def __post_init__(self):
        for name in ("r2_threshold", "alignment_cos_threshold"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {value}")
        if not self.consistency_rel_threshold > 0:
            raise ValueError("consistency_rel_threshold must be positive")
        if not self.max_leader_gap > 0:
            raise ValueError("max_leader_gap must be positive")


# -- geometric filters -----------------------------------------------------------


def _r2(x, y):
    sxx = np.sum((x - x.mean()) ** 2)
    syy = np.sum((y - y.mean()) ** 2)
    if sxx == 0:
        return -math.inf
    if syy == 0:
        return 1.0  # horizontal line: the fit is exact
    slope = np.sum((x - x.mean()) * (y - y.mean())) / sxx
    resid = y - (y.mean() + slope * (x - x.mean()))
    return 1.0 - float(np.sum(resid**2) / syy)


def straightness_r2(track) -> float:
    """R^2 of a least-squares line through the track.

    Fitted both y-on-x and x-on-y; the better fit wins so that the measure
    does not depend on the road's orientation.
    """
    pts = np.asarray([tuple(p) for p in track], dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise ValueError("straightness_r2 needs at least 3 points")
    x, y = pts[:, 0], pts[:, 1]
    if np.all(x == x[0]) and np.all(y == y[0]):
        return 1.0  # stationary: trivially a (degenerate) straight path
    return max(_r2(x, y), _r2(y, x))


def is_straight(r2: float, threshold: float = R2_THRESHOLD) -> bool:
    return r2 >= threshold - _EPS


def direction_filter(ego_dir, agent_dir) -> bool:
    """Keep unless the agent moves against the ego (negative dot product)."""
    return not (ego_dir[0] * agent_dir[0] + ego_dir[1] * agent_dir[1] < 0)


def alignment_filter(ego_dir, ego_to_agent, threshold: float = ALIGNMENT_COS) -> bool:
    """Keep if the agent bears within the alignment cone of the ego's heading.

    ``ego_dir`` is the backward step ``p[t-1] - p[t]`` and ``ego_to_agent`` is
    ``p_ego - p_agent``; for an agent dead ahead both point backwards.
    """
    n1 = math.hypot(*ego_dir)
    n2 = math.hypot(*ego_to_agent)
    if n1 == 0 or n2 == 0:
        return False
    cos = (ego_dir[0] * ego_to_agent[0] + ego_dir[1] * ego_to_agent[1]) / (n1 * n2)
    return cos >= threshold - _EPS


def spatial_headway(ego, agent) -> float:
    return math.hypot(agent[0] - ego[0], agent[1] - ego[1])


def select_leader(candidates: Iterable) -> Optional[int]:
    """Agent id with the smallest headway; ties go to the lowest id."""
    best = None
    for agent_id, headway in candidates:
        key = (headway, agent_id)
        if best is None or key < best:
            best = key
    return None if best is None else best[1]


# -- per-scene leader identification ---------------------------------------------


def backward_steps(xy: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Direction vectors ``p[t-1] - p[t]`` per stamp, shape (K, 2).

    Where the previous stamp is missing the vector of the following step is
    reused; with neither available the vector is zero.
    """
    k = mask.size
    out = np.zeros((k, 2))
    if k < 2:
        return out
    valid = mask[1:] & mask[:-1]
    step = xy[:-1] - xy[1:]
    out[1:][valid] = step[valid]
    # Stamp t without a backward step borrows the step t -> t+1 (stored at t+1).
    fill = ~np.concatenate([[False], valid]) & np.concatenate([valid, [False]])
    out[fill] = out[np.flatnonzero(fill) + 1]
    return out


@dataclass(frozen=True, eq=False)
class LeaderTable:
    """Per-stamp leader ids (``None`` for free flow) and headways."""

    leaders: list
    headway: np.ndarray
    ego_lane: Optional[np.ndarray] = None


def identify_leaders(scene: RawScene, params: CandidateFilterParams = CandidateFilterParams()) -> LeaderTable:
    if scene.coordinate_mode == "euler":
        return _identify_euler(scene, params)
    return _identify_frenet(scene, params)


def _stack(scene, attr):
    return np.stack([getattr(a, attr) for a in scene.agents]) if scene.agents else None


def _pick(candidate: np.ndarray, headway: np.ndarray, ids: np.ndarray) -> LeaderTable:
    # Agents are sorted by id, so argmin's first-occurrence rule gives the lowest id on ties.
    h = np.where(candidate, headway, np.inf)
    best = np.argmin(h, axis=0)
    k = candidate.shape[1]
    best_h = h[best, np.arange(k)]
    leaders = [int(ids[b]) if np.isfinite(hv) else None for b, hv in zip(best, best_h)]
    return LeaderTable(leaders, np.where(np.isfinite(best_h), best_h, np.nan))


def _identify_euler(scene: RawScene, params) -> LeaderTable:
    k = scene.n_stamps
    ego = scene.ego
    if not scene.agents:
        return LeaderTable([None] * k, np.full(k, np.nan))
    order = np.argsort([a.agent_id for a in scene.agents], kind="stable")
    ids = np.array([scene.agents[i].agent_id for i in order])
    xy = _stack(scene, "xy")[order]  # (A, K, 2)
    mask = _stack(scene, "mask")[order]  # (A, K)

    ego_dir = backward_steps(ego.xy, ego.mask)  # (K, 2)
    agent_dir = np.stack([backward_steps(xy[i], mask[i]) for i in range(len(ids))])
    dot = agent_dir[..., 0] * ego_dir[:, 0] + agent_dir[..., 1] * ego_dir[:, 1]
    same_direction = ~(dot < 0)

    to_ego = ego.xy[None, :, :] - xy  # sigma_0k = p_0 - p_k
    n1 = np.hypot(ego_dir[:, 0], ego_dir[:, 1])[None, :]
    n2 = np.hypot(to_ego[..., 0], to_ego[..., 1])
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = (to_ego[..., 0] * ego_dir[:, 0] + to_ego[..., 1] * ego_dir[:, 1]) / (n1 * n2)
    aligned = (n1 > 0) & (n2 > 0) & (cos >= params.alignment_cos_threshold - _EPS)

    headway = n2
    candidate = mask & ego.mask[None, :] & same_direction & aligned & (headway <= params.max_leader_gap)
    return _pick(candidate, headway, ids)


def _identify_frenet(scene: RawScene, params) -> LeaderTable:
    k = scene.n_stamps
    ego = scene.ego
    if not scene.agents:
        return LeaderTable([None] * k, np.full(k, np.nan), ego.lane)
    order = np.argsort([a.agent_id for a in scene.agents], kind="stable")
    ids = np.array([scene.agents[i].agent_id for i in order])
    s = _stack(scene, "s")[order]
    lane = _stack(scene, "lane")[order]
    mask = _stack(scene, "mask")[order]
    headway = s - ego.s[None, :]
    with np.errstate(invalid="ignore"):
        candidate = mask & ego.mask[None, :] & (lane == ego.lane[None, :]) & (headway > 0) & (headway <= params.max_leader_gap)
    table = _pick(candidate, headway, ids)
    return LeaderTable(table.leaders, table.headway, ego.lane)


# -- segmentation and trajectory assembly ----------------------------------------


@dataclass(frozen=True, eq=False)
class RawSegment:
    scene_id: int
    leader_id: int
    start: int  # first stamp index in the scene
    stop: int  # one past the last stamp
    pos_fav: np.ndarray
    headway: np.ndarray
    speed_fav: Optional[np.ndarray]
    speed_lv: Optional[np.ndarray]
    fav_length: float
    lv_length: float
    id_fav: int

    def __len__(self):
        return self.stop - self.start


def leader_runs(leaders: Sequence, lanes: Optional[Sequence] = None) -> list:
    """Maximal ``(leader, start, stop)`` runs of a constant, non-None leader.

    With ``lanes`` given, a change of the ego lane also ends a run.
    """
    runs = []
    start = None
    for i, lead in enumerate(leaders):
        if start is not None and (lead != leaders[start] or (lanes is not None and lanes[i] != lanes[start])):
            runs.append((leaders[start], start, i))
            start = None
        if start is None and lead is not None:
            start = i
    if start is not None:
        runs.append((leaders[start], start, len(leaders)))
    return runs


def _arc_length(xy: np.ndarray) -> np.ndarray:
    steps = np.hypot(*np.diff(xy, axis=0).T)
    return np.concatenate([[0.0], np.cumsum(steps)])


def segment_by_leader(scene: RawScene, table: LeaderTable) -> list:
    """Split a scene into raw single-leader segments."""
    agents = {a.agent_id: a for a in scene.agents}
    ego = scene.ego
    if scene.coordinate_mode == "euler":
        ego_pos = np.full(scene.n_stamps, np.nan)
        present = np.flatnonzero(ego.mask)
        if present.size:
            ego_pos[present] = _arc_length(ego.xy[present])
    else:
        ego_pos = ego.s
    out = []
    for lead, a, b in leader_runs(table.leaders, table.ego_lane):
        agent = agents[lead]
        out.append(
            RawSegment(
                scene_id=scene.scene_id,
                leader_id=lead,
                start=a,
                stop=b,
                pos_fav=ego_pos[a:b].copy(),
                headway=table.headway[a:b].copy(),
                speed_fav=None if ego.speed is None else ego.speed[a:b].copy(),
                speed_lv=None if agent.speed is None else agent.speed[a:b].copy(),
                fav_length=ego.length or DEFAULT_VEHICLE_LENGTH,
                lv_length=agent.length or DEFAULT_VEHICLE_LENGTH,
                id_fav=ego.agent_id,
            )
        )
    return out


def gap_change_consistent(delta_d: float, delta_d_hat: float, threshold: float = CONSISTENCY_THRESHOLD, floor: float = CONSISTENCY_FLOOR) -> bool:
    err = abs(delta_d - delta_d_hat)
    if abs(delta_d) < floor:
        return err <= floor
    return err / abs(delta_d) <= threshold


def consistency_check(traj: LongitudinalTrajectory, threshold: float = CONSISTENCY_THRESHOLD, floor: float = CONSISTENCY_FLOOR) -> bool:
    """Compare the net gap change with the speed-difference integral.

    The integral is a left Riemann sum over the intervals between the first
    and last record.
    """
    gap, dv = traj.space_gap, traj.speed_diff
    if not (np.all(np.isfinite(gap[[0, -1]])) and np.all(np.isfinite(dv[:-1]))):
        return False
    delta_d = float(gap[-1] - gap[0])
    delta_d_hat = float(traj.delta_t * np.sum(dv[:-1]))
    return gap_change_consistent(delta_d, delta_d_hat, threshold, floor)


def to_unified(
    segment: RawSegment,
    delta_t: float,
    position_anchor: str = "positions",
    automated_ids=frozenset(),
    trajectory_id: int = 0,
) -> Optional[LongitudinalTrajectory]:
    """Unified trajectory for a segment, or ``None`` if fewer than 2 records survive differencing."""
    n = len(segment)
    pos_fav = segment.pos_fav
    pos_lv = pos_fav + segment.headway
    if position_anchor == "speeds" and segment.speed_fav is not None and segment.speed_lv is not None:
        if n < 3:
            return None
        speed_fav, speed_lv = segment.speed_fav, segment.speed_lv
        pos_fav = integrate_position(float(pos_fav[0]), speed_fav, delta_t)
    else:
        if n < 4:
            return None
        speed_fav = derive_speed_series(pos_fav, delta_t)
        speed_lv = derive_speed_series(pos_lv, delta_t)
    id_lv = segment.leader_id if segment.leader_id in automated_ids else HUMAN_LEADER_ID
    return build_trajectory(
        trajectory_id=trajectory_id,
        delta_t=delta_t,
        id_fav=segment.id_fav,
        id_lv=id_lv,
        pos_fav=pos_fav,
        speed_fav=speed_fav,
        acc_fav=derive_accel_series(speed_fav, delta_t),
        speed_lv=speed_lv,
        acc_lv=derive_accel_series(speed_lv, delta_t),
        space_headway=segment.headway,
        fav_length=segment.fav_length,
        lv_length=segment.lv_length,
    )


@dataclass(frozen=True)
class ExtractionOptions:
    params: CandidateFilterParams = CandidateFilterParams()
    position_anchor: str = "positions"
    automated_ids: frozenset = frozenset()


def extract_scene(scene: RawScene, options: ExtractionOptions = ExtractionOptions()) -> list:
    """All consistent trajectories of one scene, with ``trajectory_id`` 0.

    Euler scenes whose ego path is not straight enough are skipped entirely.
    """
    params = options.params
    if scene.coordinate_mode == "euler":
        pts = scene.ego.xy[scene.ego.mask]
        if pts.shape[0] < 3:
            return []
        r2 = straightness_r2(pts)
        if not is_straight(r2, params.r2_threshold):
            log.info("scene %s rejected: ego path R^2 %.3f", scene.scene_id, r2)
            return []
    table = identify_leaders(scene, params)
    out = []
    for seg in segment_by_leader(scene, table):
        traj = to_unified(seg, scene.delta_t, options.position_anchor, options.automated_ids)
        if traj is None:
            continue
        if consistency_check(traj, params.consistency_rel_threshold):
            out.append(traj)
        else:
            log.debug("scene %s: segment at stamp %d failed the gap/speed consistency check", scene.scene_id, seg.start)
    return out


def extract_scenes(scenes: Sequence[RawScene], options: ExtractionOptions = ExtractionOptions(), jobs: int = 1) -> list:
    """Extract every scene and number trajectories by (scene_id, segment start)."""
    if jobs > 1 and len(scenes) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(extract_scene, scenes, [options] * len(scenes), chunksize=max(1, len(scenes) // (4 * jobs))))
    else:
        chunks = [extract_scene(s, options) for s in scenes]
    order = sorted(range(len(scenes)), key=lambda i: scenes[i].scene_id)
    dataset = []
    for i in order:
        for traj in chunks[i]:
            dataset.append(traj.replace(trajectory_id=len(dataset)))
    return dataset

