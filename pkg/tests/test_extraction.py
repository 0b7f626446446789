import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_force_leaders, least_squares_r2, planted_eligible

from ultratraj.core import DEFAULT_VEHICLE_LENGTH
from ultratraj.extraction import (
    ALIGNMENT_COS,
    CandidateFilterParams,
    ExtractionOptions,
    RawSegment,
    alignment_filter,
    consistency_check,
    direction_filter,
    extract_scene,
    extract_scenes,
    gap_change_consistent,
    identify_leaders,
    is_straight,
    leader_runs,
    segment_by_leader,
    select_leader,
    spatial_headway,
    straightness_r2,
    to_unified,
)
from ultratraj.synthetic import PlantedPairSpec, generate_scenes, generate_synthetic_scene

FT = 0.3048


def test_straightness_examples():
    assert straightness_r2([(0, 0), (1, 1), (2, 2)]) == pytest.approx(1.0)
    r2 = straightness_r2([(0, 0), (1, 1), (2, 0)])
    assert r2 == pytest.approx(0.0, abs=1e-12)
    assert not is_straight(r2)


def test_straightness_boundary_inclusive():
    assert not is_straight(0.89)
    assert is_straight(0.90)


def test_straightness_vertical_path():
    assert straightness_r2([(3, 0), (3, 1), (3, 5)]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        straightness_r2([(0, 0), (1, 1)])


@settings(max_examples=150, deadline=None)
@given(
    pts=st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=20),
    sx=st.floats(0.1, 10),
    sy=st.floats(0.1, 10),
    tx=st.floats(-1e3, 1e3),
    ty=st.floats(-1e3, 1e3),
)
def test_straightness_affine_invariant_and_matches_oracle(pts, sx, sy, tx, ty):
    arr = np.array(pts)
    if np.ptp(arr[:, 0]) < 1e-3 or np.ptp(arr[:, 1]) < 1e-3:
        return
    r2 = straightness_r2(arr)
    assert r2 == pytest.approx(least_squares_r2(arr), abs=1e-9)
    moved = np.column_stack([arr[:, 0] * sx + tx, arr[:, 1] * sy + ty])
    assert straightness_r2(moved) == pytest.approx(r2, abs=1e-7)


@pytest.mark.parametrize("agent, keep", [((-1, 0), False), ((1, 0.1), True), ((0, 1), True)])
def test_direction_filter(agent, keep):
    assert direction_filter((1, 0), agent) is keep


def test_direction_filter_zero_vector_kept():
    assert direction_filter((1, 0), (0, 0))


def test_alignment_dead_ahead():
    # Ego moving along +x: backward step (-1, 0); agent 30 m ahead: p_ego - p_agent = (-30, 0).
    assert alignment_filter((-1, 0), (-30, 0))


def test_alignment_below_threshold_removed():
    angle = math.acos(0.983)
    assert not alignment_filter((-1, 0), (-math.cos(angle), -math.sin(angle)))


def test_alignment_lane_geometry_boundary_kept():
    # Four feet lateral offset at 22 feet ahead sits exactly on the default threshold.
    assert alignment_filter((-1, 0), (-22 * FT, -4 * FT))
    assert ALIGNMENT_COS == pytest.approx(0.984, abs=1e-3)


def test_alignment_zero_vector_removed():
    assert not alignment_filter((0, 0), (-1, 0))
    assert not alignment_filter((-1, 0), (0, 0))


@pytest.mark.parametrize("a, b, h", [((0, 0), (3, 4), 5.0), ((2, 2), (2, 2), 0.0), ((1, 1), (4, 5), 5.0)])
def test_spatial_headway(a, b, h):
    assert spatial_headway(a, b) == pytest.approx(h)


def test_select_leader_examples():
    assert select_leader({(7, 12), (9, 5), (3, 8)}) == 9
    assert select_leader(set()) is None
    assert select_leader([(5, 6.0), (2, 6.0)]) == 2


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 50), st.sampled_from([1.0, 2.0, 3.5, 7.25])), max_size=12, unique_by=lambda c: c[0]))
def test_select_leader_permutation_invariant(cands):
    shuffled = list(cands)
    random.Random(len(cands)).shuffle(shuffled)
    assert select_leader(cands) == select_leader(shuffled)


def test_leader_runs_examples():
    assert leader_runs(["A", "A", "A", "B", "B"]) == [("A", 0, 3), ("B", 3, 5)]
    assert leader_runs(["A", None, "A"]) == [("A", 0, 1), ("A", 2, 3)]
    assert leader_runs([None, None]) == []
    # A lane change of the ego also ends a run.
    assert leader_runs([1, 1, 1, 1], lanes=[0, 0, 1, 1]) == [(1, 0, 2), (1, 2, 4)]


@pytest.mark.parametrize("dd, dd_hat, keep", [(10, 9, True), (10, 5, False), (0, 0.3, True), (0.2, 0.8, False), (-10, -9, True)])
def test_gap_change_consistency(dd, dd_hat, keep):
    assert gap_change_consistent(dd, dd_hat) is keep


def _segment(n, v_f, v_l, h0, dt=0.1, leader=5):
    t = np.arange(n) * dt
    pos = v_f * t
    return RawSegment(0, leader, 0, n, pos, h0 + (v_l - v_f) * t, None, None, DEFAULT_VEHICLE_LENGTH, DEFAULT_VEHICLE_LENGTH, 0)


def test_to_unified_steady_pair():
    traj = to_unified(_segment(30, 20.0, 20.0, 30.0), 0.1)
    np.testing.assert_allclose(traj.speed_diff, 0.0, atol=1e-9)
    np.testing.assert_allclose(traj.space_gap, 25.5)
    np.testing.assert_allclose(traj.speed_fav, 20.0)
    traj.validate()
    assert consistency_check(traj)


def test_to_unified_closing_leader():
    traj = to_unified(_segment(30, 20.0, 21.0, 30.0), 0.1)
    np.testing.assert_allclose(traj.speed_diff, 1.0, atol=1e-9)
    np.testing.assert_allclose(np.diff(traj.space_gap), 0.1, atol=1e-9)
    assert consistency_check(traj)


def test_to_unified_leader_ids():
    seg = _segment(10, 20.0, 20.0, 30.0, leader=5)
    assert all(rec.id_lv == -1 for rec in to_unified(seg, 0.1).records())
    assert to_unified(seg, 0.1, automated_ids={5}).id_lv == 5
    assert to_unified(_segment(3, 20.0, 20.0, 30.0), 0.1) is None


def test_identify_leaders_matches_oracle():
    for syn in generate_scenes(20, seed=11, n_timestamps=60):
        table = identify_leaders(syn.scene)
        assert table.leaders == brute_force_leaders(syn.scene, ALIGNMENT_COS)


def test_planted_leader_recovered():
    hits = total = 0
    for syn in generate_scenes(30, seed=5):
        table = identify_leaders(syn.scene)
        for k in planted_eligible(syn.scene, syn.planted_leader, ALIGNMENT_COS):
            total += 1
            hits += table.leaders[k] == syn.planted_leader
    assert total > 0.9 * 30 * 50
    assert hits / total >= 0.99


def test_synthetic_scene_determinism_and_truth():
    a = generate_synthetic_scene(PlantedPairSpec(n_distractors=2), seed=1)
    b = generate_synthetic_scene(PlantedPairSpec(n_distractors=2), seed=1)
    np.testing.assert_array_equal(a.scene.ego.xy, b.scene.ego.xy)
    for x, y in zip(a.scene.agents, b.scene.agents):
        np.testing.assert_array_equal(x.xy, y.xy)
    table = identify_leaders(a.scene)
    assert a.planted_leader in table.leaders


@pytest.mark.parametrize("seed", range(10))
def test_synthetic_planted_is_nearest_same_lane_leader(seed):
    syn = generate_synthetic_scene(PlantedPairSpec(n_distractors=4), seed=seed)
    ego_s = syn.along[syn.scene.ego.agent_id]
    for k in range(syn.scene.n_stamps):
        ahead = [
            (s[k] - ego_s[k], aid)
            for aid, s in syn.along.items()
            if aid != syn.scene.ego.agent_id and syn.lane_of[aid] == 0 and np.isfinite(s[k]) and s[k] > ego_s[k]
        ]
        assert min(ahead)[1] == syn.planted_leader


def test_curved_scene_rejected():
    syn = generate_synthetic_scene(PlantedPairSpec(curved=True), seed=3)
    assert syn.expected_rejected
    pts = syn.scene.ego.xy[syn.scene.ego.mask]
    assert least_squares_r2(pts) < 0.9
    assert extract_scene(syn.scene) == []


def test_extracted_trajectories_are_valid_and_consistent():
    scenes = [s.scene for s in generate_scenes(15, seed=9, n_timestamps=120)]
    out = extract_scenes(scenes)
    assert out
    assert [t.trajectory_id for t in out] == list(range(len(out)))
    for traj in out:
        traj.validate()
        assert consistency_check(traj)
        assert traj.id_lv == -1


def test_frenet_and_speed_anchor():
    scenes = [s.scene for s in generate_scenes(5, seed=2, coordinate_mode="frenet_lane", with_speeds=True, n_timestamps=80)]
    for syn_scene in scenes:
        table = identify_leaders(syn_scene)
        assert table.leaders.count(1) == syn_scene.n_stamps
        assert len(segment_by_leader(syn_scene, table)) == 1
    out = extract_scenes(scenes, ExtractionOptions(position_anchor="speeds"))
    assert len(out) == 5
    for traj in out:
        traj.validate()
        assert len(traj) == 79  # speeds anchor: only the acceleration difference costs a record


def test_parallel_extraction_matches_serial():
    scenes = [s.scene for s in generate_scenes(12, seed=21)]
    serial = extract_scenes(scenes, jobs=1)
    parallel = extract_scenes(scenes, jobs=3)
    assert len(serial) == len(parallel)
    for a, b in zip(serial, parallel):
        for name, col in a.columns().items():
            assert np.array_equal(col, getattr(b, name))


def test_filter_params_validation():
    with pytest.raises(ValueError):
        CandidateFilterParams(r2_threshold=0.0)
    with pytest.raises(ValueError):
        CandidateFilterParams(alignment_cos_threshold=1.5)
    with pytest.raises(ValueError):
        CandidateFilterParams(consistency_rel_threshold=0.0)
