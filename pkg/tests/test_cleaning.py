import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import sigma_clip_oracle

from ultratraj.cleaning import (
    CleaningConfig,
    Interval,
    OutlierMask,
    bound_violations,
    clean_step2,
    clean_step3,
    mark_out_of_bounds,
    mark_outliers_iterative,
    marked_runs,
    reorganize,
    repair_or_remove,
    repair_series,
)
from ultratraj.synthetic import LinearCFSpec, generate_linear_cf_dataset
from ultratraj.unified_csv import dumps_unified

STEP3 = CleaningConfig().step3_bounds


# -- marking ---------------------------------------------------------------------


def test_sigma_clip_examples():
    assert mark_outliers_iterative([1, 1, 1, 1, 100], 1.0).tolist() == [False] * 4 + [True]
    assert not mark_outliers_iterative([5, 5, 5, 5], 0.5).any()
    marks = mark_outliers_iterative([1.0, np.nan, 1.0, 1.2], 100.0)
    assert marks.tolist() == [False, True, False, False]


def test_sigma_clip_all_missing():
    assert mark_outliers_iterative([np.nan, np.nan], 1.0).all()
    with pytest.raises(ValueError):
        mark_outliers_iterative([1.0, 2.0], 0.0)


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60),
    st.floats(0.5, 4.0),
)
def test_sigma_clip_matches_oracle(values, eta):
    assert mark_outliers_iterative(values, eta).tolist() == sigma_clip_oracle(values, eta)


def test_sigma_clip_marks_only_grow():
    rng = np.random.default_rng(0)
    x = rng.normal(size=200)
    x[::17] += rng.normal(0, 30, size=x[::17].size)
    final = mark_outliers_iterative(x, 2.0)
    # Replaying one pass from the final mask marks nothing new (fixpoint), and
    # every single-pass mask is contained in the final one.
    keep = ~final
    mean, std = x[keep].mean(), x[keep].std(ddof=1)
    assert not (keep & ((x < mean - 2 * std) | (x > mean + 2 * std))).any()
    first = (x < x.mean() - 2 * x.std(ddof=1)) | (x > x.mean() + 2 * x.std(ddof=1))
    assert not (first & ~final).any()


@pytest.mark.parametrize(
    "label, value, marked",
    [
        ("speed_fav", 0.05, True),
        ("speed_fav", 0.1, False),
        ("space_gap", 121.0, True),
        ("space_gap", 120.0, False),
        ("space_gap", 0.0, True),
        ("acc_fav", -5.0, False),
        ("acc_fav", -5.01, True),
        ("acc_lv", 5.0, False),
        ("speed_lv", math.nan, True),
    ],
)
def test_out_of_bounds_examples(label, value, marked):
    assert bool(mark_out_of_bounds([value], STEP3[label])[0]) is marked


def test_interval_parse():
    assert Interval.parse("(0,120]") == Interval(0.0, 120.0, False, True)
    assert Interval.parse("0.1,inf") == Interval(0.1, math.inf)
    # Plain "lo,hi" inherits the closedness of the interval it replaces.
    assert Interval.parse("0,30", STEP3["space_gap"]) == Interval(0.0, 30.0, False, True)
    with pytest.raises(ValueError):
        Interval.parse("5")
    with pytest.raises(ValueError):
        Interval.parse("5,1")


# -- repair ----------------------------------------------------------------------


def test_repair_examples():
    fixed, delete, interp = repair_series([1.0, 99.0, 3.0], [False, True, False])
    assert fixed.tolist() == [1.0, 2.0, 3.0]
    assert not delete.any() and interp.tolist() == [False, True, False]

    marks = np.zeros(30, bool)
    marks[5:15] = True
    _, delete, _ = repair_series(np.arange(30.0), marks)
    assert delete.sum() == 10 and delete[5:15].all()

    _, delete, _ = repair_series(np.arange(5.0), [True, False, False, False, False])
    assert delete.tolist() == [True, False, False, False, False]


def test_repair_nine_interior_marks_interpolated():
    marks = np.zeros(30, bool)
    marks[5:14] = True
    fixed, delete, interp = repair_series(np.arange(30.0) ** 2, marks)
    assert not delete.any() and interp.sum() == 9
    np.testing.assert_allclose(fixed[5:14], np.interp(np.arange(5, 14), [4, 14], [16.0, 196.0]))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(-50, 50), st.booleans()), min_size=2, max_size=80))
def test_interpolated_values_are_convex(pairs):
    values = np.array([v for v, _ in pairs])
    marks = np.array([m for _, m in pairs])
    fixed, delete, interp = repair_series(values, marks, consecutive_limit=5)
    assert not (delete & interp).any()
    assert ((delete | interp) == marks).all()
    for a, b in marked_runs(marks):
        if interp[a]:
            lo, hi = sorted((values[a - 1], values[b]))
            assert np.all(fixed[a:b] >= lo - 1e-9) and np.all(fixed[a:b] <= hi + 1e-9)


def test_repair_or_remove_restores_identities(cf_dataset):
    traj = cf_dataset[0]
    gap = traj.space_gap.copy()
    gap[10] = 500.0
    bad = traj.replace(space_gap=gap)
    marks = {label: np.zeros(len(traj), bool) for label in ("space_gap", "acc_fav")}
    marks["space_gap"][10] = True
    result = repair_or_remove(bad, OutlierMask(marks))
    out = result.surviving()
    out.validate()
    assert out.space_gap[10] == pytest.approx((traj.space_gap[9] + traj.space_gap[11]) / 2)


# -- re-organization ---------------------------------------------------------------


def test_reorganize_split_at_hole(cf_dataset):
    traj = generate_linear_cf_dataset(1, seed=3, spec=LinearCFSpec(n_points=151))[0]
    holed = traj.take(np.arange(151) != 80)
    out = reorganize([holed], 70)
    assert [len(t) for t in out] == [80, 70]
    assert [t.trajectory_id for t in out] == [0, 1]
    for t in out:
        assert t.time_index[0] == 0.0 and t.pos_fav[0] == 0.0
        assert t.pos_lv[0] == t.space_headway[0]
        t.validate()


def test_reorganize_drops_short_segment(cf_dataset):
    traj = generate_linear_cf_dataset(1, seed=3, spec=LinearCFSpec(n_points=69))[0]
    assert reorganize([traj], 70) == []
    assert len(reorganize([traj], 69)) == 1


# -- composed steps -----------------------------------------------------------------


def test_step2_removes_spike(cf_dataset):
    traj = cf_dataset[3]
    acc = traj.acc_fav.copy()
    acc[50] = -447.5
    spiked = list(cf_dataset)
    spiked[3] = traj.replace(acc_fav=acc)
    out = clean_step2(spiked)
    assert min(t.acc_fav.min() for t in out) > -10.0
    for t in out:
        t.validate()


def test_step2_clean_input_unchanged(cf_dataset):
    out = clean_step2(cf_dataset)
    assert dumps_unified(out) == dumps_unified(cf_dataset)


def test_step2_short_after_deletion_removed(cf_dataset):
    traj = cf_dataset[0]
    acc = traj.acc_fav.copy()
    acc[40:52] = np.nan  # twelve missing values in a row split 100 records into 40 + 48
    data = [traj.replace(acc_fav=acc)] + list(cf_dataset[1:])
    out = clean_step2(data)
    assert len(out) == len(cf_dataset) - 1


def test_step2_idempotent(cf_dataset):
    rng = np.random.default_rng(5)
    data = []
    for t in cf_dataset:
        acc = t.acc_fav.copy()
        idx = rng.choice(len(t), 3, replace=False)
        acc[idx] += rng.choice([-80.0, 80.0], 3)
        data.append(t.replace(acc_fav=acc))
    once = clean_step2(data)
    assert dumps_unified(clean_step2(once)) == dumps_unified(once)


def test_step2_trajectory_scope(cf_dataset):
    cfg = CleaningConfig(scope="trajectory")
    out = clean_step2(cf_dataset, cfg)
    assert len(out) == len(cf_dataset)


def test_step3_stationary_spell_excised():
    traj = generate_linear_cf_dataset(1, seed=1, spec=LinearCFSpec(n_points=400))[0]
    v = traj.speed_fav.copy()
    v[150:350] = 0.0
    out = clean_step3([traj.replace(speed_fav=v, speed_diff=traj.speed_lv - v)])
    assert [len(t) for t in out] == [150]
    assert bound_violations(out) == 0


def test_step3_single_gap_sample_interpolated(cf_dataset):
    traj = cf_dataset[0]
    gap = traj.space_gap.copy()
    gap[30] = 125.0
    data = [traj.replace(space_gap=gap, space_headway=gap + traj.half_length_sum, pos_lv=traj.pos_fav + gap + traj.half_length_sum)]
    out = clean_step3(data)
    assert len(out) == 1 and len(out[0]) == len(traj)
    assert out[0].space_gap[30] == pytest.approx((gap[29] + gap[31]) / 2)
    out[0].validate()


def test_config_validation():
    with pytest.raises(ValueError):
        CleaningConfig(eta_by_label={"acc_fav": 0.0})
    with pytest.raises(ValueError):
        CleaningConfig(eta_by_label={"pos_fav": 3.0})
    with pytest.raises(ValueError):
        CleaningConfig(min_trajectory_points=0)
    with pytest.raises(ValueError):
        CleaningConfig(scope="global")
