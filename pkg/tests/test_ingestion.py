import numpy as np
import pytest

from ultratraj.errors import ConfigError, IngestError, SchemaError
from ultratraj.ingestion import (
    AdapterConfig,
    load_adapter_config,
    load_dataset_files,
    load_paired_dataset,
    load_scene_dataset,
    read_sources,
    validate_schema,
    write_scene_adapter,
    write_scenes_csv,
)
from ultratraj.synthetic import generate_scenes
from ultratraj.unified_csv import dumps_unified, loads_unified

SCENE = AdapterConfig("scene", {"time": "t", "agent_id": "id", "x": "px", "y": "py"}, 0.1, ego_id=0)
PAIRED_SPEEDS = AdapterConfig(
    "paired",
    {"time": "t", "speed_fav": "vf", "speed_lv": "vl", "space_gap": "gap"},
    0.1,
    position_anchor="speeds",
)
PAIRED_POS = AdapterConfig("paired", {"time": "t", "pair_id": "pair", "pos_fav": "xf", "pos_lv": "xl"}, 0.1)


def test_validate_schema_scene():
    assert validate_schema(SCENE, ["t", "id", "px", "py"]) == {"time": 0, "agent_id": 1, "x": 2, "y": 3}


def test_validate_schema_missing_role():
    cfg = AdapterConfig("paired", {"time": "t", "speed_fav": "vf", "space_gap": "gap"}, 0.1, position_anchor="speeds")
    with pytest.raises(SchemaError, match="speed_lv unmapped"):
        validate_schema(cfg, ["t", "vf", "gap"])


def test_validate_schema_extra_column_ignored():
    assert validate_schema(SCENE, ["weather", "t", "id", "px", "py"]) == {"time": 1, "agent_id": 2, "x": 3, "y": 4}


def test_validate_schema_duplicates():
    with pytest.raises(SchemaError, match="duplicate"):
        validate_schema(SCENE, ["t", "t", "id", "px", "py"])
    cfg = AdapterConfig("scene", {"time": "t", "agent_id": "t", "x": "px", "y": "py"}, 0.1, ego_id=0)
    with pytest.raises(SchemaError, match="mapped to both"):
        validate_schema(cfg, ["t", "px", "py"])


def test_adapter_rejects_bad_values():
    with pytest.raises(ConfigError):
        AdapterConfig("scene", {}, 0.0)
    with pytest.raises(ConfigError):
        AdapterConfig("other", {}, 0.1)
    with pytest.raises(ConfigError, match="unknown role"):
        AdapterConfig("paired", {"lane_id": "l"}, 0.1)


def _pair_rows(n, v_f=20.0, v_l=21.0, gap=25.0, dt=0.1, t0=0.0):
    rows = []
    for i in range(n):
        rows.append([f"{t0 + i * dt:.3f}", repr(v_f), repr(v_l), repr(gap + i * dt * (v_l - v_f))])
    return rows


def test_paired_single_trajectory():
    out = load_paired_dataset(PAIRED_SPEEDS, ["t", "vf", "vl", "gap"], _pair_rows(100))
    assert len(out) == 1
    traj = out[0]
    assert 2 <= len(traj) <= 100
    traj.validate()
    np.testing.assert_allclose(traj.speed_diff, 1.0)
    np.testing.assert_allclose(np.diff(traj.space_gap), 0.1, atol=1e-9)
    assert traj.id_lv == -1


def test_paired_time_hole_splits():
    rows = _pair_rows(50) + _pair_rows(50, t0=5.2)  # stamp 5.0 and 5.1 missing
    out = load_paired_dataset(PAIRED_SPEEDS, ["t", "vf", "vl", "gap"], rows)
    assert len(out) == 2
    assert [t.trajectory_id for t in out] == [0, 1]


def test_paired_unit_scale():
    cfg = AdapterConfig(
        "paired", PAIRED_SPEEDS.column_map, 0.1, position_anchor="speeds", unit_scale={"speed_fav": 1 / 3.6, "speed_lv": 1 / 3.6}
    )
    out = load_paired_dataset(cfg, ["t", "vf", "vl", "gap"], _pair_rows(10, v_f=72.0, v_l=72.0))
    assert out[0].speed_fav[0] == pytest.approx(20.0)


def test_paired_positions_anchor_and_pairs():
    rows = []
    for pair in ("a", "b"):
        for i in range(30):
            rows.append([pair, f"{i * 0.1:.1f}", repr(15.0 * i * 0.1), repr(30.0 + 16.0 * i * 0.1)])
    out = load_paired_dataset(PAIRED_POS, ["pair", "t", "xf", "xl"], rows)
    assert len(out) == 2
    for traj in out:
        traj.validate()
        np.testing.assert_allclose(traj.speed_fav, 15.0)
        np.testing.assert_allclose(traj.speed_lv, 16.0)


def test_paired_non_monotone_time_reports_row():
    rows = _pair_rows(5)
    rows[3][0] = "0.05"
    with pytest.raises(IngestError, match="not increasing") as info:
        load_paired_dataset(PAIRED_SPEEDS, ["t", "vf", "vl", "gap"], rows, source="pairs.csv")
    assert info.value.row == 5  # header is line 1, fourth data row is line 5
    assert "pairs.csv:5" in str(info.value)


def test_paired_bad_number():
    rows = _pair_rows(5)
    rows[1][1] = "fast"
    with pytest.raises(IngestError, match="not a number"):
        load_paired_dataset(PAIRED_SPEEDS, ["t", "vf", "vl", "gap"], rows)


def test_paired_reingest_is_idempotent():
    first = load_paired_dataset(PAIRED_SPEEDS, ["t", "vf", "vl", "gap"], _pair_rows(60))
    text = dumps_unified(first)
    assert dumps_unified(loads_unified(text)) == text


def _scene_rows(scene_id, n_agents, n_stamps, present=None):
    rows = []
    for k in range(n_stamps):
        for a in range(n_agents):
            if present and a in present and k not in present[a]:
                continue
            rows.append([str(scene_id), f"{k * 0.1:.1f}", str(a), repr(10.0 * a + k), "0.0"])
    return rows


SCENE_K = AdapterConfig("scene", {"scene_id": "s", "time": "t", "agent_id": "id", "x": "px", "y": "py"}, 0.1, ego_id=0)
SCENE_HEADER = ["s", "t", "id", "px", "py"]


def test_scene_three_agents():
    scenes = load_scene_dataset(SCENE_K, SCENE_HEADER, _scene_rows(0, 3, 50))
    assert len(scenes) == 1
    scene = scenes[0]
    assert scene.ego.agent_id == 0
    assert sorted(a.agent_id for a in scene.agents) == [1, 2]
    assert scene.n_stamps == 50


def test_scene_presence_mask():
    rows = _scene_rows(0, 3, 50, present={2: set(range(10, 30))})
    scene = load_scene_dataset(SCENE_K, SCENE_HEADER, rows)[0]
    agent = next(a for a in scene.agents if a.agent_id == 2)
    assert agent.mask.sum() == 20
    assert np.isnan(agent.xy[0, 0])


def test_scene_interleaved():
    a, b = _scene_rows(1, 2, 10), _scene_rows(2, 2, 10)
    rows = [r for pair in zip(a, b) for r in pair]
    scenes = load_scene_dataset(SCENE_K, SCENE_HEADER, rows)
    assert [s.scene_id for s in scenes] == [1, 2]


def test_scene_without_ego():
    rows = [r for r in _scene_rows(0, 3, 5) if r[2] != "0"]
    with pytest.raises(IngestError, match="no ego"):
        load_scene_dataset(SCENE_K, SCENE_HEADER, rows)


def test_scene_duplicate_agent_row():
    rows = _scene_rows(0, 2, 5)
    rows.append(list(rows[0]))
    with pytest.raises(IngestError, match="twice"):
        load_scene_dataset(SCENE_K, SCENE_HEADER, rows)


def test_scene_file_round_trip(tmp_path):
    scenes = [s.scene for s in generate_scenes(3, seed=4)]
    write_scenes_csv(scenes, tmp_path / "scenes.csv")
    write_scene_adapter(tmp_path / "adapter.ini", 0.1)
    cfg = load_adapter_config(tmp_path / "adapter.ini")
    loaded = load_dataset_files(cfg, tmp_path / "scenes.csv")
    assert len(loaded) == 3
    for orig, back in zip(scenes, loaded):
        assert back.ego.agent_id == orig.ego.agent_id
        np.testing.assert_array_equal(back.ego.mask, orig.ego.mask)
        np.testing.assert_allclose(back.ego.xy[back.ego.mask], orig.ego.xy[orig.ego.mask], rtol=0, atol=0)


def test_directory_of_shards(tmp_path):
    scenes = [s.scene for s in generate_scenes(2, seed=4)]
    (tmp_path / "d").mkdir()
    write_scenes_csv(scenes[:1], tmp_path / "d" / "a.csv")
    write_scenes_csv(scenes[1:], tmp_path / "d" / "b.csv")
    assert [t.name for t in read_sources(tmp_path / "d")] == ["a.csv", "b.csv"]
    (tmp_path / "empty").mkdir()
    with pytest.raises(IngestError, match="no CSV"):
        list(read_sources(tmp_path / "empty"))


def test_adapter_ini(tmp_path):
    path = tmp_path / "a.ini"
    path.write_text(
        "[adapter]\ndataset_category = paired\ndelta_t = 0.04\nposition_anchor = speeds\nautomated_ids = 3, 4\n"
        "[columns]\ntime = t\nspeed_fav = vf\nspeed_lv = vl\nspace_gap = g\n"
        "[unit_scale]\nspeed_fav = 0.2777777777777778\n"
    )
    cfg = load_adapter_config(path)
    assert cfg.delta_t == 0.04
    assert cfg.automated_ids == frozenset({3, 4})
    assert cfg.scale("speed_fav") == pytest.approx(1 / 3.6)
    assert cfg.scale("speed_lv") == 1.0


def test_adapter_ini_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_adapter_config(tmp_path / "missing.ini")
    bad = tmp_path / "bad.ini"
    bad.write_text("[adapter]\ndataset_category = scene\nthis line is broken\n")
    with pytest.raises(ConfigError, match=r"line\s+3"):
        load_adapter_config(bad)
