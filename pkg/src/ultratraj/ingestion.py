"""Schema-driven loading of raw trajectory recordings.

Two dataset categories are supported:

* ``paired``: every row already pairs a follower with its leader (speeds,
  positions and/or gaps of both vehicles).
* ``scene``: multi-agent recordings, one row per agent and time stamp; the
  leader has to be identified by :mod:`ultratraj.extraction`.

Each public dataset is described by an INI adapter file rather than code::

    [adapter]
    dataset_category = scene
    delta_t = 0.1
    coordinate_mode = euler
    position_anchor = positions
    ego_id = 0

    [columns]
    time = t
    agent_id = id
    x = px
    y = py

    [unit_scale]
    time = 0.001
"""
from __future__ import annotations

import configparser
import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Sequence

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
from .errors import ConfigError, IngestError, SchemaError

CATEGORIES = ("paired", "scene")
COORDINATE_MODES = ("euler", "frenet_lane")
POSITION_ANCHORS = ("positions", "speeds")

PAIRED_ROLES = (
    "time",
    "pair_id",
    "id_fav",
    "id_lv",
    "pos_fav",
    "pos_lv",
    "speed_fav",
    "speed_lv",
    "space_gap",
    "space_headway",
    "length_fav",
    "length_lv",
)
SCENE_ROLES = (
    "time",
    "scene_id",
    "agent_id",
    "x",
    "y",
    "s",
    "lane_id",
    "speed",
    "length",
    "follower_flag",
)

# Split paired recordings where consecutive stamps are further apart than this many steps.
TIME_GAP_FACTOR = 1.5


@dataclass(frozen=True)
class AdapterConfig:
    dataset_category: str
    column_map: Mapping[str, str]
    delta_t: float
    coordinate_mode: str = "euler"
    position_anchor: str = "positions"
    default_length: float = DEFAULT_VEHICLE_LENGTH
    unit_scale: Mapping[str, float] = field(default_factory=dict)
    ego_id: Optional[int] = None
    automated_ids: frozenset = frozenset()

    def __post_init__(self):
        if self.dataset_category not in CATEGORIES:
            raise ConfigError(f"dataset_category must be one of {CATEGORIES}, got {self.dataset_category!r}")
        if self.coordinate_mode not in COORDINATE_MODES:
            raise ConfigError(f"coordinate_mode must be one of {COORDINATE_MODES}, got {self.coordinate_mode!r}")
        if self.position_anchor not in POSITION_ANCHORS:
            raise ConfigError(f"position_anchor must be one of {POSITION_ANCHORS}, got {self.position_anchor!r}")
        if not self.delta_t > 0:
            raise ConfigError(f"delta_t must be positive, got {self.delta_t}")
        if not self.default_length > 0:
            raise ConfigError("default_length must be positive")
        known = PAIRED_ROLES if self.dataset_category == "paired" else SCENE_ROLES
        for role in list(self.column_map) + list(self.unit_scale):
            if role not in known:
                raise ConfigError(f"unknown role {role!r} for {self.dataset_category} datasets")

    def required_roles(self) -> tuple:
        if self.dataset_category == "paired":
            if self.position_anchor == "positions":
                return ("time", "pos_fav", "pos_lv")
            gap_role = "space_headway" if "space_headway" in self.column_map else "space_gap"
            return ("time", "speed_fav", "speed_lv", gap_role)
        roles = ["time", "agent_id"]
        roles += ["x", "y"] if self.coordinate_mode == "euler" else ["s", "lane_id"]
        if self.position_anchor == "speeds":
            roles.append("speed")
        return tuple(roles)

    def scale(self, role: str) -> float:
        return float(self.unit_scale.get(role, 1.0))


def _parse_id_list(text: str) -> frozenset:
    return frozenset(int(tok) for tok in text.replace(",", " ").split())


def adapter_from_parser(parser: configparser.ConfigParser, where: str = "<config>") -> AdapterConfig:
    if not parser.has_section("adapter"):
        raise ConfigError(f"{where}: missing [adapter] section")
    sec = parser["adapter"]
    try:
        ego = sec.get("ego_id")
        return AdapterConfig(
            dataset_category=sec.get("dataset_category", "").strip(),
            column_map=dict(parser["columns"]) if parser.has_section("columns") else {},
            delta_t=float(sec.get("delta_t", "nan")),
            coordinate_mode=sec.get("coordinate_mode", "euler").strip(),
            position_anchor=sec.get("position_anchor", "positions").strip(),
            default_length=float(sec.get("default_length", DEFAULT_VEHICLE_LENGTH)),
            unit_scale={k: float(v) for k, v in parser["unit_scale"].items()} if parser.has_section("unit_scale") else {},
            ego_id=int(ego) if ego not in (None, "") else None,
            automated_ids=_parse_id_list(sec.get("automated_ids", "")),
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def read_ini(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except configparser.Error as exc:
        # ParsingError / DuplicateOptionError messages carry the line number.
        raise ConfigError(f"{path}: {exc}") from None
    return parser


def load_adapter_config(path) -> AdapterConfig:
    return adapter_from_parser(read_ini(path), str(path))


def validate_schema(config: AdapterConfig, header: Sequence[str]) -> dict:
    """Resolve each mapped role to a column index of ``header``."""
    if not header:
        raise SchemaError("empty header")
    names = [h.strip() for h in header]
    index = {}
    for j, name in enumerate(names):
        if name in index:
            raise SchemaError(f"duplicate column {name!r} in header")
        index[name] = j
    for role in config.required_roles():
        if role not in config.column_map:
            raise SchemaError(f"{role} unmapped")
    seen = {}
    mapping = {}
    for role, column in config.column_map.items():
        column = column.strip()
        if column in seen:
            raise SchemaError(f"column {column!r} mapped to both {seen[column]} and {role}")
        seen[column] = role
        if column not in index:
            raise SchemaError(f"{role}: column {column!r} not in header")
        mapping[role] = index[column]
    return mapping


# -- source files -------------------------------------------------------------


@dataclass
class SourceTable:
    name: str
    header: list
    rows: list  # (line number, fields)


def read_sources(path) -> Iterator[SourceTable]:
    """A CSV file, or every ``*.csv`` shard of a directory in name order."""
    path = Path(path)
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    if not files:
        raise IngestError("no CSV files found", str(path))
    for f in files:
        try:
            fh = open(f, newline="", encoding="utf-8")
        except OSError as exc:
            raise IngestError(str(exc), str(f)) from None
        with fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise IngestError("empty file", str(f)) from None
            rows = [(i, row) for i, row in enumerate(reader, start=2) if row]
        yield SourceTable(f.name, header, rows)


def _number(text: str, source, row) -> float:
    text = text.strip()
    if not text:
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise IngestError(f"not a number: {text!r}", source, row) from None


def _truthy(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "y", "t", "1.0")


# -- paired datasets ------------------------------------------------------------


def _paired_trajectory(config: AdapterConfig, cols: dict, id_fav: int, id_lv: int) -> Optional[LongitudinalTrajectory]:
    dt = config.delta_t
    lf = _first_finite(cols.get("length_fav"), config.default_length)
    ll = _first_finite(cols.get("length_lv"), config.default_length)
    half = (lf + ll) / 2.0
    n = cols["time"].size
    gap = None
    if config.position_anchor == "positions":
        if n < 3:
            return None
        pos_fav, pos_lv = cols["pos_fav"], cols["pos_lv"]
        speed_fav = derive_speed_series(pos_fav, dt)
        speed_lv = derive_speed_series(pos_lv, dt)
        headway = pos_lv - pos_fav
    else:
        if n < 2:
            return None
        speed_fav, speed_lv = cols["speed_fav"], cols["speed_lv"]
        pos_fav = integrate_position(0.0, speed_fav, dt)
        if "space_headway" in cols:
            headway = cols["space_headway"]
            gap = cols.get("space_gap")
        else:
            gap = cols["space_gap"]
            headway = gap + half
    return build_trajectory(
        trajectory_id=0,
        delta_t=dt,
        id_fav=id_fav,
        id_lv=id_lv,
        pos_fav=pos_fav,
        speed_fav=speed_fav,
        acc_fav=derive_accel_series(speed_fav, dt),
        speed_lv=speed_lv,
        acc_lv=derive_accel_series(speed_lv, dt),
        space_headway=headway,
        fav_length=lf,
        lv_length=ll,
        space_gap=gap,
    )


def _first_finite(values, default: float) -> float:
    if values is None:
        return default
    finite = values[np.isfinite(values) & (values > 0)]
    return float(finite[0]) if finite.size else default


def load_paired_dataset(config: AdapterConfig, header: Sequence[str], rows: Iterable, source: str = "<rows>") -> list:
    """Trajectories from pre-paired rows.

    ``rows`` yields field lists, or ``(line_number, fields)`` pairs as produced
    by :func:`read_sources`. Trajectory ids are assigned sequentially in order
    of first appearance of each pair.
    """
    if config.dataset_category != "paired":
        raise ConfigError("load_paired_dataset needs a paired adapter")
    mapping = validate_schema(config, header)
    numeric = [r for r in mapping if r not in ("pair_id",)]
    groups: dict = {}
    for lineno, fields in _numbered(rows):
        if len(fields) < len(header):
            raise IngestError(f"expected {len(header)} fields, got {len(fields)}", source, lineno)
        key = fields[mapping["pair_id"]].strip() if "pair_id" in mapping else ""
        values = {role: _number(fields[mapping[role]], source, lineno) * config.scale(role) for role in numeric}
        groups.setdefault(key, []).append((lineno, values))

    dataset = []
    dt = config.delta_t
    for key, group in groups.items():
        times = np.array([v["time"] for _, v in group])
        if np.any(~np.isfinite(times)):
            bad = group[int(np.flatnonzero(~np.isfinite(times))[0])][0]
            raise IngestError("missing time value", source, bad)
        step = np.diff(times)
        if np.any(step <= 0):
            bad = group[int(np.flatnonzero(step <= 0)[0]) + 1][0]
            raise IngestError(f"time not increasing within pair {key!r}", source, bad)
        breaks = step > TIME_GAP_FACTOR * dt
        if "id_lv" in mapping:
            lv = np.array([v["id_lv"] for _, v in group])
            breaks |= lv[1:] != lv[:-1]
        starts = np.concatenate([[0], np.flatnonzero(breaks) + 1])
        stops = np.concatenate([starts[1:], [len(group)]])
        for a, b in zip(starts, stops):
            chunk = [v for _, v in group[a:b]]
            cols = {role: np.array([v[role] for v in chunk]) for role in numeric}
            id_fav = int(cols["id_fav"][0]) if "id_fav" in cols and np.isfinite(cols["id_fav"][0]) else 0
            if "id_lv" in cols and np.isfinite(cols["id_lv"][0]):
                id_lv = int(cols["id_lv"][0])
                if id_lv not in config.automated_ids:
                    id_lv = HUMAN_LEADER_ID
            else:
                id_lv = HUMAN_LEADER_ID
            traj = _paired_trajectory(config, cols, id_fav, id_lv)
            if traj is not None and len(traj) >= 2:
                dataset.append(traj.replace(trajectory_id=len(dataset)))
    return dataset


def _numbered(rows):
    for i, row in enumerate(rows, start=2):
        if isinstance(row, tuple) and len(row) == 2 and isinstance(row[0], int) and not isinstance(row[1], str):
            yield row
        else:
            yield i, list(row)


# -- scene datasets -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AgentTrack:
    """One agent on the scene's time grid; absent stamps hold NaN."""

    agent_id: int
    mask: np.ndarray
    xy: Optional[np.ndarray] = None  # (K, 2), euler mode
    s: Optional[np.ndarray] = None  # (K,), frenet mode
    lane: Optional[np.ndarray] = None  # (K,), frenet mode
    speed: Optional[np.ndarray] = None
    length: Optional[float] = None

    def __post_init__(self):
        k = self.mask.size
        for name in ("xy", "s", "lane", "speed"):
            arr = getattr(self, name)
            if arr is not None and arr.shape[0] != k:
                raise ValueError(f"agent {self.agent_id}: {name} has {arr.shape[0]} stamps, mask has {k}")


@dataclass(frozen=True, eq=False)
class RawScene:
    scene_id: int
    timestamps: np.ndarray
    delta_t: float
    ego: AgentTrack
    agents: tuple
    coordinate_mode: str = "euler"

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("timestamps must be strictly increasing")
        for track in (self.ego, *self.agents):
            if track.mask.size != t.size:
                raise ValueError(f"agent {track.agent_id}: mask length != timestamp count")

    @property
    def n_stamps(self) -> int:
        return self.timestamps.size


def load_scene_dataset(config: AdapterConfig, header: Sequence[str], rows: Iterable, source: str = "<rows>") -> list:
    """One :class:`RawScene` per scene key, in order of first appearance."""
    if config.dataset_category != "scene":
        raise ConfigError("load_scene_dataset needs a scene adapter")
    mapping = validate_schema(config, header)
    if "follower_flag" not in mapping and config.ego_id is None:
        raise SchemaError("follower_flag unmapped and no ego_id configured")
    numeric = [r for r in mapping if r not in ("scene_id", "follower_flag")]
    scenes: dict = {}
    for lineno, fields in _numbered(rows):
        if len(fields) < len(header):
            raise IngestError(f"expected {len(header)} fields, got {len(fields)}", source, lineno)
        key = fields[mapping["scene_id"]].strip() if "scene_id" in mapping else "0"
        values = {role: _number(fields[mapping[role]], source, lineno) * config.scale(role) for role in numeric}
        values["ego"] = _truthy(fields[mapping["follower_flag"]]) if "follower_flag" in mapping else False
        if not math.isfinite(values["time"]) or not math.isfinite(values["agent_id"]):
            raise IngestError("missing time or agent id", source, lineno)
        scenes.setdefault(key, []).append((lineno, values))

    out = []
    for order, (key, rows_) in enumerate(scenes.items()):
        try:
            scene_id = int(float(key))
        except ValueError:
            scene_id = order
        out.append(_build_scene(config, scene_id, rows_, source))
    return out


def _build_scene(config: AdapterConfig, scene_id: int, rows, source) -> RawScene:
    dt = config.delta_t
    times = np.array([v["time"] for _, v in rows])
    t0 = times.min()
    k_float = (times - t0) / dt
    k = np.rint(k_float).astype(np.int64)
    off = np.abs(k_float - k) > 0.25
    if np.any(off):
        raise IngestError(f"time {times[off][0]} not on the {dt} s grid of scene {scene_id}", source, rows[int(np.flatnonzero(off)[0])][0])
    n_stamps = int(k.max()) + 1
    timestamps = t0 + np.arange(n_stamps) * dt

    by_agent: dict = {}
    ego_ids = set()
    for (lineno, v), ki in zip(rows, k):
        aid = int(v["agent_id"])
        slot = by_agent.setdefault(aid, {})
        if ki in slot:
            raise IngestError(f"agent {aid} appears twice at time {v['time']}", source, lineno)
        slot[ki] = v
        if v["ego"] or (config.ego_id is not None and aid == config.ego_id):
            ego_ids.add(aid)
    if not ego_ids:
        raise IngestError(f"scene {scene_id} has no ego track", source)
    if len(ego_ids) > 1:
        raise IngestError(f"scene {scene_id} has several ego tracks {sorted(ego_ids)}", source)

    tracks = {aid: _build_track(config, aid, slot, n_stamps) for aid, slot in sorted(by_agent.items())}
    ego = tracks.pop(ego_ids.pop())
    return RawScene(
        scene_id=scene_id,
        timestamps=timestamps,
        delta_t=dt,
        ego=ego,
        agents=tuple(tracks.values()),
        coordinate_mode=config.coordinate_mode,
    )


def _build_track(config: AdapterConfig, aid: int, slot: dict, n_stamps: int) -> AgentTrack:
    mask = np.zeros(n_stamps, dtype=bool)
    idx = np.fromiter(slot.keys(), dtype=np.int64)
    mask[idx] = True

    def column(role):
        arr = np.full(n_stamps, np.nan)
        arr[idx] = [v[role] for v in slot.values()]
        return arr

    kw = {}
    if config.coordinate_mode == "euler":
        kw["xy"] = np.column_stack([column("x"), column("y")])
    else:
        kw["s"] = column("s")
        kw["lane"] = column("lane_id")
    if "speed" in config.column_map:
        kw["speed"] = column("speed")
    length = None
    if "length" in config.column_map:
        lengths = column("length")
        good = lengths[np.isfinite(lengths) & (lengths > 0)]
        length = float(good[0]) if good.size else None
    # Positions missing at a present stamp count as absent.
    pos = kw["xy"][:, 0] + kw["xy"][:, 1] if "xy" in kw else kw["s"] + kw["lane"]
    mask &= np.isfinite(pos)
    return AgentTrack(agent_id=aid, mask=mask, length=length, **kw)


def load_dataset_files(config: AdapterConfig, path) -> list:
    """Load every source table under ``path`` according to the adapter's category."""
    out = []
    for table in read_sources(path):
        if config.dataset_category == "paired":
            loaded = load_paired_dataset(config, table.header, table.rows, table.name)
            out.extend(t.replace(trajectory_id=len(out) + i) for i, t in enumerate(loaded))
        else:
            out.extend(load_scene_dataset(config, table.header, table.rows, table.name))
    return out


def scene_to_rows(scene: RawScene) -> Iterator[list]:
    """Rows for the synthetic scene CSV layout (see :data:`SYNTH_COLUMNS`)."""
    tracks = [scene.ego, *scene.agents]
    for ki, t in enumerate(scene.timestamps):
        for track in tracks:
            if not track.mask[ki]:
                continue
            if scene.coordinate_mode == "euler":
                a, b = track.xy[ki]
            else:
                a, b = track.s[ki], track.lane[ki]
            speed = "" if track.speed is None else repr(float(track.speed[ki]))
            length = "" if track.length is None else repr(float(track.length))
            yield [
                str(scene.scene_id),
                repr(round(float(t), 9)),
                str(track.agent_id),
                repr(float(a)),
                repr(float(b)),
                speed,
                length,
                "1" if track is scene.ego else "0",
            ]


SYNTH_COLUMNS = ("scene", "t", "agent", "c1", "c2", "speed", "length", "ego")


def write_scenes_csv(scenes: Sequence[RawScene], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SYNTH_COLUMNS)
        for scene in scenes:
            writer.writerows(scene_to_rows(scene))


def write_scene_adapter(path, delta_t: float, coordinate_mode: str = "euler", with_speeds: bool = False) -> None:
    """Adapter INI matching :func:`write_scenes_csv` output."""
    parser = configparser.ConfigParser(interpolation=None)
    parser["adapter"] = {
        "dataset_category": "scene",
        "delta_t": repr(float(delta_t)),
        "coordinate_mode": coordinate_mode,
        "position_anchor": "speeds" if with_speeds else "positions",
    }
    columns = {"scene_id": "scene", "time": "t", "agent_id": "agent", "length": "length", "follower_flag": "ego"}
    if coordinate_mode == "euler":
        columns.update(x="c1", y="c2")
    else:
        columns.update(s="c1", lane_id="c2")
    if with_speeds:
        columns["speed"] = "speed"
    parser["columns"] = columns
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


def config_exists(path) -> bool:
    return path is not None and os.path.isfile(path)
