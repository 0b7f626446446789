"""Stage composition, configuration resolution and run manifests."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional

from . import analysis, cleaning, extraction, ingestion, metrics
from .cleaning import CleaningConfig, Interval
from .core import record_count
from .errors import ConfigError, StageError, UltraTrajError
from .extraction import CandidateFilterParams, ExtractionOptions
from .ingestion import AdapterConfig
from .unified_csv import read_unified, write_table, write_unified

log = logging.getLogger(__name__)

STEP1_FILE = "step1_extracted.csv"
STEP2_FILE = "step2_longitudinal.csv"
STEP3_FILE = "step3_car_following.csv"
METRICS_FILE = "metrics.csv"
MANIFEST_FILE = "manifest.json"


@dataclass(frozen=True)
class RunConfig:
    adapter_path: Optional[str] = None
    adapter: Optional[AdapterConfig] = None
    input_path: Optional[str] = None
    output_dir: Optional[str] = None
    jobs: int = 1
    seed: int = 0
    filters: CandidateFilterParams = field(default_factory=CandidateFilterParams)
    cleaning: CleaningConfig = field(default_factory=CleaningConfig)

    def require_adapter(self) -> AdapterConfig:
        if self.adapter is None:
            raise ConfigError("no adapter configured (use --config with an [adapter] section, or --adapter)")
        return self.adapter


# -- configuration ------------------------------------------------------------------


def _get(parser, section, key):
    if parser is not None and parser.has_section(section) and key in parser[section]:
        return parser[section][key].strip()
    return None


def _convert(value, kind, what):
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value for {what}: {value!r}") from None


def resolve_config(config_path=None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Defaults, then the INI file, then explicit overrides (highest precedence).

    Override keys: ``adapter``, ``input``, ``output_dir``, ``jobs``, ``seed``,
    ``r2``, ``cos``, ``consistency``, ``min_points``, ``consecutive_limit``,
    ``scope``, ``eta`` (label -> value) and ``bounds`` (label -> interval text).
    ``None`` values are ignored.
    """
    ov = {k: v for k, v in (overrides or {}).items() if v is not None}
    parser = None
    base = Path(".")
    if config_path is not None:
        parser = ingestion.read_ini(config_path)
        base = Path(config_path).parent

    def pick(key, section, file_key, kind, default):
        if key in ov:
            return _convert(ov[key], kind, key)
        raw = _get(parser, section, file_key)
        return default if raw is None else _convert(raw, kind, f"[{section}] {file_key}")

    # adapter: inline sections, a path in [run], or an explicit override path
    adapter = None
    adapter_path = ov.get("adapter")
    if adapter_path is None and _get(parser, "run", "adapter"):
        adapter_path = str(base / _get(parser, "run", "adapter"))
    if adapter_path is not None:
        if not os.path.isfile(adapter_path):
            raise ConfigError(f"adapter file not found: {adapter_path}")
        adapter = ingestion.load_adapter_config(adapter_path)
    elif parser is not None and parser.has_section("adapter"):
        adapter = ingestion.adapter_from_parser(parser, str(config_path))
        adapter_path = str(config_path)

    input_path = ov.get("input")
    if input_path is None and _get(parser, "run", "input"):
        input_path = str(base / _get(parser, "run", "input"))

    defaults_f = CandidateFilterParams()
    try:
        filters = CandidateFilterParams(
            r2_threshold=pick("r2", "extraction", "r2", float, defaults_f.r2_threshold),
            alignment_cos_threshold=pick("cos", "extraction", "cos", float, defaults_f.alignment_cos_threshold),
            consistency_rel_threshold=pick("consistency", "extraction", "consistency", float, defaults_f.consistency_rel_threshold),
            max_leader_gap=pick("max_leader_gap", "extraction", "max_leader_gap", float, defaults_f.max_leader_gap),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    defaults_c = CleaningConfig()
    eta = dict(defaults_c.eta_by_label)
    if parser is not None and parser.has_section("eta"):
        eta.update({k: _convert(v, float, f"[eta] {k}") for k, v in parser["eta"].items()})
    eta.update({k: _convert(v, float, f"eta {k}") for k, v in ov.get("eta", {}).items()})
    bounds = dict(defaults_c.step3_bounds)
    file_bounds = dict(parser["bounds"]) if parser is not None and parser.has_section("bounds") else {}
    for label, text in list(file_bounds.items()) + list(ov.get("bounds", {}).items()):
        try:
            bounds[label] = Interval.parse(text, bounds.get(label))
        except ValueError as exc:
            raise ConfigError(f"bounds for {label}: {exc}") from None
    try:
        clean_cfg = CleaningConfig(
            eta_by_label=eta,
            consecutive_limit=pick("consecutive_limit", "cleaning", "consecutive_limit", int, defaults_c.consecutive_limit),
            min_trajectory_points=pick("min_points", "cleaning", "min_points", int, defaults_c.min_trajectory_points),
            step3_bounds=bounds,
            scope=pick("scope", "cleaning", "scope", str, defaults_c.scope),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    output_dir = ov.get("output_dir")
    if output_dir is None and _get(parser, "run", "output_dir"):
        output_dir = str(base / _get(parser, "run", "output_dir"))
    jobs = pick("jobs", "run", "jobs", int, 1)
    if jobs < 1:
        raise ConfigError("jobs must be at least 1")
    return RunConfig(
        adapter_path=adapter_path,
        adapter=adapter,
        input_path=input_path,
        output_dir=output_dir,
        jobs=jobs,
        seed=pick("seed", "run", "seed", int, 0),
        filters=filters,
        cleaning=clean_cfg,
    )


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if hasattr(obj, "tolist"):
        return obj.tolist()
    return obj


def config_digest(*parts) -> str:
    text = json.dumps([_jsonable(p) for p in parts], sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# -- manifest -----------------------------------------------------------------------


@dataclass
class StageRecord:
    stage: str
    inputs: list
    outputs: list
    config_digest: str
    records_in: int
    records_out: int
    wall_time_s: float = 0.0


@dataclass
class PipelineManifest:
    stages: list = field(default_factory=list)

    def to_dict(self, with_timings: bool = True) -> dict:
        stages = []
        for s in self.stages:
            d = dataclasses.asdict(s)
            if not with_timings:
                d.pop("wall_time_s")
            stages.append(d)
        return {"stages": stages}

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def read(cls, path) -> "PipelineManifest":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls([StageRecord(**s) for s in data["stages"]])


# -- output helpers -------------------------------------------------------------------


def _atomic(path: Path, writer: Callable[[Path], None]) -> None:
    """Write via ``<path>.partial``; the partial file is left behind on failure."""
    partial = path.with_name(path.name + ".partial")
    writer(partial)
    os.replace(partial, path)


def save_unified(dataset, path) -> None:
    _atomic(Path(path), lambda p: write_unified(dataset, p))


def save_table(header, rows, path) -> None:
    rows = list(rows)
    _atomic(Path(path), lambda p: write_table(header, rows, p))


# -- stage bodies (shared with the CLI) ------------------------------------------------


def run_extract(cfg: RunConfig, input_path, output_path) -> tuple:
    """Load raw data, identify leaders if needed, write Step-1 unified CSV.

    Returns ``(records_in, dataset)``.
    """
    adapter = cfg.require_adapter()
    tables = list(ingestion.read_sources(input_path))
    records_in = sum(len(t.rows) for t in tables)
    if adapter.dataset_category == "paired":
        dataset = []
        for table in tables:
            for traj in ingestion.load_paired_dataset(adapter, table.header, table.rows, table.name):
                dataset.append(traj.replace(trajectory_id=len(dataset)))
    else:
        scenes = []
        for table in tables:
            scenes.extend(ingestion.load_scene_dataset(adapter, table.header, table.rows, table.name))
        options = ExtractionOptions(cfg.filters, adapter.position_anchor, adapter.automated_ids)
        dataset = extraction.extract_scenes(scenes, options, jobs=cfg.jobs)
    save_unified(dataset, output_path)
    return records_in, dataset


def run_clean(cfg: RunConfig, input_path, output_path) -> tuple:
    dataset = read_unified(input_path)
    out = cleaning.clean_step2(dataset, cfg.cleaning)
    save_unified(out, output_path)
    return record_count(dataset), out


def run_cf_filter(cfg: RunConfig, input_path, output_path) -> tuple:
    dataset = read_unified(input_path)
    out = cleaning.clean_step3(dataset, cfg.cleaning)
    save_unified(out, output_path)
    return record_count(dataset), out


def run_metrics(input_path, output_path, coeffs=metrics.DEFAULT_COEFFS) -> tuple:
    dataset = read_unified(input_path)
    table = metrics.dataset_metrics(dataset, coeffs)
    save_table(metrics.METRIC_COLUMNS, metrics.metric_rows(table), output_path)
    return record_count(dataset), sum(len(m) for m in table)


def write_stats(dataset, path) -> None:
    rows = analysis.stats_rows(analysis.label_stats(dataset)) if record_count(dataset) else []
    save_table(("Label", "Statistic", "Value"), rows, path)


def write_correlations(dataset, path, name="1") -> None:
    rows = []
    if record_count(dataset) >= 2:
        try:
            rows = list(analysis.correlation_rows(analysis.correlation_report(dataset), name))
        except UltraTrajError as exc:
            log.warning("correlations skipped: %s", exc)
    save_table(analysis.CORRELATION_COLUMNS, rows, path)


def write_calibration(dataset, path) -> None:
    rows = []
    try:
        rows = list(analysis.calibration_rows(analysis.calibrate_linear_cf(dataset)))
    except UltraTrajError as exc:
        log.warning("calibration skipped: %s", exc)
    save_table(analysis.CALIBRATION_COLUMNS, rows, path)


def write_scatter(dataset, path) -> None:
    save_table(analysis.SCATTER_COLUMNS, analysis.scatter_export(dataset), path)


def run_analysis(out_dir: Path, step_files: Mapping[str, Path]) -> tuple:
    outputs = []
    final = None
    for step, path in step_files.items():
        dataset = read_unified(path) if _has_records(path) else []
        name = f"stats_{step}.csv"
        write_stats(dataset, out_dir / name)
        outputs.append(name)
        final = dataset
    write_correlations(final, out_dir / "correlations.csv")
    write_calibration(final, out_dir / "calibration.csv")
    write_scatter(final, out_dir / "scatter.csv")
    outputs += ["correlations.csv", "calibration.csv", "scatter.csv"]
    n = record_count(final)
    return n, n, outputs


def _has_records(path) -> bool:
    with open(path, encoding="utf-8") as fh:
        fh.readline()
        return bool(fh.readline().strip())


# -- full pipeline -----------------------------------------------------------------------


def run_pipeline(cfg: RunConfig) -> PipelineManifest:
    """extract -> clean -> cf-filter -> metrics -> analysis, persisting every step."""
    adapter = cfg.require_adapter()
    if cfg.input_path is None or not os.path.exists(cfg.input_path):
        raise ConfigError(f"input not found: {cfg.input_path}")
    if cfg.output_dir is None:
        raise ConfigError("no output directory configured")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = PipelineManifest()

    def stage(name, digest, inputs, body):
        log.info("stage %s", name)
        start = time.perf_counter()
        try:
            records_in, records_out, outputs = body()
        except Exception as exc:
            raise StageError(name, exc) from exc
        manifest.stages.append(
            StageRecord(name, inputs, outputs, digest, records_in, records_out, round(time.perf_counter() - start, 6))
        )
        log.info("stage %s: %d -> %d records", name, records_in, records_out)

    def extract():
        n_in, ds = run_extract(cfg, cfg.input_path, out / STEP1_FILE)
        return n_in, record_count(ds), [STEP1_FILE]

    def clean():
        n_in, ds = run_clean(cfg, out / STEP1_FILE, out / STEP2_FILE)
        return n_in, record_count(ds), [STEP2_FILE]

    def cf_filter():
        n_in, ds = run_cf_filter(cfg, out / STEP2_FILE, out / STEP3_FILE)
        return n_in, record_count(ds), [STEP3_FILE]

    def metric_stage():
        n_in, n_out = run_metrics(out / STEP3_FILE, out / METRICS_FILE)
        return n_in, n_out, [METRICS_FILE]

    def analysis_stage():
        return run_analysis(out, {"step1": out / STEP1_FILE, "step2": out / STEP2_FILE, "step3": out / STEP3_FILE})

    stage("extract", config_digest(adapter, cfg.filters), [str(cfg.input_path)], extract)
    stage("clean", config_digest(cfg.cleaning), [STEP1_FILE], clean)
    stage("cf-filter", config_digest(cfg.cleaning), [STEP2_FILE], cf_filter)
    stage("metrics", config_digest(metrics.DEFAULT_COEFFS), [STEP3_FILE], metric_stage)
    stage("analysis", config_digest("window=3"), [STEP1_FILE, STEP2_FILE, STEP3_FILE], analysis_stage)
    manifest.write(out / MANIFEST_FILE)
    return manifest
