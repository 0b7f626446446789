"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 ingest error, 4 stage error.
Log verbosity follows the ``ULTRA_TRAJ_LOG`` environment variable.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import analysis, ingestion, pipeline, synthetic
from .errors import ConfigError, IngestError, SchemaError, StageError
from .unified_csv import read_column, read_unified

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INGEST = 3
EXIT_STAGE = 4

log = logging.getLogger("ultratraj")


def _key_value(text: str) -> tuple:
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise argparse.ArgumentTypeError(f"expected LABEL=VALUE, got {text!r}")
    return key.strip(), value.strip()


def _global_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", help="INI file with [run], [adapter], [extraction], [cleaning], [eta], [bounds]")
    g.add_argument("--output-dir", help="directory for outputs")
    g.add_argument("--jobs", type=int, help="worker processes for extraction")
    g.add_argument("--seed", type=int, help="random seed (synth)")
    return p


def _io(p, output=True, default_name=None):
    p.add_argument("--input", required=True, help="input file")
    if output:
        p.add_argument("--output", help=f"output file (default: <output-dir>/{default_name})")


def _cleaning_flags(p):
    p.add_argument("--eta", action="append", type=_key_value, default=[], metavar="LABEL=ETA")
    p.add_argument("--bounds", action="append", type=_key_value, default=[], metavar="LABEL=LO,HI")
    p.add_argument("--min-points", type=int)
    p.add_argument("--consecutive-limit", type=int)
    p.add_argument("--scope", choices=("dataset", "trajectory"))


def _extraction_flags(p):
    p.add_argument("--adapter", help="adapter INI (overrides the one named in --config)")
    p.add_argument("--r2", type=float, help="straightness threshold")
    p.add_argument("--cos", type=float, help="alignment cosine threshold")
    p.add_argument("--consistency", type=float, help="relative gap-consistency threshold")


def build_parser() -> argparse.ArgumentParser:
    common = _global_parser()
    parser = argparse.ArgumentParser(prog="ultratraj", description="Automated-vehicle trajectory processing.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", parents=[common], help="raw data -> unified car-following CSV")
    _io(p, default_name=pipeline.STEP1_FILE)
    _extraction_flags(p)

    p = sub.add_parser("clean", parents=[common], help="outlier removal and re-organization")
    _io(p, default_name=pipeline.STEP2_FILE)
    _cleaning_flags(p)

    p = sub.add_parser("cf-filter", parents=[common], help="car-following bounds")
    _io(p, default_name=pipeline.STEP3_FILE)
    _cleaning_flags(p)

    p = sub.add_parser("metrics", parents=[common], help="safety, mobility, stability and fuel metrics")
    _io(p, default_name=pipeline.METRICS_FILE)

    p = sub.add_parser("stats", parents=[common], help="per-label mean/std/min/max")
    _io(p, default_name="stats.csv")

    p = sub.add_parser("correlate", parents=[common], help="Pearson/Spearman of follower acceleration")
    _io(p, default_name="correlations.csv")
    p.add_argument("--name", default="1", help="dataset name for the output row")

    p = sub.add_parser("hist", parents=[common], help="density histogram of one column")
    _io(p, default_name="hist.csv")
    p.add_argument("--label", required=True, help="column name, e.g. Space_Gap")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--bins", type=int)
    g.add_argument("--bin-width", type=float)

    p = sub.add_parser("scatter", parents=[common], help="smoothed acceleration vs. gap/speed/speed difference")
    _io(p, default_name="scatter.csv")

    p = sub.add_parser("calibrate", parents=[common], help="least-squares linear car-following model")
    _io(p, default_name="calibration.csv")

    p = sub.add_parser("run", parents=[common], help="full pipeline")
    p.add_argument("--input", help="raw input file or directory (overrides [run] input)")
    _extraction_flags(p)
    _cleaning_flags(p)

    p = sub.add_parser("synth", parents=[common], help="write synthetic scenes and a matching adapter")
    p.add_argument("--scenes", type=int, default=10)
    p.add_argument("--timestamps", type=int, default=300)
    p.add_argument("--distractors", type=int, default=3)
    p.add_argument("--delta-t", type=float, default=0.1)
    p.add_argument("--frenet", action="store_true", help="lane/arc-length coordinates instead of x/y")
    p.add_argument("--with-speeds", action="store_true", help="include speeds and anchor on them")
    p.add_argument("--curved", action="store_true")
    return parser


def _overrides(args) -> dict:
    ov = {
        "output_dir": args.output_dir,
        "jobs": args.jobs,
        "seed": args.seed,
    }
    for name in ("adapter", "r2", "cos", "consistency", "min_points", "consecutive_limit", "scope"):
        ov[name] = getattr(args, name, None)
    if getattr(args, "eta", None):
        ov["eta"] = dict(args.eta)
    if getattr(args, "bounds", None):
        ov["bounds"] = dict(args.bounds)
    if args.command == "run":
        ov["input"] = args.input
    return ov


def _output(args, cfg, default_name) -> Path:
    if getattr(args, "output", None):
        path = Path(args.output)
    elif cfg.output_dir:
        path = Path(cfg.output_dir) / default_name
    else:
        raise ConfigError("give --output or --output-dir")
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _require_input(path):
    if not os.path.exists(path):
        raise ConfigError(f"input not found: {path}")


def _dispatch(args) -> None:
    cfg = pipeline.resolve_config(args.config, _overrides(args))
    cmd = args.command

    if cmd == "run":
        manifest = pipeline.run_pipeline(cfg)
        for s in manifest.stages:
            print(f"{s.stage}: {s.records_in} -> {s.records_out} records ({s.wall_time_s:.2f} s)")
        return

    if cmd == "synth":
        out = Path(cfg.output_dir or ".")
        out.mkdir(parents=True, exist_ok=True)
        mode = "frenet_lane" if args.frenet else "euler"
        scenes = synthetic.generate_scenes(
            args.scenes,
            cfg.seed,
            n_timestamps=args.timestamps,
            n_distractors=args.distractors,
            delta_t=args.delta_t,
            coordinate_mode=mode,
            with_speeds=args.with_speeds,
            curved=args.curved,
        )
        ingestion.write_scenes_csv([s.scene for s in scenes], out / "scenes.csv")
        ingestion.write_scene_adapter(out / "adapter.ini", args.delta_t, mode, args.with_speeds)
        pipeline.save_table(("scene", "planted_leader"), ([s.scene.scene_id, s.planted_leader] for s in scenes), out / "truth.csv")
        print(f"wrote {len(scenes)} scenes to {out}")
        return

    _require_input(args.input)
    names = {
        "extract": pipeline.STEP1_FILE,
        "clean": pipeline.STEP2_FILE,
        "cf-filter": pipeline.STEP3_FILE,
        "metrics": pipeline.METRICS_FILE,
        "stats": "stats.csv",
        "correlate": "correlations.csv",
        "hist": "hist.csv",
        "scatter": "scatter.csv",
        "calibrate": "calibration.csv",
    }
    dest = _output(args, cfg, names[cmd])
    if cmd == "extract":
        n_in, ds = pipeline.run_extract(cfg, args.input, dest)
        print(f"extract: {n_in} source rows -> {sum(len(t) for t in ds)} records")
    elif cmd == "clean":
        n_in, ds = pipeline.run_clean(cfg, args.input, dest)
        print(f"clean: {n_in} -> {sum(len(t) for t in ds)} records")
    elif cmd == "cf-filter":
        n_in, ds = pipeline.run_cf_filter(cfg, args.input, dest)
        print(f"cf-filter: {n_in} -> {sum(len(t) for t in ds)} records")
    elif cmd == "metrics":
        pipeline.run_metrics(args.input, dest)
    elif cmd == "stats":
        pipeline.write_stats(read_unified(args.input), dest)
    elif cmd == "correlate":
        pipeline.write_correlations(read_unified(args.input), dest, args.name)
    elif cmd == "scatter":
        pipeline.write_scatter(read_unified(args.input), dest)
    elif cmd == "calibrate":
        pipeline.write_calibration(read_unified(args.input), dest)
    elif cmd == "hist":
        try:
            values = read_column(args.input, args.label)
            h = analysis.histogram(values, bins=args.bins, bin_width=args.bin_width)
        except (KeyError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        pipeline.save_table(("lo", "hi", "density"), analysis.histogram_rows(h), dest)


def _exit_code(exc: BaseException) -> int:
    cause = exc.cause if isinstance(exc, StageError) else exc
    if isinstance(cause, ConfigError):
        return EXIT_CONFIG
    if isinstance(cause, (IngestError, SchemaError)):
        return EXIT_INGEST
    return EXIT_STAGE


def configure_logging() -> None:
    level = os.environ.get("ULTRA_TRAJ_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestError, SchemaError) as exc:
        print(f"ingest error: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except Exception as exc:  # any other failure inside a stage body
        log.debug("stage failure", exc_info=True)
        print(f"error in {args.command}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
