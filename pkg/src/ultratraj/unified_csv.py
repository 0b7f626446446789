"""Reading and writing the 13-column unified CSV.

Floats are written with ``repr`` (shortest round-trip form) so that
serialize -> parse -> serialize is byte-identical; missing values are empty
fields.
"""
from __future__ import annotations

import csv
import io
import math
import os
from collections import Counter
from typing import Iterable, Sequence

import numpy as np

from .core import DEFAULT_VEHICLE_LENGTH, LABELS, LongitudinalTrajectory
from .errors import IngestError


def format_float(value: float) -> str:
    value = float(value)
    if math.isnan(value):
        return ""
    return repr(value)


def parse_float(text: str) -> float:
    text = text.strip()
    return float(text) if text else math.nan


def iter_unified_rows(dataset: Iterable[LongitudinalTrajectory]):
    for traj in sorted(dataset, key=lambda t: t.trajectory_id):
        tid, lv, fav = str(traj.trajectory_id), str(traj.id_lv), str(traj.id_fav)
        for i in range(len(traj)):
            yield [
                tid,
                format_float(traj.time_index[i]),
                lv,
                format_float(traj.pos_lv[i]),
                format_float(traj.speed_lv[i]),
                format_float(traj.acc_lv[i]),
                fav,
                format_float(traj.pos_fav[i]),
                format_float(traj.speed_fav[i]),
                format_float(traj.acc_fav[i]),
                format_float(traj.space_gap[i]),
                format_float(traj.space_headway[i]),
                format_float(traj.speed_diff[i]),
            ]


def write_unified(dataset: Iterable[LongitudinalTrajectory], dest) -> None:
    """Write to a path or an open text file."""
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            write_unified(dataset, fh)
        return
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(LABELS)
    writer.writerows(iter_unified_rows(dataset))


def dumps_unified(dataset: Iterable[LongitudinalTrajectory]) -> str:
    buf = io.StringIO()
    write_unified(dataset, buf)
    return buf.getvalue()


def _infer_delta_t(groups) -> float:
    """Most common time step; rows are ``[lineno, time, ...]``."""
    diffs = Counter()
    for rows in groups.values():
        t = np.array([r[1] for r in rows])
        if t.size > 1:
            diffs.update(np.round(np.diff(t), 9).tolist())
    positive = [(count, d) for d, count in diffs.items() if d > 0]
    if not positive:
        raise IngestError("cannot infer delta_t: no trajectory has two records")
    # Most common step; ties go to the smaller step.
    return max(positive, key=lambda cd: (cd[0], -cd[1]))[1]


def read_unified(source, delta_t: float | None = None) -> list[LongitudinalTrajectory]:
    """Parse a unified CSV (path or text file) into trajectories.

    Vehicle lengths are not stored in the format; their mean is recovered from
    ``Space_Headway - Space_Gap`` and assigned to both vehicles.
    """
    name = str(source) if isinstance(source, (str, os.PathLike)) else getattr(source, "name", "<stream>")
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return read_unified(fh, delta_t)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise IngestError("empty file", name) from None
    if tuple(h.strip() for h in header) != LABELS:
        raise IngestError(f"unexpected header {header!r}", name, 1)

    groups: dict[int, list] = {}
    ids: dict[int, tuple] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(LABELS):
            raise IngestError(f"expected {len(LABELS)} fields, got {len(row)}", name, lineno)
        try:
            tid = int(row[0])
            id_lv, id_fav = int(row[2]), int(row[6])
            values = [parse_float(row[i]) for i in (1, 3, 4, 5, 7, 8, 9, 10, 11, 12)]
        except ValueError as exc:
            raise IngestError(str(exc), name, lineno) from None
        if tid in ids and ids[tid][:2] != (id_lv, id_fav):
            raise IngestError(f"trajectory {tid} changes ID_LV/ID_FAV", name, lineno)
        ids.setdefault(tid, (id_lv, id_fav, lineno))
        groups.setdefault(tid, []).append([lineno] + values)

    if not groups:
        return []
    # groups rows: lineno, time, pos_lv, speed_lv, acc_lv, pos_fav, speed_fav, acc_fav, gap, headway, dv
    for tid, rows in groups.items():
        t = np.array([r[1] for r in rows])
        bad = np.flatnonzero(np.diff(t) <= 0)
        if bad.size:
            raise IngestError(f"Time_Index not increasing in trajectory {tid}", name, rows[bad[0] + 1][0])
    if delta_t is None:
        delta_t = _infer_delta_t(groups)

    dataset = []
    for tid in sorted(groups):
        rows = np.array(groups[tid], dtype=float)
        steps = rows[:, 1] / delta_t
        if np.any(np.abs(np.diff(steps) - 1) > 1e-6):
            bad = int(rows[1:, 0][np.abs(np.diff(steps) - 1) > 1e-6][0])
            raise IngestError(f"Time_Index discontinuous in trajectory {tid}", name, bad)
        offset = rows[:, 9] - rows[:, 8]
        offset = offset[np.isfinite(offset)]
        half = float(np.median(offset)) if offset.size else DEFAULT_VEHICLE_LENGTH
        if not half > 0:
            half = DEFAULT_VEHICLE_LENGTH
        dataset.append(
            LongitudinalTrajectory(
                trajectory_id=tid,
                delta_t=delta_t,
                id_fav=ids[tid][1],
                id_lv=ids[tid][0],
                fav_length=half,
                lv_length=half,
                time_index=rows[:, 1],
                pos_lv=rows[:, 2],
                speed_lv=rows[:, 3],
                acc_lv=rows[:, 4],
                pos_fav=rows[:, 5],
                speed_fav=rows[:, 6],
                acc_fav=rows[:, 7],
                space_gap=rows[:, 8],
                space_headway=rows[:, 9],
                speed_diff=rows[:, 10],
            )
        )
    return dataset


def loads_unified(text: str, delta_t: float | None = None) -> list[LongitudinalTrajectory]:
    return read_unified(io.StringIO(text), delta_t)


def write_table(header: Sequence[str], rows: Iterable[Sequence], dest) -> None:
    """Generic CSV writer used for metrics and analysis tables."""
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            write_table(header, rows, fh)
        return
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_column(path, column: str) -> np.ndarray:
    """One numeric column of any CSV with a header; empty fields become NaN."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if column not in header:
            raise IngestError(f"column {column!r} not in header {header}", str(path), 1)
        j = header.index(column)
        return np.array([parse_float(row[j]) for row in reader if row], dtype=float)
