"""CSV and JSON formats for demonstrations, datasets, traces and reports.

Floats are written with ``repr`` so a file read back reproduces the
in-memory values exactly and reruns produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .dmp import Trajectory
from .gac import Trace
from .pipeline import CampaignResult, Dataset, ModelBundle

DEMO_HEADER = ["t_s", "x_mm", "y_mm", "z_mm"]
DATASET_HEADER = ["trial_id", "dx_mm", "dy_mm", "fx_N", "fy_N", "fz_N", "mx_Nmm", "my_Nmm", "mz_Nmm", "converged"]
TRACE_HEADER = ["k", "t_s", "xr_z_mm", "xc_z_mm", "x_z_mm", "fx", "fy", "fz", "mx", "my", "mz"]
EPISODE_HEADER = ["controller", "episode_id", "dx_mm", "dy_mm", "attempts", "n_corrections",
                  "total_correction_x_mm", "total_correction_y_mm", "outcome"]
SWEEP_HEADER = ["gamma", "K_a_mm_per_N", "v_mm_per_step", "predicted_f_N", "measured_f_N",
                "rel_error", "steps_to_converge", "converged", "oscillatory"]


class FormatError(ValueError):
    """A file does not follow the expected layout."""


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_rows(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_rows(path, header):
    """Yield ``(row_number, fields)`` after checking the header; row 1 is the header."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        found = next(reader, None)
        if found is None or [h.strip() for h in found] != header:
            raise FormatError(f"{path}: row 1: expected header {','.join(header)}")
        for number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}: row {number}: expected {len(header)} fields, got {len(row)}")
            yield number, row


def _floats(path, number, fields):
    try:
        values = [float(f) for f in fields]
    except ValueError as exc:
        raise FormatError(f"{path}: row {number}: {exc}") from exc
    if not np.all(np.isfinite(values)):
        raise FormatError(f"{path}: row {number}: non-finite value")
    return values


# ------------------------------------------------------------------ demo ---


def write_demo(path, demo: Trajectory) -> None:
    write_rows(path, DEMO_HEADER, (
        [t, *p] for t, p in zip(demo.timestamps, demo.positions)))


def read_demo(path) -> Trajectory:
    rows = [_floats(path, n, r) for n, r in read_rows(path, DEMO_HEADER)]
    if len(rows) < 2:
        raise FormatError(f"{path}: a demonstration needs at least two rows")
    data = np.array(rows)
    try:
        return Trajectory(data[:, 0], data[:, 1:])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# --------------------------------------------------------------- dataset ---


def write_dataset(path, data: Dataset) -> None:
    write_rows(path, DATASET_HEADER, (
        [int(i), *d, *w, bool(c)] for i, d, w, c in zip(data.trial_id, data.d, data.wrench, data.converged)))


def read_dataset(path) -> Dataset:
    ids, ds, ws, conv = [], [], [], []
    for number, row in read_rows(path, DATASET_HEADER):
        try:
            trial = int(row[0])
        except ValueError as exc:
            raise FormatError(f"{path}: row {number}: bad trial_id {row[0]!r}") from exc
        values = _floats(path, number, row[1:9])
        if row[9].strip() not in ("0", "1"):
            raise FormatError(f"{path}: row {number}: converged must be 0 or 1, got {row[9]!r}")
        ids.append(trial)
        ds.append(values[:2])
        ws.append(values[2:])
        conv.append(row[9].strip() == "1")
    if not ids:
        raise FormatError(f"{path}: no data rows")
    return Dataset(np.array(ids), np.array(ds), np.array(ws), np.array(conv, dtype=bool))


# ----------------------------------------------------------------- trace ---


def write_trace(path, trace: Trace) -> None:
    write_rows(path, TRACE_HEADER, (
        [k, t, xr[2], xc[2], x[2], *w]
        for k, (t, xr, xc, x, w) in enumerate(zip(trace.t, trace.xr, trace.xc, trace.x, trace.wrench))))


def read_trace(path) -> dict:
    rows = np.array([_floats(path, n, r) for n, r in read_rows(path, TRACE_HEADER)])
    if rows.size == 0:
        raise FormatError(f"{path}: no data rows")
    return {name: rows[:, i] for i, name in enumerate(TRACE_HEADER)}


# ---------------------------------------------------------------- models ---


def write_json(path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc


def write_models(path, bundle: ModelBundle) -> None:
    write_json(path, bundle.to_dict())


def read_models(path) -> ModelBundle:
    data = read_json(path)
    try:
        return ModelBundle.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: not a model bundle: {exc}") from exc


# -------------------------------------------------------------- campaign ---


def write_campaign(directory, result: CampaignResult, summary: dict) -> tuple[Path, Path]:
    directory = Path(directory)
    report, episodes = directory / "campaign.json", directory / "episodes.csv"
    write_json(report, summary)
    rows = []
    for name, records in (("lfd_sl", result.corrected), ("lfd", result.baseline)):
        for rec in records:
            r = rec.to_row()
            rows.append([name] + [r[h] for h in EPISODE_HEADER[1:]])
    write_rows(episodes, EPISODE_HEADER, rows)
    return report, episodes


def read_episodes(path) -> list[dict]:
    out = []
    for number, row in read_rows(path, EPISODE_HEADER):
        rec = dict(zip(EPISODE_HEADER, row))
        try:
            for key in ("episode_id", "attempts", "n_corrections"):
                rec[key] = int(rec[key])
            for key in ("dx_mm", "dy_mm", "total_correction_x_mm", "total_correction_y_mm"):
                rec[key] = float(rec[key])
        except ValueError as exc:
            raise FormatError(f"{path}: row {number}: {exc}") from exc
        out.append(rec)
    return out


# ----------------------------------------------------------------- sweep ---


def write_sweep(path, rows) -> None:
    write_rows(path, SWEEP_HEADER, ([r[h] for h in SWEEP_HEADER] for r in rows))
