"""CSV and JSON artifacts with fixed column order and round-trip float formatting."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1

BRANCH_COLUMNS = ["omega", "a", "b", "F", "R", "e_rms", "e_rel", "stable", "iterations", "settle_cycles"]


def fmt(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    return "%.17g" % v


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_json(path, payload, config=None):
    """JSON document carrying ``schema_version`` and the resolved ``config``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"schema_version": SCHEMA_VERSION}
    if config is not None:
        doc["config"] = config
    doc.update(payload)
    path.write_text(json.dumps(_jsonable(doc), indent=2) + "\n")


def point_record(p):
    return {"omega": p.omega, "a": p.a, "b": p.b, "F": p.F, "R": p.R, "e_rms": p.measures.e_rms,
            "e_rel": p.measures.e_rel, "stable": p.stable, "iterations": p.iterations,
            "settle_cycles": p.settle_cycles, "X": list(p.X.coeffs)}


def branch_header(m):
    return BRANCH_COLUMNS + ["X%d" % k for k in range(2 * m + 1)]


def branch_rows(branch):
    for p in branch.points:
        r = point_record(p)
        yield [r[c] for c in BRANCH_COLUMNS] + r["X"]


def write_branch(out_dir, stem, branch, config, extra=None):
    """``<stem>.csv`` plus its JSON mirror ``<stem>.json``."""
    out_dir = Path(out_dir)
    m = branch.points[0].X.m if branch.points else 0
    write_csv(out_dir / f"{stem}.csv", branch_header(m), branch_rows(branch))
    payload = {"omega": branch.omega, "status": branch.status, "diagnostic": branch.diagnostic,
               "n_seeds": branch.n_seeds, "settle_cycles": branch.settle_cycles,
               "points": [point_record(p) for p in branch.points]}
    if extra:
        payload.update(extra)
    write_json(out_dir / f"{stem}.json", {"branch": payload}, config)


def write_traces(path, trace):
    write_csv(path, ["t", "x_raw", "x_filt", "u", "settle_cycle"],
              zip(trace.t, trace.x_raw, trace.x_filt, trace.u, trace.cycle))
