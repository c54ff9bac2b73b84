"""CSV and manifest writers.  Column orders here are the public schema."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import subprocess

import numpy as np

from . import __version__

RESULTS_COLUMNS = ("slot", "vehicle", "rsu", "sinr_db", "rate_bps_hz", "rcrb_m", "range_err_m", "solver", "seed")
TIMESERIES_COLUMNS = (
    "slot",
    "time_s",
    "solver",
    "seed",
    "active",
    "sum_rate_bps_hz",
    "gain_bps_hz",
    "mean_rcrb_prior_m",
    "mean_rcrb_m",
    "median_range_err_m",
    "iterations",
    "swaps",
    "infeasible",
    "solver_error",
)
SWEEP_COLUMNS = (
    "solver",
    "n_t",
    "population",
    "value",
    "rep",
    "seed",
    "slots",
    "mean_active",
    "sum_rate_bps_hz",
    "per_vehicle_rate_bps_hz",
    "mean_rcrb_m",
    "median_range_err_m",
    "solver_errors",
    "infeasible",
    "error",
)
AGGREGATE_COLUMNS = ("solver", "n_t", "population", "value", "metric", "mean", "ci95", "n")


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def write_rows(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in columns])


def result_rows(results, solver: str, seed: int):
    for r in results:
        rsu = np.argmax(r.xi, axis=1) if r.K else []
        for k, vid in enumerate(r.ids):
            s = r.sinr[k]
            yield {
                "slot": r.slot,
                "vehicle": vid,
                "rsu": int(rsu[k]) + 1,
                "sinr_db": 10.0 * math.log10(s) if s > 0 else float("-inf"),
                "rate_bps_hz": float(r.rate[k]),
                "rcrb_m": float(r.rcrb[k]),
                "range_err_m": float(r.range_err[k]),
                "solver": solver,
                "seed": seed,
            }


def timeseries_rows(results, solver: str, seed: int, slot_s: float, reference=None):
    ref = {r.slot: r.sum_rate for r in reference} if reference is not None else None
    for r in results:
        yield {
            "slot": r.slot,
            "time_s": r.slot * slot_s,
            "solver": solver,
            "seed": seed,
            "active": r.K,
            "sum_rate_bps_hz": r.sum_rate,
            "gain_bps_hz": (r.sum_rate - ref[r.slot]) if ref is not None else float("nan"),
            "mean_rcrb_prior_m": float(np.mean(r.rcrb_prior)) if r.K else float("nan"),
            "mean_rcrb_m": float(np.mean(r.rcrb)) if r.K else float("nan"),
            "median_range_err_m": float(np.median(r.range_err)) if r.K else float("nan"),
            "iterations": r.iterations,
            "swaps": r.swaps,
            "infeasible": len(r.infeasible),
            "solver_error": r.solver_error or "",
        }


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def git_commit() -> str:
    """Commit of the source tree, or ``"unknown"`` outside a checkout."""
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], cwd=here, capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def write_manifest(out_dir, command, seed, config_file, outputs):
    """Record what is needed to replay the run: resolved config, seed, commit.

    No timestamps, so replays produce an identical manifest.
    """
    doc = {
        "package": "isac_twin",
        "version": __version__,
        "commit": git_commit(),
        "command": command,
        "seed": seed,
        "config": os.path.basename(config_file),
        "config_sha256": sha256(config_file),
        "outputs": {os.path.basename(p): sha256(p) for p in outputs},
        "replay": f"isac-twin {command} --scenario {os.path.basename(config_file)}",
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
