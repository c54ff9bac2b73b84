"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import harness as hz
from .beamio import load_external_beams, write_beams
from .config import Config, RunSpec, load_config, to_toml
from .errors import ConfigError, IsacError
from .outputs import (
    AGGREGATE_COLUMNS,
    RESULTS_COLUMNS,
    SWEEP_COLUMNS,
    TIMESERIES_COLUMNS,
    result_rows,
    timeseries_rows,
    write_manifest,
    write_rows,
)

log = logging.getLogger("isac_twin")

COMMANDS = ("run", "sweep", "export-dataset", "eval-external", "selftest")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser():
    p = _Parser(prog="isac-twin", description="Digital-twin ISAC simulator for a two-RSU highway.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    helps = {
        "run": "closed-loop run; several solvers share traffic and noise",
        "sweep": "grid over solvers, antenna counts and populations",
        "export-dataset": "heuristic run that writes the trainer dataset",
        "eval-external": "closed loop driven by a beam-exchange file",
        "selftest": "quick invariant checks",
    }
    for name in COMMANDS:
        s = sub.add_parser(name, help=helps[name])
        if name == "selftest":
            continue
        s.add_argument("--scenario", help="TOML scenario file (defaults when omitted)")
        s.add_argument("--out", default="out", help="output directory (default: out)")
        s.add_argument("--seed", type=int)
        s.add_argument("--solver", help="heuristic|greedy|distance|external, comma-separated for several")
        s.add_argument("--beams", help="beam-exchange file for the external solver")
        s.add_argument("--horizon", type=int, help="number of slots")
        s.add_argument("--rate", type=float, help="arrivals per second and direction")
        s.add_argument("--antennas", type=int, help="n_t = n_r")
        s.add_argument("--vehicles", type=int, help="fixed population K instead of Poisson traffic")
    return p


def _config(args) -> Config:
    ov = {
        "seed": args.seed,
        "solver": args.solver,
        "K": args.vehicles,
        "antennas": args.antennas,
        "rate": args.rate,
        "horizon": args.horizon,
        "beams": args.beams,
    }
    return load_config(args.scenario, ov)


def _prepare(out, cfg: Config) -> str:
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "scenario.toml")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_toml(cfg))
    return path


def _run_solvers(cfg: Config, solvers, external=None, collect=False):
    sc = cfg.scenario
    results = {}
    for s in solvers:
        log.info("running %s for %d slots", s, sc.horizon)
        results[s] = hz.run(sc, s, external if s == "external" else None, collect_dataset=collect and s == "heuristic")
    return results


def _write_run(out, cfg: Config, results):
    sc = cfg.scenario
    ref = results.get("distance")
    rows, ts, agg = [], [], []
    pop, val = ("k", sc.static_k) if sc.static_k else ("rate", sc.rate)
    # short runs keep at least half their slots
    warm = 0 if sc.static_k else min(sc.warmup_slots, sc.horizon // 2)
    for s, res in results.items():
        rows.extend(result_rows(res, s, sc.seed))
        ts.extend(timeseries_rows(res, s, sc.seed, sc.slot, ref))
        kept = [r for r in res if r.slot > warm]
        per_slot = {
            "sum_rate_bps_hz": [r.sum_rate for r in kept],
            "per_vehicle_rate_bps_hz": [float(np.mean(r.rate)) for r in kept if r.K],
            "mean_rcrb_m": [float(np.mean(r.rcrb)) for r in kept if r.K],
            "median_range_err_m": [float(np.median(r.range_err)) for r in kept if r.K],
            "mean_active": [r.K for r in kept],
        }
        for m in hz.METRICS:
            mean, ci, n = hz.mean_ci(per_slot[m])
            agg.append({"solver": s, "n_t": sc.radio.n_t, "population": pop, "value": val, "metric": m, "mean": mean, "ci95": ci, "n": n})
    paths = [os.path.join(out, f) for f in ("results.csv", "timeseries.csv", "aggregate.csv")]
    write_rows(paths[0], RESULTS_COLUMNS, rows)
    write_rows(paths[1], TIMESERIES_COLUMNS, ts)
    write_rows(paths[2], AGGREGATE_COLUMNS, agg)
    return paths


def cmd_run(args, cfg: Config, command="run"):
    solvers = cfg.run.solvers
    external = None
    if "external" in solvers:
        external = load_external_beams(cfg.beams)
    conf = _prepare(args.out, cfg)
    results = _run_solvers(cfg, solvers, external)
    outputs = _write_run(args.out, cfg, results)
    write_manifest(args.out, command, cfg.scenario.seed, conf, outputs)
    for s, res in results.items():
        errs = sum(r.solver_error is not None for r in res)
        mean = np.mean([r.sum_rate for r in res])
        print(f"{s}: {len(res)} slots, mean sum rate {mean:.4f} bits/s/Hz, solver errors {errs}")
    return 0


def cmd_sweep(args, cfg: Config):
    conf = _prepare(args.out, cfg)
    rows, agg = hz.run_experiment(cfg.scenario, cfg.sweep)
    paths = [os.path.join(args.out, "sweep.csv"), os.path.join(args.out, "aggregate.csv")]
    write_rows(paths[0], SWEEP_COLUMNS, rows)
    write_rows(paths[1], AGGREGATE_COLUMNS, agg)
    write_manifest(args.out, "sweep", cfg.scenario.seed, conf, paths)
    bad = sum(1 for r in rows if r["error"])
    print(f"{len(rows)} runs, {bad} failed")
    return 0


def cmd_export(args, cfg: Config):
    cfg = replace(cfg, run=RunSpec(("heuristic",)))
    conf = _prepare(args.out, cfg)
    res = hz.run(cfg.scenario, "heuristic", collect_dataset=True)
    ds = os.path.join(args.out, "dataset.txt")
    n = hz.export_dataset(res, ds, cfg.scenario.radio.n_t, cfg.scenario.radio.n_r)
    beams = os.path.join(args.out, "beams.txt")
    write_beams(beams, hz.beam_blocks(res))
    outputs = _write_run(args.out, cfg, {"heuristic": res}) + [ds, beams]
    write_manifest(args.out, "export-dataset", cfg.scenario.seed, conf, outputs)
    print(f"{n} records written to {ds}")
    return 0


def cmd_eval_external(args, cfg: Config):
    if cfg.beams is None:
        raise ConfigError("the external solver needs a beams file", "--beams")
    others = tuple(s for s in cfg.run.solvers if s != "external") if args.solver else ("heuristic",)
    cfg = replace(cfg, run=RunSpec(("external",) + others))
    return cmd_run(args, cfg, "eval-external")


def cmd_selftest(args):
    from .selftest import run_all

    ok = run_all(sys.stdout)
    return 0 if ok else 2


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    if args.command is None:
        print(parser.format_usage().rstrip(), file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "selftest":
            return cmd_selftest(args)
        cfg = _config(args)
        handler = {"run": cmd_run, "sweep": cmd_sweep, "export-dataset": cmd_export, "eval-external": cmd_eval_external}[args.command]
        return handler(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (IsacError, OSError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
