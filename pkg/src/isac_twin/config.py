"""Scenario files: TOML with one table per concern.

Missing keys take the reference defaults.  Power-like quantities may be given
in dB (``*_db``) or linear, never both; they are converted once here.

Example::

    [scenario]
    seed = 7
    rate = 5.0          # vehicles/s per direction
    horizon = 2000      # slots

    [radio]
    n_t = 32
    n_r = 32
    alpha_ref_db = -70

    [run]
    solvers = ["heuristic", "greedy", "distance"]

    [sweep]
    antennas = [16, 32, 64]
    k = [5, 20, 50]
    reps = 20
    slots = 50
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .harness import GAIN_MODES, SOLVERS, Scenario, Sweep
from .kinematics import ProcessNoise
from .optimizer import FPOptions
from .radio import RadioConfig

_NUM = (int, float)


@dataclass(frozen=True)
class RunSpec:
    """Solvers compared (paired) by the ``run`` subcommand."""

    solvers: tuple = ("heuristic",)


@dataclass(frozen=True)
class Config:
    scenario: Scenario
    run: RunSpec
    sweep: Sweep
    beams: str | None = None


def _take(tbl, key, path, kinds, default, check=None, what=""):
    if key not in tbl:
        return default
    val = tbl.pop(key)
    full = f"{path}.{key}"
    if isinstance(val, bool) and bool not in kinds:
        raise ConfigError(f"expected {_kind_names(kinds)}, got a boolean", full)
    if not isinstance(val, kinds):
        raise ConfigError(f"expected {_kind_names(kinds)}, got {type(val).__name__}", full)
    if isinstance(val, float) and not math.isfinite(val):
        raise ConfigError("must be finite", full)
    if check is not None and not check(val):
        raise ConfigError(f"out of range: {what}", full)
    return val


def _kind_names(kinds):
    names = {int: "integer", float: "number", bool: "boolean", str: "string", list: "array"}
    return " or ".join(names.get(k, k.__name__) for k in kinds)


def _num_list(tbl, key, path, length=None, default=None, check=None, what=""):
    val = _take(tbl, key, path, (list,), None)
    if val is None:
        return default
    full = f"{path}.{key}"
    if length is not None and len(val) != length:
        raise ConfigError(f"expected {length} numbers", full)
    for v in val:
        if isinstance(v, bool) or not isinstance(v, _NUM) or not math.isfinite(v):
            raise ConfigError("expected an array of finite numbers", full)
    if check is not None and not all(check(v) for v in val):
        raise ConfigError(f"out of range: {what}", full)
    return tuple(val)


def _power(tbl, key, path, default):
    lin = _take(tbl, key, path, _NUM, None, lambda v: v > 0, "must be > 0")
    db = _take(tbl, key + "_db", path, _NUM, None)
    if lin is not None and db is not None:
        raise ConfigError(f"give either {key} or {key}_db, not both", f"{path}.{key}")
    if db is not None:
        return 10.0 ** (db / 10.0)
    return default if lin is None else float(lin)


def _leftover(tbl, path):
    if tbl:
        key = sorted(tbl)[0]
        raise ConfigError("unknown key", f"{path}.{key}" if path else key)


def _section(doc, name):
    tbl = doc.pop(name, {})
    if not isinstance(tbl, dict):
        raise ConfigError("expected a table", name)
    return dict(tbl)


def _radio(tbl) -> RadioConfig:
    d = RadioConfig()
    p = "radio"
    pos = lambda v: v > 0  # noqa: E731
    varrho = _num_list(tbl, "varrho", p, 2)
    kw = dict(
        n_t=_take(tbl, "n_t", p, (int,), d.n_t, pos, "must be >= 1"),
        n_r=_take(tbl, "n_r", p, (int,), d.n_r, pos, "must be >= 1"),
        f_c=float(_take(tbl, "f_c", p, _NUM, d.f_c, pos, "must be > 0")),
        c=float(_take(tbl, "c", p, _NUM, d.c, pos, "must be > 0")),
        alpha_ref=_power(tbl, "alpha_ref", p, d.alpha_ref),
        varrho=d.varrho if varrho is None else complex(varrho[0], varrho[1]),
        sigma_c2=_power(tbl, "sigma_c2", p, d.sigma_c2),
        sigma_e2=_power(tbl, "sigma_e2", p, d.sigma_e2),
        T_s=float(_take(tbl, "T_s", p, _NUM, d.T_s, pos, "must be > 0")),
        G_mf=float(_take(tbl, "G", p, _NUM, d.G_mf, pos, "must be > 0")),
        rho_r=float(_take(tbl, "rho_r", p, _NUM, d.rho_r, pos, "must be > 0")),
        rho_nu=float(_take(tbl, "rho_nu", p, _NUM, d.rho_nu, pos, "must be > 0")),
        rho_mu=float(_take(tbl, "rho_mu", p, _NUM, d.rho_mu, pos, "must be > 0")),
        exact_jacobian=_take(tbl, "exact_jacobian", p, (bool,), d.exact_jacobian),
    )
    _leftover(tbl, p)
    return RadioConfig(**kw)


def _noise(tbl) -> ProcessNoise:
    d = ProcessNoise()
    p = "noise"
    nn = lambda v: v >= 0  # noqa: E731
    kw = {f.name: float(_take(tbl, f.name, p, _NUM, getattr(d, f.name), nn, "must be >= 0")) for f in fields(ProcessNoise)}
    _leftover(tbl, p)
    return ProcessNoise(**kw)


def _solver(tbl) -> FPOptions:
    d = FPOptions()
    p = "solver"
    pos = lambda v: v > 0  # noqa: E731
    kw = dict(
        max_outer=_take(tbl, "max_outer", p, (int,), d.max_outer, pos, "must be >= 1"),
        tol=float(_take(tbl, "tol", p, _NUM, d.tol, pos, "must be > 0")),
        pgd_steps=_take(tbl, "pgd_steps", p, (int,), d.pgd_steps, pos, "must be >= 1"),
        armijo_beta=float(_take(tbl, "armijo_beta", p, _NUM, d.armijo_beta, lambda v: 0 < v < 1, "must lie in (0, 1)")),
        armijo_c=float(_take(tbl, "armijo_c", p, _NUM, d.armijo_c, lambda v: 0 < v < 1, "must lie in (0, 1)")),
        step0=float(_take(tbl, "step0", p, _NUM, d.step0, pos, "must be > 0")),
        max_backtracks=_take(tbl, "max_backtracks", p, (int,), d.max_backtracks, pos, "must be >= 1"),
        pgd_tol=float(_take(tbl, "pgd_tol", p, _NUM, d.pgd_tol, lambda v: v >= 0, "must be >= 0")),
        y_variant=_take(tbl, "y_variant", p, (str,), d.y_variant, lambda v: v in ("stationary", "printed"), "stationary or printed"),
        swap_factor=_take(tbl, "swap_factor", p, (int,), d.swap_factor, lambda v: v >= 0, "must be >= 0"),
        spectral=_take(tbl, "spectral", p, (bool,), d.spectral),
    )
    _leftover(tbl, p)
    return FPOptions(**kw)


def _scenario(tbl, radio, noise, fp) -> Scenario:
    d = Scenario()
    p = "scenario"
    pos = lambda v: v > 0  # noqa: E731
    nn = lambda v: v >= 0  # noqa: E731
    rsu1 = _num_list(tbl, "rsu1", p, 2, d.rsus[0])
    rsu2 = _num_list(tbl, "rsu2", p, 2, d.rsus[1])
    road = _num_list(tbl, "road", p, 2, d.road)
    if road[1] <= road[0]:
        raise ConfigError("road must be [x_start, x_end] with x_end > x_start", f"{p}.road")
    forget = _take(tbl, "resid_forget", p, _NUM, None, lambda v: 0 < v <= 1, "must lie in (0, 1]")
    kw = dict(
        rsus=(tuple(float(v) for v in rsu1), tuple(float(v) for v in rsu2)),
        road=tuple(float(v) for v in road),
        width=float(_take(tbl, "width", p, _NUM, d.width, pos, "must be > 0")),
        rate=float(_take(tbl, "rate", p, _NUM, d.rate, nn, "must be >= 0")),
        speed_mean=float(_take(tbl, "speed_mean", p, _NUM, d.speed_mean, pos, "must be > 0")),
        speed_std=float(_take(tbl, "speed_std", p, _NUM, d.speed_std, nn, "must be >= 0")),
        speed_min=float(_take(tbl, "speed_min", p, _NUM, d.speed_min, pos, "must be > 0")),
        slot=float(_take(tbl, "slot", p, _NUM, d.slot, pos, "must be > 0")),
        horizon=_take(tbl, "horizon", p, (int,), d.horizon, pos, "must be >= 1"),
        seed=_take(tbl, "seed", p, (int,), d.seed, nn, "must be >= 0"),
        solver=_take(tbl, "solver", p, (str,), d.solver, lambda v: v in SOLVERS, " | ".join(SOLVERS)),
        static_k=_take(tbl, "static_k", p, (int,), d.static_k, nn, "must be >= 0"),
        gain_mode=_take(tbl, "gain_mode", p, (str,), d.gain_mode, lambda v: v in GAIN_MODES, " | ".join(GAIN_MODES)),
        resid_forget=None if forget is None else float(forget),
        pcrb_process_noise=_take(tbl, "pcrb_process_noise", p, (bool,), d.pcrb_process_noise),
        enforce_sensing=_take(tbl, "enforce_sensing", p, (bool,), d.enforce_sensing),
        measurement_noise=_take(tbl, "measurement_noise", p, (bool,), d.measurement_noise),
        fix_std_pos=float(_take(tbl, "fix_std_pos", p, _NUM, d.fix_std_pos, nn, "must be >= 0")),
        fix_std_speed=float(_take(tbl, "fix_std_speed", p, _NUM, d.fix_std_speed, nn, "must be >= 0")),
        m0=tuple(float(v) for v in _num_list(tbl, "m0", p, 3, d.m0, pos, "variances must be > 0")),
        warmup=float(_take(tbl, "warmup", p, _NUM, d.warmup, nn, "must be >= 0")),
        radio=radio,
        process=noise,
        fp=fp,
    )
    _leftover(tbl, p)
    return Scenario(**kw)


def _solver_list(val, key):
    if isinstance(val, str):
        val = [v.strip() for v in val.split(",") if v.strip()]
    if not isinstance(val, list) or not val or not all(isinstance(v, str) for v in val):
        raise ConfigError("expected a non-empty list of solver names", key)
    for v in val:
        if v not in SOLVERS:
            raise ConfigError(f"unknown solver {v!r} (choose from {', '.join(SOLVERS)})", key)
    return tuple(val)


def _run(tbl, default_solver) -> RunSpec:
    p = "run"
    solvers = (default_solver,)
    if "solvers" in tbl:
        solvers = _solver_list(tbl.pop("solvers"), f"{p}.solvers")
    _leftover(tbl, p)
    return RunSpec(solvers)


def _sweep(tbl) -> Sweep:
    d = Sweep()
    p = "sweep"
    solvers = d.solvers
    if "solvers" in tbl:
        solvers = _solver_list(tbl.pop("solvers"), f"{p}.solvers")
    antennas = _num_list(tbl, "antennas", p, None, d.antennas, lambda v: isinstance(v, int) and v >= 1, "positive integers")
    ks = _num_list(tbl, "k", p, None, d.ks, lambda v: isinstance(v, int) and v >= 1, "positive integers")
    rates = _num_list(tbl, "rates", p, None, d.rates, lambda v: v >= 0, "must be >= 0")
    reps = _take(tbl, "reps", p, (int,), d.reps, lambda v: v >= 1, "must be >= 1")
    slots = _take(tbl, "slots", p, (int,), d.slots, lambda v: v >= 1, "must be >= 1")
    _leftover(tbl, p)
    if ks and rates:
        raise ConfigError("give either k or rates, not both", f"{p}.k")
    return Sweep(solvers, tuple(int(a) for a in antennas), tuple(int(k) for k in ks), tuple(float(r) for r in rates), reps, slots)


OVERRIDES = ("seed", "solver", "K", "antennas", "rate", "horizon", "beams")


def load_config(path=None, overrides=None) -> Config:
    """Parse a scenario file (or none) and apply command-line overrides.

    Args:
        path: TOML file; ``None`` gives the default scenario.
        overrides: mapping with any of ``seed``, ``solver`` (name or
            comma-separated names), ``K``, ``antennas``, ``rate``,
            ``horizon``, ``beams``; ``None`` values are ignored.

    Raises:
        ConfigError: unreadable file, bad syntax, unknown key, wrong type or
            out-of-range value.  The message starts with the key path.
    """
    doc = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read: {exc.strerror}", str(path)) from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"syntax error: {exc}", str(path)) from None
    radio = _radio(_section(doc, "radio"))
    noise = _noise(_section(doc, "noise"))
    fp = _solver(_section(doc, "solver"))
    sc = _scenario(_section(doc, "scenario"), radio, noise, fp)
    run = _run(_section(doc, "run"), sc.solver)
    sweep = _sweep(_section(doc, "sweep"))
    beams = None
    io = _section(doc, "io")
    if "beams" in io:
        beams = _take(io, "beams", "io", (str,), None)
    _leftover(io, "io")
    _leftover(doc, "")
    return _apply(Config(sc, run, sweep, beams), overrides or {})


def _apply(cfg: Config, ov) -> Config:
    sc, run, sweep, beams = cfg.scenario, cfg.run, cfg.sweep, cfg.beams
    unknown = set(ov) - set(OVERRIDES)
    if unknown:
        raise ConfigError("unknown override", sorted(unknown)[0])
    kw = {}
    if ov.get("seed") is not None:
        if int(ov["seed"]) < 0:
            raise ConfigError("must be >= 0", "--seed")
        kw["seed"] = int(ov["seed"])
    if ov.get("horizon") is not None:
        if int(ov["horizon"]) < 1:
            raise ConfigError("must be >= 1", "--horizon")
        kw["horizon"] = int(ov["horizon"])
    if ov.get("rate") is not None:
        r = float(ov["rate"])
        if not (math.isfinite(r) and r >= 0):
            raise ConfigError("must be >= 0", "--rate")
        kw["rate"] = r
    if ov.get("K") is not None:
        if int(ov["K"]) < 0:
            raise ConfigError("must be >= 0", "--vehicles")
        kw["static_k"] = int(ov["K"])
    if ov.get("antennas") is not None:
        n = int(ov["antennas"])
        if n < 1:
            raise ConfigError("must be >= 1", "--antennas")
        kw["radio"] = sc.radio.with_antennas(n)
        sweep = replace(sweep, antennas=(n,))
    if ov.get("solver") is not None:
        solvers = _solver_list(ov["solver"], "--solver")
        kw["solver"] = solvers[0]
        run = RunSpec(solvers)
        sweep = replace(sweep, solvers=solvers)
    if ov.get("beams") is not None:
        beams = str(ov["beams"])
    try:
        sc = replace(sc, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc), "override") from None
    if "external" in run.solvers and beams is None:
        raise ConfigError("the external solver needs a beams file", "--beams")
    return Config(sc, run, sweep, beams)


def parse_config(path=None, overrides=None) -> Scenario:
    """Validated :class:`Scenario` from a file plus overrides."""
    return load_config(path, overrides).scenario


# ---------------------------------------------------------------------------
# writing a resolved configuration back out


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    raise TypeError(f"cannot write {type(v).__name__}")


def to_toml(cfg: Config) -> str:
    """Fully resolved configuration; loading it reproduces ``cfg`` exactly."""
    sc, r, n, fp = cfg.scenario, cfg.scenario.radio, cfg.scenario.process, cfg.scenario.fp
    secs = {
        "scenario": {
            "seed": sc.seed,
            "horizon": sc.horizon,
            "slot": sc.slot,
            "rate": sc.rate,
            "static_k": sc.static_k,
            "solver": sc.solver,
            "rsu1": list(sc.rsus[0]),
            "rsu2": list(sc.rsus[1]),
            "road": list(sc.road),
            "width": sc.width,
            "speed_mean": sc.speed_mean,
            "speed_std": sc.speed_std,
            "speed_min": sc.speed_min,
            "gain_mode": sc.gain_mode,
            "pcrb_process_noise": sc.pcrb_process_noise,
            "enforce_sensing": sc.enforce_sensing,
            "measurement_noise": sc.measurement_noise,
            "fix_std_pos": sc.fix_std_pos,
            "fix_std_speed": sc.fix_std_speed,
            "m0": list(sc.m0),
            "warmup": sc.warmup,
        },
        "radio": {
            "n_t": r.n_t,
            "n_r": r.n_r,
            "f_c": r.f_c,
            "c": r.c,
            "alpha_ref": r.alpha_ref,
            "varrho": [complex(r.varrho).real, complex(r.varrho).imag],
            "sigma_c2": r.sigma_c2,
            "sigma_e2": r.sigma_e2,
            "T_s": r.T_s,
            "G": r.G_mf,
            "rho_r": r.rho_r,
            "rho_nu": r.rho_nu,
            "rho_mu": r.rho_mu,
            "exact_jacobian": r.exact_jacobian,
        },
        "noise": {f.name: getattr(n, f.name) for f in fields(ProcessNoise)},
        "solver": {f.name: getattr(fp, f.name) for f in fields(FPOptions)},
        "run": {"solvers": list(cfg.run.solvers)},
        "sweep": {
            "solvers": list(cfg.sweep.solvers),
            "antennas": list(cfg.sweep.antennas),
            "reps": cfg.sweep.reps,
        },
    }
    if sc.resid_forget is not None:
        secs["scenario"]["resid_forget"] = sc.resid_forget
    if cfg.sweep.ks:
        secs["sweep"]["k"] = list(cfg.sweep.ks)
    if cfg.sweep.rates:
        secs["sweep"]["rates"] = list(cfg.sweep.rates)
    if cfg.sweep.slots:
        secs["sweep"]["slots"] = cfg.sweep.slots
    if cfg.beams is not None:
        secs["io"] = {"beams": cfg.beams}
    out = []
    for name, tbl in secs.items():
        out.append(f"[{name}]")
        out.extend(f"{k} = {_fmt(v)}" for k, v in tbl.items())
        out.append("")
    return "\n".join(out)
