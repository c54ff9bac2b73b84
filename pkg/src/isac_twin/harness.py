"""Closed-loop slot engine for the two-RSU highway.

Each slot runs, in order: ground-truth propagation, twin prediction, joint
assignment/beamforming from the predicted states, echo synthesis with the
chosen beams, track correction and metric collection.

Randomness is counter-based: every draw comes from
``default_rng([seed, purpose, slot, vehicle])``, so runs with different
solvers see the same traffic and the same noise realizations and any slot can
be replayed in isolation.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import optimizer as opt
from .beamio import BeamBlock, dataset_dims
from .errors import BeamNull, DegenerateGeometry, FormatError, IsacError, SingularInnovation, SingularPrior
from .kinematics import (
    CartesianPose,
    ProcessNoise,
    VehicleState,
    cartesian_to_state,
    rsu_side,
    state_jacobian,
    transfer_jacobian,
    transfer_state,
)
from .radio import N_RSU, RadioConfig, matched_beams, sinr_matrix
from .sensing import Measurement, synthesize_measurement
from .tracking import TrackState, clean_cov, correct, fisher_info, lambda_threshold, pcrb, pcrb_prior, predict, rcrb

log = logging.getLogger(__name__)

SOLVERS = ("heuristic", "greedy", "distance", "external")
GAIN_MODES = ("standard", "residual")

# RNG stream purposes
_TRAFFIC, _STATIC, _FIX, _ECHO = 1, 2, 3, 4


def stream(seed: int, *key) -> np.random.Generator:
    return np.random.default_rng([int(seed), *[int(k) for k in key]])


@dataclass(frozen=True)
class Scenario:
    """Everything a run depends on.  Defaults reproduce the reference setup."""

    rsus: tuple = ((0.0, 30.0), (0.0, -30.0))
    road: tuple = (-30.0, 30.0)  # x range of the segment, centreline at y = 0
    width: float = 10.0
    rate: float = 5.0  # arrivals per second and direction
    speed_mean: float = 30.0
    speed_std: float = 3.0
    speed_min: float = 5.0
    slot: float = 0.02
    horizon: int = 2000
    seed: int = 0
    solver: str = "heuristic"
    static_k: int = 0  # > 0: fixed population of K vehicles, no arrivals
    gain_mode: str = "standard"
    resid_forget: float | None = None
    pcrb_process_noise: bool = True
    enforce_sensing: bool = True
    measurement_noise: bool = True
    fix_std_pos: float = 0.05
    fix_std_speed: float = 0.1
    m0: tuple = (1e-2, 1.0, 1.0)
    warmup: float = 5.0
    radio: RadioConfig = field(default_factory=RadioConfig)
    process: ProcessNoise = field(default_factory=ProcessNoise)
    fp: opt.FPOptions = field(default_factory=opt.FPOptions)

    def __post_init__(self):
        if len(self.rsus) != N_RSU:
            raise ValueError(f"exactly {N_RSU} RSUs are supported")
        if not self.road[1] > self.road[0]:
            raise ValueError("road must run from a smaller to a larger x")
        checks = [
            (self.width > 0, "width must be positive"),
            (self.rate >= 0, "rate must be non-negative"),
            (self.speed_mean > 0, "speed_mean must be positive"),
            (self.speed_std >= 0, "speed_std must be non-negative"),
            (self.speed_min > 0, "speed_min must be positive"),
            (self.speed_mean > self.speed_min, "speed_mean must exceed speed_min"),
            (self.slot > 0, "slot must be positive"),
            (self.horizon >= 1, "horizon must be at least 1"),
            (self.static_k >= 0, "static_k must be non-negative"),
            (self.fix_std_pos >= 0 and self.fix_std_speed >= 0, "fix std must be non-negative"),
            (len(self.m0) == 3 and min(self.m0) > 0, "m0 needs three positive variances"),
            (self.warmup >= 0, "warmup must be non-negative"),
            (self.solver in SOLVERS, f"solver must be one of {SOLVERS}"),
            (self.gain_mode in GAIN_MODES, f"gain_mode must be one of {GAIN_MODES}"),
            (self.resid_forget is None or 0 < self.resid_forget <= 1, "resid_forget must lie in (0, 1]"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    @property
    def length(self) -> float:
        return self.road[1] - self.road[0]

    @property
    def warmup_slots(self) -> int:
        return int(round(self.warmup / self.slot))

    def little_l(self) -> float:
        """Expected number of vehicles on the segment, ``2 * rate * E[length/speed]``."""
        return 2.0 * self.rate * self.length / self.speed_mean


# ---------------------------------------------------------------------------
# traffic


@dataclass(frozen=True)
class Vehicle:
    vid: int
    t_arr: float
    direction: int  # +1 travels toward larger x
    speed: float
    lane: float
    x_entry: float

    @property
    def heading(self):
        return (float(self.direction), 0.0)

    def t_dep(self, length: float) -> float:
        return self.t_arr + length / self.speed

    def pose(self, t: float) -> CartesianPose:
        x = self.x_entry + self.direction * self.speed * (t - self.t_arr)
        return CartesianPose((x, self.lane), self.speed, self.heading)


def _speed(sc: Scenario, rng) -> float:
    while True:
        v = sc.speed_mean + sc.speed_std * rng.standard_normal()
        if v > sc.speed_min:
            return float(v)


def generate_traffic(scenario: Scenario, rng=None) -> list:
    """Poisson arrivals in both directions over the horizon.

    Returns the vehicles sorted by arrival time; ids follow that order.  Each
    vehicle enters at the upstream end of the segment and leaves ``length /
    speed`` seconds later.
    """
    sc = scenario
    rng = stream(sc.seed, _TRAFFIC) if rng is None else rng
    t_end = sc.horizon * sc.slot
    raw = []
    for direction in (1, -1):
        if sc.rate <= 0:
            continue
        t = 0.0
        while True:
            t += rng.exponential(1.0 / sc.rate)
            if t > t_end:
                break
            x0 = sc.road[0] if direction > 0 else sc.road[1]
            raw.append((t, direction, _speed(sc, rng), float(rng.uniform(-sc.width / 2, sc.width / 2)), x0))
    raw.sort(key=lambda r: (r[0], -r[1]))
    return [Vehicle(vid, *r) for vid, r in enumerate(raw)]


def static_population(scenario: Scenario, rng=None) -> list:
    """``static_k`` vehicles already on the road that stay on it for the horizon.

    Start positions are uniform over the part of the segment from which the
    vehicle cannot leave before the last slot.
    """
    sc = scenario
    rng = stream(sc.seed, _STATIC) if rng is None else rng
    span = sc.horizon * sc.slot
    out = []
    for vid in range(sc.static_k):
        direction = 1 if rng.random() < 0.5 else -1
        v = _speed(sc, rng)
        lane = float(rng.uniform(-sc.width / 2, sc.width / 2))
        room = max(sc.length - v * span, 0.0)
        s0 = float(rng.uniform(0.0, room))  # distance already travelled at t = 0
        x0 = sc.road[0] if direction > 0 else sc.road[1]
        out.append(Vehicle(vid, -s0 / v, direction, v, lane, x0))
    return out


def active_at(vehicles, t: float, length: float) -> list:
    return [v for v in vehicles if v.t_arr <= t < v.t_dep(length)]


# ---------------------------------------------------------------------------
# digital twin


@dataclass
class Twin:
    """Per-vehicle twin: one track and one bound recursion per RSU."""

    vehicle: Vehicle
    tracks: list
    bounds: list  # PCRB matrices (post-measurement) per RSU
    sides: tuple
    serving: int = -1
    prev_beam: np.ndarray | None = None
    prev_echo: Measurement | None = None
    age: int = 0


@dataclass
class SlotResult:
    slot: int
    ids: list
    xi: np.ndarray  # (K, 2)
    sinr: np.ndarray
    rate: np.ndarray  # bits/s/Hz
    sum_rate: float
    rcrb: np.ndarray
    range_err: np.ndarray
    rcrb_prior: np.ndarray | None = None  # range bound entering the slot, before its echo
    iterations: int = 0
    swaps: int = 0
    infeasible: list = field(default_factory=list)
    fallback: bool = False
    solver_error: str | None = None
    beam_null: list = field(default_factory=list)
    rebootstrapped: list = field(default_factory=list)
    F: np.ndarray | None = None
    records: list = field(default_factory=list)  # dataset rows when collected

    @property
    def K(self) -> int:
        return len(self.ids)


class World:
    """Ground truth plus the twin's view of it.

    Args:
        scenario: run parameters.
        solver: overrides ``scenario.solver``.
        external: slot -> :class:`BeamBlock` for the ``external`` solver.
        collect_dataset: attach dataset records to every :class:`SlotResult`.
    """

    def __init__(self, scenario: Scenario, solver: str | None = None, external=None, collect_dataset=False):
        self.sc = scenario
        self.solver = solver or scenario.solver
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")
        self.external = external or {}
        self.collect = collect_dataset
        if scenario.static_k:
            self.vehicles = static_population(scenario)
        else:
            self.vehicles = generate_traffic(scenario)
        self.n = 0
        self.twins: dict = {}
        self._next = 0  # index of the next vehicle to arrive
        self.arrived = 0
        self.departed = 0

    @property
    def time(self) -> float:
        return self.n * self.sc.slot

    # -- truth -----------------------------------------------------------

    def truth(self, v: Vehicle):
        pose = v.pose(self.time)
        return [cartesian_to_state(pose, r) for r in self.sc.rsus]

    def _roster(self):
        """Advance arrivals and departures to the current time."""
        t = self.time
        gone = [vid for vid, tw in self.twins.items() if t >= tw.vehicle.t_dep(self.sc.length)]
        for vid in gone:
            del self.twins[vid]
        self.departed += len(gone)
        while self._next < len(self.vehicles) and self.vehicles[self._next].t_arr <= t:
            v = self.vehicles[self._next]
            self._next += 1
            if t < v.t_dep(self.sc.length):
                self.twins[v.vid] = self._bootstrap(v)
                self.arrived += 1

    def _bootstrap(self, v: Vehicle, age=0) -> Twin:
        sc = self.sc
        rng = stream(sc.seed, _FIX, self.n, v.vid)
        pose = v.pose(self.time)
        px, py = pose.position
        noisy = CartesianPose(
            (px + sc.fix_std_pos * rng.standard_normal(), py + sc.fix_std_pos * rng.standard_normal()),
            pose.speed + sc.fix_std_speed * rng.standard_normal(),
            pose.heading,
        )
        M0 = np.diag(sc.m0)
        tracks, sides = [], []
        for r in sc.rsus:
            x0 = cartesian_to_state(noisy, r)
            tracks.append(TrackState.bootstrap(x0, M0))
            sides.append(rsu_side(noisy.heading, noisy.position, r))
        return Twin(v, tracks, [M0.copy() for _ in sc.rsus], tuple(sides), age=age)

    # -- one slot ----------------------------------------------------------

    def _order(self):
        """Active ids sorted by along-road coordinate (ties by id)."""
        t = self.time
        return sorted(self.twins, key=lambda vid: (self.twins[vid].vehicle.pose(t).position[0], vid))

    def _predict(self, tw: Twin):
        if tw.age == 0:
            return
        T = self.sc.slot
        for i in range(N_RSU):
            tw.tracks[i] = predict(tw.tracks[i], T, self.sc.process)

    def _lambdas(self, ids):
        sc = self.sc
        lam = np.zeros((len(ids), N_RSU))
        if not sc.enforce_sensing:
            return lam
        noise = sc.process if sc.pcrb_process_noise else None
        for k, vid in enumerate(ids):
            tw = self.twins[vid]
            if tw.age == 0:
                continue
            for i in range(N_RSU):
                tr = tw.tracks[i]
                try:
                    G = state_jacobian(tw.tracks[i].x_meas, sc.slot)
                    prior = pcrb_prior(tw.bounds[i], G, noise)
                    lam[k, i] = lambda_threshold(tr, tr.x_pred, sc.radio, prev=tw.bounds[i][0, 0], prior=prior)
                except (IsacError, np.linalg.LinAlgError):
                    lam[k, i] = 0.0
        return lam

    def _solve(self, states, lam):
        cfg, sc = self.sc.radio, self.sc
        if self.solver == "external":
            block = self.external.get(self.n)
            if block is None:
                raise FormatError(f"no external beams for slot {self.n}")
            if block.K != states.shape[0] or block.n_t != cfg.n_t:
                raise FormatError(f"slot {self.n}: external block has K={block.K}, n_t={block.n_t}; expected K={states.shape[0]}, n_t={cfg.n_t}")
            xi, F = block.as_assignment()
            return xi, F, 0, 0, []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rep = opt.solve(self.solver, states, cfg, lam, sc.fp)
        return rep.xi, rep.F, rep.iterations, rep.swaps, rep.infeasible

    def step(self) -> SlotResult:
        """Advance one slot and return its metrics."""
        sc, cfg = self.sc, self.sc.radio
        self.n += 1
        # (1) ground truth
        self._roster()
        ids = self._order()
        K = len(ids)
        truth = np.array([[s.as_array() for s in self.truth(self.twins[v].vehicle)] for v in ids]).reshape(K, N_RSU, 3)
        # (2) prediction
        rebooted = []
        for vid in ids:
            tw = self.twins[vid]
            try:
                self._predict(tw)
            except (DegenerateGeometry, SingularPrior):
                self.twins[vid] = self._bootstrap(tw.vehicle)
                rebooted.append(vid)
        pred = np.array([[tr.x_pred.as_array() for tr in self.twins[v].tracks] for v in ids]).reshape(K, N_RSU, 3)
        # (3) decision
        lam = self._lambdas(ids)
        err = None
        fallback = False
        iters = swaps = 0
        infeasible = []
        try:
            xi, F, iters, swaps, infeasible = self._solve(pred, lam)
        except (IsacError, ValueError, np.linalg.LinAlgError) as exc:
            err = f"{type(exc).__name__}: {exc}"
            log.warning("slot %d: solver failed (%s); distance fallback", self.n, err)
            xi = opt.assign_distance(pred)
            F = matched_beams(pred, cfg)
            fallback = True
        records = self._records(ids, xi, F) if self.collect else []
        prior_rc = np.array([rcrb(self.twins[v].bounds[int(np.argmax(xi[k]))]) for k, v in enumerate(ids)])
        # (4)-(5) sensing and correction at the serving RSU
        nulls = []
        for k, vid in enumerate(ids):
            tw = self.twins[vid]
            i = int(np.argmax(xi[k]))
            f = F[i][:, k]
            try:
                self._sense(tw, i, f, VehicleState.from_array(truth[k, i]))
            except BeamNull:
                nulls.append(vid)
                self._coast(tw)
            except (DegenerateGeometry, SingularInnovation, SingularPrior):
                self.twins[vid] = self._bootstrap(tw.vehicle, age=1)
                rebooted.append(vid)
            self.twins[vid].serving = i
            self.twins[vid].prev_beam = f.copy()
            self.twins[vid].age += 1
        # (6) metrics against the truth
        g = sinr_matrix(truth, F, xi, cfg) if K else np.zeros((0, N_RSU))
        served = g[np.arange(K), np.argmax(xi, axis=1)] if K else np.zeros(0)
        rate = np.log2(1.0 + served)
        rc = np.empty(K)
        rerr = np.empty(K)
        for k, vid in enumerate(ids):
            tw = self.twins[vid]
            i = tw.serving
            rc[k] = rcrb(tw.bounds[i])
            rerr[k] = abs(tw.tracks[i].x_meas.d - truth[k, i, 1])
        return SlotResult(
            slot=self.n,
            ids=list(ids),
            xi=np.array(xi),
            sinr=served,
            rate=rate,
            sum_rate=float(rate.sum()),
            rcrb=rc,
            range_err=rerr,
            rcrb_prior=prior_rc,
            iterations=int(iters),
            swaps=int(swaps),
            infeasible=[(ids[k], i) for k, i in infeasible],
            fallback=fallback,
            solver_error=err,
            beam_null=nulls,
            rebootstrapped=rebooted,
            F=F,
            records=records,
        )

    def _sense(self, tw: Twin, i: int, f, x_true: VehicleState):
        sc, cfg = self.sc, self.sc.radio
        rng = stream(sc.seed, _ECHO, self.n, tw.vehicle.vid)
        y = synthesize_measurement(x_true, f, cfg, rng, zero_noise=not sc.measurement_noise)
        tr = tw.tracks[i]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            new, info = correct(tr, y, f, cfg, sc.gain_mode, sc.resid_forget)
        # bound recursion at the predicted state, where correct() linearized
        J, R_diag = info["jacobian"], info["R_diag"]
        if tw.age == 0:
            prior = tw.bounds[i]
        else:
            G = state_jacobian(tw.tracks[i].x_meas, sc.slot)
            prior = pcrb_prior(tw.bounds[i], G, sc.process if sc.pcrb_process_noise else None)
        bound = clean_cov(pcrb(fisher_info(tr, J, R_diag, prior=prior)))
        tw.tracks[i] = new
        tw.bounds[i] = bound
        tw.prev_echo = y
        self._handover(tw, i)

    def _coast(self, tw: Twin):
        """No usable echo: carry the prediction over as the corrected state."""
        sc = self.sc
        for i in range(N_RSU):
            tr = tw.tracks[i]
            if tw.age:
                G = state_jacobian(tr.x_meas, sc.slot)
                tw.bounds[i] = pcrb_prior(tw.bounds[i], G, sc.process if sc.pcrb_process_noise else None)
            tw.tracks[i] = replace(tr, x_meas=tr.x_pred, M_meas=tr.M_pred)
        tw.prev_echo = None

    def _handover(self, tw: Twin, i: int):
        """Replace the other RSU's track by the serving one seen from there."""
        sc = self.sc
        j = 1 - i
        src = tw.tracks[i]
        heading = tw.vehicle.heading
        x = transfer_state(src.x_meas, sc.rsus[i], sc.rsus[j], heading, tw.sides[i])
        Jt = transfer_jacobian(src.x_meas, sc.rsus[i], sc.rsus[j], heading, tw.sides[i])
        M = clean_cov(Jt @ src.M_meas @ Jt.T)
        tw.tracks[j] = replace(tw.tracks[j], x_pred=x, x_meas=x, M_pred=M, M_meas=M, resid_cov=None)
        tw.bounds[j] = clean_cov(Jt @ tw.bounds[i] @ Jt.T)

    def _records(self, ids, xi, F):
        cfg = self.sc.radio
        nf, nl = dataset_dims(cfg.n_t, cfg.n_r)
        out = []
        for k, vid in enumerate(ids):
            tw = self.twins[vid]
            feat = np.zeros(nf)
            if tw.prev_echo is not None:
                r = tw.prev_echo.r_tilde
                feat[: cfg.n_r] = r.real
                feat[cfg.n_r : 2 * cfg.n_r] = r.imag
                feat[-2] = tw.prev_echo.nu_tilde
                feat[-1] = tw.prev_echo.mu_tilde
            if tw.prev_beam is not None:
                o = 2 * cfg.n_r
                feat[o : o + cfg.n_t] = tw.prev_beam.real
                feat[o + cfg.n_t : o + 2 * cfg.n_t] = tw.prev_beam.imag
            i = int(np.argmax(xi[k]))
            f = F[i][:, k]
            lab = np.r_[f.real, f.imag, i + 1]
            out.append((self.n, k, feat, lab))
        return out


def run_slot(world: World, scenario: Scenario | None = None) -> SlotResult:
    """One closed-loop slot of ``world`` (``scenario`` must match the world's)."""
    if scenario is not None and scenario is not world.sc:
        raise ValueError("scenario does not belong to this world")
    return world.step()


def run(scenario: Scenario, solver: str | None = None, external=None, collect_dataset=False, slots=None):
    """All slots of one scenario; returns the list of :class:`SlotResult`."""
    w = World(scenario, solver, external, collect_dataset)
    return [w.step() for _ in range(slots or scenario.horizon)]


# ---------------------------------------------------------------------------
# experiments


def mean_ci(x, z: float = 1.96):
    """Mean and normal-approximation half width of the 95% interval."""
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        return float("nan"), float("nan"), 0
    if x.size == 1:
        return float(x[0]), 0.0, 1
    return float(x.mean()), float(z * x.std(ddof=1) / math.sqrt(x.size)), int(x.size)


def summarize(results, warmup_slots: int = 0) -> dict:
    """Per-run scalars over the slots after warmup."""
    kept = [r for r in results if r.slot > warmup_slots]
    served = [r for r in kept if r.K]
    rates = np.concatenate([r.rate for r in served]) if served else np.zeros(0)
    rc = np.concatenate([r.rcrb for r in served]) if served else np.zeros(0)
    return {
        "slots": len(kept),
        "mean_active": float(np.mean([r.K for r in kept])) if kept else 0.0,
        "sum_rate_bps_hz": float(np.mean([r.sum_rate for r in kept])) if kept else 0.0,
        "per_vehicle_rate_bps_hz": float(rates.mean()) if rates.size else 0.0,
        "mean_rcrb_m": float(rc.mean()) if rc.size else float("nan"),
        "median_range_err_m": float(np.median(np.concatenate([r.range_err for r in served]))) if served else float("nan"),
        "solver_errors": sum(r.solver_error is not None for r in kept),
        "infeasible": sum(len(r.infeasible) for r in kept),
    }


@dataclass
class Sweep:
    """Grid of runs: every solver x antenna count x population x replication."""

    solvers: tuple = ("heuristic", "distance")
    antennas: tuple = (32,)
    ks: tuple = ()  # static populations; empty means Poisson traffic at ``rates``
    rates: tuple = ()
    reps: int = 1
    slots: int | None = None


def cell_scenarios(base: Scenario, sweep: Sweep):
    """Yield ``(key, scenario)`` for every cell and replication of a sweep."""
    pops = [("k", k) for k in sweep.ks] or [("rate", r) for r in (sweep.rates or (base.rate,))]
    for n in sweep.antennas:
        radio = base.radio.with_antennas(n)
        for kind, val in pops:
            for rep in range(sweep.reps):
                kw = {"radio": radio, "seed": base.seed + rep}
                if kind == "k":
                    kw.update(static_k=int(val))
                else:
                    kw.update(static_k=0, rate=float(val))
                if sweep.slots:
                    kw["horizon"] = int(sweep.slots)
                yield (n, kind, val, rep), replace(base, **kw)


def run_experiment(base: Scenario, sweep: Sweep):
    """Run a sweep; returns ``(rows, aggregate)``.

    ``rows`` has one dict per (cell, replication, solver).  ``aggregate`` has
    one dict per (cell, solver, metric) with mean and 95% half width.  A cell
    whose run raises is recorded with ``error`` set and the sweep continues.
    """
    rows = []
    for (n, kind, val, rep), sc in cell_scenarios(base, sweep):
        warm = 0 if sc.static_k else sc.warmup_slots
        for solver in sweep.solvers:
            row = {"solver": solver, "n_t": n, "population": kind, "value": val, "rep": rep, "seed": sc.seed, "error": ""}
            try:
                row.update(summarize(run(sc, solver), warm))
            except (IsacError, ValueError, np.linalg.LinAlgError) as exc:
                row["error"] = f"{type(exc).__name__}: {exc}"
                log.error("cell %s failed: %s", row, exc)
            rows.append(row)
    return rows, aggregate(rows)


METRICS = ("sum_rate_bps_hz", "per_vehicle_rate_bps_hz", "mean_rcrb_m", "median_range_err_m", "mean_active")


def aggregate(rows) -> list:
    out = []
    keys = sorted({(r["solver"], r["n_t"], r["population"], r["value"]) for r in rows}, key=str)
    for key in keys:
        sel = [r for r in rows if (r["solver"], r["n_t"], r["population"], r["value"]) == key and not r["error"]]
        for m in METRICS:
            mean, ci, n = mean_ci([r[m] for r in sel])
            out.append({"solver": key[0], "n_t": key[1], "population": key[2], "value": key[3], "metric": m, "mean": mean, "ci95": ci, "n": n})
    return out


def export_dataset(results, path, n_t: int, n_r: int) -> int:
    """Write the dataset records carried by ``results`` (see :mod:`isac_twin.beamio`)."""
    from .beamio import write_dataset

    return write_dataset(path, n_t, n_r, (rec for r in results for rec in r.records))


def beam_blocks(results) -> list:
    """Serving beams of every slot as beam-exchange blocks."""
    blocks = []
    for r in results:
        rsu = np.argmax(r.xi, axis=1) if r.K else np.zeros(0, int)
        n_t = r.F.shape[1] if r.F is not None else 0
        beams = np.array([r.F[rsu[k]][:, k] for k in range(r.K)]).reshape(r.K, n_t)
        blocks.append(BeamBlock(r.slot, rsu, beams))
    return blocks
