"""Acceptance suite: one test per headline criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the slow closed-loop trend
checks carry the ``slow`` marker.
"""

import math
import time

import numpy as np
import pytest

from isac_twin import harness as hz
from isac_twin import optimizer as op
from isac_twin.cli import main
from isac_twin.kinematics import (
    CartesianPose,
    ProcessNoise,
    VehicleState,
    cartesian_to_state,
    evolve_state,
    state_jacobian,
)
from isac_twin.radio import RadioConfig, sinr_matrix, steer_rx, steer_tx
from isac_twin.sensing import expected_measurement, measurement_jacobian, steering_derivative, synthesize_measurement
from isac_twin.tracking import TrackState, correct, fisher_info, linearize, pcrb, pcrb_prior, predict

RSUS = ((0.0, 30.0), (0.0, -30.0))
T = 0.02


def report(capsys, name, ok, detail, elapsed=None):
    took = f" [{elapsed:.1f} s]" if elapsed is not None else ""
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'}  {name}: {detail}{took}")
    assert ok, f"{name}: {detail}"


def random_pose(rng):
    hd = (1.0, 0.0) if rng.random() < 0.5 else (-1.0, 0.0)
    return CartesianPose((rng.uniform(-30, 30), rng.uniform(-5, 5)), rng.uniform(5, 45), hd)


def random_states(rng, K):
    s = np.empty((K, 2, 3))
    for k in range(K):
        pose = random_pose(rng)
        for i, r in enumerate(RSUS):
            s[k, i] = cartesian_to_state(pose, r).as_array()
    return s


# ---------------------------------------------------------------------------
# analytic oracles


def test_kinematics_oracle(capsys):
    rng = np.random.default_rng(2024)
    cases = []
    while len(cases) < 10_000:
        pose = random_pose(rng)
        rsu = RSUS[int(rng.integers(0, 2))]
        x = cartesian_to_state(pose, rsu)
        if abs(x.phi) < 1e-6:  # foot point, rejected by design
            continue
        cases.append((x, cartesian_to_state(pose.advanced(T), rsu).as_array()))
    t0 = time.perf_counter()
    worst = 0.0
    for x, want in cases:
        got = evolve_state(x, T).as_array()
        worst = max(worst, float(np.max(np.abs(got - want) / np.abs(want))))
    el = time.perf_counter() - t0
    report(capsys, "kinematics oracle", worst < 1e-9 and el < 1.0, f"10000 states, max relative error {worst:.2e}", el)


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def test_jacobian_suite(capsys):
    rng = np.random.default_rng(7)
    cfg = RadioConfig(n_t=16, n_r=12)
    worst = {"state": 0.0, "measurement": 0.0, "steering": 0.0, "gradient": 0.0}
    t0 = time.perf_counter()
    for _ in range(1000):
        pose = random_pose(rng)
        x = cartesian_to_state(pose, RSUS[int(rng.integers(0, 2))])
        a = x.as_array()
        # state transition
        num = np.empty((3, 3))
        for j in range(3):
            h = 1e-6 * max(1.0, abs(a[j]))
            e = np.zeros(3)
            e[j] = h
            num[:, j] = (evolve_state(VehicleState.from_array(a + e), T).as_array() - evolve_state(VehicleState.from_array(a - e), T).as_array()) / (2 * h)
        worst["state"] = max(worst["state"], _rel(state_jacobian(x, T), num))
        # measurement, exact mode
        f = rng.normal(size=cfg.n_t) + 1j * rng.normal(size=cfg.n_t)
        f /= np.linalg.norm(f)
        H = measurement_jacobian(x, f, cfg, exact=True)
        cols = []
        for j, h in enumerate((1e-7, 1e-5, 1e-5)):
            e = np.zeros(3)
            e[j] = h
            hi = expected_measurement(VehicleState.from_array(a + e), f, cfg).stacked()
            lo = expected_measurement(VehicleState.from_array(a - e), f, cfg).stacked()
            cols.append((hi - lo) / (2 * h))
        Hfd = np.array(cols).T
        Hs = np.r_[H[: cfg.n_r].real, H[: cfg.n_r].imag, H[cfg.n_r :].real]
        for r_a, r_n in zip(Hs, Hfd):
            if np.linalg.norm(r_n) > 0:
                worst["measurement"] = max(worst["measurement"], _rel(r_a, r_n))
        # steering derivative
        phi, h = x.phi, 1e-6
        outer = lambda p: np.outer(steer_rx(p, cfg.n_r), steer_tx(p, cfg.n_t).conj())
        worst["steering"] = max(worst["steering"], _rel(steering_derivative(phi, cfg), (outer(phi + h) - outer(phi - h)) / (2 * h)))
        # surrogate gradient along a random direction
        K = int(rng.integers(1, 5))
        s = random_states(rng, K)
        F = rng.normal(size=(2, cfg.n_t, K)) + 1j * rng.normal(size=(2, cfg.n_t, K))
        F /= np.linalg.norm(F, axis=1, keepdims=True)
        xi = np.zeros((K, 2), dtype=int)
        xi[np.arange(K), rng.integers(0, 2, K)] = 1
        g = op.update_gamma(s, F, xi, cfg)
        y = op.update_y(s, F, xi, g, cfg) * rng.uniform(0.5, 2.0)
        D = rng.normal(size=F.shape) + 1j * rng.normal(size=F.shape)
        hh = 1e-6
        fd = (op.eval_fq(s, F + hh * D, xi, g, y, cfg) - op.eval_fq(s, F - hh * D, xi, g, y, cfg)) / (2 * hh)
        an = float(np.sum(np.real(np.conj(op.fq_gradient(s, F, xi, g, y, cfg)) * D)))
        worst["gradient"] = max(worst["gradient"], abs(fd - an) / max(abs(an), 1e-12))
    el = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and el < 10
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(capsys, "Jacobian suite", ok, f"1000 points; worst relative error {detail}", el)


def test_quadratic_transform(capsys):
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    gap = drop = 0.0
    for _ in range(100):
        K, n = int(rng.integers(1, 9)), int(rng.choice([4, 8, 16]))
        cfg = RadioConfig(n_t=n, n_r=n)
        s = random_states(rng, K)
        F = rng.normal(size=(2, n, K)) + 1j * rng.normal(size=(2, n, K))
        F /= np.linalg.norm(F, axis=1, keepdims=True)
        xi = np.zeros((K, 2), dtype=int)
        xi[np.arange(K), rng.integers(0, 2, K)] = 1
        g = op.update_gamma(s, F, xi, cfg)
        y = op.update_y(s, F, xi, g, cfg)
        gap = max(gap, abs(op.eval_fq(s, F, xi, g, y, cfg) - float(np.sum(np.log1p(sinr_matrix(s, F, xi, cfg))))))
        _, _, trace, _ = op.fp_polish(s, xi, cfg, None, F)
        if len(trace) > 1:
            drop = max(drop, float(-np.min(np.diff(trace))))
    el = time.perf_counter() - t0
    ok = gap < 1e-8 and drop <= 1e-9 and el < 30
    report(capsys, "quadratic-transform tightness", ok, f"100 instances, max gap {gap:.1e}, largest trace decrease {max(drop, 0.0):.1e}", el)


def test_exhaustive_oracle(capsys):
    cfg = RadioConfig(n_t=4, n_r=4)
    t0 = time.perf_counter()
    short = []
    for seed in range(24):
        rng = np.random.default_rng(seed)
        s = random_states(rng, int(rng.integers(1, 5)))
        best, _ = op.exhaustive_best(s, cfg)
        got = op.assign_heuristic(s, cfg).sum_rate_nats
        short.append(best - got)
    el = time.perf_counter() - t0
    ok = max(short) <= 1e-6 and el < 120
    report(capsys, "exhaustive-assignment oracle", ok, f"24 geometries with K <= 4, worst shortfall {max(short):.1e} nats", el)


def test_pcrb_consistency(capsys):
    # high SNR and process noise small enough that the one-step linearisation
    # is accurate; the filter error should then meet the bound
    cfg = RadioConfig(n_t=16, n_r=16)
    noise = ProcessNoise(1e-14, 1e-6, 1e-6)
    E = noise.matrix()
    x0 = VehicleState(0.5, 20.0, 15.0)
    M0 = np.diag([1e-12, 1e-4, 1e-4])
    S, N = 2, 10_000
    path = [x0, evolve_state(x0, T)]
    beams = [steer_tx(x.phi, cfg.n_t) for x in path]
    P = M0
    for t, x in enumerate(path):
        if t:
            P = pcrb_prior(P, state_jacobian(path[t - 1], T), noise)
        _, J, R = linearize(x, beams[t], cfg)
        P = pcrb(fisher_info(TrackState(x, x, P, P), J, R))
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    L, Le = np.linalg.cholesky(M0), np.linalg.cholesky(E)
    sq = 0.0
    for _ in range(N):
        xt = x0.as_array() + L @ rng.standard_normal(3)
        tr = TrackState.bootstrap(x0, M0)
        for t in range(S):
            if t:
                xt = evolve_state(VehicleState.from_array(xt), T).as_array() + Le @ rng.standard_normal(3)
                tr = predict(tr, T, noise)
            y = synthesize_measurement(VehicleState.from_array(xt), beams[t], cfg, rng)
            tr, _ = correct(tr, y, beams[t], cfg)
        sq += (tr.x_meas.phi - xt[0]) ** 2
    ratio = sq / N / P[0, 0]
    # the bound recursion itself settles to a fixed point
    _, J, R = linearize(x0, beams[0], cfg)
    G = state_jacobian(x0, T)
    M = np.diag([1e-2, 1e-2, 1.0])
    steps = None
    for it in range(1, 201):
        M_new = pcrb(fisher_info(TrackState(x0, x0, M, M), J, R, prior=G @ M @ G.T + ProcessNoise().matrix()))
        scale = np.sqrt(np.outer(np.diag(M_new), np.diag(M_new)))
        if np.max(np.abs(M_new - M) / scale) < 1e-10:
            steps = it
            break
        M = M_new
    el = time.perf_counter() - t0
    ok = 0.8 <= ratio <= 1.5 and steps is not None and el < 60
    report(capsys, "PCRB consistency", ok, f"phi MSE / bound = {ratio:.3f} over {N} trials; recursion converged in {steps} steps", el)


# ---------------------------------------------------------------------------
# closed-loop trends

FIG5_NT = 32
FIG5_SLOTS = {5: 10, 20: 150, 50: 20}
FIG5_REPS = 20


def fig5_cell(K, n_t, slots, solvers):
    out = []
    for rep in range(FIG5_REPS):
        sc = hz.Scenario(static_k=K, horizon=slots, seed=rep, radio=RadioConfig(n_t=n_t, n_r=n_t))
        out.append({s: hz.summarize(hz.run(sc, s))["per_vehicle_rate_bps_hz"] for s in solvers})
    return out


@pytest.mark.slow
def test_fig5_trend(capsys):
    t0 = time.perf_counter()
    wins = {}
    for K in (20, 50):
        cell = fig5_cell(K, FIG5_NT, FIG5_SLOTS[K], ("heuristic", "distance"))
        wins[K] = sum(c["heuristic"] > c["distance"] for c in cell)
    cell = fig5_cell(5, FIG5_NT, FIG5_SLOTS[5], ("greedy", "distance"))
    worse = sum(c["greedy"] < c["distance"] for c in cell)
    el = time.perf_counter() - t0
    need = math.ceil(0.95 * FIG5_REPS)
    ok = all(w >= need for w in wins.values()) and worse > FIG5_REPS / 2 and el < 600
    detail = f"n_t={FIG5_NT}: heuristic > distance in {wins[20]}/{FIG5_REPS} (K=20) and {wins[50]}/{FIG5_REPS} (K=50) reps, need {need}; greedy < distance at K=5 in {worse}/{FIG5_REPS}"
    report(capsys, "Fig. 5 trend", ok, detail, el)


@pytest.mark.slow
def test_fig6_trend(capsys):
    t0 = time.perf_counter()
    bad = []
    table = []
    for seed in range(5):
        sums = []
        for n in (16, 32, 64):
            sc = hz.Scenario(static_k=50, horizon=20, seed=seed, radio=RadioConfig(n_t=n, n_r=n))
            sums.append(hz.summarize(hz.run(sc, "heuristic"))["sum_rate_bps_hz"])
        table.append(sums)
        if not (sums[0] < sums[1] < sums[2]):
            bad.append(seed)
    el = time.perf_counter() - t0
    mean = np.mean(table, axis=0)
    detail = f"K=50, 5 seeds, mean sum rate {mean[0]:.3f} < {mean[1]:.3f} < {mean[2]:.3f} bits/s/Hz; non-increasing seeds: {bad or 'none'}"
    report(capsys, "Fig. 6 trend", not bad and el < 600, detail, el)


@pytest.mark.slow
def test_fig9_trend(capsys):
    t0 = time.perf_counter()
    stat, first, start, drift = {}, {}, {}, {}
    for n in (16, 32, 64):
        sc = hz.Scenario(static_k=10, horizon=60, seed=0, m0=(1e-2, 1e-2, 1.0), radio=RadioConfig(n_t=n, n_r=n))
        res = hz.run(sc, "heuristic")
        series = np.array([float(np.mean(r.rcrb)) for r in res])
        start[n] = float(np.mean(res[0].rcrb_prior))
        first[n] = series[0]
        stat[n] = float(np.mean(series[40:]))
        drift[n] = abs(np.mean(series[40:]) - np.mean(series[20:40])) / stat[n]
    el = time.perf_counter() - t0
    ok = (
        all(math.isclose(v, 0.1, rel_tol=1e-12) for v in start.values())
        and all(first[n] < 0.1 / 10 for n in first)
        and all(v < 0.02 for v in stat.values())
        and stat[16] > stat[32] > stat[64]
        and max(drift.values()) < 0.1
        and el < 300
    )
    detail = (
        "initial 0.1 m; after one echo "
        + ", ".join(f"{first[n] * 1e3:.2f}" for n in first)
        + " mm; stationary "
        + " > ".join(f"{stat[n] * 1e3:.3f}" for n in stat)
        + f" mm for n_t = 16, 32, 64; plateau drift {max(drift.values()):.1%}"
    )
    report(capsys, "Fig. 9 trend", ok, detail, el)


def test_littles_law(capsys):
    t0 = time.perf_counter()
    sc = hz.Scenario(rate=5.0, horizon=20_000, seed=0)
    w = hz.World(sc)
    arr = np.sort([v.t_arr for v in w.vehicles])
    dep = np.sort([v.t_dep(sc.length) for v in w.vehicles])
    times = np.arange(1, sc.horizon + 1) * sc.slot
    keep = times > sc.warmup
    counts = np.searchsorted(arr, times[keep], "right") - np.searchsorted(dep, times[keep], "right")
    # the world roster follows the same schedule
    for n in range(1, sc.horizon + 1, 97):
        w.n = n
        w._roster()
        assert len(w.twins) == len(hz.active_at(w.vehicles, w.time, sc.length))
    el = time.perf_counter() - t0
    mean = float(counts.mean())
    ok = abs(mean - 20.0) <= 2.0 and el < 120
    report(capsys, "Little's law", ok, f"{keep.sum()} slots after warm-up, mean active {mean:.2f} (L = {sc.little_l():.1f})", el)


def test_determinism(capsys, tmp_path):
    argv = ["run", "--horizon", "60", "--antennas", "8", "--rate", "5", "--seed", "9", "--solver", "heuristic,distance"]
    t0 = time.perf_counter()
    assert main([*argv, "--out", str(tmp_path / "a")]) == 0
    assert main([*argv, "--out", str(tmp_path / "b")]) == 0
    assert main(["run", "--scenario", str(tmp_path / "a" / "scenario.toml"), "--out", str(tmp_path / "c")]) == 0
    names = ("results.csv", "timeseries.csv", "aggregate.csv", "manifest.json")
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / d / f).read_bytes() for f in names for d in ("b", "c"))
    el = time.perf_counter() - t0
    report(capsys, "determinism", same, "two runs and a manifest replay give byte-identical CSVs" if same else "outputs differ", el)
