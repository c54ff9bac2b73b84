"""Fast in-process invariant checks, run by ``isac-twin selftest``."""

from __future__ import annotations

import math
import os
import sys
import tempfile

import numpy as np

from . import harness as hz
from . import optimizer as op
from .beamio import BeamBlock, read_beams, write_beams
from .kinematics import CartesianPose, cartesian_to_state, evolve_state, state_jacobian
from .radio import RadioConfig, sinr_matrix

RSUS = ((0.0, 30.0), (0.0, -30.0))


def _states(rng, K):
    s = np.empty((K, 2, 3))
    for k in range(K):
        hd = (1.0, 0.0) if rng.random() < 0.5 else (-1.0, 0.0)
        pose = CartesianPose((rng.uniform(-30, 30), rng.uniform(-5, 5)), rng.normal(30, 3), hd)
        for i, r in enumerate(RSUS):
            s[k, i] = cartesian_to_state(pose, r).as_array()
    return s


def check_kinematics():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(200):
        pose = CartesianPose((rng.uniform(-30, 30), rng.uniform(-5, 5)), rng.uniform(5, 40), (1.0, 0.0))
        x = cartesian_to_state(pose, RSUS[0])
        got = evolve_state(x, 0.02).as_array()
        want = cartesian_to_state(pose.advanced(0.02), RSUS[0]).as_array()
        worst = max(worst, float(np.max(np.abs(got - want) / np.maximum(1.0, np.abs(want)))))
    return worst < 1e-9, f"max relative error {worst:.2e}"


def check_jacobian():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(50):
        pose = CartesianPose((rng.uniform(-30, 30), rng.uniform(-5, 5)), rng.uniform(5, 40), (-1.0, 0.0))
        x = cartesian_to_state(pose, RSUS[1])
        J = state_jacobian(x)
        a = x.as_array()
        num = np.empty((3, 3))
        for j in range(3):
            h = 1e-6 * max(1.0, abs(a[j]))
            e = np.zeros(3)
            e[j] = h
            hi = evolve_state(type(x).from_array(a + e)).as_array()
            lo = evolve_state(type(x).from_array(a - e)).as_array()
            num[:, j] = (hi - lo) / (2 * h)
        worst = max(worst, float(np.max(np.abs(J - num)) / max(1.0, np.max(np.abs(num)))))
    return worst < 1e-6, f"max scaled error {worst:.2e}"


def check_qt():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(20):
        K, n = int(rng.integers(1, 8)), int(rng.choice([4, 8, 16]))
        cfg = RadioConfig(n_t=n, n_r=n)
        s = _states(rng, K)
        F = rng.normal(size=(2, n, K)) + 1j * rng.normal(size=(2, n, K))
        F /= np.linalg.norm(F, axis=1, keepdims=True)
        xi = np.zeros((K, 2), dtype=int)
        xi[np.arange(K), rng.integers(0, 2, K)] = 1
        g = op.update_gamma(s, F, xi, cfg)
        y = op.update_y(s, F, xi, g, cfg)
        rate = float(np.sum(np.log1p(sinr_matrix(s, F, xi, cfg))))
        worst = max(worst, abs(op.eval_fq(s, F, xi, g, y, cfg) - rate))
    return worst < 1e-8, f"max gap {worst:.2e}"


def check_fp_monotone():
    rng = np.random.default_rng(4)
    cfg = RadioConfig(n_t=8, n_r=8)
    s = _states(rng, 6)
    xi = op.assign_distance(s)
    _, _, trace, _ = op.fp_polish(s, xi, cfg)
    drops = np.diff(trace)
    return bool(np.all(drops >= -1e-9)), f"{len(trace)} trace points, min step {drops.min() if drops.size else 0.0:.2e}"


def check_beam_file():
    rng = np.random.default_rng(5)
    b = rng.normal(size=(3, 4)) + 1j * rng.normal(size=(3, 4))
    b /= np.linalg.norm(b, axis=1, keepdims=True)
    block = BeamBlock(7, np.array([0, 1, 0]), b)
    with tempfile.TemporaryDirectory() as tmp:
        p = os.path.join(tmp, "beams.txt")
        write_beams(p, [block])
        back = read_beams(p)[0]
    ok = back.slot == 7 and np.array_equal(back.rsu, block.rsu) and np.array_equal(back.beams, b)
    return ok, "bit-exact round trip" if ok else "mismatch"


def check_harness():
    sc = hz.Scenario(horizon=40, seed=11, rate=5.0)
    a = hz.run(sc, "heuristic")
    b = hz.run(sc, "heuristic")
    same = all(x.sum_rate == y.sum_rate and x.ids == y.ids for x, y in zip(a, b))
    finite = all(np.all(np.isfinite(r.rate)) for r in a)
    return same and finite, f"{len(a)} slots, reproducible={same}, finite={finite}"


CHECKS = (
    ("kinematics matches Cartesian motion", check_kinematics),
    ("state Jacobian matches differences", check_jacobian),
    ("quadratic transform is tight", check_qt),
    ("FP surrogate is monotone", check_fp_monotone),
    ("beam file round trip", check_beam_file),
    ("closed loop is deterministic", check_harness),
)


def run_all(out=sys.stdout) -> bool:
    ok_all = True
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # report and keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        ok_all &= bool(ok)
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}", file=out)
    print(f"{'all checks passed' if ok_all else 'some checks failed'}", file=out)
    return ok_all


if __name__ == "__main__":
    sys.exit(0 if run_all() else 1)
