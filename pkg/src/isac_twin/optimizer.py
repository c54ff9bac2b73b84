"""Joint vehicle-RSU assignment and beamforming by fractional programming.

For a fixed assignment the sum rate is lifted to the quadratic-transform
surrogate ``f_q(xi, F, gamma, y)``.  Maximizing it alternately over
``(gamma, y)`` (closed form) and ``F`` (projected gradient) never decreases
``f_q``, and at the closed-form ``(gamma, y)`` the surrogate equals the sum
rate (natural log) exactly.  Three assignment strategies sit on top: the
distance rule, a sequential greedy pass and a swap-based local search.

Array layouts follow :mod:`isac_twin.radio`: states ``(K, 2, 3)``, beams
``(2, n_t, K)``, assignment ``(K, 2)``.  Auxiliary variables are ``(K, 2)``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleSensing, SwapBudgetExceeded
from .radio import N_RSU, RadioConfig, as_states, matched_beams, path_loss, reflection_coeff, sinr_matrix, steer_rx, steer_tx

log = logging.getLogger(__name__)


@dataclass
class FPOptions:
    max_outer: int = 50
    tol: float = 1e-6
    pgd_steps: int = 200
    armijo_beta: float = 0.5
    armijo_c: float = 1e-4
    step0: float = 1.0
    max_backtracks: int = 60
    pgd_tol: float = 1e-7  # one decade below the outer tolerance
    y_variant: str = "stationary"  # or "printed"
    swap_factor: int = 4
    spectral: bool = True  # Barzilai-Borwein trial steps after the first iteration


@dataclass
class AuxiliaryState:
    gamma: np.ndarray
    y: np.ndarray

    @property
    def lam(self) -> np.ndarray:
        """Dual variables ``1/(1+gamma)``."""
        return 1.0 / (1.0 + self.gamma)


@dataclass
class SolveReport:
    xi: np.ndarray
    F: np.ndarray
    aux: AuxiliaryState
    zeta: np.ndarray
    trace: list = field(default_factory=list)
    iterations: int = 0
    swaps: int = 0
    solver: str = ""
    infeasible: list = field(default_factory=list)  # (k, i) pairs whose sensing bound was relaxed
    swap_budget_hit: bool = False
    sum_rate_nats: float = 0.0

    @property
    def sum_rate(self) -> float:
        """Sum rate in bits/s/Hz."""
        return self.sum_rate_nats / np.log(2.0)


# ---------------------------------------------------------------------------
# closed-form auxiliary updates and the surrogate


def _link_terms(states, F, cfg):
    """Inner products ``B[i, k, m] = a_ik^H f_im`` and path losses ``alpha[i, k]``."""
    phi = states[:, :, 0].T
    alpha = path_loss(states[:, :, 1].T, cfg.alpha_ref)
    A = steer_tx(phi, cfg.n_t)  # (2, K, n_t)
    B = A.conj() @ F
    return A, B, np.atleast_2d(alpha)


def update_gamma(states, F, xi, cfg: RadioConfig) -> np.ndarray:
    """``gamma* = SINR`` at the current beams and assignment."""
    return sinr_matrix(states, F, xi, cfg)


def update_y(states, F, xi, gamma, cfg: RadioConfig, variant: str = "stationary") -> np.ndarray:
    """Maximizer of ``f_q`` over ``y`` for fixed ``gamma``, ``F``, ``xi``.

    ``y = sqrt(1+gamma) kappa' sqrt(alpha) (a^H f) xi / D`` with ``D`` the
    received power from all beams of the RSU plus noise.  ``y`` is complex so
    that the cross term is maximized for any beam phase.  ``variant="printed"``
    evaluates the alternative expression in terms of the reflection
    coefficient and the sensing noise instead (real-valued, not stationary).
    """
    states = as_states(states)
    xi = np.asarray(xi)
    K = states.shape[0]
    if K == 0:
        return np.zeros((0, N_RSU), complex)
    _, B, alpha = _link_terms(states, F, cfg)
    xiT = xi.T  # (2, K)
    own = np.einsum("ikk->ik", B)
    if variant == "stationary":
        P = cfg.n_t * alpha[:, :, None] * np.abs(B) ** 2 * xiT[:, None, :]
        D = P.sum(axis=2) + cfg.sigma_c2
        y = np.sqrt(1.0 + gamma.T) * cfg.kappa_tx * np.sqrt(alpha) * own * xiT / D
    elif variant == "printed":
        beta = np.abs(reflection_coeff(states[:, :, 1].T, cfg.varrho))  # (2, K)
        P = cfg.kappa**2 * (beta**2)[:, None, :] * np.abs(B) ** 2 * xiT[:, None, :]
        interf = P.sum(axis=2) - np.einsum("ikk->ik", P)
        y = (cfg.kappa * beta * np.abs(own) * xiT / (interf + cfg.sigma_e2)).astype(complex)
    else:
        raise ValueError(f"unknown y variant {variant!r}")
    return y.T


def zeta_matrix(states, F, xi, gamma, y, cfg: RadioConfig) -> np.ndarray:
    """Per-(vehicle, RSU) terms of ``f_q`` (natural log)."""
    states = as_states(states)
    xi = np.asarray(xi)
    if states.shape[0] == 0:
        return np.zeros((0, N_RSU))
    _, B, alpha = _link_terms(states, F, cfg)
    g, yT, xiT = gamma.T, y.T, xi.T
    own = np.einsum("ikk->ik", B)
    cross = 2.0 * np.real(np.conj(yT) * np.sqrt(1.0 + g) * cfg.kappa_tx * np.sqrt(alpha) * own * xiT)
    P = cfg.n_t * alpha[:, :, None] * np.abs(B) ** 2 * xiT[:, None, :]
    quad = np.abs(yT) ** 2 * (P.sum(axis=2) + cfg.sigma_c2)
    return (np.log1p(g) - g + cross - quad).T


def eval_fq(states, F, xi, gamma, y, cfg: RadioConfig) -> float:
    return float(np.sum(zeta_matrix(states, F, xi, gamma, y, cfg)))


def zeta(states, F, xi, gamma, y, cfg: RadioConfig, i: int, k: int) -> float:
    """``f_q`` term of vehicle ``k`` at RSU ``i`` (0-based)."""
    return float(zeta_matrix(states, F, xi, gamma, y, cfg)[k, i])


def _beam_quadratics(states, xi, gamma, y, cfg):
    """Per-RSU matrices ``A_i`` and per-beam linear terms ``b_im`` of ``f_q``.

    For beam ``m`` of RSU ``i`` the surrogate reads
    ``2 Re(b^H f) - xi f^H A f`` up to constants.
    """
    phi = states[:, :, 0].T
    alpha = path_loss(states[:, :, 1].T, cfg.alpha_ref)
    S = steer_tx(phi, cfg.n_t)  # (2, K, n_t)
    w = np.abs(y.T) ** 2 * cfg.n_t * alpha  # (2, K)
    A = (np.swapaxes(S, 1, 2) * w[:, None, :]) @ S.conj()
    c = y.T * np.sqrt(1.0 + gamma.T) * cfg.kappa_tx * np.sqrt(alpha) * xi.T  # (2, K)
    b = np.transpose(S * c[:, :, None], (0, 2, 1))  # (2, n_t, K)
    return A, b


def fq_gradient(states, F, xi, gamma, y, cfg: RadioConfig) -> np.ndarray:
    """Real gradient of ``f_q`` w.r.t. the beams, packed as complex numbers.

    A perturbation ``dF`` changes ``f_q`` by ``sum Re(conj(G) * dF)``.
    """
    states = as_states(states)
    A, b = _beam_quadratics(states, np.asarray(xi), gamma, y, cfg)
    AF = A @ F
    return 2.0 * (b - AF * np.asarray(xi).T[:, None, :])


# ---------------------------------------------------------------------------
# sensing constraint geometry


class SensingGeometry:
    """Rank-2 structure of ``Pi = db a^H + b da^H`` for a batch of angles.

    ``Pi^H Pi`` lives in the span of ``[a, da]``, so norms and the top right
    singular vector come from a 2x2 Hermitian eigenproblem.
    """

    def __init__(self, phi, cfg: RadioConfig):
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        a = steer_tx(phi, cfg.n_t)  # (P, n_t)
        b = steer_rx(phi, cfg.n_r)
        da = -1j * np.pi * np.arange(cfg.n_t) * a
        db = -1j * np.pi * np.arange(cfg.n_r) * b
        V = np.stack([a, da], axis=-1)  # (P, n_t, 2)
        U = np.stack([db, b], axis=-1)  # (P, n_r, 2): Pi = U V^H
        Q, R = np.linalg.qr(V)
        Gu = np.einsum("pnj,pnk->pjk", U.conj(), U)
        Hs = R @ Gu @ np.conj(np.swapaxes(R, -1, -2))  # Pi^H Pi = Q Hs Q^H
        Hs = 0.5 * (Hs + np.conj(np.swapaxes(Hs, -1, -2)))
        w, Z = np.linalg.eigh(Hs)
        self.Q = Q
        self.Hs = Hs
        self.s1sq = w[:, -1]
        self.v = np.einsum("pnj,pj->pn", Q, Z[:, :, -1])
        # with n_r == n_t both eigenvalues coincide and the whole span is extremal
        self.flat = w[:, 0] >= w[:, -1] * (1.0 - 1e-9)

    def norm2(self, f) -> np.ndarray:
        """``||Pi f||^2`` for columns ``f`` of shape ``(P, n_t)``."""
        w = np.einsum("pnj,pn->pj", self.Q.conj(), f)
        return np.real(np.einsum("pj,pjk,pk->p", w.conj(), self.Hs, w))

    def restore(self, f, lam):
        """Smallest move toward the top singular direction meeting ``||Pi f||^2 >= lam``.

        Returns ``(f_new, relaxed)`` where ``relaxed`` marks rows whose
        threshold exceeded ``sigma_1^2`` and was clipped to it.
        """
        f = np.array(f, dtype=complex)
        lam = np.asarray(lam, dtype=float).copy()
        relaxed = lam > self.s1sq
        lam[relaxed] = self.s1sq[relaxed]
        q = self.norm2(f)
        need = (q < lam) & (lam > 0)
        if not np.any(need):
            return f, relaxed
        idx = np.flatnonzero(need)
        fp, qp, s1 = f[idx], q[idx], self.s1sq[idx]
        tgt = np.minimum(lam[idx] * (1.0 + 1e-12), s1)
        v = self.v[idx].copy()
        flat = self.flat[idx]
        if np.any(flat):
            # nearest extremal direction: projection of f onto the top plane
            Qf = self.Q[idx][flat]
            proj = np.einsum("pnj,pj->pn", Qf, np.einsum("pnj,pn->pj", Qf.conj(), fp[flat]))
            nrm = np.linalg.norm(proj, axis=1)
            good = nrm > 1e-12
            v[np.flatnonzero(flat)[good]] = proj[good] / nrm[good, None]
        ip = np.einsum("pn,pn->p", fp.conj(), v)  # f^H v
        phase = np.where(np.abs(ip) > 0, np.exp(-1j * np.angle(ip)), 1.0)
        v = v * phase[:, None]
        P = s1 * np.abs(ip)
        # ||Pi (f + t v)||^2 = q + 2 t P + t^2 s1
        t = (-P + np.sqrt(np.maximum(P * P - s1 * (qp - tgt), 0.0))) / s1
        cand = fp + t[:, None] * v
        ok = np.linalg.norm(cand, axis=1) <= 1.0 + 1e-12
        out = np.where(ok[:, None], cand, fp)
        if not np.all(ok):
            # convex path (1-s) f + s v stays in the ball; take the first crossing
            a2 = qp - 2 * P + s1
            a1 = -2 * qp + 2 * P
            a0 = qp - tgt
            sol = _first_root_in_unit(a2, a1, a0)
            path = (1 - sol)[:, None] * fp + sol[:, None] * v
            out = np.where(ok[:, None], out, path)
        f[idx] = out
        return f, relaxed


def _first_root_in_unit(a2, a1, a0):
    """Smallest root in [0, 1] of ``a2 s^2 + a1 s + a0`` (1 when there is none)."""
    disc = np.sqrt(np.maximum(a1 * a1 - 4 * a2 * a0, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        # numerically stable pair of roots
        qq = -0.5 * (a1 + np.where(a1 >= 0, disc, -disc))
        r1 = np.where(a2 != 0, qq / a2, np.inf)
        r2 = np.where(qq != 0, a0 / qq, np.inf)
        lin = np.where(a1 != 0, -a0 / a1, np.inf)
    r1 = np.where(np.abs(a2) > 1e-300, r1, lin)
    r2 = np.where(np.abs(a2) > 1e-300, r2, lin)
    cands = np.stack([r1, r2])
    cands = np.where((cands >= 0) & (cands <= 1) & np.isfinite(cands), cands, np.inf)
    best = cands.min(axis=0)
    return np.where(np.isfinite(best), best, 1.0)


def _project_ball(f):
    n = np.linalg.norm(f, axis=-1, keepdims=True)
    return f / np.maximum(n, 1.0)


# ---------------------------------------------------------------------------
# projected gradient ascent on the beams


def pgd_beams(states, xi, gamma, y, lambdas, cfg: RadioConfig, opts: FPOptions | None = None, F0=None, geoms=None):
    """Projected gradient ascent of ``f_q`` over the served beam columns.

    Each column is an independent problem ``max 2 Re(b^H f) - f^H A f`` over
    the unit ball intersected with ``||Pi f||^2 >= Lambda``; steps use a
    per-column Armijo backtracking search along the projection arc and are
    only taken when they do not lower the column objective.

    Returns:
        ``(F, info)`` with ``info`` holding ``steps``, ``trace`` and the
        ``relaxed`` pairs whose threshold exceeded the attainable maximum.
    """
    opts = opts or FPOptions()
    states = as_states(states)
    xi = np.asarray(xi)
    K = states.shape[0]
    F = matched_beams(states, cfg) if F0 is None else np.array(F0, dtype=complex)
    lambdas = np.zeros((K, N_RSU)) if lambdas is None else np.asarray(lambdas, dtype=float)
    A, b = _beam_quadratics(states, xi, gamma, y, cfg)
    info = {"steps": 0, "relaxed": [], "trace": []}
    if K == 0:
        return F, info
    for i in range(N_RSU):
        cols = np.flatnonzero(xi[:, i])
        if cols.size == 0:
            continue
        geo = geoms[i] if geoms is not None else SensingGeometry(states[cols, i, 0], cfg)
        if geoms is not None:
            geo = _subset(geo, cols)
        lam = lambdas[cols, i]
        Ai = A[i]
        bi = b[i][:, cols].T  # (P, n_t)
        f = F[i][:, cols].T.copy()
        f, relaxed = geo.restore(_project_ball(f), lam)
        for p in np.flatnonzero(relaxed):
            info["relaxed"].append((int(cols[p]), i))
        val = obj_rows(bi, Ai, f)
        active = np.ones(len(cols), bool)
        t0 = np.full(len(cols), opts.step0)
        f_old = G_old = None
        for step in range(opts.pgd_steps):
            G = 2.0 * (bi - f @ Ai.T)
            if opts.spectral and f_old is not None:
                # Barzilai-Borwein trial step, still safeguarded by backtracking
                s_ = f - f_old
                d_ = G_old - G
                ss = np.real(np.sum(s_.conj() * s_, axis=1))
                sd = np.abs(np.real(np.sum(s_.conj() * d_, axis=1)))
                ok_bb = (ss > 0) & (sd > 0)
                t0 = np.where(ok_bb, np.clip(ss / np.where(ok_bb, sd, 1.0), 1e-10, 1e10), opts.step0)
            f_old, G_old = f.copy(), G
            t = t0.copy()
            accepted = np.zeros(len(cols), bool)
            pending = active.copy()
            new_f = f.copy()
            new_val = val.copy()
            for _ in range(opts.max_backtracks):
                if not np.any(pending):
                    break
                idx = np.flatnonzero(pending)
                cand = _project_ball(f[idx] + t[idx, None] * G[idx])
                cand, _ = _restore_subset(geo, idx, cand, lam[idx])
                cval = obj_rows(bi[idx], Ai, cand)
                lin = np.real(np.sum(G[idx].conj() * (cand - f[idx]), axis=1))
                ok = (cval >= val[idx] + opts.armijo_c * lin) & (cval >= val[idx])
                good = idx[ok]
                new_f[good] = cand[ok]
                new_val[good] = cval[ok]
                accepted[good] = True
                pending[good] = False
                bad = idx[~ok]
                t[bad] *= opts.armijo_beta
                # stop once the trial move is below round-off
                move = np.linalg.norm(cand[~ok] - f[bad], axis=1)
                pending[bad[move <= 1e-14]] = False
            gain = new_val - val
            f, val = new_f, new_val
            info["steps"] += 1
            # a column is done when its step was rejected or its gain is negligible
            active &= accepted & (gain > opts.pgd_tol * np.maximum(np.abs(val), 1e-300))
            if not np.any(active):
                break
        F[i][:, cols] = f.T
    return F, info


def obj_rows(b, A, g):
    return 2.0 * np.real(np.sum(b.conj() * g, axis=1)) - np.real(np.sum(g.conj() * (g @ A.T), axis=1))


class _GeoView:
    def __init__(self, geo, idx):
        self.Q = geo.Q[idx]
        self.Hs = geo.Hs[idx]
        self.s1sq = geo.s1sq[idx]
        self.v = geo.v[idx]
        self.flat = geo.flat[idx]

    norm2 = SensingGeometry.norm2
    restore = SensingGeometry.restore


def _subset(geo, idx):
    return _GeoView(geo, idx)


def _restore_subset(geo, idx, f, lam):
    if not np.any(lam > 0):
        return f, np.zeros(len(idx), bool)
    return _GeoView(geo, idx).restore(f, lam)


# ---------------------------------------------------------------------------
# fractional-programming loop


def fp_polish(states, xi, cfg: RadioConfig, lambdas=None, F0=None, opts: FPOptions | None = None):
    """Alternate ``(gamma, y)`` and PGD beam updates until ``f_q`` settles.

    Returns ``(F, aux, trace, info)``; ``trace`` records ``f_q`` after every
    ``(gamma, y)`` block and after every beam update, and is non-decreasing.
    """
    opts = opts or FPOptions()
    states = as_states(states)
    xi = np.asarray(xi)
    K = states.shape[0]
    F = matched_beams(states, cfg) if F0 is None else np.array(F0, dtype=complex)
    lambdas = np.zeros((K, N_RSU)) if lambdas is None else np.asarray(lambdas, dtype=float)
    geoms = [SensingGeometry(states[:, i, 0], cfg) for i in range(N_RSU)] if K else None
    relaxed = set()
    # start from a sensing-feasible point so the recorded trace is monotone
    if K and np.any(lambdas > 0):
        for i in range(N_RSU):
            cols = np.flatnonzero(xi[:, i])
            if cols.size:
                fi, rel = _GeoView(geoms[i], cols).restore(_project_ball(F[i][:, cols].T), lambdas[cols, i])
                F[i][:, cols] = fi.T
                relaxed.update((int(cols[p]), i) for p in np.flatnonzero(rel))
    trace = []
    it = 0
    gamma = y = None
    prev = None
    for it in range(1, opts.max_outer + 1):
        gamma = update_gamma(states, F, xi, cfg)
        y = update_y(states, F, xi, gamma, cfg, opts.y_variant)
        cur = eval_fq(states, F, xi, gamma, y, cfg)
        trace.append(cur)
        if prev is not None and abs(cur - prev) <= opts.tol * max(abs(cur), 1e-300):
            break
        prev = cur
        F, pinfo = pgd_beams(states, xi, gamma, y, lambdas, cfg, opts, F0=F, geoms=geoms)
        relaxed.update(pinfo["relaxed"])
        trace.append(eval_fq(states, F, xi, gamma, y, cfg))
    if gamma is None:
        gamma = np.zeros((K, N_RSU))
        y = np.zeros((K, N_RSU), complex)
    else:
        gamma = update_gamma(states, F, xi, cfg)
        y = update_y(states, F, xi, gamma, cfg, opts.y_variant)
    return F, AuxiliaryState(gamma, y), trace, {"iterations": it, "relaxed": sorted(relaxed)}


def _report(states, xi, F, aux, trace, cfg, solver, iterations=0, swaps=0, relaxed=(), budget=False):
    z = zeta_matrix(states, F, xi, aux.gamma, aux.y, cfg)
    rate = float(np.sum(np.log1p(sinr_matrix(states, F, xi, cfg))))
    for k, i in relaxed:
        warnings.warn(f"sensing bound relaxed for vehicle {k} at RSU {i}", RuntimeWarning, stacklevel=3)
    return SolveReport(
        xi=np.array(xi),
        F=F,
        aux=aux,
        zeta=z,
        trace=list(trace),
        iterations=iterations,
        swaps=swaps,
        solver=solver,
        infeasible=list(relaxed),
        swap_budget_hit=budget,
        sum_rate_nats=rate,
    )


# ---------------------------------------------------------------------------
# assignment strategies


def assign_distance(states) -> np.ndarray:
    """Nearer RSU for every vehicle; ties go to the first RSU."""
    states = as_states(states)
    xi = np.zeros((states.shape[0], N_RSU), dtype=int)
    xi[np.arange(states.shape[0]), (states[:, 1, 1] < states[:, 0, 1]).astype(int)] = 1
    return xi


def solve_distance(states, cfg: RadioConfig, lambdas=None, opts: FPOptions | None = None) -> SolveReport:
    """Distance assignment with FP-optimized beams."""
    states = as_states(states)
    xi = assign_distance(states)
    F, aux, trace, info = fp_polish(states, xi, cfg, lambdas, None, opts)
    return _report(states, xi, F, aux, trace, cfg, "distance", info["iterations"], relaxed=info["relaxed"])


def greedy_order(states) -> np.ndarray:
    """Vehicles by decreasing ``|1/d1 - 1/d2|^2``; stable, so ties keep index order."""
    states = as_states(states)
    key = (1.0 / states[:, 0, 1] - 1.0 / states[:, 1, 1]) ** 2
    return np.argsort(-key, kind="stable")


def assign_greedy(states, cfg: RadioConfig, lambdas=None, opts: FPOptions | None = None) -> SolveReport:
    """Sequential allocation.

    The first vehicle goes to its nearer RSU.  Each following vehicle is
    linked to both RSUs with matched beams, the FP loop is run, and the
    vehicle keeps the RSU with the larger ``zeta``.  Vehicles not yet placed
    are silent (no interference).
    """
    opts = opts or FPOptions()
    states = as_states(states)
    K = states.shape[0]
    xi = np.zeros((K, N_RSU), dtype=int)
    F = matched_beams(states, cfg)
    A0 = matched_beams(states, cfg)
    trace, iters = [], 0
    relaxed = set()
    if K == 0:
        aux = AuxiliaryState(np.zeros((0, 2)), np.zeros((0, 2), complex))
        return _report(states, xi, F, aux, trace, cfg, "greedy")
    order = greedy_order(states)
    first = order[0]
    xi[first, int(states[first, 1, 1] < states[first, 0, 1])] = 1
    aux = None
    for k in order[1:]:
        xi[k] = 1
        F[:, :, k] = A0[:, :, k]
        F, aux, tr, info = fp_polish(states, xi, cfg, lambdas, F, opts)
        trace.extend(tr)
        iters += info["iterations"]
        relaxed.update(info["relaxed"])
        z = zeta_matrix(states, F, xi, aux.gamma, aux.y, cfg)
        keep = 0 if z[k, 0] >= z[k, 1] else 1
        xi[k, 1 - keep] = 0
    if aux is None:
        F, aux, tr, info = fp_polish(states, xi, cfg, lambdas, F, opts)
        trace.extend(tr)
        iters += info["iterations"]
    else:
        gamma = update_gamma(states, F, xi, cfg)
        aux = AuxiliaryState(gamma, update_y(states, F, xi, gamma, cfg, opts.y_variant))
    relaxed = {(k, i) for k, i in relaxed if xi[k, i]}
    return _report(states, xi, F, aux, trace, cfg, "greedy", iters, relaxed=sorted(relaxed))


def counterfactual_zeta(states, F, xi, cfg: RadioConfig) -> np.ndarray:
    """``zeta`` of every vehicle at both RSUs.

    At the serving RSU this is the achieved ``log(1+SINR)``.  At the other RSU
    it is the value the vehicle would obtain if it moved there with a matched
    beam while every other beam stays put, which is what the surrogate term
    evaluates to after its closed-form ``(gamma, y)`` update.
    """
    states = as_states(states)
    K = states.shape[0]
    z = np.log1p(sinr_matrix(states, F, xi, cfg))
    _, B, alpha = _link_terms(states, F, cfg)
    for i in range(N_RSU):
        P = cfg.n_t * alpha[i][:, None] * np.abs(B[i]) ** 2 * xi[:, i][None, :]
        interf = P.sum(axis=1)
        hyp = cfg.n_t * alpha[i] / (interf - np.diag(P) + cfg.sigma_c2)  # matched: |a^H a|^2 = 1
        mask = xi[:, i] == 0
        z[mask, i] = np.log1p(hyp[mask])
    return z


def swap_gains(z, xi) -> np.ndarray:
    """``e_k = sum_i zeta_ik (1 - 2 xi_ik)``."""
    return np.sum(z * (1 - 2 * np.asarray(xi)), axis=1)


def assign_heuristic(states, cfg: RadioConfig, lambdas=None, opts: FPOptions | None = None, strict_budget: bool = False) -> SolveReport:
    """Swap search starting from the distance assignment.

    Repeatedly moves the vehicle with the largest positive swap gain to the
    other RSU and re-runs the FP loop.  A move that fails to raise ``f_q`` by at
    least 1e-9 is undone and that vehicle is skipped for the rest of the
    search.  The number of attempted moves is capped at ``4K``.
    """
    opts = opts or FPOptions()
    states = as_states(states)
    K = states.shape[0]
    xi = assign_distance(states)
    A0 = matched_beams(states, cfg)
    F, aux, trace, info = fp_polish(states, xi, cfg, lambdas, A0, opts)
    iters = info["iterations"]
    relaxed = set(info["relaxed"])
    best = float(np.sum(np.log1p(aux.gamma)))
    tabu = np.zeros(K, bool)
    swaps = 0
    budget = opts.swap_factor * K
    hit = False
    while K:
        e = swap_gains(counterfactual_zeta(states, F, xi, cfg), xi)
        e[tabu] = -np.inf
        k = int(np.argmax(e))
        if not e[k] > 0:
            break
        if swaps >= budget:
            hit = True
            if strict_budget:
                raise SwapBudgetExceeded(f"{budget} swaps without convergence")
            log.warning("swap budget of %d reached", budget)
            break
        swaps += 1
        xi_new = xi.copy()
        xi_new[k] = 1 - xi_new[k]
        F_try = F.copy()
        F_try[:, :, k] = A0[:, :, k]
        F_new, aux_new, tr, info = fp_polish(states, xi_new, cfg, lambdas, F_try, opts)
        iters += info["iterations"]
        val = float(np.sum(np.log1p(aux_new.gamma)))
        if val >= best + 1e-9:
            xi, F, aux, best = xi_new, F_new, aux_new, val
            trace.extend(tr)
            relaxed = {p for p in relaxed if xi[p]} | set(info["relaxed"])
            tabu[:] = False
        else:
            tabu[k] = True
    # a cold restart at the final assignment sometimes lands on a better stationary point
    F_c, aux_c, tr_c, info_c = fp_polish(states, xi, cfg, lambdas, A0, opts)
    iters += info_c["iterations"]
    if float(np.sum(np.log1p(aux_c.gamma))) > best:
        F, aux = F_c, aux_c
        relaxed = set(info_c["relaxed"])
    return _report(states, xi, F, aux, trace, cfg, "heuristic", iters, swaps, sorted(relaxed), hit)


def solve(name: str, states, cfg: RadioConfig, lambdas=None, opts: FPOptions | None = None) -> SolveReport:
    solvers = {"heuristic": assign_heuristic, "greedy": assign_greedy, "distance": solve_distance}
    if name not in solvers:
        raise ValueError(f"unknown solver {name!r}")
    return solvers[name](states, cfg, lambdas=lambdas, opts=opts)


def exhaustive_best(states, cfg: RadioConfig, lambdas=None, opts: FPOptions | None = None):
    """Best sum rate (nats) over all ``2^K`` assignments, each FP-polished from matched beams."""
    states = as_states(states)
    K = states.shape[0]
    best, best_xi = -np.inf, None
    for code in range(2**K):
        xi = np.zeros((K, N_RSU), dtype=int)
        sel = np.array([(code >> k) & 1 for k in range(K)])
        xi[np.arange(K), sel] = 1
        _, aux, _, _ = fp_polish(states, xi, cfg, lambdas, None, opts)
        val = float(np.sum(np.log1p(aux.gamma)))
        if val > best:
            best, best_xi = val, xi
    return best, best_xi
