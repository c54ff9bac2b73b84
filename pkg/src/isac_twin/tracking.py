"""Extended Kalman tracking of one vehicle from one RSU, plus Fisher/PCRB tools.

The filter runs on the real-stacked measurement ``[Re r, Im r, nu, mu]``
whose noise covariance ``R`` is diagonal.  The measurement rows differ in scale
by more than twenty orders of magnitude (delay in seconds, Doppler in Hz), so
the gain is formed in information form with diagonal equilibration instead of
inverting the innovation covariance directly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateGeometry, SingularInnovation, SingularPrior, FallbackUsed
from .kinematics import ProcessNoise, VehicleState, evolve_state, state_jacobian
from .radio import RadioConfig, reflection_coeff
from .sensing import (
    Measurement,
    expected_measurement,
    measurement_jacobian,
    noise_variances,
    stack_real,
    steering_derivative,
)


COND_LIMIT = 1e12
DIAG_FLOOR = 1e-30
DEFAULT_M0 = np.diag([1e-2, 1.0, 1.0])

__all__ = [
    "TrackState",
    "FisherInfo",
    "predict",
    "standard_gain",
    "residual_gain",
    "correct",
    "fisher_info",
    "pcrb",
    "lambda_threshold",
    "steering_derivative",
    "left_inverse",
    "rcrb",
]


def clean_cov(M: np.ndarray) -> np.ndarray:
    """Symmetrize, clip negative eigenvalues and floor the diagonal."""
    M = 0.5 * (M + M.T)
    try:
        np.linalg.cholesky(M)  # positive definite: nothing to clip
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(M)
        if w.min() < 0:
            M = (V * np.clip(w, 0.0, None)) @ V.T
            M = 0.5 * (M + M.T)
    np.fill_diagonal(M, np.maximum(M.diagonal(), DIAG_FLOOR))
    return M


def _cond(M) -> float:
    """2-norm condition number from the singular values alone."""
    sv = np.linalg.svd(M, compute_uv=False)
    return np.inf if sv[-1] == 0 else float(sv[0] / sv[-1])


def _equilibrated_inv(P: np.ndarray, exc=SingularInnovation, what="matrix") -> np.ndarray:
    d = np.sqrt(np.abs(np.diag(P)))
    if np.any(d == 0) or not np.all(np.isfinite(P)):
        raise exc(f"{what} has a zero or non-finite diagonal")
    Pn = P / np.outer(d, d)
    if _cond(Pn) > COND_LIMIT:
        raise exc(f"{what} condition number exceeds {COND_LIMIT:g}")
    return np.linalg.inv(Pn) / np.outer(d, d)


@dataclass(frozen=True)
class TrackState:
    x_pred: VehicleState
    x_meas: VehicleState
    M_pred: np.ndarray
    M_meas: np.ndarray
    n: int = 0
    resid_cov: np.ndarray | None = None  # running average of e e^T, residual mode only

    @classmethod
    def bootstrap(cls, x0: VehicleState, M0=None, n: int = 0) -> "TrackState":
        M0 = DEFAULT_M0.copy() if M0 is None else np.array(M0, dtype=float)
        return cls(x0, x0, M0.copy(), M0.copy(), n)


@dataclass(frozen=True)
class FisherInfo:
    matrix: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        if M.shape != (3, 3) or not np.allclose(M, M.T, rtol=1e-9, atol=0):
            raise ValueError("Fisher information must be a symmetric 3x3 matrix")
        object.__setattr__(self, "matrix", 0.5 * (M + M.T))


def predict(track: TrackState, T: float, noise: ProcessNoise) -> TrackState:
    """Propagate the corrected state one slot: ``x_pred = g(x_meas)``."""
    G = state_jacobian(track.x_meas, T)
    x_pred = evolve_state(track.x_meas, T)
    M_pred = G @ track.M_meas @ G.T + noise.matrix()
    M_pred = 0.5 * (M_pred + M_pred.T)
    return replace(track, x_pred=x_pred, M_pred=M_pred, n=track.n + 1)


def _gain_posterior(M_hat, J, R_diag):
    """Kalman gain and posterior covariance for prior ``M_hat``.

    Uses the information form when ``M_hat`` is invertible and the whitened
    covariance form otherwise (e.g. a zero prior, which gives a zero gain).
    """
    Rinv = 1.0 / R_diag
    if not np.any(M_hat):
        return np.zeros((3, J.shape[0])), M_hat.copy()
    d = np.sqrt(np.diag(M_hat))
    prior_ok = np.all(d > 0)
    if prior_ok:
        Mn = M_hat / np.outer(d, d)
        prior_ok = _cond(Mn) < COND_LIMIT
    if prior_ok:
        info = np.linalg.inv(Mn) / np.outer(d, d) + (J.T * Rinv) @ J
        post = _equilibrated_inv(info, SingularInnovation, "information matrix")
        K = (post @ J.T) * Rinv
        return K, post
    # singular prior: whitened innovation I + Jw M Jw^T is bounded below by I
    sq = np.sqrt(Rinv)
    Jw = J * sq[:, None]
    S = np.eye(J.shape[0]) + Jw @ M_hat @ Jw.T
    Kw = np.linalg.solve(S, Jw @ M_hat).T
    K = Kw * sq
    A = np.eye(3) - K @ J
    post = A @ M_hat @ A.T + (K * R_diag) @ K.T
    return K, post


def standard_gain(track: TrackState, H: np.ndarray, Q) -> np.ndarray:
    """EKF gain ``K = M_hat J^T (R + J M_hat J^T)^-1``.

    Args:
        track: track holding the prediction covariance ``M_pred``.
        H: real-stacked measurement Jacobian, ``m x 3``.
        Q: measurement covariance, ``m x m`` diagonal (or its diagonal).

    Raises:
        SingularInnovation: the equilibrated information matrix is numerically singular.
    """
    R_diag = _diag(Q)
    K, _ = _gain_posterior(track.M_pred, H, R_diag)
    return K


def left_inverse(H: np.ndarray) -> np.ndarray:
    """``(H^T H)^-1 H^T`` computed on column-normalized ``H``.

    The left inverse is invariant to column scaling, which keeps the normal
    equations well conditioned despite wildly different column norms.
    """
    s = np.linalg.norm(H, axis=0)
    if np.any(s == 0):
        raise SingularInnovation("measurement Jacobian has a zero column")
    Hn = H / s
    HtH = Hn.T @ Hn
    if _cond(HtH) > COND_LIMIT:
        raise SingularInnovation("H^T H is numerically singular")
    return np.linalg.solve(HtH, Hn.T) / s[:, None]


def _residual_prior(H, R_diag, C):
    """``H_L^-1 (C - R) H_L^-T`` and its PSD verdict."""
    HL = left_inverse(H)
    W = (HL * R_diag) @ HL.T
    M_emp = HL @ C @ HL.T - W
    M_emp = 0.5 * (M_emp + M_emp.T)
    ok = np.linalg.eigvalsh(M_emp).min() >= -1e-12 * np.trace(W)
    return HL, M_emp, ok


def residual_gain(track: TrackState, H: np.ndarray, Q, e: np.ndarray, C=None) -> np.ndarray:
    """Echo-residual gain: the standard template evaluated at an empirical prior.

    The prior is estimated from the residual as ``H_L^-1 (C - R) H_L^-T`` with
    ``C = e e^T`` (or a supplied running average of it).  When that estimate is
    not PSD the standard gain is returned and :class:`FallbackUsed` is warned.
    """
    R_diag = _diag(Q)
    if C is None:
        C = np.outer(e, e)
    try:
        _, M_emp, ok = _residual_prior(H, R_diag, C)
    except SingularInnovation:
        ok = False
    if not ok:
        warnings.warn("empirical prior not PSD; using standard gain", FallbackUsed, stacklevel=2)
        return standard_gain(track, H, Q)
    K, _ = _gain_posterior(M_emp, H, R_diag)
    return K


def _diag(Q):
    Q = np.asarray(Q, dtype=float)
    return np.diag(Q).copy() if Q.ndim == 2 else Q


def linearize(x: VehicleState, f, cfg: RadioConfig):
    """Real-stacked ``(h(x), J, R_diag)`` at ``x`` for beam ``f``."""
    h = expected_measurement(x, f, cfg).stacked()
    J = stack_real(measurement_jacobian(x, f, cfg), cfg.n_r)
    R_diag = noise_variances(x, f, cfg).R_diag(cfg.n_r)
    return h, J, R_diag


def correct(
    track: TrackState,
    y: Measurement,
    f,
    cfg: RadioConfig,
    gain_mode: str = "standard",
    resid_forget: float | None = None,
):
    """Fold measurement ``y`` into the track.

    Args:
        track: predicted track.
        y: echo from the serving RSU, produced with beam ``f``.
        f: transmit beam toward this vehicle.
        cfg: link constants.
        gain_mode: ``"standard"`` or ``"residual"``.
        resid_forget: in residual mode, weight of the newest ``e e^T`` in a
            running average kept on the track (``None`` uses the single sample).

    Returns:
        ``(new_track, info)`` where ``info`` is a dict with the residual and a
        ``fallback`` flag.
    """
    x_hat = track.x_pred
    h, J, R_diag = linearize(x_hat, f, cfg)
    e = y.stacked() - h
    fallback = False
    resid_cov = track.resid_cov
    if gain_mode == "standard":
        K, M_meas = _gain_posterior(track.M_pred, J, R_diag)
    elif gain_mode == "residual":
        C = np.outer(e, e)
        if resid_forget is not None:
            if resid_cov is not None and resid_cov.shape == C.shape:
                C = (1 - resid_forget) * resid_cov + resid_forget * C
            resid_cov = C
        try:
            HL, M_emp, ok = _residual_prior(J, R_diag, C)
        except SingularInnovation:
            ok = False
        if ok:
            K, _ = _gain_posterior(M_emp, J, R_diag)
            M_meas = (K * R_diag) @ HL.T
        else:
            fallback = True
            warnings.warn("empirical prior not PSD; using standard gain", FallbackUsed, stacklevel=2)
            K, M_meas = _gain_posterior(track.M_pred, J, R_diag)
    else:
        raise ValueError(f"unknown gain_mode {gain_mode!r}")
    x = x_hat.as_array() + K @ e
    x[0] = np.clip(x[0], -1.0, 1.0)
    if not x[1] > 0:
        raise DegenerateGeometry(f"corrected range {x[1]!r} is not positive")
    new = replace(track, x_meas=VehicleState.from_array(x), M_meas=clean_cov(M_meas), resid_cov=resid_cov)
    return new, {"residual": e, "fallback": fallback, "gain": K, "jacobian": J, "R_diag": R_diag}


def fisher_info(track: TrackState, H: np.ndarray, Q, prior=None) -> FisherInfo:
    """``J^T R^-1 J + M_hat^-1`` for the real-stacked Jacobian ``H``.

    ``prior`` overrides ``track.M_pred`` (used for the process-noise-free
    PCRB recursion).
    """
    M_hat = track.M_pred if prior is None else np.asarray(prior, dtype=float)
    R_diag = _diag(Q)
    prior_inv = _equilibrated_inv(M_hat, SingularPrior, "prediction covariance")
    F = prior_inv + (H.T / R_diag) @ H
    return FisherInfo(0.5 * (F + F.T))


def pcrb(fisher: FisherInfo) -> np.ndarray:
    return _equilibrated_inv(fisher.matrix, SingularPrior, "Fisher information")


def pcrb_prior(M_meas_prev, G, noise: ProcessNoise | None) -> np.ndarray:
    """Prior of the PCRB recursion, ``G M G^T (+ E)``."""
    M = G @ M_meas_prev @ G.T
    if noise is not None:
        M = M + noise.matrix()
    return 0.5 * (M + M.T)


def rcrb(M: np.ndarray) -> float:
    """Root of the range entry of an MSE/PCRB matrix, in metres."""
    return float(np.sqrt(max(M[1, 1], 0.0)))


def lambda_parts(track: TrackState, x_pred: VehicleState, cfg: RadioConfig, prior=None):
    """Building blocks of the sensing threshold.

    Returns ``(omega, s)``: ``omega`` is the Fisher matrix without the echo
    contribution (prior plus delay and Doppler rows, beam gain taken as 1) and
    ``s`` scales ``||Pi f||^2`` into the (1,1) Fisher entry.
    """
    M_hat = track.M_pred if prior is None else prior
    omega = _equilibrated_inv(M_hat, SingularPrior, "prediction covariance").copy()
    beta = reflection_coeff(x_pred.d, cfg.varrho)
    snr = cfg.G_mf * cfg.kappa**2 * abs(beta) ** 2
    s_nu2 = cfg.rho_nu**2 * cfg.sigma_e2 / snr
    s_mu2 = cfg.rho_mu**2 * cfg.sigma_e2 / snr
    omega[1, 1] += (2.0 / cfg.c) ** 2 / s_nu2
    omega[2, 2] += (2.0 * cfg.f_c / cfg.c) ** 2 / s_mu2
    sigma_r2 = cfg.rho_r**2 * cfg.sigma_e2 / cfg.G_mf
    s = 2.0 * cfg.kappa**2 * abs(beta) ** 2 * cfg.G_mf**2 / sigma_r2
    return omega, s


def lambda_threshold(track: TrackState, x_pred: VehicleState, cfg: RadioConfig, prev=None, prior=None) -> float:
    """Smallest ``||Pi f||^2`` keeping the angle bound from growing.

    Args:
        track: predicted track; ``M_pred`` is the prior.
        x_pred: state at which the echo model is linearized.
        cfg: link constants.
        prev: previous angle bound; defaults to ``track.M_meas[0, 0]``.
            ``inf`` makes the constraint vacuous.

    Returns:
        ``Lambda >= 0``.
    """
    if prev is None:
        prev = track.M_meas[0, 0]
    if not np.isfinite(prev):
        return 0.0
    if prev <= 0:
        raise SingularPrior("previous angle bound must be positive")
    w, s = lambda_parts(track, x_pred, cfg, prior)
    C11 = w[1, 1] * w[2, 2] - w[1, 2] * w[2, 1]
    X = w[1, 0] * w[2, 2] - w[1, 2] * w[2, 0]
    Y = w[1, 0] * w[2, 1] - w[1, 1] * w[2, 0]
    need = (C11 / prev + w[0, 1] * X - w[0, 2] * Y) / C11
    return max(0.0, (need - w[0, 0]) / s)
