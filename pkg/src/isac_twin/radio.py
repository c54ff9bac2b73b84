"""Array responses, channel gains and downlink SINR for the two-RSU network.

Per-vehicle geometry is passed around as a ``(K, 2, 3)`` float array holding
``(phi, d, vdot)`` of vehicle ``k`` relative to RSU ``i`` in ``states[k, i]``.
Beams are a ``(2, n_t, K)`` complex array (column ``k`` of RSU ``i`` is
``F[i, :, k]``) and the assignment is a ``(K, 2)`` 0/1 integer array.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateGeometry, DimensionMismatch

N_RSU = 2


@dataclass(frozen=True)
class RadioConfig:
    """Link-level constants.  All powers and gains are linear."""

    n_t: int = 32
    n_r: int = 32
    f_c: float = 30e9
    c: float = 3e8
    alpha_ref: float = 1e-7
    varrho: complex = 10 + 10j
    sigma_c2: float = 1e-7
    sigma_e2: float = 1e-7
    T_s: float = 0.01
    G_mf: float = 10.0
    rho_r: float = 1.0
    rho_nu: float = 6.7e-7
    rho_mu: float = 2e4
    exact_jacobian: bool = False

    def __post_init__(self):
        if self.n_t < 1 or self.n_r < 1:
            raise ValueError("antenna counts must be >= 1")
        for name in ("sigma_c2", "sigma_e2", "alpha_ref", "G_mf", "rho_r", "rho_nu", "rho_mu", "f_c", "c", "T_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def kappa(self) -> float:
        return float(np.sqrt(self.n_t * self.n_r))

    @property
    def kappa_tx(self) -> float:
        return float(np.sqrt(self.n_t))

    def with_antennas(self, n: int) -> "RadioConfig":
        return replace(self, n_t=n, n_r=n)


def steer_tx(phi, n_t: int) -> np.ndarray:
    """ULA response ``exp(-j*pi*k*phi)/sqrt(n)``.

    ``phi`` may be an array; the antenna axis is appended last.
    """
    phi = np.asarray(phi, dtype=float)
    k = np.arange(n_t)
    return np.exp(-1j * np.pi * phi[..., None] * k) / np.sqrt(n_t)


def steer_rx(phi, n_r: int) -> np.ndarray:
    return steer_tx(phi, n_r)


def path_loss(d, alpha_ref: float = 1e-7):
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise DegenerateGeometry("path loss needs d > 0")
    out = alpha_ref / d**2
    return float(out) if out.ndim == 0 else out


def reflection_coeff(d, varrho: complex = 10 + 10j):
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise DegenerateGeometry("reflection coefficient needs d > 0")
    out = np.asarray(varrho / (2.0 * d))
    return complex(out) if out.ndim == 0 else out


def as_states(states) -> np.ndarray:
    """Coerce per-vehicle geometry to a ``(K, 2, 3)`` float array.

    Accepts an array already in that layout or a sequence of
    ``(VehicleState, VehicleState)`` pairs.
    """
    if isinstance(states, np.ndarray):
        arr = states.astype(float, copy=False)
    else:
        arr = np.array([[s.as_array() for s in pair] for pair in states], dtype=float).reshape(-1, N_RSU, 3)
    if arr.ndim != 3 or arr.shape[1:] != (N_RSU, 3):
        raise DimensionMismatch(f"states must be (K, 2, 3), got {arr.shape}")
    return arr


def _check_dims(states, F, xi):
    K = states.shape[0]
    if F.ndim != 3 or F.shape[0] != N_RSU or F.shape[2] != K:
        raise DimensionMismatch(f"beams {F.shape} do not match K={K}")
    if xi.shape != (K, N_RSU):
        raise DimensionMismatch(f"assignment {xi.shape} does not match K={K}")


def link_powers(states, F, cfg: RadioConfig) -> np.ndarray:
    """``P[i, k, m] = n_t * alpha_ik * |a_ik^H f_im|^2`` (assignment not applied)."""
    states = as_states(states)
    phi = states[:, :, 0].T  # (2, K)
    alpha = path_loss(states[:, :, 1].T, cfg.alpha_ref)
    A = steer_tx(phi, cfg.n_t)  # (2, K, n_t)
    G = A.conj() @ F
    return cfg.kappa_tx**2 * alpha[:, :, None] * np.abs(G) ** 2


def sinr_matrix(states, F, xi, cfg: RadioConfig) -> np.ndarray:
    """Downlink SINR of every (vehicle, RSU) pair as a ``(K, 2)`` array.

    Interference at vehicle ``k`` comes only from the other beams of the same
    RSU; the entry is zero for pairs that are not served.
    """
    states = as_states(states)
    F = np.asarray(F)
    xi = np.asarray(xi)
    _check_dims(states, F, xi)
    K = states.shape[0]
    if K == 0:
        return np.zeros((0, N_RSU))
    P = link_powers(states, F, cfg) * xi.T[:, None, :]  # weight beam m by xi_im
    own = np.einsum("ikk->ik", P)
    interference = P.sum(axis=2) - own
    return (xi.T * own / (interference + cfg.sigma_c2)).T


def sinr(k: int, i: int, states, F, xi, cfg: RadioConfig) -> float:
    """SINR of vehicle ``k`` served by RSU ``i`` (both 0-based)."""
    return float(sinr_matrix(states, F, xi, cfg)[k, i])


def sum_rate(states, F, xi, cfg: RadioConfig, base: float = 2.0) -> float:
    """Sum over all pairs of ``log(1 + SINR)``; bits/s/Hz for the default base."""
    g = sinr_matrix(states, F, xi, cfg)
    return float(np.sum(np.log1p(g)) / np.log(base))


def per_vehicle_rate(states, F, xi, cfg: RadioConfig) -> np.ndarray:
    """Rate (bits/s/Hz) of each vehicle from its serving RSU."""
    return np.log2(1.0 + sinr_matrix(states, F, xi, cfg)).sum(axis=1)


def matched_beams(states, cfg: RadioConfig) -> np.ndarray:
    """Beams ``f_ik = a(phi_ik)`` for every pair."""
    states = as_states(states)
    return np.transpose(steer_tx(states[:, :, 0].T, cfg.n_t), (0, 2, 1)).copy()
