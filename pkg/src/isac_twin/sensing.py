"""Measurement-level echo model: matched-filter output, delay and Doppler.

The matched filter is not run on waveforms.  Instead the echo statistics are
drawn directly: the array output ``r = kappa*beta*G * b a^H f`` plus circular
complex noise, and Gaussian delay/Doppler estimates whose variances shrink
with the beamforming gain toward the target.

The tracker works on the real-stacked vector ``[Re r, Im r, nu, mu]`` (see
:func:`stack_real`), so each real part of ``r`` carries half of ``sigma_r2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BeamNull
from .kinematics import VehicleState
from .radio import RadioConfig, reflection_coeff, steer_rx, steer_tx

BEAM_NULL_TOL = 1e-6


@dataclass(frozen=True)
class MeasurementNoise:
    sigma_r2: float
    sigma_nu2: float
    sigma_mu2: float
    rho_r: float = 1.0
    rho_nu: float = 6.7e-7
    rho_mu: float = 2e4

    def __post_init__(self):
        if min(self.sigma_r2, self.sigma_nu2, self.sigma_mu2) <= 0:
            raise ValueError("measurement variances must be positive")

    def Q(self, n_r: int) -> np.ndarray:
        """Complex-domain covariance ``diag(sigma_r2 * 1, sigma_nu2, sigma_mu2)``."""
        return np.diag(np.r_[np.full(n_r, self.sigma_r2), self.sigma_nu2, self.sigma_mu2])

    def R(self, n_r: int) -> np.ndarray:
        """Covariance of the real-stacked measurement."""
        return np.diag(self.R_diag(n_r))

    def R_diag(self, n_r: int) -> np.ndarray:
        return np.concatenate((np.full(2 * n_r, 0.5 * self.sigma_r2), [self.sigma_nu2, self.sigma_mu2]))


@dataclass(frozen=True)
class Measurement:
    r_tilde: np.ndarray
    nu_tilde: float
    mu_tilde: float

    def __post_init__(self):
        r = np.asarray(self.r_tilde, dtype=complex)
        if r.ndim != 1:
            raise ValueError("r_tilde must be a vector")
        if not (np.all(np.isfinite(r)) and np.isfinite(self.nu_tilde) and np.isfinite(self.mu_tilde)):
            raise ValueError("measurement has non-finite entries")
        object.__setattr__(self, "r_tilde", r)

    def stacked(self) -> np.ndarray:
        return np.concatenate((self.r_tilde.real, self.r_tilde.imag, [self.nu_tilde, self.mu_tilde]))


def beam_gain(phi: float, f, n_t: int) -> complex:
    """``eta = a(phi)^H f``."""
    return complex(np.vdot(steer_tx(phi, n_t), f))


def _eta(x: VehicleState, f, cfg):
    eta = beam_gain(x.phi, f, cfg.n_t)
    if abs(eta) < BEAM_NULL_TOL:
        raise BeamNull(f"|a^H f| = {abs(eta):.3g} below {BEAM_NULL_TOL}")
    return eta


def noise_variances(x: VehicleState, f, cfg: RadioConfig) -> MeasurementNoise:
    eta = _eta(x, f, cfg)
    beta = reflection_coeff(x.d, cfg.varrho)
    snr = cfg.G_mf * cfg.kappa**2 * abs(beta) ** 2 * abs(eta) ** 2
    return MeasurementNoise(
        sigma_r2=cfg.rho_r**2 * cfg.sigma_e2 / cfg.G_mf,
        sigma_nu2=cfg.rho_nu**2 * cfg.sigma_e2 / snr,
        sigma_mu2=cfg.rho_mu**2 * cfg.sigma_e2 / snr,
        rho_r=cfg.rho_r,
        rho_nu=cfg.rho_nu,
        rho_mu=cfg.rho_mu,
    )


def expected_measurement(x: VehicleState, f, cfg: RadioConfig) -> Measurement:
    """Noiseless echo ``h(x)`` for a target illuminated by beam ``f``."""
    eta = _eta(x, f, cfg)
    beta = reflection_coeff(x.d, cfg.varrho)
    r = cfg.kappa * beta * cfg.G_mf * eta * steer_rx(x.phi, cfg.n_r)
    return Measurement(r, 2.0 * x.d / cfg.c, 2.0 * x.vdot * cfg.f_c / cfg.c)


def synthesize_measurement(x_true: VehicleState, f, cfg: RadioConfig, rng, zero_noise: bool = False) -> Measurement:
    """Draw a noisy echo around :func:`expected_measurement`.

    Args:
        x_true: ground-truth state relative to the serving RSU.
        f: beam column used toward this vehicle.
        cfg: link constants.
        rng: ``numpy.random.Generator`` owned by the caller.
        zero_noise: return the noiseless echo (the variances are still validated).
    """
    noise = noise_variances(x_true, f, cfg)
    mean = expected_measurement(x_true, f, cfg)
    if zero_noise:
        return mean
    n = cfg.n_r
    z = np.sqrt(noise.sigma_r2 / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return Measurement(
        mean.r_tilde + z,
        mean.nu_tilde + np.sqrt(noise.sigma_nu2) * rng.standard_normal(),
        mean.mu_tilde + np.sqrt(noise.sigma_mu2) * rng.standard_normal(),
    )


def steering_derivative(phi: float, cfg: RadioConfig) -> np.ndarray:
    """``Pi = d(b a^H)/dphi`` as an ``n_r x n_t`` complex matrix."""
    a = steer_tx(phi, cfg.n_t)
    b = steer_rx(phi, cfg.n_r)
    da = -1j * np.pi * np.arange(cfg.n_t) * a
    db = -1j * np.pi * np.arange(cfg.n_r) * b
    return np.outer(db, a.conj()) + np.outer(b, da.conj())


def measurement_jacobian(x: VehicleState, f, cfg: RadioConfig, exact: bool | None = None) -> np.ndarray:
    """Complex ``(n_r+2) x 3`` Jacobian of :func:`expected_measurement`.

    With ``exact`` (default ``cfg.exact_jacobian``) the range dependence of the
    reflection coefficient enters the ``r`` rows; otherwise that column is zero.
    """
    if exact is None:
        exact = cfg.exact_jacobian
    eta = _eta(x, f, cfg)
    beta = reflection_coeff(x.d, cfg.varrho)
    gain = cfg.kappa * beta * cfg.G_mf
    n = cfg.n_r
    H = np.zeros((n + 2, 3), dtype=complex)
    H[:n, 0] = gain * (steering_derivative(x.phi, cfg) @ f)
    if exact:
        H[:n, 1] = -gain / x.d * eta * steer_rx(x.phi, n)
    H[n, 1] = 2.0 / cfg.c
    H[n + 1, 2] = 2.0 * cfg.f_c / cfg.c
    return H


def stack_real(H: np.ndarray, n_r: int) -> np.ndarray:
    """Map a complex Jacobian with ``n_r`` echo rows to its real-stacked form."""
    return np.vstack([H[:n_r].real, H[:n_r].imag, H[n_r:].real])
