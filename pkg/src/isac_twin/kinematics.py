"""Straight-road vehicle kinematics in RSU-relative polar coordinates.

A vehicle seen from an RSU is described by the triple ``(phi, d, vdot)``:
``phi`` is the cosine of the angle between the vehicle heading and the
vehicle->RSU line, ``d`` the range and ``vdot = speed * phi`` the radial
speed toward the RSU.  With this convention one slot of constant-speed motion
is exactly the law of cosines, which is what :func:`evolve_state` computes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry

DEFAULT_SLOT = 0.02


@dataclass(frozen=True)
class VehicleState:
    phi: float
    d: float
    vdot: float

    def as_array(self) -> np.ndarray:
        return np.array([self.phi, self.d, self.vdot], dtype=float)

    @classmethod
    def from_array(cls, x) -> "VehicleState":
        return cls(float(x[0]), float(x[1]), float(x[2]))

    @property
    def speed(self) -> float:
        """Along-road speed implied by the triple."""
        if self.phi == 0.0:
            raise DegenerateGeometry("speed undefined at phi = 0")
        return self.vdot / self.phi


@dataclass(frozen=True)
class CartesianPose:
    position: tuple
    speed: float
    heading: tuple = (1.0, 0.0)

    def __post_init__(self):
        hx, hy = self.heading
        if not math.isclose(math.hypot(hx, hy), 1.0, rel_tol=1e-9):
            raise ValueError("heading must be a unit vector")

    def advanced(self, dt: float) -> "CartesianPose":
        x, y = self.position
        hx, hy = self.heading
        step = self.speed * dt
        return CartesianPose((x + step * hx, y + step * hy), self.speed, self.heading)


@dataclass(frozen=True)
class ProcessNoise:
    sigma_phi2: float = 1e-8
    sigma_d2: float = 1e-4
    sigma_vdot2: float = 1e-4

    def __post_init__(self):
        if min(self.sigma_phi2, self.sigma_d2, self.sigma_vdot2) < 0:
            raise ValueError("process-noise variances must be non-negative")

    def matrix(self) -> np.ndarray:
        return np.diag([self.sigma_phi2, self.sigma_d2, self.sigma_vdot2])


def _check(phi, d, vdot, T):
    if phi == 0.0 or vdot == 0.0:
        raise DegenerateGeometry(f"phi={phi!r}, vdot={vdot!r}: vehicle at the RSU foot point")
    step = vdot * T / phi
    radicand = d * d + step * step - 2.0 * d * vdot * T
    if not radicand > 0.0:
        raise DegenerateGeometry(f"law-of-cosines radicand {radicand!r} <= 0")
    return step, radicand


def evolve_state(x: VehicleState, T: float = DEFAULT_SLOT) -> VehicleState:
    """Deterministic one-slot state evolution ``g(x)``.

    ``step = vdot*T/phi`` is the distance travelled along the road; the new
    range follows from the law of cosines and the new cosine/radial speed keep
    the along-road speed ``vdot/phi`` constant.
    """
    phi, d, vdot = x.phi, x.d, x.vdot
    step, radicand = _check(phi, d, vdot, T)
    d_new = math.sqrt(radicand)
    num = d * vdot * T - step * step
    phi_new = num / (step * d_new)
    vdot_new = num / (vdot * T * d_new) * vdot
    return VehicleState(phi_new, d_new, vdot_new)


def state_jacobian(x: VehicleState, T: float = DEFAULT_SLOT) -> np.ndarray:
    """Analytic Jacobian of :func:`evolve_state` w.r.t. ``(phi, d, vdot)``."""
    phi, d, vdot = x.phi, x.d, x.vdot
    u, R = _check(phi, d, vdot, T)
    D = math.sqrt(R)

    du = np.array([-vdot * T / phi**2, 0.0, T / phi])
    dR = np.array([2 * u * du[0], 2 * d - 2 * vdot * T, 2 * u * du[2] - 2 * d * T])
    dD = dR / (2 * D)

    # phi' = (d*phi - u) / D
    N = d * phi - u
    dN = np.array([d - du[0], phi, -du[2]])
    phi_new = N / D
    dphi = (dN * D - N * dD) / R

    # vdot' = phi' * w with w = vdot/phi
    w = vdot / phi
    dw = np.array([-vdot / phi**2, 0.0, 1.0 / phi])
    dvdot = dphi * w + phi_new * dw

    return np.vstack([dphi, dD, dvdot])


def cartesian_to_state(pose: CartesianPose, rsu) -> VehicleState:
    px, py = pose.position
    wx, wy = rsu[0] - px, rsu[1] - py
    d = math.hypot(wx, wy)
    if d == 0.0:
        raise DegenerateGeometry("vehicle coincides with the RSU")
    hx, hy = pose.heading
    phi = (hx * wx + hy * wy) / d
    return VehicleState(phi, d, pose.speed * phi)


def rsu_side(heading, position, rsu) -> float:
    """Sign of the 2-D cross product heading x (rsu - position)."""
    hx, hy = heading
    wx, wy = rsu[0] - position[0], rsu[1] - position[1]
    return 1.0 if hx * wy - hy * wx >= 0 else -1.0


def state_to_cartesian(x: VehicleState, rsu, heading, side: float) -> CartesianPose:
    """Invert :func:`cartesian_to_state` given the heading and the RSU side.

    ``side`` disambiguates the mirror solution across the line of travel.
    """
    hx, hy = heading
    phi = min(1.0, max(-1.0, x.phi))
    perp = math.sqrt(max(0.0, 1.0 - phi * phi)) * side
    # unit vector vehicle -> RSU, expressed in the (heading, left-normal) frame
    wx = phi * hx - perp * hy
    wy = phi * hy + perp * hx
    pos = (rsu[0] - x.d * wx, rsu[1] - x.d * wy)
    return CartesianPose(pos, x.speed, (hx, hy))


def transfer_state(x: VehicleState, rsu_from, rsu_to, heading, side: float) -> VehicleState:
    """Re-express a polar state relative to another RSU through the road frame."""
    pose = state_to_cartesian(x, rsu_from, heading, side)
    return cartesian_to_state(pose, rsu_to)


def transfer_jacobian(x: VehicleState, rsu_from, rsu_to, heading, side: float) -> np.ndarray:
    """Central-difference Jacobian of :func:`transfer_state`."""
    base = x.as_array()
    scale = np.array([1e-7, 1e-6 * max(1.0, abs(x.d)), 1e-6 * max(1.0, abs(x.vdot))])
    J = np.empty((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = scale[j]
        hi = transfer_state(VehicleState.from_array(base + e), rsu_from, rsu_to, heading, side)
        lo = transfer_state(VehicleState.from_array(base - e), rsu_from, rsu_to, heading, side)
        J[:, j] = (hi.as_array() - lo.as_array()) / (2 * scale[j])
    return J
