"""Anisotropic Beltrami modes, their cross-product algebra and the triplet ODE.

A mode depends on ``z`` only:

    e_m(z) = (sin mz,  cos mz, 0)        curl e_m = m e_m
    h_m(z) = (cos mz, -sin mz, 0)        curl h_m = m h_m

Together with the constant vertical unit vector they are closed under the
cross product, which is what makes the three-term combination

    u = gamma0 e_1 + gamma1 h_1 + delta z_hat

an exact solution of the force-free vorticity equation whenever

    gamma0' =  delta gamma1 - gamma0 / R
    gamma1' = -delta gamma0 - gamma1 / R.
"""

from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np

from .errors import IntegrationError, InvalidParameterError
from .odeint import adaptive_simpson

E, H, Z = "E", "H", "Z"


class Vec3(NamedTuple):
    x: float
    y: float
    z: float

    def as_array(self):
        return np.array([self.x, self.y, self.z], dtype=float)


@dataclass(frozen=True)
class BeltramiMode:
    """``e_m`` (parity ``"E"``), ``h_m`` (``"H"``) or the vertical unit vector (``"Z"``, m = 0)."""

    m: int
    parity: str = E

    def __post_init__(self):
        if self.parity not in (E, H, Z):
            raise InvalidParameterError(f"unknown parity {self.parity!r}")
        if self.parity == Z and self.m != 0:
            raise InvalidParameterError("the vertical unit vector has wavenumber 0")


VERTICAL = BeltramiMode(0, Z)


def eval_mode(mode, z):
    """Closed-form value of a mode at height ``z``."""
    if mode.parity == Z:
        return Vec3(0.0, 0.0, 1.0)
    s, c = np.sin(mode.m * z), np.cos(mode.m * z)
    if mode.parity == E:
        return Vec3(float(s), float(c), 0.0)
    return Vec3(float(c), float(-s), 0.0)


def _mode_samples(mode, z):
    z = np.asarray(z, dtype=float)
    if mode.parity == Z:
        return np.stack([np.zeros_like(z), np.zeros_like(z), np.ones_like(z)], axis=-1)
    s, c = np.sin(mode.m * z), np.cos(mode.m * z)
    if mode.parity == E:
        return np.stack([s, c, np.zeros_like(z)], axis=-1)
    return np.stack([c, -s, np.zeros_like(z)], axis=-1)


def curl_residual(mode, grid_size, method="fd"):
    """Max deviation of ``curl(mode)`` from ``m * mode`` on a uniform periodic z-grid.

    ``method="fd"`` uses second-order centred differences (truncation
    error bounded by ``|m|^3 h^2 / 6``); ``method="analytic"`` uses the
    exact derivative and returns round-off only.
    """
    if grid_size < 8:
        raise InvalidParameterError(f"grid_size must be >= 8, got {grid_size}")
    h = 2 * np.pi / grid_size
    z = np.arange(grid_size) * h
    u = _mode_samples(mode, z)
    if method == "analytic":
        m = mode.m
        if mode.parity == E:
            du = np.stack([m * np.cos(m * z), -m * np.sin(m * z), 0 * z], axis=-1)
        elif mode.parity == H:
            du = np.stack([-m * np.sin(m * z), -m * np.cos(m * z), 0 * z], axis=-1)
        else:
            du = np.zeros_like(u)
    elif method == "fd":
        du = (np.roll(u, -1, axis=0) - np.roll(u, 1, axis=0)) / (2 * h)
    else:
        raise InvalidParameterError(f"unknown method {method!r}")
    # curl of (ux(z), uy(z), uz) is (-uy', ux', 0)
    curl = np.stack([-du[:, 1], du[:, 0], np.zeros(grid_size)], axis=-1)
    return float(np.max(np.abs(curl - mode.m * u)))


def mode_cross(a, b, z):
    """Exact cross product ``a(z) x b(z)`` from the closure identities.

    Planar pairs give a vertical vector with amplitude ``sin((m-n)z)`` or
    ``+-cos((m-n)z)``; a planar mode crossed with the vertical vector gives
    the dual planar mode.
    """
    pa, pb = a.parity, b.parity
    if pa == Z and pb == Z:
        return Vec3(0.0, 0.0, 0.0)
    if pb == Z:
        # e_m x z = h_m,  h_m x z = -e_m
        v = eval_mode(BeltramiMode(a.m, H if pa == E else E), z)
        return v if pa == E else Vec3(-v.x, -v.y, 0.0)
    if pa == Z:
        v = mode_cross(b, a, z)
        return Vec3(-v.x, -v.y, -v.z)
    d = (a.m - b.m) * z
    if pa == pb:
        return Vec3(0.0, 0.0, float(np.sin(d)))
    if pa == H:
        return Vec3(0.0, 0.0, float(np.cos(d)))
    return Vec3(0.0, 0.0, float(-np.cos(d)))


@dataclass(frozen=True)
class TripletState:
    """Amplitudes of ``gamma0 e_1 + gamma1 h_1 + delta z_hat`` at time ``t``."""

    gamma0: float
    gamma1: float
    delta: float
    A: float
    R: float
    t: float = 0.0

    def __post_init__(self):
        if not self.R > 0:
            raise InvalidParameterError(f"Reynolds number must be positive, got {self.R}")

    @property
    def amplitude(self):
        """``C0 exp(-t/R)``, the current planar speed."""
        return float(np.hypot(self.gamma0, self.gamma1))

    @property
    def phase(self):
        return float(np.arctan2(self.gamma1, self.gamma0))

    def energy(self):
        return self.gamma0**2 + self.gamma1**2


def triplet_rhs(t, y, delta_fn, R):
    g0, g1 = y
    d = delta_fn(t)
    return np.array([d * g1 - g0 / R, -d * g0 - g1 / R])


def triplet_evolve(s0, delta_fn: Callable[[float], float], t_end, tol=1e-10):
    """Advance a triplet with the closed-form solution.

    The energy decays as ``exp(-2t/R)`` and the phase obeys
    ``phi(t) = phi(t0) - int delta dt``; the integral is evaluated by
    adaptive Simpson quadrature to ``tol``.
    """
    if t_end < s0.t:
        raise InvalidParameterError("t_end must not precede the initial time")
    if not tol > 0:
        raise InvalidParameterError("tol must be positive")
    dt = t_end - s0.t
    turned = adaptive_simpson(delta_fn, s0.t, t_end, tol)
    phi = s0.phase - turned
    amp = s0.amplitude * np.exp(-dt / s0.R)
    d_end = float(delta_fn(t_end))
    if not np.isfinite(d_end):
        raise IntegrationError(f"non-finite delta at t={t_end}")
    return replace(s0, gamma0=float(amp * np.cos(phi)), gamma1=float(amp * np.sin(phi)),
                   delta=d_end, t=float(t_end))


def triplet_velocity(s, z):
    """Velocity ``(a sin(z+phi), a cos(z+phi), delta)`` of a triplet state.

    ``a = C0 exp(-t/R)`` is the current amplitude and ``delta = -dphi/dt``.
    The y-component carries ``+cos``, which is what expanding
    ``gamma0 e_1 + gamma1 h_1`` actually produces.
    """
    w = z + s.phase
    a = s.amplitude
    return Vec3(float(a * np.sin(w)), float(a * np.cos(w)), float(s.delta))
