"""Pseudo-spectral periodic-box solver for the force-free vorticity equation.

The velocity form ``du/dt = P[u x omega] + lap(u) / R`` is advanced with a
low-storage third-order Runge-Kutta scheme, an exact integrating factor for
the viscous term and 2/3 dealiasing of the product. ``P`` projects onto
divergence-free fields; taking the curl recovers
``d omega/dt + rot(omega x u) = lap(omega) / R``.

The box is ``[0, Lx) x [0, Ly) x [0, Lz)``. Slowly modulated fields use
``Lx = Ly = 2 pi / eps`` so that one slow period fits the box while the
fast period ``2 pi`` fits ``Lz``.
"""

import json
import struct
import time
from dataclasses import dataclass, replace

import numpy as np

from .beltrami_core import triplet_evolve
from .errors import CFLError, InvalidParameterError
from .slow_fields import c0_all, poly_eval, poly_grad

TWO_PI = 2 * np.pi
MAGIC = b"BTDNS1\x00\x00"
CFL_MAX = 1.0
# Williamson low-storage RK3
RK_A = (0.0, -5.0 / 9.0, -153.0 / 128.0)
RK_B = (1.0 / 3.0, 15.0 / 16.0, 8.0 / 15.0)
RK_C = (0.0, 1.0 / 3.0, 3.0 / 4.0)


class Box:
    """Wavenumbers, dealias mask and grid of an ``n^3`` box with lengths ``L``."""

    _cache = {}

    def __new__(cls, n, L):
        key = (n, tuple(float(v) for v in L))
        if key not in cls._cache:
            obj = super().__new__(cls)
            obj._setup(n, key[1])
            cls._cache[key] = obj
        return cls._cache[key]

    def _setup(self, n, L):
        self.n, self.L = n, L
        kx = np.fft.fftfreq(n, 1.0 / n)
        kz = np.fft.rfftfreq(n, 1.0 / n)
        ix, iy, iz = np.meshgrid(kx, kx, kz, indexing="ij")
        self.k = np.stack([ix * TWO_PI / L[0], iy * TWO_PI / L[1], iz * TWO_PI / L[2]])
        self.k2 = np.sum(self.k**2, axis=0)
        self.k2_safe = np.where(self.k2 == 0, 1.0, self.k2)
        self.mask = (np.abs(ix) < n / 3) & (np.abs(iy) < n / 3) & (np.abs(iz) < n / 3)
        self.spacing = np.array(L) / n

    def grid(self):
        axes = [self.L[i] * np.arange(self.n) / self.n for i in range(3)]
        return np.meshgrid(*axes, indexing="ij")


def _fft(u):
    return np.fft.rfftn(u, axes=(-3, -2, -1))


def _ifft(uh, n):
    return np.fft.irfftn(uh, s=(n, n, n), axes=(-3, -2, -1))


def _curl_hat(box, uh):
    k = box.k
    return 1j * np.stack([k[1] * uh[2] - k[2] * uh[1],
                          k[2] * uh[0] - k[0] * uh[2],
                          k[0] * uh[1] - k[1] * uh[0]])


def _project(box, uh):
    kdotu = np.sum(box.k * uh, axis=0)
    return uh - box.k * kdotu / box.k2_safe


@dataclass(frozen=True)
class SpectralField3D:
    n: int
    u_hat: np.ndarray  # (3, n, n, n//2 + 1) real-to-complex coefficients
    R: float
    t: float = 0.0
    L: tuple = (TWO_PI, TWO_PI, TWO_PI)

    @property
    def box(self):
        return Box(self.n, self.L)

    @classmethod
    def from_real(cls, u, R, t=0.0, L=(TWO_PI, TWO_PI, TWO_PI), project=True):
        u = np.asarray(u, dtype=float)
        n = u.shape[1]
        if u.shape != (3, n, n, n) or n < 4 or n & (n - 1):
            raise InvalidParameterError("velocity must have shape (3, n, n, n) with n a power of two")
        if not R > 0:
            raise InvalidParameterError("R must be positive")
        uh = _fft(u)
        uh[:, :, :, -1] = 0.0  # drop the z Nyquist plane, which has no conjugate partner
        if project:
            uh = _project(Box(n, L), uh)
        return cls(n, uh, float(R), float(t), tuple(float(v) for v in L))

    def velocity(self):
        return _ifft(self.u_hat, self.n)

    def vorticity(self):
        return _ifft(_curl_hat(self.box, self.u_hat), self.n)

    def energy(self):
        u = self.velocity()
        return 0.5 * float(np.mean(np.sum(u * u, axis=0)))

    def divergence_max(self):
        """Largest ``|k . u_hat|`` relative to the largest ``|u_hat|``."""
        top = np.max(np.abs(self.u_hat))
        if top == 0:
            return 0.0
        return float(np.max(np.abs(np.sum(self.box.k * self.u_hat, axis=0))) / top)

    def advective_rate(self):
        u = self.velocity()
        return float(sum(np.max(np.abs(u[i])) / self.box.spacing[i] for i in range(3)))


def nonlinear_term(box, uh):
    """Dealiased, projected ``u x omega`` in spectral space."""
    n = box.n
    uh = uh * box.mask
    u = _ifft(uh, n)
    w = _ifft(_curl_hat(box, uh), n)
    cross = np.stack([u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2],
                      u[0] * w[1] - u[1] * w[0]])
    return _project(box, _fft(cross) * box.mask)


def dns_step(s: SpectralField3D, dt, cfl_max=CFL_MAX):
    """One integrating-factor RK3 step; raises ``CFLError`` if ``dt`` is too large."""
    if not dt > 0:
        raise InvalidParameterError("dt must be positive")
    rate = s.advective_rate()
    if dt * rate > cfl_max:
        raise CFLError(f"CFL number {dt * rate:.3g} exceeds {cfl_max}", 0.8 * cfl_max / rate)
    box = s.box
    nu = 1.0 / s.R
    # v = exp(nu k^2 (t - t_n)) u_hat removes the stiff linear part exactly
    v = s.u_hat.copy()
    q = np.zeros_like(v)
    for a, b, c in zip(RK_A, RK_B, RK_C):
        damp = np.exp(-nu * box.k2 * c * dt)
        f = nonlinear_term(box, v * damp) / damp
        q = a * q + dt * f
        v = v + b * q
    uh = _project(box, v * np.exp(-nu * box.k2 * dt))
    return replace(s, u_hat=uh, t=s.t + dt)


def run(s, t_end, dt, callback=None):
    """Step to ``t_end`` with steps no longer than ``dt``; ``callback(s)`` after each step."""
    steps = max(1, int(np.ceil((t_end - s.t) / dt - 1e-12)))
    h = (t_end - s.t) / steps
    for _ in range(steps):
        s = dns_step(s, h)
        if callback is not None:
            callback(s)
    return s


# initial data and analytic candidates -------------------------------------------
def trkal_field(n, R, m=1, t=0.0):
    """The curl eigenfield ``e_m = (sin mz, cos mz, 0)`` decaying like ``exp(-m^2 t / R)``."""
    cand = trkal_candidate(R, m)
    box = Box(n, (TWO_PI,) * 3)
    u, _ = cand(*box.grid(), t)
    return SpectralField3D.from_real(u, R, t)


def trkal_candidate(R, m=1):
    def cand(X, Y, Z, t):
        a = np.exp(-m * m * t / R)
        u = np.stack([a * np.sin(m * Z), a * np.cos(m * Z), np.zeros_like(Z)])
        return u, -m * m / R * u
    return cand


def triplet_candidate(state):
    """Closed-form constant-``delta`` triplet ``(a sin(z + phi), a cos(z + phi), delta)``."""
    d = state.delta

    def cand(X, Y, Z, t):
        s = triplet_evolve(state, lambda _t: d, t) if t > state.t else state
        a, w = s.amplitude, Z + s.phase
        u = np.stack([a * np.sin(w), a * np.cos(w), np.full_like(Z, d)])
        # d/dt of a sin(z + phi) with a' = -a/R and phi' = -delta
        du = np.stack([-a / state.R * np.sin(w) - a * d * np.cos(w),
                       -a / state.R * np.cos(w) + a * d * np.sin(w), np.zeros_like(Z)])
        return u, du
    return cand


def composition_box(eps):
    return (TWO_PI / eps, TWO_PI / eps, TWO_PI)


def _slow_curl_z(amp, ax, ay, px, py, cw, sw):
    """Vertical slow curl of ``amp (sin w, cos w, 0)`` with ``w = z + psi``; ``p = grad psi``."""
    return (ax - amp * py) * cw - (ay + amp * px) * sw


def composition_candidate(E, R, phase=None, phase_rate=None, correction=False):
    """``u0 + eps u1`` in the box ``composition_box(eps)``.

    The phase is ``phi = phase + tau * phase_rate`` with ``tau = eps t``.
    ``u0 = a C0 (sin w, cos w, 0)`` with ``w = z + phi`` and ``a = exp(-t/R)``.
    ``u1`` has a vertical part, the slow curl of ``u0`` (which keeps the sum
    divergence-free) plus the upward velocity ``-phi_tau``, and, with
    ``correction=True``, the planar amplitude correction
    ``C~ (sin w, cos w, 0)`` with ``C~ = tau (A cos phi - C0)`` (zero phase
    offset, static phase), completed by its own slow curl at order ``eps^2``.

    Without the amplitude correction the order-``eps^2`` terms of the
    vorticity equation cancel identically and the residual is ``O(eps^3)``.
    """
    eps = R**-0.5
    if correction and phase_rate is not None:
        raise InvalidParameterError("the amplitude correction is closed-form only for a static phase")
    A = E.base

    def cand(X, Y, Z, t):
        xi, eta = eps * X, eps * Y
        tau = eps * t
        c, gx, gy, *_ = c0_all(E, xi, eta)
        zero = np.zeros_like(xi)
        phi, px, py = zero, zero, zero
        if phase is not None:
            phi = phi + poly_eval(phase, xi, eta)
            gpx, gpy = poly_grad(phase, xi, eta)
            px, py = px + gpx, py + gpy
        rate, rx, ry = zero, zero, zero
        if phase_rate is not None:
            rate = poly_eval(phase_rate, xi, eta)
            rx, ry = poly_grad(phase_rate, xi, eta)
            phi, px, py = phi + tau * rate, px + tau * rx, py + tau * ry
        a = np.exp(-t / R)
        w = Z + phi
        sw, cw = np.sin(w), np.cos(w)
        p_, q_ = gx - c * py, gy + c * px
        omega = p_ * cw - q_ * sw
        u = a * np.stack([c * sw, c * cw, eps * (omega - rate)])
        # time derivatives through w (rate eps * rate) and through grad phi
        domega = eps * (-c * ry * cw - c * rx * sw - (p_ * sw + q_ * cw) * rate)
        du = -u / R + a * np.stack([eps * rate * c * cw, -eps * rate * c * sw, eps * domega])
        if correction:
            g = A * np.cos(phi) - c  # d C~ / d tau
            gx_ = -A * np.sin(phi) * px - gx
            gy_ = -A * np.sin(phi) * py - gy
            ct = tau * g
            curl = _slow_curl_z(g, gx_, gy_, px, py, cw, sw)  # slow curl per unit tau
            v = a * np.stack([eps * ct * sw, eps * ct * cw, eps * eps * tau * curl])
            u = u + v
            du = du - v / R + a * np.stack([eps * eps * g * sw, eps * eps * g * cw,
                                            eps ** 3 * curl])
        return u, du
    return cand


def field_from_candidate(cand, n, R, L, t=0.0):
    box = Box(n, L)
    u, _ = cand(*box.grid(), t)
    return SpectralField3D.from_real(u, R, t, L)


# diagnostics ---------------------------------------------------------------------
def residual_of(s: SpectralField3D, candidate):
    """``|d omega/dt + rot(omega x u) - lap(omega)/R|_2 / |omega|_2`` for an analytic candidate.

    ``candidate(X, Y, Z, t)`` returns ``(u, du/dt)`` sampled on the grid of ``s``
    at time ``s.t``; all derivatives are spectral.
    """
    box = s.box
    n = s.n
    u, du = candidate(*box.grid(), s.t)
    uh, duh = _fft(u), _fft(du)
    wh = _curl_hat(box, uh)
    w = _ifft(wh, n)
    cross = np.stack([w[1] * u[2] - w[2] * u[1], w[2] * u[0] - w[0] * u[2],
                      w[0] * u[1] - w[1] * u[0]])
    res_h = _curl_hat(box, duh) + _curl_hat(box, _fft(cross)) + box.k2 * wh / s.R
    res = _ifft(res_h, n)
    norm_w = np.sqrt(np.mean(np.sum(w * w, axis=0)))
    if norm_w == 0:
        return 0.0
    return float(np.sqrt(np.mean(np.sum(res * res, axis=0))) / norm_w)


def random_solenoidal(n, R, seed=0, kmax=4, L=(TWO_PI,) * 3):
    rng = np.random.default_rng(seed)
    box = Box(n, L)
    idx = np.abs(box.k * (np.array(L)[:, None, None, None] / TWO_PI))
    keep = np.all(idx <= kmax, axis=0)
    uh = (rng.normal(size=box.k.shape) + 1j * rng.normal(size=box.k.shape)) * keep
    u = _ifft(uh, n)
    s = SpectralField3D.from_real(u, R, 0.0, L)
    return replace(s, u_hat=s.u_hat / np.sqrt(2 * s.energy()))


def compare_short_time(candidate, s0, t_end, dt=None, n_samples=10, R_window=True):
    """DNS from ``s0`` against the analytic ``candidate``; returns ``(times, errors)``.

    Errors are RMS differences of the velocity relative to the RMS of the
    initial field. ``t_end`` must not exceed ``0.1 sqrt(R)``.
    """
    if R_window and t_end > 0.1 * np.sqrt(s0.R) + 1e-12:
        raise InvalidParameterError("t_end beyond 0.1 sqrt(R), outside the validity window")
    if s0.n < 16:
        raise InvalidParameterError("grid too coarse to represent the fast period")
    if dt is None:
        dt = 0.5 * CFL_MAX / s0.advective_rate()
    box = s0.box
    grid = box.grid()
    scale = np.sqrt(np.mean(np.sum(s0.velocity() ** 2, axis=0)))

    def err(s):
        u_ref, _ = candidate(*grid, s.t)
        d = s.velocity() - u_ref
        return float(np.sqrt(np.mean(np.sum(d * d, axis=0))) / scale)

    times, errors = [s0.t], [err(s0)]
    s = s0
    for t in np.linspace(s0.t, t_end, n_samples + 1)[1:]:
        s = run(s, t, dt)
        times.append(s.t)
        errors.append(err(s))
    return np.array(times), np.array(errors)


def slow_cross_average(E, phase=None, n=32):
    """z-average of ``rot_xieta u0 x u0`` and the size of its non-gradient part.

    Returns ``(avg, solenoidal_norm, total_norm)`` with ``avg`` of shape
    ``(2, n, n)`` on the slow torus. The non-gradient part is what survives
    in the vorticity equation; a gradient is absorbed by the pressure.
    """
    x = TWO_PI * np.arange(n) / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    c, gx, gy, *_ = c0_all(E, X, Y)
    if phase is None:
        px = py = np.zeros_like(X)
    else:
        px, py = poly_grad(phase, X, Y)
    # with Omega = (gx - c py) cos w - (gy + c px) sin w, average over z of
    # (-Omega c cos w, Omega c sin w)
    avg = np.stack([-0.5 * c * (gx - c * py), -0.5 * c * (gy + c * px)])
    fh = np.fft.fft2(avg, axes=(1, 2))
    k = np.fft.fftfreq(n, 1.0 / n)
    KX, KY = np.meshgrid(k, k, indexing="ij")
    k2 = np.where(KX**2 + KY**2 == 0, 1.0, KX**2 + KY**2)
    # remove the gradient part and the mean
    kdot = KX * fh[0] + KY * fh[1]
    sol = fh - np.stack([KX, KY]) * kdot / k2
    sol[:, 0, 0] = 0.0
    sol_r = np.real(np.fft.ifft2(sol, axes=(1, 2)))
    return avg, float(np.sqrt(np.mean(sol_r**2))), float(np.sqrt(np.mean(avg**2)))


# validation cases ----------------------------------------------------------------
def validate_trkal(n=32, R=100.0, n_checks=20):
    """Energy decay of the Trkal field over ``[0, R/10]``."""
    start = time.perf_counter()
    s = trkal_field(n, R)
    e0 = s.energy()
    dt = 0.5 * CFL_MAX / s.advective_rate()
    worst, t_end = 0.0, R / 10
    for t in np.linspace(0, t_end, n_checks + 1)[1:]:
        s = run(s, t, dt)
        exact = e0 * np.exp(-2 * s.t / R)
        worst = max(worst, abs(s.energy() - exact) / exact)
    return {"case": "trkal", "n": n, "R": R, "t_end": t_end, "max_rel_energy_error": worst,
            "divergence_max": s.divergence_max(), "runtime_s": time.perf_counter() - start}


def validate_triplet(state, n=32, t_end=None, n_checks=10):
    """Pointwise agreement with the closed-form constant-``delta`` triplet."""
    cand = triplet_candidate(state)
    s0 = field_from_candidate(cand, n, state.R, (TWO_PI,) * 3, state.t)
    t_end = state.t + state.R / 10 if t_end is None else t_end
    times, errors = compare_short_time(cand, s0, t_end, n_samples=n_checks, R_window=False)
    grid = s0.box.grid()
    return {"case": "triplet", "n": n, "R": state.R, "t_end": float(times[-1]),
            "max_error": float(np.max(errors)), "times": times.tolist(),
            "errors": errors.tolist(), "grid_points": int(grid[0].size)}


def residual_scaling(E, Rs, n=32, phase=None, phase_rate=None, correction=False, t=0.0):
    """``residual_of`` for the composition at each Reynolds number."""
    out = []
    for R in Rs:
        eps = R**-0.5
        cand = composition_candidate(E, R, phase, phase_rate, correction)
        s = field_from_candidate(cand, n, R, composition_box(eps), t)
        out.append(residual_of(s, cand))
    return np.array(out)


# snapshots -----------------------------------------------------------------------
def write_snapshot(path, s: SpectralField3D, extra=None):
    """Binary snapshot plus ``<path>.json`` manifest."""
    u = s.velocity()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<qdd", s.n, s.R, s.t))
        for comp in u:
            fh.write(np.ascontiguousarray(comp.transpose(2, 1, 0), dtype="<f8").tobytes())
    manifest = {"format": "BTDNS1", "n": s.n, "R": s.R, "t": s.t, "L": list(s.L),
                "order": "x-fastest", "components": ["ux", "uy", "uz"]}
    manifest.update(extra or {})
    with open(str(path) + ".json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def read_snapshot(path, L=None):
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise InvalidParameterError(f"{path} is not a BTDNS1 snapshot")
        n, R, t = struct.unpack("<qdd", fh.read(24))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != 3 * n**3:
        raise InvalidParameterError(f"{path}: expected {3 * n ** 3} values, found {data.size}")
    if L is None:
        try:
            with open(str(path) + ".json") as fh:
                L = tuple(json.load(fh)["L"])
        except FileNotFoundError:
            L = (TWO_PI,) * 3
    u = data.reshape(3, n, n, n).transpose(0, 3, 2, 1)
    return SpectralField3D.from_real(u, R, t, L, project=False)
