"""Asymptotic velocity on the quasi-stationary sheets and its vorticity.

The leading planar field is ``C0 n`` with ``n = grad C0 / |grad C0|``; its
vertical vorticity is

    omega_z = C0 (g x H g) / |g|^3,         g = grad C0, H = Hess C0,

which near a nondegenerate stationary point with Hessian eigenvalues
``l1, l2`` behaves like

    C0 l1 l2 (l2 - l1) cos(a) sin(a) / (rho (l1^2 cos^2 a + l2^2 sin^2 a)^(3/2)).

The plane vorticity comes from the upward velocity
``dbar1 = -C0 (n . grad phi) - phi_tau`` and is ``|grad dbar1| / R``.
"""

import json
from dataclasses import asdict, dataclass, field
import numpy as np
from numpy.polynomial import chebyshev

from .beltrami_core import Vec3
from .errors import GeometryError, InvalidParameterError, NearCriticalPointError
from .odeint import adaptive_simpson
from .phase_dynamics import CorrectionField, PhaseState, ScalingFrame
from .slow_fields import TrigPoly2D, c0_all, c0_eval, poly_eval
from .streamline_tracer import GRAD_FLOOR, torus_distance

N_PHI = 64


# phase models ---------------------------------------------------------------
class SnapshotPhase:
    """Phase model frozen at a stored ``PhaseState`` (the ``tau`` argument is ignored)."""

    def __init__(self, state):
        self.state = state

    def value(self, xi, eta, tau=None):
        return self.state.value(xi, eta)

    def dtau(self, xi, eta, tau=None):
        return self.state.dtau(xi, eta)

    def grad(self, xi, eta, tau=None):
        return self.state.grad(xi, eta)

    def hessian(self, xi, eta, tau=None):
        s = self.state
        return (s._eval(s.phi_hat, xi, eta, 2, 0).real, s._eval(s.phi_hat, xi, eta, 1, 1).real,
                s._eval(s.phi_hat, xi, eta, 0, 2).real)

    def dtau_grad(self, xi, eta, tau=None):
        s = self.state
        return (s._eval(s.dphi_hat, xi, eta, 1, 0).real, s._eval(s.dphi_hat, xi, eta, 0, 1).real)


class ZeroPhase:
    def value(self, xi, eta, tau=None):
        return np.zeros(np.broadcast(xi, eta).shape)

    dtau = value

    def grad(self, xi, eta, tau=None):
        z = self.value(xi, eta)
        return z, z

    def hessian(self, xi, eta, tau=None):
        z = self.value(xi, eta)
        return z, z, z

    dtau_grad = grad


@dataclass
class AsymptoticVelocity:
    """Leading quasi-stationary field and its first corrections.

    ``phase`` is any object with ``value/dtau/grad/hessian/dtau_grad`` taking
    ``(xi, eta, tau)`` (``ModePhase``, ``ZeroPhase``) or a ``PhaseState``.
    ``correction`` is a ``CorrectionField`` (trigonometric interpolation of
    its grid, offset taken from it), a callable ``(xi, eta, tau) -> C~`` or None.
    """

    E: object
    phase: object = field(default_factory=ZeroPhase)
    correction: object = None
    frame: ScalingFrame = field(default_factory=lambda: ScalingFrame(1e4))
    phi_offset: TrigPoly2D = field(default_factory=TrigPoly2D)

    def __post_init__(self):
        if isinstance(self.phase, PhaseState):
            self.phase = SnapshotPhase(self.phase)
        if isinstance(self.correction, CorrectionField):
            self.phi_offset = self.correction.phi_offset
            self._c_tilde = grid_interpolant(self.correction.C_tilde)
        else:
            self._c_tilde = self.correction

    def c_tilde(self, xi, eta, tau):
        return 0.0 if self._c_tilde is None else self._c_tilde(xi, eta, tau)


def grid_interpolant(values):
    """Trigonometric interpolant of a periodic ``n x n`` grid (ij indexing); ``tau`` is ignored."""
    n = values.shape[0]
    coef = np.fft.fft2(values) / (n * n)
    k = np.fft.fftfreq(n, 1.0 / n)
    if n % 2 == 0:
        # split the Nyquist row/column so the interpolant stays real
        coef[n // 2, :] *= 0.5
        coef[:, n // 2] *= 0.5
        coef = np.concatenate([coef, coef[n // 2:n // 2 + 1, :]], axis=0)
        coef = np.concatenate([coef, coef[:, n // 2:n // 2 + 1]], axis=1)
        k = np.concatenate([k, [n // 2]])

    def f(xi, eta, tau=None):
        ex = np.exp(1j * np.multiply.outer(np.asarray(xi, float), k))
        ey = np.exp(1j * np.multiply.outer(np.asarray(eta, float), k))
        return np.real(np.einsum("...i,ij,...j->...", ex, coef, ey))

    return f


def correction_amplitude(E, phase, phi_offset=None, tol=1e-10):
    """Pointwise ``C~(xi, eta, tau)`` by adaptive quadrature of the first-correction integrand."""
    phi_offset = phi_offset or TrigPoly2D()

    def c_tilde(xi, eta, tau):
        c0 = float(c0_eval(E, xi, eta))
        co = float(np.cos(poly_eval(phi_offset, xi, eta)))
        f = lambda s: E.base * np.cos(float(phase.value(xi, eta, s))) - c0
        return adaptive_simpson(f, 0.0, tau, tol) / co

    return c_tilde


def upward_velocity_field(E, phase, xi, eta, tau):
    """``dbar1 = -C0 (n . grad phi) - phi_tau`` along the quasi-stationary sheet."""
    c, gx, gy, *_ = c0_all(E, xi, eta)
    g = np.hypot(gx, gy)
    px, py = phase.grad(xi, eta, tau)
    return -c * (gx * px + gy * py) / g - phase.dtau(xi, eta, tau)


def eval_asymptotic_velocity(V, xi, eta, z, tau, grad_floor=GRAD_FLOOR):
    """Leading planar field plus the ``eps`` corrections (upward velocity and ``w1``)."""
    c, gx, gy, *_ = c0_all(V.E, xi, eta)
    g = float(np.hypot(gx, gy))
    if g <= grad_floor:
        raise NearCriticalPointError(f"|grad C0| = {g:.3g} at ({xi:.6g}, {eta:.6g})")
    eps = V.frame.eps
    ux, uy = c * gx / g, c * gy / g
    d1 = float(upward_velocity_field(V.E, V.phase, xi, eta, tau))
    if V.correction is not None:
        amp = abs(float(V.c_tilde(xi, eta, tau))) / g
        off = float(poly_eval(V.phi_offset, xi, eta))
        co, so = np.cos(off), np.sin(off)
        # cos(off) grad C0 + sin(off) ngrad C0, ngrad = (dC0/deta, -dC0/dxi)
        ux += eps * amp * (co * gx + so * gy)
        uy += eps * amp * (co * gy - so * gx)
    return Vec3(float(ux), float(uy), float(eps * d1))


def ngrad(E, xi, eta):
    _, gx, gy, *_ = c0_all(E, xi, eta)
    return gy, -gx


# vertical vorticity -------------------------------------------------------------
def vertical_vorticity(E, xi, eta):
    """Closed-form ``omega_z`` of the planar field ``C0 grad C0 / |grad C0|``."""
    c, gx, gy, hxx, hxy, hyy = c0_all(E, xi, eta)
    hgx = hxx * gx + hxy * gy
    hgy = hxy * gx + hyy * gy
    return c * (gx * hgy - gy * hgx) / np.hypot(gx, gy) ** 3


def gradient_field(E, xi, eta):
    c, gx, gy, *_ = c0_all(E, xi, eta)
    g = np.hypot(gx, gy)
    return c * gx / g, c * gy / g


def vertical_vorticity_spectral(E, xi, eta, half_width, n=32):
    """Curl of the planar field by Chebyshev differentiation on crossing segments.

    The field is interpolated at ``n`` Chebyshev points on the segments of
    half-width ``half_width`` through ``(xi, eta)`` along each axis; the segments
    must stay clear of critical points, where the field direction jumps.
    """
    def ddx(fn):
        c = chebyshev.chebinterpolate(fn, n - 1)
        return chebyshev.chebval(0.0, chebyshev.chebder(c)) / half_width

    duy = ddx(lambda s: gradient_field(E, xi + half_width * s, eta)[1])
    dux = ddx(lambda s: gradient_field(E, xi, eta + half_width * s)[0])
    return float(duy - dux)


def leading_profile(C0, l1, l2, angle):
    """Coefficient of ``1/rho`` in ``omega_z`` along direction ``angle`` of the Hessian eigenbasis."""
    c, s = np.cos(angle), np.sin(angle)
    return C0 * l1 * l2 * (l2 - l1) * c * s / (l1 * l1 * c * c + l2 * l2 * s * s) ** 1.5


@dataclass
class SingularityFit:
    point: tuple
    kind: str
    eigvals: tuple
    radii: np.ndarray
    amplitudes: np.ndarray
    slope: float
    slope_ci: float
    prefactor: float
    angles: np.ndarray
    angle_profile: np.ndarray
    predicted_profile: np.ndarray
    isotropic: bool

    def to_json(self):
        d = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in asdict(self).items()}
        return json.dumps(d)

    def ring_csv(self):
        lines = ["r,phi,omega"]
        for r, a in zip(self.radii, self.amplitudes):
            lines.append(f"{float(r)!r},mean,{float(a)!r}")
        r0 = float(self.radii[-1])
        for ang, w in zip(self.angles, self.angle_profile):
            lines.append(f"{r0!r},{float(ang)!r},{float(w) / r0!r}")
        return "\n".join(lines) + "\n"


def _ring_angles(n_phi):
    return 2 * np.pi * (np.arange(n_phi) + 0.5) / n_phi


def _check_annulus(point, r_max, others):
    for q in others or ():
        d = torus_distance(point.position, q.position)
        if 0 < d < 2 * r_max:
            raise GeometryError(f"critical point at distance {d:.3g} inside the sampling annulus")


def _loglog_fit(r, a):
    x, y = np.log(r), np.log(a)
    A = np.column_stack([x, np.ones_like(x)])
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    n = len(x)
    resid = y - A @ coef
    s2 = float(resid @ resid) / max(n - 2, 1)
    se = np.sqrt(s2 / np.sum((x - x.mean()) ** 2))
    return float(coef[0]), float(np.exp(coef[1])), float(1.96 * se)


def vertical_singularity_fit(V, point, r_min=1e-3, r_max=1e-1, n_r=12, n_phi=N_PHI,
                             others=None, iso_tol=1e-9):
    """Ring-averaged ``|omega_z|`` versus radius around a stationary point and a log-log fit."""
    if point.kind == "degenerate" or point.hessian.is_degenerate():
        raise InvalidParameterError("point is degenerate")
    if not 0 < r_min < r_max:
        raise InvalidParameterError("need 0 < r_min < r_max")
    _check_annulus(point, r_max, others)
    E = V.E
    l1, l2 = point.eigvals
    vec = point.eigvecs
    radii = np.geomspace(r_max, r_min, n_r)
    ang = _ring_angles(n_phi)
    amps = []
    for r in radii:
        x = point.xi + r * np.cos(ang)
        y = point.eta + r * np.sin(ang)
        amps.append(float(np.mean(np.abs(vertical_vorticity(E, x, y)))))
    amps = np.array(amps)
    c0 = float(c0_eval(E, point.xi, point.eta))
    iso = abs(l1 - l2) <= iso_tol * max(abs(l1), abs(l2))
    # profile in the eigenbasis at the innermost radius, scaled by r
    r0 = float(radii[-1])
    x = point.xi + r0 * (np.cos(ang) * vec[0, 0] + np.sin(ang) * vec[0, 1])
    y = point.eta + r0 * (np.cos(ang) * vec[1, 0] + np.sin(ang) * vec[1, 1])
    profile = vertical_vorticity(E, x, y) * r0
    predicted = leading_profile(c0, l1, l2, ang)
    if np.all(amps > 0):
        slope, pref, ci = _loglog_fit(radii, amps)
    else:
        slope, pref, ci = float("nan"), 0.0, float("nan")
    return SingularityFit(point.position, point.kind, (l1, l2), radii, amps, slope, ci, pref,
                          ang, profile, predicted, bool(iso))


# plane vorticity ------------------------------------------------------------------
def upward_velocity_gradient(E, phase, xi, eta, tau):
    """Analytic ``grad dbar1``."""
    c, gx, gy, hxx, hxy, hyy = c0_all(E, xi, eta)
    g = np.hypot(gx, gy)
    nx, ny = gx / g, gy / g
    px, py = phase.grad(xi, eta, tau)
    pxx, pxy, pyy = phase.hessian(xi, eta, tau)
    tx, ty = phase.dtau_grad(xi, eta, tau)
    # Jacobian of n: (I - n n^T) H / |g|
    hnx = hxx * nx + hxy * ny
    hny = hxy * nx + hyy * ny
    j = [[(hxx - nx * hnx) / g, (hxy - nx * hny) / g],
         [(hxy - ny * hnx) / g, (hyy - ny * hny) / g]]
    # grad(n . grad phi) = J^T grad phi + Hphi n
    dx = j[0][0] * px + j[1][0] * py + pxx * nx + pxy * ny
    dy = j[0][1] * px + j[1][1] * py + pxy * nx + pyy * ny
    ndp = nx * px + ny * py
    return -(gx * ndp + c * dx) - tx, -(gy * ndp + c * dy) - ty


def plane_vorticity(V, xi, eta, tau):
    """``|rot_xieta dbar1| / R``."""
    gx, gy = upward_velocity_gradient(V.E, V.phase, xi, eta, tau)
    return np.hypot(gx, gy) / V.frame.R


@dataclass
class GrowthReport:
    times: np.ndarray
    amplitudes: np.ndarray
    fitted_rate: float
    predicted_rate: float
    r_probe: float
    halving_ratio: float

    @property
    def rate_error(self):
        return abs(self.fitted_rate - self.predicted_rate) / self.predicted_rate


def plane_component_growth(V, point, times, r_probe, predicted_rate=None, n_phi=N_PHI,
                           fit_from=None):
    """Ring-averaged plane vorticity at ``r_probe`` over ``times`` and its exponential rate.

    ``fit_from`` restricts the log-linear fit to ``tau >= fit_from`` (the
    default uses the latter half of ``times``). ``halving_ratio`` is the
    amplitude at ``r_probe / 2`` over that at ``r_probe`` at the last time.
    """
    if point.hessian.is_degenerate():
        raise InvalidParameterError("point is degenerate")
    times = np.asarray(times, dtype=float)
    ang = _ring_angles(n_phi)

    def ring(r, t):
        x = point.xi + r * np.cos(ang)
        y = point.eta + r * np.sin(ang)
        return float(np.mean(plane_vorticity(V, x, y, t)))

    amps = np.array([ring(r_probe, t) for t in times])
    if predicted_rate is None:
        predicted_rate = getattr(V.phase, "rate", float("nan"))
    if fit_from is None:
        fit_from = times[len(times) // 2]
    sel = times >= fit_from
    if np.all(amps[sel] > 0) and sel.sum() >= 2:
        A = np.column_stack([times[sel], np.ones(sel.sum())])
        rate = float(np.linalg.lstsq(A, np.log(amps[sel]), rcond=None)[0][0])
    else:
        rate = 0.0
    last = amps[-1]
    ratio = ring(r_probe / 2, times[-1]) / last if last > 0 else float("nan")
    return GrowthReport(times, amps, rate, float(predicted_rate), r_probe, ratio)


# collinearity ----------------------------------------------------------------------
def _spectral_derivative(f, axis, L=2 * np.pi):
    n = f.shape[axis]
    k = np.fft.fftfreq(n, d=L / (2 * np.pi * n))
    if n % 2 == 0:
        k[n // 2] = 0.0
    shape = [1] * f.ndim
    shape[axis] = n
    return np.real(np.fft.ifft(1j * k.reshape(shape) * np.fft.fft(f, axis=axis), axis=axis))


def collinearity_defect(E, phase, frame, n_xy=32, n_z=16, tau=0.0):
    """``|u - rot u|`` for the composed field ``u0 + eps u1`` with ``rot = rot_z + eps rot_xieta``.

    ``u0 = C0 (sin(z+phi), cos(z+phi), 0)`` and ``u1 = (0, 0, Omega + delta1)``
    where ``Omega`` is the vertical slow curl of ``u0`` and ``delta1 = -phi_tau``.
    All derivatives are spectral on an ``n_xy^2 x n_z`` grid. Returns the defect
    norm and ``eps |delta1|`` on the grid.
    """
    if n_z < 16:
        raise InvalidParameterError("n_z must resolve the fast period with at least 16 points")
    eps = frame.eps
    s = 2 * np.pi * np.arange(n_xy) / n_xy
    zz = 2 * np.pi * np.arange(n_z) / n_z
    X, Y, Z = np.meshgrid(s, s, zz, indexing="ij")
    X2, Y2 = X[:, :, 0], Y[:, :, 0]
    c0 = c0_eval(E, X2, Y2)[:, :, None]
    phi = np.asarray(phase.value(X2, Y2, tau))[:, :, None]
    d1 = -np.asarray(phase.dtau(X2, Y2, tau))[:, :, None] * np.ones_like(Z)
    w = Z + phi
    u0x, u0y = c0 * np.sin(w), c0 * np.cos(w)
    omega = _spectral_derivative(u0y, 0) - _spectral_derivative(u0x, 1)
    u1z = omega + d1
    ux, uy, uz = u0x, u0y, eps * u1z

    def d(f, ax):
        return _spectral_derivative(f, ax)

    # rot = rot_z + eps rot_xieta, with rot_z acting through d/dz only
    rx = -d(uy, 2) + eps * d(uz, 1)
    ry = d(ux, 2) - eps * d(uz, 0)
    rz = eps * (d(uy, 0) - d(ux, 1))
    defect = np.sqrt((ux - rx) ** 2 + (uy - ry) ** 2 + (uz - rz) ** 2)
    return defect, eps * np.abs(d1)
