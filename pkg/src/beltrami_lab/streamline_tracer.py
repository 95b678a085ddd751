"""Large-scale streamlines, gradient lines of C0 and their stability.

In slow variables the streamline system reads

    xi'  = C0 sin w,   eta' = C0 cos w,
    w'   = dC0/dxi cos w - dC0/deta sin w,        w = z + phi(xi, eta, tau).

The right-hand side of the ``w`` equation is ``|grad C0| sin(wbar - w)``
with ``wbar = atan2(dC0/dxi, dC0/deta)``, so ``w = wbar`` is the attracting
branch (motion up the gradient) and ``wbar + pi`` the repelling one.
"""

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import IntegrationError, InvalidParameterError, NearCriticalPointError
from .odeint import dopri5, hermite_interp
from .slow_fields import c0_all, c0_eval, c0_grad, poly_eval, poly_grad

TWO_PI = 2 * np.pi
GRAD_FLOOR = 1e-8
STOP_RADIUS = 1e-3
MAX_STEP = 0.05

REACHED_END = "reached_tau_end"
ENTERED_BALL = "entered_critical_ball"
STEP_FAILURE = "step_failure"

ASCEND, DESCEND = "ascend", "descend"


def wrap_angle(a):
    """Reduce to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), TWO_PI)


def torus_distance(p, q):
    d = wrap_angle(np.asarray(p, dtype=float) - np.asarray(q, dtype=float))
    return float(np.hypot(d[0], d[1]))


@dataclass
class Trajectory:
    """Accepted steps of a trace; ``z`` is NaN for planar gradient lines."""

    tau: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    z: np.ndarray
    dxi: np.ndarray
    deta: np.ndarray
    termination: str
    endpoint: Optional[tuple] = None
    n_rejected: int = 0
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.tau)

    @property
    def final(self):
        return float(self.xi[-1]), float(self.eta[-1])

    def at(self, tq):
        """Hermite-interpolated ``(xi, eta)`` at times ``tq``."""
        y = np.column_stack([self.xi, self.eta])
        dy = np.column_stack([self.dxi, self.deta])
        out = hermite_interp(self.tau, y, dy, tq)
        return out[:, 0], out[:, 1]

    def to_csv(self, fh=None):
        own = fh is None
        fh = fh or io.StringIO()
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "xi", "eta", "z"])
        for row in zip(self.tau, self.xi, self.eta, self.z):
            w.writerow([repr(float(v)) for v in row])
        tail = f"# termination={self.termination}"
        if self.endpoint is not None:
            tail += f" endpoint={float(self.endpoint[0])!r},{float(self.endpoint[1])!r}"
        fh.write(tail + "\n")
        return fh.getvalue() if own else None


@dataclass
class StabilityReport:
    times: np.ndarray
    w_tilde: np.ndarray
    fitted_rate: float
    predicted_rate: float
    predicted_rate_curve: np.ndarray
    min_grad: float
    max_grad: float
    bound_ok: bool
    method: str

    @property
    def rate_error(self):
        return abs(self.fitted_rate - self.predicted_rate) / abs(self.predicted_rate)


# phase callbacks -----------------------------------------------------------
def zero_phase(xi, eta, tau):
    return 0.0, 0.0, (0.0, 0.0)


def static_phase(p):
    """Time-independent phase given by a trigonometric polynomial."""

    def cb(xi, eta, tau):
        gx, gy = poly_grad(p, xi, eta)
        return float(poly_eval(p, xi, eta)), 0.0, (float(gx), float(gy))

    return cb


def _check_phase_callback(phi, xi, eta, tau, h=1e-6, tol=1e-5):
    v, _, (gx, gy) = phi(xi, eta, tau)
    fx = (phi(xi + h, eta, tau)[0] - phi(xi - h, eta, tau)[0]) / (2 * h)
    fy = (phi(xi, eta + h, tau)[0] - phi(xi, eta - h, tau)[0]) / (2 * h)
    scale = 1.0 + abs(gx) + abs(gy)
    if abs(fx - gx) > tol * scale or abs(fy - gy) > tol * scale:
        raise InvalidParameterError("phase callback gradient disagrees with its values")
    if not np.isfinite(v):
        raise InvalidParameterError("phase callback returned a non-finite value")


# core vector fields --------------------------------------------------------
def quasi_stationary_angle(E, xi, eta, grad_floor=GRAD_FLOOR):
    """Angle ``wbar`` with ``sin wbar, cos wbar`` along ``grad C0 / |grad C0|``."""
    gx, gy = c0_grad(E, xi, eta)
    if np.hypot(gx, gy) <= grad_floor:
        raise NearCriticalPointError(f"|grad C0| below {grad_floor:g} at ({xi:.6g}, {eta:.6g})")
    return float(np.arctan2(gx, gy))


def streamline_rhs(E, tau, y):
    """Right-hand side for the state ``(xi, eta, w)``."""
    xi, eta, w = y
    c, gx, gy, *_ = c0_all(E, xi, eta)
    s, co = np.sin(w), np.cos(w)
    return np.array([c * s, c * co, gx * co - gy * s])


def _streamline_z_rhs(E, phi, tau, y):
    """The same system written for ``z`` before the phase terms cancel."""
    xi, eta, z = y
    v, dtau, (px, py) = phi(xi, eta, tau)
    c, gx, gy, *_ = c0_all(E, xi, eta)
    w = z + v
    s, co = np.sin(w), np.cos(w)
    dz = (gx - c * py) * co - (gy + c * px) * s - dtau
    return np.array([c * s, c * co, dz])


def newton_offset(E, xi, eta):
    """``H^-1 grad C0``: the local estimate of the displacement to a critical point."""
    _, gx, gy, a, b, c = c0_all(E, xi, eta)
    det = a * c - b * b
    if det == 0:
        return np.array([np.inf, np.inf])
    return np.array([(c * gx - b * gy) / det, (a * gy - b * gx) / det])


def _near_critical(E, xi, eta, stop_radius, exclude, grad_floor):
    """Return the estimated critical point if within ``stop_radius``, else None."""
    d = newton_offset(E, xi, eta)
    dist = float(np.hypot(*d))
    gnorm = float(np.hypot(*c0_grad(E, xi, eta)))
    if dist >= stop_radius and gnorm > grad_floor:
        return None
    if not np.isfinite(dist):
        target = (xi, eta)
    else:
        target = (xi - d[0], eta - d[1])
    for p in exclude:
        if torus_distance(target, p) < 2 * stop_radius:
            return None
    return float(np.mod(target[0], TWO_PI)), float(np.mod(target[1], TWO_PI))


def integrate_streamline(E, phi: Callable, start, tau_end, tol=1e-8, mode="full",
                         form="w", stop_radius=STOP_RADIUS, max_step=MAX_STEP,
                         grad_floor=GRAD_FLOOR, atol=None):
    """Integrate a large-scale streamline from ``start = (xi, eta, z)``.

    ``mode="full"`` integrates the three-dimensional system (for ``w`` by
    default, or for ``z`` directly with ``form="z"``). ``mode="quasi_stationary"``
    holds ``w`` on the attracting branch ``wbar`` so that the plane motion
    follows the gradient lines and ``z = wbar - phi`` is read off; it stops
    on entering ``stop_radius`` of a critical point.
    """
    if not tol > 0:
        raise InvalidParameterError("tol must be positive")
    atol = tol * 1e-2 if atol is None else atol
    xi0, eta0, z0 = map(float, start)
    _check_phase_callback(phi, xi0, eta0, 0.0)

    if mode == "quasi_stationary":
        quasi_stationary_angle(E, xi0, eta0, grad_floor)

        def f(t, y):
            c, gx, gy, *_ = c0_all(E, y[0], y[1])
            wb = np.arctan2(gx, gy)
            return np.array([c * np.sin(wb), c * np.cos(wb)])

        def stop(t, y):
            return _near_critical(E, y[0], y[1], stop_radius, (), grad_floor) is not None

        res = dopri5(f, 0.0, [xi0, eta0], tau_end, rtol=tol, atol=atol,
                     max_step=max_step, stop=stop)
        xi, eta = res.y[:, 0], res.y[:, 1]
        wb = np.array([quasi_stationary_angle(E, a, b, 0.0) if np.hypot(*c0_grad(E, a, b)) > 0
                       else np.nan for a, b in zip(xi, eta)])
        wb = np.unwrap(wb)
        phis = np.array([phi(a, b, t)[0] for a, b, t in zip(xi, eta, res.t)])
        gx, gy = c0_grad(E, xi, eta)
        eq9 = gx * np.cos(wb) - gy * np.sin(wb)
        extra = {"w": wb, "eq9_residual": float(np.max(np.abs(eq9))),
                 "w_drift": float(np.max(np.abs(wb - wb[0])))}
        z = wb - phis
        dxi, deta = res.dy[:, 0], res.dy[:, 1]
    elif mode == "full":
        if form == "w":
            w0 = z0 + phi(xi0, eta0, 0.0)[0]
            res = dopri5(lambda t, y: streamline_rhs(E, t, y), 0.0, [xi0, eta0, w0], tau_end,
                         rtol=tol, atol=atol, max_step=max_step)
            xi, eta, w = res.y.T
            phis = np.array([phi(a, b, t)[0] for a, b, t in zip(xi, eta, res.t)])
            z = w - phis
        elif form == "z":
            res = dopri5(lambda t, y: _streamline_z_rhs(E, phi, t, y), 0.0, [xi0, eta0, z0],
                         tau_end, rtol=tol, atol=atol, max_step=max_step)
            xi, eta, z = res.y.T
            phis = np.array([phi(a, b, t)[0] for a, b, t in zip(xi, eta, res.t)])
            w = z + phis
        else:
            raise InvalidParameterError(f"unknown form {form!r}")
        extra = {"w": w}
        dxi, deta = res.dy[:, 0], res.dy[:, 1]
    else:
        raise InvalidParameterError(f"unknown mode {mode!r}")

    endpoint = None
    if res.status == "done":
        term = REACHED_END
    elif res.status == "stopped":
        term = ENTERED_BALL
        endpoint = _near_critical(E, xi[-1], eta[-1], stop_radius, (), grad_floor)
    else:
        term = STEP_FAILURE
    return Trajectory(res.t, xi, eta, z, dxi, deta, term, endpoint, res.n_rejected, extra)


def trace_gradient_line(E, start, direction=ASCEND, tau_max=50.0, tol=1e-9,
                        stop_radius=STOP_RADIUS, exclude=(), max_step=MAX_STEP,
                        grad_floor=GRAD_FLOOR):
    """Follow ``C0 grad C0 / |grad C0|`` (negated for descent) until a critical ball.

    ``exclude`` lists critical points whose balls do not stop the trace
    (used when seeding next to a saddle). The running integral of
    ``|grad C0|`` is carried along in ``extra["grad_integral"]``.
    """
    if direction not in (ASCEND, DESCEND):
        raise InvalidParameterError(f"direction must be {ASCEND!r} or {DESCEND!r}")
    sign = 1.0 if direction == ASCEND else -1.0
    xi0, eta0 = map(float, start)
    if _near_critical(E, xi0, eta0, stop_radius, exclude, grad_floor) is not None:
        raise NearCriticalPointError(f"start ({xi0:.6g}, {eta0:.6g}) lies in a critical ball")

    def f(t, y):
        c, gx, gy, *_ = c0_all(E, y[0], y[1])
        g = np.hypot(gx, gy)
        if g == 0:
            return np.array([0.0, 0.0, 0.0])
        return np.array([sign * c * gx / g, sign * c * gy / g, g])

    def stop(t, y):
        return _near_critical(E, y[0], y[1], stop_radius, exclude, grad_floor) is not None

    res = dopri5(f, 0.0, [xi0, eta0, 0.0], tau_max, rtol=tol, atol=tol * 1e-2,
                 max_step=max_step, stop=stop)
    xi, eta, integral = res.y.T
    endpoint = None
    if res.status == "stopped":
        term = ENTERED_BALL
        endpoint = _near_critical(E, xi[-1], eta[-1], stop_radius, exclude, grad_floor)
    elif res.status == "done":
        term = REACHED_END
    else:
        term = STEP_FAILURE
    z = np.full_like(xi, np.nan)
    return Trajectory(res.t, xi, eta, z, res.dy[:, 0], res.dy[:, 1], term, endpoint,
                      res.n_rejected, {"grad_integral": integral, "direction": direction})


# stability ------------------------------------------------------------------
def eq10_residual(E, traj):
    """Max of ``|grad C0| sin(wbar - w)`` with ``w`` the actual heading of the path."""
    w = np.arctan2(traj.dxi, traj.deta)
    gx, gy = c0_grad(E, traj.xi, traj.eta)
    return float(np.max(np.abs(gx * np.cos(w) - gy * np.sin(w))))


def linearized_rhs(E, xi, eta, y, projected=False):
    """Linearization of the streamline system about the attracting branch.

    State ``(xi~, eta~, w~)``. With ``projected=True`` the Hessian coupling
    into ``w~`` is dropped, which is the reduced system obtained for
    perturbations orthogonal to the gradient.
    """
    c, gx, gy, hxx, hxy, hyy = c0_all(E, xi, eta)
    wb = np.arctan2(gx, gy)
    s, co = np.sin(wb), np.cos(wb)
    xt, et, wt = y
    lin = gx * xt + gy * et
    dxt = lin * s + c * co * wt
    det = lin * co - c * s * wt
    dwt = -(gx * s + gy * co) * wt
    if not projected:
        dwt += (hxx * co - hxy * s) * xt + (hxy * co - hyy * s) * et
    return np.array([dxt, det, dwt])


def _ls_slope(t, y):
    t = np.asarray(t)
    A = np.column_stack([t, np.ones_like(t)])
    return float(np.linalg.lstsq(A, y, rcond=None)[0][0])


def stability_probe(E, base, w0, method="scalar", tol=1e-10, qs_tol=1e-6):
    """Decay of a heading perturbation ``w~`` along a quasi-stationary path.

    ``method``:
      ``"scalar"``     dw~/dtau = -|grad C0| w~ on the base path;
      ``"linearized"`` the full 3x3 linearization (``"projected"`` drops the
                       Hessian coupling);
      ``"nonlinear"``  the streamline system started at ``wbar + w0``, with
                       ``w~ = w - wbar(xi, eta)`` measured on the perturbed path.
    """
    if not 0 < abs(w0) <= 0.1:
        raise InvalidParameterError("w0 must be nonzero and at most 0.1 in magnitude")
    if eq10_residual(E, base) > qs_tol:
        raise InvalidParameterError("base trajectory is not quasi-stationary")
    t0, t1 = float(base.tau[0]), float(base.tau[-1])

    def base_at(t):
        x, y = base.at(t)
        return float(x[0]), float(y[0])

    if method == "scalar":
        def f(t, y):
            gx, gy = c0_grad(E, *base_at(t))
            return -np.hypot(gx, gy) * y
        res = dopri5(f, t0, [w0], t1, rtol=tol, atol=tol * abs(w0) * 1e-3, max_step=MAX_STEP)
        times, wt = res.t, np.abs(res.y[:, 0])
        pts = [base_at(t) for t in times]
    elif method in ("linearized", "projected"):
        proj = method == "projected"
        res = dopri5(lambda t, y: linearized_rhs(E, *base_at(t), y, proj), t0,
                     [0.0, 0.0, w0], t1, rtol=tol, atol=tol * abs(w0) * 1e-3, max_step=MAX_STEP)
        times, wt = res.t, np.abs(res.y[:, 2])
        pts = [base_at(t) for t in times]
    elif method == "nonlinear":
        xi0, eta0 = float(base.xi[0]), float(base.eta[0])
        wb0 = quasi_stationary_angle(E, xi0, eta0)
        res = dopri5(lambda t, y: streamline_rhs(E, t, y), t0, [xi0, eta0, wb0 + w0], t1,
                     rtol=tol, atol=tol * abs(w0) * 1e-3, max_step=MAX_STEP)
        times = res.t
        pts = list(zip(res.y[:, 0], res.y[:, 1]))
        wbar = np.array([quasi_stationary_angle(E, a, b, 0.0) for a, b in pts])
        wt = np.abs(wrap_angle(res.y[:, 2] - wbar))
    else:
        raise InvalidParameterError(f"unknown method {method!r}")
    if res.status != "done":
        raise IntegrationError(f"stability integration failed: {res.message}")

    grads = np.array([np.hypot(*c0_grad(E, a, b)) for a, b in pts])
    # cumulative trapezoid of |grad C0| gives the predicted log-decay on the same samples
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (grads[1:] + grads[:-1]) * np.diff(times))])
    fitted = -_ls_slope(times, np.log(wt))
    predicted = _ls_slope(times, cum)
    m = float(np.min(grads))
    bound = abs(w0) * np.exp(-m * (times - t0))
    ok = bool(np.all(wt <= bound * (1 + 1e-9) + 1e-15))
    return StabilityReport(times, wt, fitted, predicted, grads, m, float(np.max(grads)), ok, method)


def growth_law_error(E, traj):
    """Max relative mismatch between ``C0`` along a gradient line and ``C0(0) exp(int |grad C0|)``."""
    integral = traj.extra["grad_integral"]
    c = c0_eval(E, traj.xi, traj.eta)
    sign = 1.0 if traj.extra.get("direction", ASCEND) == ASCEND else -1.0
    predicted = c[0] * np.exp(sign * integral)
    return float(np.max(np.abs(c - predicted) / c))
