"""Small ODE and quadrature toolkit.

``dopri5`` is an embedded Dormand-Prince 5(4) pair with a PI step-size
controller. It records every accepted step together with the right-hand
side there, so callers can Hermite-interpolate between samples and stop
on arbitrary conditions. ``rk4_fixed`` is a classical fixed-step scheme
kept deliberately separate for use as a brute-force oracle.
"""

from dataclasses import dataclass

import numpy as np

from .errors import IntegrationError

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

_SAFETY = 0.9
_FAC_MIN = 0.2
_FAC_MAX = 5.0
_ALPHA = 0.7 / 5
_BETA = 0.4 / 5


@dataclass
class OdeResult:
    t: np.ndarray
    y: np.ndarray
    dy: np.ndarray
    status: str  # "done", "stopped" or "step_failure"
    message: str = ""
    n_rejected: int = 0

    def interpolate(self, tq):
        return hermite_interp(self.t, self.y, self.dy, tq)


def _initial_step(f, t0, y0, f0, rtol, atol, direction):
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + direction * h0 * f0
    f1 = np.asarray(f(t0 + direction * h0, y1), dtype=float)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def dopri5(f, t0, y0, t_end, rtol=1e-8, atol=1e-10, h0=None,
           max_step=np.inf, min_step=1e-14, stop=None, max_steps=200000):
    """Integrate ``y' = f(t, y)`` from ``t0`` to ``t_end``.

    Parameters
    ----------
    stop : callable, optional
        ``stop(t, y) -> bool`` evaluated after every accepted step; a true
        value ends the integration with status ``"stopped"``.

    Returns
    -------
    OdeResult
        Accepted steps (including the initial point) and the derivative at
        each of them.
    """
    y = np.array(y0, dtype=float)
    t = float(t0)
    direction = 1.0 if t_end >= t0 else -1.0
    span = abs(t_end - t0)
    fy = np.asarray(f(t, y), dtype=float)
    if not np.all(np.isfinite(fy)):
        raise IntegrationError(f"non-finite derivative at t={t}")

    ts, ys, dys = [t], [y.copy()], [fy.copy()]
    if span == 0.0:
        return OdeResult(np.array(ts), np.array(ys), np.array(dys), "done")

    h = h0 if h0 is not None else _initial_step(f, t, y, fy, rtol, atol, direction)
    h = min(abs(h), max_step, span)
    err_prev = 1e-4
    rejected_last = False
    n_rejected = 0
    k = np.empty((7,) + y.shape)

    for _ in range(max_steps):
        remaining = abs(t_end - t)
        if remaining <= 1e-14 * max(1.0, abs(t_end)):
            return OdeResult(np.array(ts), np.array(ys), np.array(dys), "done",
                             n_rejected=n_rejected)
        h = min(h, remaining, max_step)
        if h < min_step and h < remaining:
            return OdeResult(np.array(ts), np.array(ys), np.array(dys), "step_failure",
                             f"step size underflow at t={t:.6g}", n_rejected)
        hs = direction * h
        k[0] = fy
        for i in range(1, 7):
            yi = y + hs * np.tensordot(_A[i], k[:i], axes=1)
            k[i] = f(t + _C[i] * hs, yi)
        y_new = y + hs * np.tensordot(_B, k, axes=1)
        err_vec = hs * np.tensordot(_E, k, axes=1)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = np.sqrt(np.mean((err_vec / scale) ** 2))

        if not np.isfinite(err):
            h *= _FAC_MIN
            rejected_last = True
            n_rejected += 1
            continue

        if err <= 1.0:
            t = t + hs if h < remaining else float(t_end)
            y = y_new
            fy = k[6].copy()
            ts.append(t)
            ys.append(y.copy())
            dys.append(fy.copy())
            err = max(err, 1e-10)
            fac = _SAFETY * err ** -_ALPHA * err_prev ** _BETA
            fac = min(_FAC_MAX, max(_FAC_MIN, fac))
            if rejected_last:
                fac = min(fac, 1.0)
            h *= fac
            err_prev = err
            rejected_last = False
            if stop is not None and stop(t, y):
                return OdeResult(np.array(ts), np.array(ys), np.array(dys), "stopped",
                                 n_rejected=n_rejected)
        else:
            h *= max(_FAC_MIN, _SAFETY * err ** (-1 / 5))
            rejected_last = True
            n_rejected += 1

    return OdeResult(np.array(ts), np.array(ys), np.array(dys), "step_failure",
                     "maximum number of steps exceeded", n_rejected)


def rk4_fixed(f, t0, y0, t_end, h):
    """Classical RK4 with a fixed step (last step shortened to hit t_end)."""
    n = max(1, int(np.ceil(abs(t_end - t0) / h - 1e-12)))
    hs = (t_end - t0) / n
    t = float(t0)
    y = np.array(y0, dtype=float)
    ts, ys = [t], [y.copy()]
    for _ in range(n):
        k1 = np.asarray(f(t, y))
        k2 = np.asarray(f(t + hs / 2, y + hs / 2 * k1))
        k3 = np.asarray(f(t + hs / 2, y + hs / 2 * k2))
        k4 = np.asarray(f(t + hs, y + hs * k3))
        y = y + hs / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += hs
        ts.append(t)
        ys.append(y.copy())
    return np.array(ts), np.array(ys)


def hermite_interp(t, y, dy, tq):
    """Cubic Hermite interpolation of samples ``y`` with slopes ``dy``."""
    t = np.asarray(t)
    tq = np.atleast_1d(np.asarray(tq, dtype=float))
    ascending = t[-1] >= t[0]
    ts = t if ascending else -t
    tqs = tq if ascending else -tq
    idx = np.clip(np.searchsorted(ts, tqs, side="right") - 1, 0, len(t) - 2)
    t0, t1 = t[idx], t[idx + 1]
    h = t1 - t0
    s = ((tq - t0) / h)[:, None]
    h = h[:, None]
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    return h00 * y[idx] + h10 * h * dy[idx] + h01 * y[idx + 1] + h11 * h * dy[idx + 1]


def adaptive_simpson(f, a, b, tol=1e-10, max_depth=50):
    """Adaptive Simpson quadrature of a scalar function on [a, b]."""
    if a == b:
        return 0.0

    def _val(x):
        v = float(f(x))
        if not np.isfinite(v):
            raise IntegrationError(f"non-finite integrand at {x}")
        return v

    fa, fb = _val(a), _val(b)
    m = 0.5 * (a + b)
    fm = _val(m)
    whole = (b - a) / 6 * (fa + 4 * fm + fb)
    # explicit stack keeps deep refinement away from the recursion limit
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    total = 0.0
    while stack:
        a_, b_, fa_, fm_, fb_, whole_, tol_, depth = stack.pop()
        m_ = 0.5 * (a_ + b_)
        lm, rm = 0.5 * (a_ + m_), 0.5 * (m_ + b_)
        flm, frm = _val(lm), _val(rm)
        left = (m_ - a_) / 6 * (fa_ + 4 * flm + fm_)
        right = (b_ - m_) / 6 * (fm_ + 4 * frm + fb_)
        delta = left + right - whole_
        if depth >= max_depth or abs(delta) <= 15 * tol_:
            total += left + right + delta / 15
        else:
            stack.append((a_, m_, fa_, flm, fm_, left, tol_ / 2, depth + 1))
            stack.append((m_, b_, fm_, frm, fb_, right, tol_ / 2, depth + 1))
    return total
