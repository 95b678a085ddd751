"""Phase evolution between the dual modes, first correction and late-time decay.

The phase obeys the backward-parabolic (elliptic-in-time) Cauchy problem

    phi_tt = -(C0^2 / 2) Lap phi - C0 grad C0 . grad phi  =  -(1/2) div(C0^2 grad phi),

which amplifies a Fourier mode of wavenumber k at the rate C0 |k| / sqrt(2)
when C0 is constant. It is solved on a hard Fourier cutoff |m|, |n| <= M.
Products with the coefficients are formed on a padded FFT grid large
enough that the retained coefficients are exact; time stepping is the
symmetric velocity-Verlet scheme.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import InvalidParameterError, NearCriticalPointError, PhaseBlowupError
from .slow_fields import TrigPoly2D, c0_all, c0_eval, poly_eval

BLOWUP_LIMIT = 1e150
COS_FLOOR = 0.1
EPS0 = 0.1


# coefficient arrays <-> grids ----------------------------------------------
def _index(M, N):
    return np.arange(-M, M + 1) % N


def poly_to_array(p, M):
    """Dense ``(2M+1, 2M+1)`` coefficient array, entry ``[m+M, n+M]``."""
    if p.max_degree > M:
        raise InvalidParameterError(f"polynomial degree {p.max_degree} exceeds cutoff {M}")
    arr = np.zeros((2 * M + 1, 2 * M + 1), dtype=complex)
    for (m, n), c in p.terms.items():
        arr[m + M, n + M] = c
    return arr


def array_to_poly(arr, tol=0.0):
    M = (arr.shape[0] - 1) // 2
    terms = {}
    for i, j in zip(*np.nonzero(np.abs(arr) > tol)):
        terms[(int(i) - M, int(j) - M)] = arr[i, j]
    # remove round-off asymmetry before validation
    sym = {}
    for (m, n), c in terms.items():
        sym[(m, n)] = 0.5 * (c + np.conj(terms.get((-m, -n), 0.0)))
    return TrigPoly2D(sym)


def array_to_grid(arr, N):
    M = (arr.shape[0] - 1) // 2
    emb = np.zeros((N, N), dtype=complex)
    idx = _index(M, N)
    emb[np.ix_(idx, idx)] = arr
    return N * N * np.fft.ifft2(emb)


def grid_to_array(g, M):
    N = g.shape[0]
    C = np.fft.fft2(g) / (N * N)
    idx = _index(M, N)
    return C[np.ix_(idx, idx)]


def _wavenumbers(M):
    k = np.arange(-M, M + 1, dtype=float)
    return np.meshgrid(k, k, indexing="ij")


def poly_mul(p, q):
    """Exact product of two trigonometric polynomials by direct convolution."""
    out = {}
    for (m1, n1), a in p.terms.items():
        for (m2, n2), b in q.terms.items():
            k = (m1 + m2, n1 + n2)
            out[k] = out.get(k, 0) + a * b
    return TrigPoly2D({k: v for k, v in out.items() if abs(v) > 0})


def c0_squared_poly(E):
    P = E.gamma0 + TrigPoly2D.constant(E.base)
    return poly_mul(P, P) + poly_mul(E.gamma1, E.gamma1)


# state ----------------------------------------------------------------------
@dataclass(frozen=True)
class PhaseState:
    tau: float
    phi_hat: np.ndarray
    dphi_hat: np.ndarray
    cutoff: int

    def coeff(self, m, n):
        M = self.cutoff
        return complex(self.phi_hat[m + M, n + M])

    def _eval(self, arr, xi, eta, dm=0, dn=0):
        M = self.cutoff
        km, kn = _wavenumbers(M)
        xi = np.asarray(xi, dtype=float)
        eta = np.asarray(eta, dtype=float)
        w = (arr * (1j * km) ** dm * (1j * kn) ** dn).ravel()
        ph = np.exp(1j * (np.multiply.outer(xi, km.ravel()) + np.multiply.outer(eta, kn.ravel())))
        return ph @ w

    def value(self, xi, eta):
        return self._eval(self.phi_hat, xi, eta).real

    def dtau(self, xi, eta):
        return self._eval(self.dphi_hat, xi, eta).real

    def grad(self, xi, eta):
        return (self._eval(self.phi_hat, xi, eta, 1, 0).real,
                self._eval(self.phi_hat, xi, eta, 0, 1).real)

    def on_grid(self, n, which="phi"):
        arr = self.phi_hat if which == "phi" else self.dphi_hat
        return array_to_grid(arr, n)

    def max_imag(self, n=32):
        return float(max(np.max(np.abs(self.on_grid(n).imag)),
                         np.max(np.abs(self.on_grid(n, "dphi").imag))))

    def to_csv(self):
        fh = io.StringIO()
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m", "n", "re_phi", "im_phi", "re_dphi", "im_dphi"])
        M = self.cutoff
        for i in range(2 * M + 1):
            for j in range(2 * M + 1):
                a, b = self.phi_hat[i, j], self.dphi_hat[i, j]
                if a != 0 or b != 0:
                    w.writerow([i - M, j - M, repr(float(a.real)), repr(float(a.imag)),
                               repr(float(b.real)), repr(float(b.imag))])
        return fh.getvalue()


def zero_state(M, tau=0.0):
    z = np.zeros((2 * M + 1, 2 * M + 1), dtype=complex)
    return PhaseState(tau, z, z.copy(), M)


# operator -------------------------------------------------------------------
class GalerkinPhaseOperator:
    """``L phi = -(C0^2/2) Lap phi - C0 grad C0 . grad phi`` restricted to the cutoff.

    ``apply`` works pseudo-spectrally on a padded grid; ``matrix`` assembles
    the same Galerkin operator from the exact coefficients of ``C0^2`` and is
    kept as an independent route.
    """

    def __init__(self, E, M):
        self.E, self.M = E, int(M)
        D = max(E.gamma0.max_degree, E.gamma1.max_degree)
        N = 2 * self.M + 4 * D + 2
        self.N = N + (N % 2)
        x = 2 * np.pi * np.arange(self.N) / self.N
        X, Y = np.meshgrid(x, x, indexing="ij")
        c, gx, gy, *_ = c0_all(E, X, Y)
        self._s = c * c
        self._fx, self._fy = c * gx, c * gy
        self.km, self.kn = _wavenumbers(self.M)
        self.max_rate = float(np.max(c)) * self.M

    def apply(self, arr):
        N = self.N
        lap = array_to_grid(-(self.km ** 2 + self.kn ** 2) * arr, N)
        px = array_to_grid(1j * self.km * arr, N)
        py = array_to_grid(1j * self.kn * arr, N)
        out = -0.5 * self._s * lap - (self._fx * px + self._fy * py)
        return grid_to_array(out, self.M)

    def matrix(self):
        s = c0_squared_poly(self.E)
        M = self.M
        km, kn = self.km.ravel(), self.kn.ravel()
        n = km.size
        L = np.zeros((n, n), dtype=complex)
        for (dm, dn), c in s.terms.items():
            # row k, column k' with k - k' = (dm, dn)
            for j in range(n):
                m, nn = km[j] + dm, kn[j] + dn
                if abs(m) <= M and abs(nn) <= M:
                    i = int((m + M) * (2 * M + 1) + (nn + M))
                    L[i, j] += 0.5 * (km[i] * km[j] + kn[i] * kn[j]) * c
        return L

    def propagate(self, phi_hat, dphi_hat, tau):
        """Exact solution of the truncated linear system by the matrix exponential."""
        L = self.matrix()
        n = L.shape[0]
        G = np.zeros((2 * n, 2 * n), dtype=complex)
        G[:n, n:] = np.eye(n)
        G[n:, :n] = L
        y = expm(G * tau) @ np.concatenate([phi_hat.ravel(), dphi_hat.ravel()])
        shape = phi_hat.shape
        return y[:n].reshape(shape), y[n:].reshape(shape)


def default_cutoff(E, phi_init, dphi_init=None):
    data = max(phi_init.max_degree, dphi_init.max_degree if dphi_init else 0)
    c0_degree = max(E.gamma0.max_degree, E.gamma1.max_degree)
    return max(1, 2 * (data + c0_degree))


def initial_phase(E, M, n=None):
    """``atan2(gamma1, A b0 + gamma0)`` projected onto the cutoff."""
    n = n or max(64, 4 * M + 4)
    x = 2 * np.pi * np.arange(n) / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    phi = np.arctan2(poly_eval(E.gamma1, X, Y), E.base + poly_eval(E.gamma0, X, Y))
    return array_to_poly(grid_to_array(phi.astype(complex), M), tol=1e-15)


def phase_run(E, phi_init, dphi_init=None, tau_end=1.0, cutoff=None, dt=None,
              snapshot_every=None):
    """Velocity-Verlet integration; returns the list of stored states (first one at tau=0).

    ``snapshot_every`` is a step count; by default only the final state is
    stored after the initial one.
    """
    dphi_init = dphi_init or TrigPoly2D()
    M = cutoff if cutoff is not None else default_cutoff(E, phi_init, dphi_init)
    if M < max(phi_init.max_degree, dphi_init.max_degree):
        raise InvalidParameterError("cutoff is below the degree of the initial data")
    op = GalerkinPhaseOperator(E, M)
    if dt is None:
        dt = 0.05 / max(op.max_rate, 1e-12)
    if dt * op.max_rate >= 0.1:
        raise InvalidParameterError(
            f"dt={dt:g} does not resolve the fastest retained rate {op.max_rate:g} "
            f"(need dt < {0.1 / op.max_rate:g})")
    n_steps = max(1, int(np.ceil(tau_end / dt - 1e-9)))
    h = tau_end / n_steps
    phi = poly_to_array(phi_init, M)
    v = poly_to_array(dphi_init, M)
    states = [PhaseState(0.0, phi.copy(), v.copy(), M)]
    acc = op.apply(phi)
    for k in range(1, n_steps + 1):
        v_half = v + 0.5 * h * acc
        phi = phi + h * v_half
        acc = op.apply(phi)
        v = v_half + 0.5 * h * acc
        top = max(np.max(np.abs(phi)), np.max(np.abs(v)))
        if not np.isfinite(top) or top > BLOWUP_LIMIT:
            raise PhaseBlowupError(f"phase coefficients overflowed at tau={k * h:.6g}", k * h)
        if (snapshot_every and k % snapshot_every == 0) or k == n_steps:
            states.append(PhaseState(k * h, phi.copy(), v.copy(), M))
    return states


def phase_cauchy_solve(E, phi_init, dphi_init=None, tau_end=1.0, cutoff=None, dt=None):
    return phase_run(E, phi_init, dphi_init, tau_end, cutoff, dt)[-1]


def cutoff_sensitivity(E, phi_init, dphi_init=None, tau_end=1.0, cutoff=None, n=32):
    """Relative sup-norm change of phi(tau_end) when the cutoff doubles."""
    M = cutoff or default_cutoff(E, phi_init, dphi_init)
    a = phase_cauchy_solve(E, phi_init, dphi_init, tau_end, M).on_grid(n).real
    b = phase_cauchy_solve(E, phi_init, dphi_init, tau_end, 2 * M).on_grid(n).real
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def upward_velocity(state, xi, eta):
    """``delta1 = -dphi/dtau``."""
    return -state.dtau(xi, eta)


def mode_rate(c, m, n):
    """Growth rate ``c sqrt((m^2 + n^2) / 2)`` of a single mode under constant C0 = c."""
    return c * np.sqrt((m * m + n * n) / 2.0)


@dataclass(frozen=True)
class ModePhase:
    """Closed-form single-mode phase for constant ``C0 = c`` with zero initial rate.

    ``phi = Re[alpha exp(i(m (xi - xi0) + n (eta - eta0)))] cosh(rate tau)``.
    """

    c: float
    m: int
    n: int
    alpha: complex = 1.0
    center: tuple = (0.0, 0.0)

    @property
    def rate(self):
        return mode_rate(self.c, self.m, self.n)

    def _wave(self, xi, eta):
        arg = self.m * (np.asarray(xi) - self.center[0]) + self.n * (np.asarray(eta) - self.center[1])
        return self.alpha * np.exp(1j * arg)

    def value(self, xi, eta, tau):
        return (self._wave(xi, eta)).real * np.cosh(self.rate * tau)

    def dtau(self, xi, eta, tau):
        return (self._wave(xi, eta)).real * self.rate * np.sinh(self.rate * tau)

    def grad(self, xi, eta, tau):
        w = self._wave(xi, eta) * 1j
        ch = np.cosh(self.rate * tau)
        return (self.m * w).real * ch, (self.n * w).real * ch

    def hessian(self, xi, eta, tau):
        w = -self._wave(xi, eta)
        ch = np.cosh(self.rate * tau)
        m, n = self.m, self.n
        return (m * m * w).real * ch, (m * n * w).real * ch, (n * n * w).real * ch

    def dtau_grad(self, xi, eta, tau):
        w = self._wave(xi, eta) * 1j
        sh = self.rate * np.sinh(self.rate * tau)
        return (self.m * w).real * sh, (self.n * w).real * sh

    def callback(self):
        def cb(xi, eta, tau):
            return (float(self.value(xi, eta, tau)), float(self.dtau(xi, eta, tau)),
                    tuple(float(g) for g in self.grad(xi, eta, tau)))
        return cb


# first correction -----------------------------------------------------------
@dataclass
class CorrectionField:
    tau: float
    C_tilde: np.ndarray
    phi_offset: TrigPoly2D
    B0: np.ndarray
    delta2: np.ndarray
    M_bound: float
    max_abs_history: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tau_history: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def bound_holds(self):
        return bool(np.all(self.max_abs_history <= self.M_bound * self.tau_history * (1 + 1e-12)
                           + 1e-15))


def _grid(n):
    x = 2 * np.pi * np.arange(n) / n
    return np.meshgrid(x, x, indexing="ij")


def first_correction(E, history, phi_offset=None, tau=None, n=32, cos_floor=COS_FLOOR, eps0=EPS0):
    """``C~ = (1/cos phi~0) int_0^tau [A cos phi - C0] ds`` on an ``n x n`` grid.

    The integral is a cumulative trapezoid over the stored history (which
    must start at tau = 0); ``B0`` is zero. ``delta2`` is the value that
    makes ``C~ (cos phi~, sin phi~)`` an exact solution of the first-order
    amplitude equations forced by the rotating leading-order modulations
    ``-(C0 cos phi - A, C0 sin phi)``.
    """
    phi_offset = phi_offset or TrigPoly2D()
    if not history or history[0].tau != 0.0:
        raise InvalidParameterError("history must start at tau = 0")
    X, Y = _grid(n)
    off = poly_eval(phi_offset, X, Y)
    cos_off = np.cos(off)
    if np.min(np.abs(cos_off)) < cos_floor:
        raise NearCriticalPointError(
            f"|cos phi~0| drops to {np.min(np.abs(cos_off)):.3g}, below cos_floor={cos_floor}")
    if tau is None:
        tau = history[-1].tau
    hist = [s for s in history if s.tau <= tau + 1e-12]
    c0 = c0_eval(E, X, Y)
    A = E.base
    times = np.array([s.tau for s in hist])
    phis = [s.on_grid(n).real for s in hist]
    integrand = [A * np.cos(p) - c0 for p in phis]
    acc = np.zeros_like(c0)
    max_hist = [0.0]
    for k in range(1, len(hist)):
        acc = acc + 0.5 * (times[k] - times[k - 1]) * (integrand[k] + integrand[k - 1])
        max_hist.append(float(np.max(np.abs(acc / cos_off))))
    C = acc / cos_off
    delta2 = _delta2(c0, A, phis[-1], off)
    M_bound = (float(np.max(c0)) + A) / (float(np.min(np.abs(cos_off))) * (1 - eps0))
    return CorrectionField(float(times[-1]), C, phi_offset, np.zeros_like(C), delta2, M_bound,
                           np.array(max_hist), times)


def _delta2(c0, A, phi, off):
    f0 = A - c0 * np.cos(phi)
    f1 = -c0 * np.sin(phi)
    phi_t = phi + off
    return (f1 * np.cos(phi_t) - f0 * np.sin(phi_t)) / (c0 * np.cos(off))


def correction_by_ode(E, history, phi_offset=None, n=32, viscous=True):
    """Integrate the first-order amplitude equations for ``(gamma0^1, gamma1^1)`` directly.

    RK4 with step ``2 h`` over a history with uniform spacing ``h`` (the
    odd snapshots serve as midpoints). ``viscous=False`` is the branch in
    which the viscous term is absent: with zero data and no forcing, the
    solution stays exactly zero. ``delta2`` is taken from the closed form.
    """
    phi_offset = phi_offset or TrigPoly2D()
    X, Y = _grid(n)
    off = poly_eval(phi_offset, X, Y)
    c0 = c0_eval(E, X, Y)
    A = E.base

    def rhs(state, y):
        d1 = -state.on_grid(n, "dphi").real
        if not viscous:
            return np.stack([d1 * y[1], -d1 * y[0]])
        phi = state.on_grid(n).real
        g0, g1 = c0 * np.cos(phi) - A, c0 * np.sin(phi)
        d2 = _delta2(c0, A, phi, off)
        return np.stack([d1 * y[1] + d2 * g1 - g0, -d1 * y[0] - d2 * (A + g0) - g1])

    y = np.zeros((2,) + X.shape)
    if len(history) < 3 or len(history) % 2 == 0:
        raise InvalidParameterError("history needs an odd number (>= 3) of equally spaced states")
    for k in range(0, len(history) - 2, 2):
        s0, s1, s2 = history[k], history[k + 1], history[k + 2]
        H = s2.tau - s0.tau
        k1 = rhs(s0, y)
        k2 = rhs(s1, y + 0.5 * H * k1)
        k3 = rhs(s1, y + 0.5 * H * k2)
        k4 = rhs(s2, y + H * k3)
        y = y + H / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


@dataclass(frozen=True)
class ScalingFrame:
    R: float

    def __post_init__(self):
        if not self.R > 1:
            raise InvalidParameterError(f"Reynolds number must exceed 1, got {self.R}")

    @property
    def eps(self):
        return self.R ** -0.5

    def to_slow(self, x, y, t):
        e = self.eps
        return e * x, e * y, e * t

    def to_fast(self, xi, eta, tau):
        e = self.eps
        return xi / e, eta / e, tau / e

    def to_late(self, t):
        return t / self.R ** 2


def order_consistency_report(R, E=None, history=None, n=32):
    """Frame for ``eps = R^(-1/2)`` and the two-branch comparison of the first correction.

    Without the viscous forcing the amplitude equations started from zero
    data stay at zero, so no first-order term can be produced; with it the
    correction is nonzero and grows linearly from zero.
    """
    frame = ScalingFrame(R)
    report = {"R": frame.R, "eps": frame.eps}
    if E is None or history is None:
        return frame, report
    no_visc = correction_by_ode(E, history, n=n, viscous=False)
    with_visc = correction_by_ode(E, history, n=n, viscous=True)
    corr = first_correction(E, history, n=n)
    report.update({
        "k_gt_2_max_abs": float(np.max(np.abs(no_visc))),
        "k_eq_2_max_abs": float(np.max(np.hypot(*with_visc))),
        "quadrature_vs_ode": float(np.max(np.abs(np.hypot(*with_visc) - np.abs(corr.C_tilde)))),
        "M_bound": corr.M_bound,
        "bound_holds": corr.bound_holds(),
    })
    return frame, report


# late-time decay and the cross-term identity ---------------------------------
def late_time_decay(delta, tau1):
    """Exact solution of ``d delta / d tau1 = Lap delta`` for trigonometric data."""
    return TrigPoly2D({(m, n): c * np.exp(-(m * m + n * n) * tau1) for (m, n), c in delta.terms.items()})


def zero_mean_norm(p):
    return float(np.sqrt(sum(abs(c) ** 2 for k, c in p.terms.items() if k != (0, 0))))


def verify_rescaled_cross_term(delta, n=64):
    """Evaluate ``rot[rot u x u]`` for ``u = (0, 0, delta)`` spectrally.

    Returns the max of its z-component, ``-(d_xi(delta delta_eta) - d_eta(delta delta_xi))``,
    together with the magnitude of the individual terms for scale.
    """
    if 2 * delta.max_degree >= n // 2:
        raise InvalidParameterError("grid too coarse for the quadratic products")
    M = n // 2 - 1
    a = poly_to_array(delta, M)
    km, kn = _wavenumbers(M)
    d = array_to_grid(a, n)
    dx = array_to_grid(1j * km * a, n)
    dy = array_to_grid(1j * kn * a, n)
    px = grid_to_array(d * dy, M)  # delta * d delta / d eta
    py = grid_to_array(d * dx, M)
    term1 = array_to_grid(1j * km * px, n)
    term2 = array_to_grid(1j * kn * py, n)
    res = -(term1 - term2)
    return {"residual": float(np.max(np.abs(res))),
            "term_scale": float(max(np.max(np.abs(term1)), np.max(np.abs(term2))))}
