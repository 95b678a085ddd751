"""Doubly periodic trigonometric polynomials and the energy density built from them.

A ``TrigPoly2D`` stores a sparse map ``(m, n) -> c`` and represents the
real field ``sum c exp(i(m xi + n eta))``. The energy density

    C0(xi, eta) = sqrt((A b0 + gamma0)^2 + gamma1^2)

and its first and second derivatives are evaluated exactly by the chain
rule on the termwise derivatives of ``gamma0`` and ``gamma1``.
"""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError

HERMITIAN_TOL = 1e-12


def _is_hermitian(terms, tol=HERMITIAN_TOL):
    for (m, n), c in terms.items():
        if abs(terms.get((-m, -n), 0.0) - np.conj(c)) > tol * max(1.0, abs(c)):
            return False
    return True


def _symmetrize(terms):
    keys = set(terms) | {(-m, -n) for (m, n) in terms}
    out = {}
    for m, n in keys:
        c = 0.5 * (terms.get((m, n), 0.0) + np.conj(terms.get((-m, -n), 0.0)))
        if c != 0:
            out[(m, n)] = complex(c)
    return out


@dataclass(frozen=True)
class TrigPoly2D:
    """Real trigonometric polynomial with sparse complex coefficients."""

    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {(int(m), int(n)): complex(c) for (m, n), c in self.terms.items() if c != 0}
        if not _is_hermitian(clean):
            raise InvalidParameterError("coefficients are not Hermitian; the field would be complex")
        object.__setattr__(self, "terms", clean)
        keys = sorted(clean)
        object.__setattr__(self, "_m", np.array([k[0] for k in keys], dtype=float))
        object.__setattr__(self, "_n", np.array([k[1] for k in keys], dtype=float))
        object.__setattr__(self, "_c", np.array([clean[k] for k in keys], dtype=complex))

    # constructors -----------------------------------------------------
    @classmethod
    def from_terms(cls, terms, symmetrize=False):
        terms = {(int(m), int(n)): complex(c) for (m, n), c in terms.items()}
        if symmetrize and not _is_hermitian(terms):
            warnings.warn("non-Hermitian coefficients symmetrized", stacklevel=2)
            terms = _symmetrize(terms)
        return cls(terms)

    @classmethod
    def from_cos_sin(cls, cos=None, sin=None):
        """Build ``sum a cos(m xi + n eta) + sum b sin(m xi + n eta)``.

        ``cos`` and ``sin`` map ``(m, n)`` to real amplitudes.
        """
        terms = {}

        def add(k, v):
            terms[k] = terms.get(k, 0.0) + v

        for (m, n), a in (cos or {}).items():
            if (m, n) == (0, 0):
                add((0, 0), a)
            else:
                add((m, n), a / 2)
                add((-m, -n), a / 2)
        for (m, n), b in (sin or {}).items():
            if (m, n) == (0, 0):
                continue
            add((m, n), -0.5j * b)
            add((-m, -n), 0.5j * b)
        return cls(terms)

    @classmethod
    def constant(cls, value):
        return cls({(0, 0): value} if value else {})

    @classmethod
    def sin_product(cls, K):
        """``K sin(xi) sin(eta)``."""
        return cls.from_cos_sin(cos={(1, -1): K / 2, (1, 1): -K / 2})

    @classmethod
    def arnold(cls, a=0.0, b=0.0, c=0.0, d=0.0, p=0.0, q=0.0):
        """``a cos xi + b sin xi + c cos eta + d sin eta + p cos(xi+eta) + q sin(xi+eta)``."""
        return cls.from_cos_sin(cos={(1, 0): a, (0, 1): c, (1, 1): p},
                                sin={(1, 0): b, (0, 1): d, (1, 1): q})

    # properties -------------------------------------------------------
    @property
    def max_degree(self):
        if not self.terms:
            return 0
        return int(max(max(abs(m), abs(n)) for m, n in self.terms))

    def abs_bound(self):
        """Upper bound on ``max |p|``: the sum of coefficient moduli."""
        return float(np.sum(np.abs(self._c)))

    def is_constant(self):
        return all(k == (0, 0) for k in self.terms)

    def coeff(self, m, n):
        return self.terms.get((m, n), 0j)

    # algebra ----------------------------------------------------------
    def __add__(self, other):
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0) + c
        return TrigPoly2D(out)

    def __mul__(self, s):
        return TrigPoly2D({k: c * s for k, c in self.terms.items()})

    __rmul__ = __mul__

    # evaluation -------------------------------------------------------
    def _phases(self, xi, eta):
        xi = np.asarray(xi, dtype=float)
        eta = np.asarray(eta, dtype=float)
        arg = np.multiply.outer(xi, self._m) + np.multiply.outer(eta, self._n)
        return np.exp(1j * arg)

    def __call__(self, xi, eta):
        return poly_eval(self, xi, eta)

    def derivative(self, dm, dn, xi, eta):
        """Mixed partial derivative of order ``(dm, dn)`` at the given points."""
        w = self._c * (1j * self._m) ** dm * (1j * self._n) ** dn
        return (self._phases(xi, eta) @ w).real

    def on_grid(self, n):
        """Values on the uniform ``n x n`` grid of [0, 2pi)^2 (axis 0 is xi)."""
        x = 2 * np.pi * np.arange(n) / n
        X, Y = np.meshgrid(x, x, indexing="ij")
        return poly_eval(self, X, Y)

    # serialization ----------------------------------------------------
    def to_list(self):
        return [[m, n, c.real, c.imag] for (m, n), c in sorted(self.terms.items())]

    @classmethod
    def from_list(cls, rows, symmetrize=True):
        terms = {}
        for m, n, re, im in rows:
            terms[(int(m), int(n))] = terms.get((int(m), int(n)), 0) + complex(re, im)
        return cls.from_terms(terms, symmetrize=symmetrize)


def poly_eval(p, xi, eta):
    """Value of the trigonometric sum (real)."""
    return (p._phases(xi, eta) @ p._c).real


def poly_grad(p, xi, eta):
    """Exact termwise gradient ``(d/dxi, d/deta)``."""
    ph = p._phases(xi, eta)
    return (ph @ (1j * p._m * p._c)).real, (ph @ (1j * p._n * p._c)).real


def poly_hessian(p, xi, eta):
    ph = p._phases(xi, eta)
    m, n, c = p._m, p._n, p._c
    return (ph @ (-m * m * c)).real, (ph @ (-m * n * c)).real, (ph @ (-n * n * c)).real


@dataclass(frozen=True)
class Mat2Sym:
    """Symmetric 2x2 matrix ``[[a, b], [b, c]]``."""

    a: float
    b: float
    c: float

    def as_array(self):
        return np.array([[self.a, self.b], [self.b, self.c]])

    @property
    def det(self):
        return self.a * self.c - self.b * self.b

    def eig(self):
        """Eigenvalues ``(lambda1, lambda2)`` with ``lambda1 >= lambda2`` and unit eigenvectors as columns."""
        w, v = np.linalg.eigh(self.as_array())
        return (float(w[1]), float(w[0])), np.column_stack([v[:, 1], v[:, 0]])

    def is_degenerate(self, rel_tol=1e-9):
        scale = max(abs(self.a), abs(self.b), abs(self.c), 1e-300)
        return abs(self.det) <= rel_tol * scale * scale


@dataclass(frozen=True)
class EnergyDensity:
    """``C0 = sqrt((A b0 + gamma0)^2 + gamma1^2)`` on the slow torus."""

    A: float
    gamma0: TrigPoly2D = field(default_factory=TrigPoly2D)
    gamma1: TrigPoly2D = field(default_factory=TrigPoly2D)
    b0: float = 1.0
    positivity_guaranteed: bool = field(init=False, default=True)

    def __post_init__(self):
        base = self.A * self.b0
        guaranteed = self.gamma0.abs_bound() + self.gamma1.abs_bound() < abs(base)
        object.__setattr__(self, "positivity_guaranteed", bool(guaranteed))
        if not guaranteed:
            n = 128
            p = base + self.gamma0.on_grid(n)
            # without gamma1 the density is |p|, so a sign change of p is a zero
            crosses = not self.gamma1.terms and np.min(p) * np.max(p) <= 0
            if crosses or np.min(p * p + self.gamma1.on_grid(n) ** 2) <= 1e-14 * base * base:
                raise InvalidParameterError("energy density vanishes somewhere on the torus")
            warnings.warn("C0 positivity verified pointwise only; modulations are not "
                          "bounded by A*b0", stacklevel=3)

    @property
    def base(self):
        return self.A * self.b0

    def radicand_on_grid(self, n):
        p = self.base + self.gamma0.on_grid(n)
        return p * p + self.gamma1.on_grid(n) ** 2

    def is_constant(self):
        return self.gamma0.is_constant() and self.gamma1.is_constant()

    def speed_bound(self):
        return abs(self.base) + self.gamma0.abs_bound() + self.gamma1.abs_bound()

    def on_grid(self, n):
        return np.sqrt(self.radicand_on_grid(n))

    # JSON -------------------------------------------------------------
    def to_json_dict(self):
        return {"A": self.A, "b0": self.b0,
                "gamma0": self.gamma0.to_list(), "gamma1": self.gamma1.to_list()}

    @classmethod
    def from_json_dict(cls, d):
        return cls(A=float(d["A"]), b0=float(d.get("b0", 1.0)),
                   gamma0=TrigPoly2D.from_list(d.get("gamma0", [])),
                   gamma1=TrigPoly2D.from_list(d.get("gamma1", [])))

    def dumps(self):
        return json.dumps(self.to_json_dict())

    @classmethod
    def loads(cls, text):
        return cls.from_json_dict(json.loads(text))


def c0_eval(E, xi, eta):
    p = E.base + poly_eval(E.gamma0, xi, eta)
    q = poly_eval(E.gamma1, xi, eta)
    r2 = p * p + q * q
    assert np.all(r2 > 0), "energy density radicand must be positive"
    return np.sqrt(r2)


def _pieces(E, xi, eta):
    p = E.base + poly_eval(E.gamma0, xi, eta)
    q = poly_eval(E.gamma1, xi, eta)
    px, py = poly_grad(E.gamma0, xi, eta)
    qx, qy = poly_grad(E.gamma1, xi, eta)
    c = np.sqrt(p * p + q * q)
    assert np.all(c > 0), "energy density radicand must be positive"
    return p, q, px, py, qx, qy, c


def c0_grad(E, xi, eta):
    """Chain-rule gradient ``((A b0 + g0) grad g0 + g1 grad g1) / C0``."""
    p, q, px, py, qx, qy, c = _pieces(E, xi, eta)
    return (p * px + q * qx) / c, (p * py + q * qy) / c


def c0_all(E, xi, eta):
    """``C0``, its gradient and Hessian entries in one pass."""
    p, q, px, py, qx, qy, c = _pieces(E, xi, eta)
    pxx, pxy, pyy = poly_hessian(E.gamma0, xi, eta)
    qxx, qxy, qyy = poly_hessian(E.gamma1, xi, eta)
    gx = (p * px + q * qx) / c
    gy = (p * py + q * qy) / c
    hxx = (px * px + p * pxx + qx * qx + q * qxx - gx * gx) / c
    hxy = (px * py + p * pxy + qx * qy + q * qxy - gx * gy) / c
    hyy = (py * py + p * pyy + qy * qy + q * qyy - gy * gy) / c
    return c, gx, gy, hxx, hxy, hyy


def c0_hessian(E, xi, eta):
    _, _, _, a, b, c = c0_all(E, xi, eta)
    return Mat2Sym(float(a), float(b), float(c))
