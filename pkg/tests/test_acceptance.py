"""Acceptance criteria 1-13, each at its stated tolerance.

The summary hook in conftest.py prints one PASS/FAIL line per criterion.
"""

import itertools
import time

import numpy as np
import pytest

from beltrami_lab.beltrami_core import E, H, VERTICAL, BeltramiMode, TripletState, eval_mode, mode_cross, triplet_evolve
from beltrami_lab.dns_validator import residual_scaling, validate_triplet, validate_trkal
from beltrami_lab.morse_topology import MAXIMUM, MINIMUM, SADDLE, euler_check, find_critical_points, in_open_square
from beltrami_lab.phase_dynamics import (
    ModePhase, ScalingFrame, first_correction, initial_phase, late_time_decay, mode_rate,
    order_consistency_report, phase_cauchy_solve, phase_run, zero_mean_norm,
)
from beltrami_lab.slow_fields import EnergyDensity, TrigPoly2D, c0_eval
from beltrami_lab.streamline_tracer import (
    growth_law_error, integrate_streamline, stability_probe, torus_distance, trace_gradient_line,
    zero_phase,
)
from beltrami_lab.vorticity_analysis import (
    AsymptoticVelocity, collinearity_defect, plane_component_growth, vertical_singularity_fit,
)
from oracles import heat_fd, random_cubic

PI = np.pi
SIN_PRODUCT = EnergyDensity(1.0, TrigPoly2D.sin_product(0.2))
STRAIGHT = EnergyDensity(1.0, TrigPoly2D.from_cos_sin(sin={(1, 0): 0.3}))
ARNOLD_SIX = [
    (0.07, -0.066, 0.093, 0.025, 0.021, 0.094),
    (-0.025, -0.082, 0.032, 0.086, -0.059, 0.026),
    (0.057, 0.058, -0.089, -0.026, -0.083, -0.061),
]
MODULATED = EnergyDensity(1.0, TrigPoly2D.arnold(0.1, 0.05, 0.07, 0, 0.03, 0))
PHASE = TrigPoly2D.arnold(0.3, 0, 0, 0.2, 0, 0)


@pytest.mark.criterion(1, "Trkal decay")
def test_trkal_decay(record_property):
    start = time.perf_counter()
    rep = validate_trkal(n=32, R=100.0, n_checks=20)
    runtime = time.perf_counter() - start
    record_property("max_rel_error", f"{rep['max_rel_energy_error']:.2e}")
    record_property("runtime_s", f"{runtime:.1f}")
    assert rep["t_end"] == pytest.approx(10.0)
    assert rep["max_rel_energy_error"] < 1e-8
    assert runtime < 60.0


@pytest.mark.criterion(2, "Triplet exactness")
def test_triplet_exactness(record_property):
    R = 100.0
    rep = validate_triplet(TripletState(0.6, 0.8, 0.3, 1.0, R), n=32, n_checks=10)
    record_property("max_error", f"{rep['max_error']:.2e}")
    assert rep["t_end"] == pytest.approx(R / 10)
    assert rep["max_error"] < 1e-6


@pytest.mark.criterion(3, "Mode algebra")
def test_mode_algebra(record_property):
    z = np.linspace(0, 2 * PI, 256, endpoint=False)
    worst = 0.0
    for m, n in [(1, 1), (1, 2), (3, -2), (2, 5)]:
        family_a = [BeltramiMode(m, E), BeltramiMode(m, H), VERTICAL]
        family_b = [BeltramiMode(n, E), BeltramiMode(n, H), VERTICAL]
        pairs = list(itertools.product(family_a, family_b))
        assert len(pairs) == 9
        for a, b in pairs:
            for zz in z:
                direct = np.cross(eval_mode(a, zz), eval_mode(b, zz))
                worst = max(worst, float(np.max(np.abs(np.array(mode_cross(a, b, zz)) - direct))))
    record_property("max_abs_error", f"{worst:.1e}")
    assert worst < 1e-12


@pytest.mark.criterion(4, "Energy identity")
def test_energy_identity(record_property):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        a, w, ph = rng.uniform(-1, 1, 3), rng.uniform(0, 3, 3), rng.uniform(0, 2 * PI, 3)
        delta = lambda t, a=a, w=w, ph=ph: float(np.sum(a * np.sin(w * t + ph)))
        g0, g1 = rng.normal(size=2)
        R, t_end = rng.uniform(5, 500), rng.uniform(0.5, 5)
        s = triplet_evolve(TripletState(g0, g1, delta(0.0), 1.0, R), delta, t_end)
        exact = (g0**2 + g1**2) * np.exp(-2 * t_end / R)
        worst = max(worst, abs(s.gamma0**2 + s.gamma1**2 - exact) / exact)
    record_property("max_rel_error", f"{worst:.1e}")
    assert worst < 1e-8


@pytest.mark.criterion(5, "Critical-point topology")
def test_critical_point_topology(record_property):
    pts = find_critical_points(SIN_PRODUCT)
    inside = in_open_square(pts)
    expected = {(PI / 2, PI / 2): MAXIMUM, (3 * PI / 2, 3 * PI / 2): MAXIMUM,
                (PI / 2, 3 * PI / 2): MINIMUM, (3 * PI / 2, PI / 2): MINIMUM, (PI, PI): SADDLE}
    assert len(inside) == 5
    worst = 0.0
    for p in inside:
        key = min(expected, key=lambda q: torus_distance(q, p.position))
        worst = max(worst, torus_distance(key, p.position))
        assert p.kind == expected[key]
    assert worst < 1e-8
    counts = []
    for coef in ARNOLD_SIX:
        apts = find_critical_points(EnergyDensity(1.0, TrigPoly2D.arnold(*coef)))
        counts.append(len(apts))
        assert len(apts) == 6 and euler_check(apts) == 0
    record_property("location_error", f"{worst:.1e}")
    record_property("arnold_counts", counts)


@pytest.mark.criterion(6, "Gradient-line reduction")
def test_gradient_line_reduction(record_property):
    worst_path, worst_growth = 0.0, 0.0
    for start in [(1.0, 0.5), (2.5, 4.0), (5.0, 1.0)]:
        tr = integrate_streamline(SIN_PRODUCT, zero_phase, (*start, 0.0), 4.0, tol=1e-11,
                                  mode="quasi_stationary")
        gl = trace_gradient_line(SIN_PRODUCT, start, tau_max=4.0, tol=1e-11)
        t = np.linspace(0, min(tr.tau[-1], gl.tau[-1]), 200)
        (xa, ya), (xb, yb) = tr.at(t), gl.at(t)
        worst_path = max(worst_path, float(np.max(np.abs(xa - xb))), float(np.max(np.abs(ya - yb))))
        worst_growth = max(worst_growth, growth_law_error(SIN_PRODUCT, gl))
    record_property("sup_path_diff", f"{worst_path:.1e}")
    record_property("growth_law_error", f"{worst_growth:.1e}")
    assert worst_path < 1e-5
    assert worst_growth < 1e-7


@pytest.mark.criterion(7, "Stability law")
def test_stability_law(record_property):
    straight = integrate_streamline(STRAIGHT, zero_phase, (-1.2, 0.0, 0.0), 1.5, tol=1e-11,
                                    mode="quasi_stationary")
    curved = integrate_streamline(SIN_PRODUCT, zero_phase, (1.0, 0.5, 0.0), 3.0, tol=1e-11,
                                  mode="quasi_stationary")
    cases = [(STRAIGHT, straight, m) for m in ("scalar", "linearized", "projected", "nonlinear")]
    cases += [(SIN_PRODUCT, curved, m) for m in ("scalar", "projected")]
    worst = 0.0
    for field, base, method in cases:
        rep = stability_probe(field, base, 0.01, method)
        worst = max(worst, rep.rate_error)
        assert rep.bound_ok, method
    record_property("max_rate_error", f"{worst:.1e}")
    assert worst < 0.05


@pytest.mark.criterion(8, "Phase growth")
def test_phase_growth(record_property):
    c, tau = 1.2, 1.5
    modes = [(1, 0), (2, 0), (3, 0), (1, 1), (2, 1)]
    p = TrigPoly2D.from_cos_sin(cos={mn: 1e-4 for mn in modes})
    s = phase_cauchy_solve(EnergyDensity(c), p, tau_end=tau, cutoff=4)
    worst = 0.0
    for m, n in modes:
        ratio = s.coeff(m, n).real / 5e-5
        worst = max(worst, abs(ratio / np.cosh(mode_rate(c, m, n) * tau) - 1))
    record_property("max_rel_error", f"{worst:.1e}")
    assert worst < 0.01
    gains = [abs(s.coeff(m, 0).real) / 5e-5 for m in (1, 2, 3)]
    assert gains[0] < gains[1] < gains[2]


@pytest.mark.criterion(9, "Scaling exponent")
def test_scaling_exponent(record_property):
    E = SIN_PRODUCT
    hist = phase_run(E, initial_phase(E, 4), tau_end=1.0, cutoff=4, dt=0.005, snapshot_every=1)
    _, rep = order_consistency_report(1e4, E, hist)
    cf = first_correction(E, hist)
    record_property("k_gt_2", rep["k_gt_2_max_abs"])
    record_property("k_eq_2", f"{rep['k_eq_2_max_abs']:.3g}")
    assert rep["k_gt_2_max_abs"] == 0.0
    assert rep["k_eq_2_max_abs"] > 0.0
    assert cf.bound_holds()
    assert np.all(np.asarray(cf.max_abs_history) <= cf.M_bound * np.asarray(cf.tau_history) + 1e-12)


@pytest.mark.criterion(10, "Late-time decay")
def test_late_time_decay(record_property):
    p = random_cubic(11)
    tau1 = 0.1
    err = float(np.max(np.abs(late_time_decay(p, tau1).on_grid(128).real - heat_fd(p.on_grid(128).real, tau1))))
    record_property("sup_error", f"{err:.1e}")
    assert err < 1e-6
    for seed in range(20):
        q = random_cubic(seed) + TrigPoly2D.constant(0.7)
        for t in (0.1, 1.0, 3.0):
            assert zero_mean_norm(late_time_decay(q, t)) <= np.exp(-t) * zero_mean_norm(q) * (1 + 1e-12)


@pytest.mark.criterion(11, "Vorticity strings")
def test_vorticity_strings(record_property):
    slopes, rate_errors, halvings = [], [], []
    fields = [SIN_PRODUCT, MODULATED] + [EnergyDensity(1.0, TrigPoly2D.arnold(*c)) for c in ARNOLD_SIX]
    for E in fields:
        pts = find_critical_points(E)
        for p in pts:
            fit = vertical_singularity_fit(AsymptoticVelocity(E), p, others=pts)
            if fit.isotropic:
                continue
            slopes.append(fit.slope)
            c = float(c0_eval(E, *p.position))
            ph = ModePhase(c, 1, 1, 0.5 * np.exp(1j * PI / 4), p.position)
            rep = plane_component_growth(AsymptoticVelocity(E, ph), p,
                                         np.linspace(0, 6 / ph.rate, 40), 1e-3, fit_from=3 / ph.rate)
            assert rep.predicted_rate == pytest.approx(c * np.sqrt(1.0))
            rate_errors.append(rep.rate_error)
            halvings.append(rep.halving_ratio)
    slopes = np.array(slopes)
    record_property("n_points", len(slopes))
    record_property("worst_slope", f"{slopes[np.argmax(np.abs(slopes + 1))]:.4f}")
    record_property("max_rate_error", f"{max(rate_errors):.1e}")
    assert np.all(np.abs(slopes + 1) <= 0.05)
    assert max(rate_errors) < 0.02
    assert np.all(np.abs(np.array(halvings) - 2) <= 0.2)


@pytest.mark.criterion(12, "Collinearity")
def test_collinearity(record_property):
    pts = find_critical_points(MODULATED)
    p = pts[0]
    ph = ModePhase(float(c0_eval(MODULATED, *p.position)), 1, 1, 0.5 * np.exp(1j * PI / 4), p.position)
    d, ref = collinearity_defect(MODULATED, ph, ScalingFrame(1e4), tau=1.0)
    mask = ref > 0.5 * ref.max()
    rel = float(np.max(np.abs(d[mask] / ref[mask] - 1)))
    d2, _ = collinearity_defect(MODULATED, ph, ScalingFrame(4e4), tau=1.0)
    ratio = float(np.max(d) / np.max(d2))
    record_property("rel_error", f"{rel:.1e}")
    record_property("ratio", f"{ratio:.3f}")
    assert rel < 0.1
    assert ratio == pytest.approx(2.0, rel=0.1)


@pytest.mark.criterion(13, "Asymptotic residual")
def test_asymptotic_residual(record_property):
    res = residual_scaling(MODULATED, [1e4, 4e4], n=32, phase=PHASE, correction=True)
    ratio = float(res[0] / res[1])
    record_property("residuals", [f"{r:.2e}" for r in res])
    record_property("ratio", f"{ratio:.3f}")
    assert ratio == pytest.approx(4.0, rel=0.1)
