import json

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from beltrami_lab.errors import GeometryError, InvalidParameterError, NearCriticalPointError
from beltrami_lab.morse_topology import SADDLE, find_critical_points
from beltrami_lab.phase_dynamics import (
    ModePhase, ScalingFrame, first_correction, initial_phase, phase_run,
)
from beltrami_lab.slow_fields import EnergyDensity, TrigPoly2D, c0_all, c0_eval
from beltrami_lab.vorticity_analysis import (
    AsymptoticVelocity, SnapshotPhase, ZeroPhase, collinearity_defect, correction_amplitude,
    eval_asymptotic_velocity, gradient_field, grid_interpolant, leading_profile, ngrad,
    plane_component_growth, plane_vorticity, upward_velocity_field, upward_velocity_gradient,
    vertical_singularity_fit, vertical_vorticity, vertical_vorticity_spectral,
)

PI = np.pi
SIN_PRODUCT = EnergyDensity(1.0, TrigPoly2D.sin_product(0.2))
ARNOLD = EnergyDensity(1.0, TrigPoly2D.arnold(0.1, 0.05, 0.07, 0, 0.03, 0))


def _saddle(E):
    return next(p for p in find_critical_points(E) if p.kind == SADDLE)


def _growth_setup():
    p = find_critical_points(ARNOLD)[0]
    c = float(c0_eval(ARNOLD, *p.position))
    ph = ModePhase(c, 1, 1, 0.5 * np.exp(1j * PI / 4), p.position)
    return p, ph


def test_planar_field_is_gradient_with_speed_c0():
    x, y = 1.0, 0.4
    ux, uy = gradient_field(SIN_PRODUCT, x, y)
    vx, vy = ngrad(SIN_PRODUCT, x, y)
    assert abs(ux * vx + uy * vy) < 1e-15
    assert np.hypot(ux, uy) == pytest.approx(float(c0_eval(SIN_PRODUCT, x, y)))
    u = eval_asymptotic_velocity(AsymptoticVelocity(SIN_PRODUCT), x, y, 0.0, 0.0)
    assert (u.x, u.y) == pytest.approx((ux, uy)) and u.z == 0.0


def test_velocity_rejects_critical_point():
    with pytest.raises(NearCriticalPointError):
        eval_asymptotic_velocity(AsymptoticVelocity(SIN_PRODUCT), PI / 2, PI / 2, 0.0, 0.0)


def test_correction_rotates_planar_field_by_offset():
    V = AsymptoticVelocity(SIN_PRODUCT, correction=lambda x, y, t: 0.5,
                           phi_offset=TrigPoly2D.constant(PI / 2))
    x, y = 1.0, 0.4
    u = eval_asymptotic_velocity(V, x, y, 0.0, 0.0)
    ux, uy = gradient_field(SIN_PRODUCT, x, y)
    _, gx, gy, *_ = c0_all(SIN_PRODUCT, x, y)
    g = np.hypot(gx, gy)
    # offset pi/2 puts the correction along ngrad, of length eps * 0.5
    assert u.x - ux == pytest.approx(1e-2 * 0.5 * gy / g)
    assert u.y - uy == pytest.approx(-1e-2 * 0.5 * gx / g)


def test_vertical_vorticity_closed_form_vs_chebyshev():
    for x, y in [(1.0, 0.4), (2.5, 4.0), (0.3, 5.5)]:
        a = vertical_vorticity(SIN_PRODUCT, x, y)
        b = vertical_vorticity_spectral(SIN_PRODUCT, x, y, 0.05)
        assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-0.1, 0.1), min_size=6, max_size=6),
       st.floats(0, 2 * PI), st.floats(0, 2 * PI))
def test_vertical_vorticity_routes_agree_on_random_fields(coef, x, y):
    E = EnergyDensity(1.0, TrigPoly2D.arnold(*coef))
    c, gx, gy, hxx, hxy, hyy = c0_all(E, x, y)
    g = float(np.hypot(gx, gy))
    assume(g > 0.02)
    hw = min(0.05, 0.05 * g / (abs(hxx) + abs(hxy) + abs(hyy) + 1e-12))
    a = vertical_vorticity(E, x, y)
    b = vertical_vorticity_spectral(E, x, y, hw)
    assert abs(a - b) < 1e-7 * max(1.0, abs(a))


def test_leading_profile_invariances():
    ang = np.linspace(0, 2 * PI, 17)
    assert np.allclose(leading_profile(1.0, 2.0, 2.0, ang), 0.0)
    # profile is odd under reflection of the angle and pi-periodic
    assert np.allclose(leading_profile(1.3, 1.0, -2.0, -ang), -leading_profile(1.3, 1.0, -2.0, ang))
    assert np.allclose(leading_profile(1.3, 1.0, -2.0, ang + PI), leading_profile(1.3, 1.0, -2.0, ang))
    # and linear in C0
    assert np.allclose(leading_profile(2.6, 1.0, -2.0, ang), 2 * leading_profile(1.3, 1.0, -2.0, ang))


def test_saddle_singularity_slope_and_profile():
    pts = find_critical_points(SIN_PRODUCT)
    fit = vertical_singularity_fit(AsymptoticVelocity(SIN_PRODUCT), _saddle(SIN_PRODUCT), others=pts)
    assert fit.slope == pytest.approx(-1.0, abs=0.05)
    assert fit.slope_ci < 0.05
    assert np.max(np.abs(fit.angle_profile - fit.predicted_profile)) < 1e-3 * np.max(np.abs(fit.predicted_profile))
    assert not fit.isotropic
    assert np.all(np.diff(fit.radii) < 0)
    doc = json.loads(fit.to_json())
    assert doc["kind"] == SADDLE
    lines = fit.ring_csv().splitlines()
    assert lines[0] == "r,phi,omega" and "np." not in fit.ring_csv()


def test_isotropic_extremum_has_no_singularity():
    pts = find_critical_points(SIN_PRODUCT)
    ext = next(p for p in pts if p.kind != SADDLE)
    fit = vertical_singularity_fit(AsymptoticVelocity(SIN_PRODUCT), ext, others=pts)
    assert fit.isotropic
    # the 1/rho term vanishes, leaving a regular remainder that shrinks with rho
    assert fit.slope == pytest.approx(1.0, abs=0.05)
    assert np.max(np.abs(fit.angle_profile)) < 1e-2


def test_prefactor_linear_in_amplitude():
    f1 = vertical_singularity_fit(AsymptoticVelocity(SIN_PRODUCT), _saddle(SIN_PRODUCT))
    E2 = EnergyDensity(2.0, TrigPoly2D.sin_product(0.2))
    f2 = vertical_singularity_fit(AsymptoticVelocity(E2), _saddle(E2))
    assert f2.prefactor / f1.prefactor == pytest.approx(2.0, rel=1e-6)


def test_annulus_containing_other_point_rejected():
    pts = find_critical_points(SIN_PRODUCT)
    with pytest.raises(GeometryError):
        vertical_singularity_fit(AsymptoticVelocity(SIN_PRODUCT), _saddle(SIN_PRODUCT), r_max=1.2,
                                 others=pts)


def test_zero_phase_gives_zero_plane_vorticity():
    V = AsymptoticVelocity(ARNOLD)
    x, y = np.random.default_rng(2).uniform(0, 2 * PI, (2, 10))
    assert np.all(plane_vorticity(V, x, y, 1.0) == 0.0)
    assert np.all(upward_velocity_field(ARNOLD, ZeroPhase(), x, y, 1.0) == 0.0)


def test_upward_velocity_gradient_matches_finite_differences():
    _, ph = _growth_setup()
    x, y, t, h = 1.3, 2.2, 0.7, 1e-6
    gx, gy = upward_velocity_gradient(ARNOLD, ph, x, y, t)
    f = lambda a, b: upward_velocity_field(ARNOLD, ph, a, b, t)
    assert gx == pytest.approx((f(x + h, y) - f(x - h, y)) / (2 * h), rel=1e-6)
    assert gy == pytest.approx((f(x, y + h) - f(x, y - h)) / (2 * h), rel=1e-6)


def test_plane_component_growth_rate_and_halving():
    p, ph = _growth_setup()
    rep = plane_component_growth(AsymptoticVelocity(ARNOLD, ph), p,
                                 np.linspace(0, 6 / ph.rate, 40), 1e-3, fit_from=3 / ph.rate)
    assert rep.rate_error < 0.02
    assert rep.halving_ratio == pytest.approx(2.0, rel=0.02)


def test_collinearity_defect_tracks_upward_velocity():
    _, ph = _growth_setup()
    d, ref = collinearity_defect(ARNOLD, ph, ScalingFrame(1e4), tau=1.0)
    m = ref > 0.5 * ref.max()
    assert np.max(np.abs(d[m] / ref[m] - 1)) < 0.1
    d2, _ = collinearity_defect(ARNOLD, ph, ScalingFrame(4e4), tau=1.0)
    assert np.max(d) / np.max(d2) == pytest.approx(2.0, rel=0.05)


def test_collinearity_defect_vanishes_for_zero_phase_to_second_order():
    d1, ref = collinearity_defect(ARNOLD, ZeroPhase(), ScalingFrame(1e4))
    assert np.all(ref == 0)
    d2, _ = collinearity_defect(ARNOLD, ZeroPhase(), ScalingFrame(4e4))
    assert np.max(d1) / np.max(d2) == pytest.approx(4.0, rel=0.05)
    with pytest.raises(InvalidParameterError):
        collinearity_defect(ARNOLD, ZeroPhase(), ScalingFrame(1e4), n_z=8)


def test_grid_interpolant_reproduces_trig_polynomial():
    p = TrigPoly2D.arnold(0.3, -0.2, 0.1, 0.4, 0.0, 0.2)
    n = 16
    s = 2 * PI * np.arange(n) / n
    X, Y = np.meshgrid(s, s, indexing="ij")
    f = grid_interpolant(p(X, Y).real)
    x, y = np.random.default_rng(4).uniform(0, 2 * PI, (2, 30))
    assert np.allclose(f(x, y), p(x, y).real, atol=1e-13)


def test_snapshot_phase_matches_state():
    hist = phase_run(SIN_PRODUCT, initial_phase(SIN_PRODUCT, 4), tau_end=0.3, cutoff=4, dt=0.01)
    s = hist[-1]
    sp = SnapshotPhase(s)
    x, y, h = 0.8, 1.9, 1e-5
    assert sp.value(x, y) == pytest.approx(s.value(x, y))
    hxx, hxy, hyy = sp.hessian(x, y)
    assert hxy == pytest.approx((sp.grad(x, y + h)[0] - sp.grad(x, y - h)[0]) / (2 * h), rel=1e-6)
    V = AsymptoticVelocity(SIN_PRODUCT, s)
    assert isinstance(V.phase, SnapshotPhase)


def test_correction_field_wrapping_matches_quadrature():
    hist = phase_run(SIN_PRODUCT, initial_phase(SIN_PRODUCT, 4), tau_end=0.5, cutoff=4, dt=0.005,
                     snapshot_every=1)
    cf = first_correction(SIN_PRODUCT, hist, n=16)
    V = AsymptoticVelocity(SIN_PRODUCT, hist[-1], correction=cf)
    s = 2 * PI * np.arange(16) / 16
    assert V.c_tilde(s[3], s[5], cf.tau) == pytest.approx(cf.C_tilde[3, 5], abs=1e-12)
    # pointwise quadrature against a closed-form single-mode phase
    _, ph = _growth_setup()
    ct = correction_amplitude(ARNOLD, ph)
    x, y, t = 1.0, 2.0, 0.4
    n = 4000
    ss = (np.arange(n) + 0.5) * t / n
    ref = np.sum(np.cos(ph.value(x, y, ss)) - float(c0_eval(ARNOLD, x, y))) * t / n
    assert ct(x, y, t) == pytest.approx(ref, rel=1e-6)
