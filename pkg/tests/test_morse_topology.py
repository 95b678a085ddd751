import json

import numpy as np
import pytest
from scipy.optimize import root

from beltrami_lab.errors import (
    DegenerateCriticalPointError, InvalidParameterError, NoCriticalPointsError, TopologyError,
)
from beltrami_lab.morse_topology import (
    MAXIMUM, MINIMUM, SADDLE, critical_points_csv, euler_check, find_critical_points,
    in_open_square, partition_polygons, snap, trace_all_separatrices, trace_separatrices,
)
from beltrami_lab.slow_fields import EnergyDensity, TrigPoly2D, c0_grad
from beltrami_lab.streamline_tracer import torus_distance

PI = np.pi
SIN_PRODUCT = EnergyDensity(1.0, TrigPoly2D.sin_product(0.2))
# Arnold draws verified to have six nondegenerate stationary points
ARNOLD_SIX = [
    (0.07, -0.066, 0.093, 0.025, 0.021, 0.094),
    (-0.025, -0.082, 0.032, 0.086, -0.059, 0.026),
    (0.057, 0.058, -0.089, -0.026, -0.083, -0.061),
]


def scipy_roots(E, n=24):
    """Independent root census with scipy's hybrid solver."""
    found = []
    s = 2 * PI * (np.arange(n) + 0.5) / n
    for x in s:
        for y in s:
            sol = root(lambda p: c0_grad(E, p[0], p[1]), [x, y], tol=1e-13)
            if not sol.success or np.hypot(*c0_grad(E, *sol.x)) > 1e-10:
                continue
            p = np.mod(sol.x, 2 * PI)
            if all(torus_distance(p, q) > 1e-6 for q in found):
                found.append(p)
    return found


def test_sin_product_points_and_kinds():
    pts = find_critical_points(SIN_PRODUCT)
    inside = in_open_square(pts)
    expected = {(PI / 2, PI / 2): MAXIMUM, (3 * PI / 2, 3 * PI / 2): MAXIMUM,
                (PI / 2, 3 * PI / 2): MINIMUM, (3 * PI / 2, PI / 2): MINIMUM, (PI, PI): SADDLE}
    assert len(inside) == 5
    for p in inside:
        key = min(expected, key=lambda q: torus_distance(q, p.position))
        assert torus_distance(key, p.position) < 1e-8
        assert p.kind == expected[key]
    assert len(pts) == 8 and euler_check(pts) == 0


@pytest.mark.parametrize("coef", ARNOLD_SIX)
def test_arnold_six_points_match_scipy_census(coef):
    E = EnergyDensity(1.0, TrigPoly2D.arnold(*coef))
    pts = find_critical_points(E)
    assert len(pts) == 6 and euler_check(pts) == 0
    ref = scipy_roots(E)
    assert len(ref) == 6
    for q in ref:
        assert min(torus_distance(q, p.position) for p in pts) < 1e-8


def test_points_are_sorted_and_reduced():
    pts = find_critical_points(SIN_PRODUCT)
    keys = [(round(p.xi, 9), round(p.eta, 9)) for p in pts]
    assert keys == sorted(keys)
    assert all(0 <= p.xi < 2 * PI and 0 <= p.eta < 2 * PI for p in pts)
    assert [p.id for p in pts] == list(range(len(pts)))


def test_constant_field_and_coarse_scan_rejected():
    with pytest.raises(NoCriticalPointsError):
        find_critical_points(EnergyDensity(2.0))
    E = EnergyDensity(1.0, TrigPoly2D.from_cos_sin(cos={(5, 0): 0.1}))
    with pytest.raises(InvalidParameterError):
        find_critical_points(E, scan_n=16)


def test_degenerate_point_flagged():
    # sin(xi) has lines of stationary points in eta: every root is degenerate
    E = EnergyDensity(1.0, TrigPoly2D.from_cos_sin(sin={(1, 0): 0.2}))
    pts = find_critical_points(E, scan_n=8)
    assert all(p.kind == "degenerate" for p in pts)
    with pytest.raises(DegenerateCriticalPointError):
        euler_check(pts)


def test_snap():
    pts = find_critical_points(SIN_PRODUCT)
    p = pts[3]
    assert snap(pts, (p.xi + 1e-5, p.eta), 1e-3) == p.id
    assert snap(pts, (p.xi + 0.5, p.eta), 1e-3) == -1


def test_separatrices_of_sin_product_saddle():
    pts = find_critical_points(SIN_PRODUCT)
    saddle = next(p for p in pts if p.kind == SADDLE)
    seps = trace_separatrices(SIN_PRODUCT, saddle, pts)
    assert [s.branch for s in seps] == ["unstable+", "unstable-", "stable+", "stable-"]
    kinds = {s.branch: pts[s.endpoint_id].kind for s in seps}
    assert kinds["unstable+"] == kinds["unstable-"] == MAXIMUM
    assert kinds["stable+"] == kinds["stable-"] == MINIMUM
    with pytest.raises(InvalidParameterError):
        trace_separatrices(SIN_PRODUCT, next(p for p in pts if p.kind == MAXIMUM), pts)


def test_sin_product_partition_is_eight_quadrilaterals():
    pts = find_critical_points(SIN_PRODUCT)
    part = partition_polygons(pts, trace_all_separatrices(SIN_PRODUCT, pts))
    assert part.euler == 0
    assert part.n_faces == 8
    assert all(len(f["edges"]) == 4 for f in part.polygons)
    # every cell has one source and one sink
    assert all(len(f["sources"]) == 1 and len(f["sinks"]) == 1 for f in part.polygons)
    doc = json.loads(part.to_json())
    assert doc["n_edges"] == 16


@pytest.mark.parametrize("coef", ARNOLD_SIX[:2])
def test_arnold_partition_euler(coef):
    E = EnergyDensity(1.0, TrigPoly2D.arnold(*coef))
    pts = find_critical_points(E)
    seps = trace_all_separatrices(E, pts)
    part = partition_polygons(pts, seps)
    assert part.n_vertices - part.n_edges + part.n_faces == 0
    assert sum(len(f["edges"]) for f in part.polygons) == 2 * len(seps)


def test_partition_rejects_inconsistent_graph():
    pts = find_critical_points(SIN_PRODUCT)
    seps = trace_all_separatrices(SIN_PRODUCT, pts)
    with pytest.raises(TopologyError):
        partition_polygons(pts, seps[:4])


def test_no_saddles_gives_single_face():
    pts = find_critical_points(SIN_PRODUCT)
    part = partition_polygons(pts[:1], [])
    assert part.n_faces == 1


def test_critical_points_csv():
    text = critical_points_csv(find_critical_points(SIN_PRODUCT))
    lines = text.splitlines()
    assert lines[0] == "xi,eta,kind,lambda1,lambda2,detB"
    assert len(lines) == 9
