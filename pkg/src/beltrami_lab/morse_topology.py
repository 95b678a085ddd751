"""Critical points of C0 on the 2pi-torus, separatrices and the cell partition.

Critical points come from damped Newton iterations on ``grad C0 = 0``
seeded on a uniform grid, deduplicated modulo 2pi and classified by the
analytic Hessian. Separatrices are traced from every saddle along its
eigendirections, and the resulting graph, embedded in the torus, is split
into faces by walking its rotation system.
"""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateCriticalPointError, InvalidParameterError, NoCriticalPointsError,
    TopologyError, UnresolvedSeparatrixError,
)
from .slow_fields import Mat2Sym, c0_all
from .streamline_tracer import (
    ASCEND, DESCEND, ENTERED_BALL, STOP_RADIUS, Trajectory, torus_distance,
    trace_gradient_line, wrap_angle,
)

TWO_PI = 2 * np.pi
DEDUP_RADIUS = 1e-6 * TWO_PI
SEED_OFFSET = 1e-4
MAXIMUM, MINIMUM, SADDLE, DEGENERATE = "maximum", "minimum", "saddle", "degenerate"


@dataclass
class CriticalPoint:
    xi: float
    eta: float
    kind: str
    hessian: Mat2Sym
    eigvals: tuple
    eigvecs: np.ndarray  # unit eigenvectors as columns, matching eigvals
    value: float = float("nan")
    grad_norm: float = 0.0
    id: int = -1

    @property
    def position(self):
        return (self.xi, self.eta)


@dataclass
class Separatrix:
    saddle_id: int
    branch: str  # "unstable+", "unstable-", "stable+", "stable-"
    path: Trajectory
    endpoint_id: int
    seed_direction: np.ndarray = field(default_factory=lambda: np.zeros(2))


@dataclass
class PolygonPartition:
    polygons: list  # each: {"vertices": [...], "edges": [...], "sources": [...], "sinks": [...]}
    n_vertices: int
    n_edges: int

    @property
    def n_faces(self):
        return len(self.polygons)

    @property
    def euler(self):
        return self.n_vertices - self.n_edges + self.n_faces

    def to_json(self):
        return json.dumps({"n_vertices": self.n_vertices, "n_edges": self.n_edges,
                           "polygons": self.polygons}, indent=1)


def _classify(h: Mat2Sym, rel_tol=1e-9):
    if h.is_degenerate(rel_tol):
        return DEGENERATE
    if h.det < 0:
        return SADDLE
    return MAXIMUM if h.a + h.c < 0 else MINIMUM


def _reduce(x):
    x = np.mod(x, TWO_PI)
    return np.where(TWO_PI - x < 1e-12, 0.0, x)


def _newton_batch(E, x, y, newton_tol, max_iter, max_step=0.5):
    """Damped Newton on grad C0 for many seeds at once; returns positions and a converged mask."""
    done = np.zeros(x.shape, dtype=bool)
    for _ in range(max_iter):
        _, gx, gy, a, b, c = c0_all(E, x, y)
        gn = np.hypot(gx, gy)
        done = gn < newton_tol
        if np.all(done):
            break
        # eigen-decomposition of the 2x2 Hessian; directions with tiny curvature are skipped
        tr, det = a + c, a * c - b * b
        disc = np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
        l1, l2 = 0.5 * tr + disc, 0.5 * tr - disc
        theta = 0.5 * np.arctan2(2 * b, a - c)
        v1 = np.stack([np.cos(theta), np.sin(theta)])
        v2 = np.stack([-np.sin(theta), np.cos(theta)])
        scale = np.maximum(np.abs(l1), np.abs(l2)) + 1e-300
        step = np.zeros((2,) + x.shape)
        for lam, v in ((l1, v1), (l2, v2)):
            proj = v[0] * gx + v[1] * gy
            ok = np.abs(lam) > 1e-10 * scale
            step -= np.where(ok, proj / np.where(ok, lam, 1.0), 0.0) * v
        length = np.hypot(step[0], step[1])
        damp = np.minimum(1.0, max_step / np.maximum(length, 1e-300))
        active = ~done
        x = np.where(active, x + damp * step[0], x)
        y = np.where(active, y + damp * step[1], y)
    _, gx, gy, *_ = c0_all(E, x, y)
    return x, y, np.hypot(gx, gy) < newton_tol


def _make_point(E, x, y):
    c, gx, gy, a, b, cc = c0_all(E, x, y)
    h = Mat2Sym(float(a), float(b), float(cc))
    lam, vec = h.eig()
    return CriticalPoint(float(x), float(y), _classify(h), h, lam, vec, float(c),
                         float(np.hypot(gx, gy)))


def find_critical_points(E, scan_n=None, newton_tol=1e-10, dedup_radius=DEDUP_RADIUS,
                         max_iter=50):
    """All stationary points of C0 on [0, 2pi)^2, sorted by (xi, eta).

    Degenerate roots are returned with ``kind == "degenerate"`` rather than
    dropped; ``euler_check`` rejects them.
    """
    degree = max(E.gamma0.max_degree, E.gamma1.max_degree)
    if E.is_constant():
        raise NoCriticalPointsError("C0 is constant: every point is stationary")
    if scan_n is None:
        scan_n = max(32, 8 * degree)
    if scan_n < 8 * degree:
        raise InvalidParameterError(f"scan_n={scan_n} is below 8 x degree ({8 * degree})")
    s = TWO_PI * (np.arange(scan_n) + 0.5) / scan_n
    X, Y = np.meshgrid(s, s, indexing="ij")
    x, y, conv = _newton_batch(E, X.ravel(), Y.ravel(), newton_tol, max_iter)
    x, y = _reduce(x[conv]), _reduce(y[conv])

    found = []
    for xi, eta in sorted(zip(x, y)):
        if any(torus_distance((xi, eta), p) < dedup_radius for p in found):
            continue
        found.append((xi, eta))
    if not found:
        raise NoCriticalPointsError("Newton found no stationary point")
    # a couple of polishing iterations from the deduplicated roots
    px, py, _ = _newton_batch(E, np.array([p[0] for p in found]), np.array([p[1] for p in found]),
                              newton_tol * 1e-3, 3)
    pts = [_make_point(E, a, b) for a, b in zip(_reduce(px), _reduce(py))]
    pts.sort(key=lambda p: (round(p.xi, 9), round(p.eta, 9)))
    for i, p in enumerate(pts):
        p.id = i
    return pts


def in_open_square(points, margin=1e-9):
    """Points strictly inside the open fundamental square (0, 2pi)^2."""
    return [p for p in points
            if margin < p.xi < TWO_PI - margin and margin < p.eta < TWO_PI - margin]


def euler_check(points):
    """``#max + #min - #saddle``; zero for any Morse function on the torus."""
    bad = [p for p in points if p.kind == DEGENERATE]
    if bad:
        raise DegenerateCriticalPointError(
            f"{len(bad)} degenerate critical point(s), first at ({bad[0].xi:.6g}, {bad[0].eta:.6g})")
    kinds = [p.kind for p in points]
    return kinds.count(MAXIMUM) + kinds.count(MINIMUM) - kinds.count(SADDLE)


def snap(points, pos, radius):
    """Id of the critical point within ``radius`` of ``pos`` (modulo 2pi), else -1."""
    best, best_d = -1, radius
    for p in points:
        d = torus_distance(pos, p.position)
        if d < best_d:
            best, best_d = p.id, d
    return best


def trace_separatrices(E, saddle, points, seed_offset=SEED_OFFSET, tol=1e-9, tau_max=100.0,
                       stop_radius=STOP_RADIUS):
    """The four gradient lines through a saddle.

    Unstable branches leave along the eigenvector of the positive eigenvalue
    and ascend; stable branches leave along the other eigenvector and are
    traced descending, i.e. backwards along the ascending flow.
    """
    if saddle.kind != SADDLE:
        raise InvalidParameterError(f"point {saddle.id} is a {saddle.kind}, not a saddle")
    (l1, _), vec = saddle.eigvals, saddle.eigvecs
    unstable, stable = vec[:, 0], vec[:, 1]  # l1 > 0 > l2 for a saddle
    out = []
    for name, v, direction in (("unstable+", unstable, ASCEND), ("unstable-", -unstable, ASCEND),
                               ("stable+", stable, DESCEND), ("stable-", -stable, DESCEND)):
        start = (saddle.xi + seed_offset * v[0], saddle.eta + seed_offset * v[1])
        path = trace_gradient_line(E, start, direction, tau_max, tol, stop_radius,
                                   exclude=[saddle.position])
        if path.termination != ENTERED_BALL:
            raise UnresolvedSeparatrixError(
                f"branch {name} of saddle {saddle.id} ended with {path.termination}")
        end = snap(points, path.endpoint, 10 * stop_radius)
        if end < 0:
            raise UnresolvedSeparatrixError(
                f"branch {name} of saddle {saddle.id} stopped away from every known point")
        out.append(Separatrix(saddle.id, name, path, end, np.array(v)))
    return out


def trace_all_separatrices(E, points, **kw):
    seps = []
    for p in points:
        if p.kind == SADDLE:
            seps.extend(trace_separatrices(E, p, points, **kw))
    return seps


def _departure_angle(path_xy, origin, radius):
    """Heading from ``origin`` to where the path first leaves the circle of ``radius``."""
    d = wrap_angle(path_xy - np.asarray(origin)[None, :])
    r = np.hypot(d[:, 0], d[:, 1])
    idx = np.nonzero(r >= radius)[0]
    k = idx[0] if len(idx) else len(r) - 1
    return float(np.arctan2(d[k, 1], d[k, 0]))


def partition_polygons(points, separatrices):
    """Faces of the separatrix graph on the torus.

    Every separatrix is an edge between its saddle and its endpoint. At each
    vertex the incident edges are ordered by the angle at which they cross a
    small circle; faces are the orbits of "arrive, then turn to the next edge
    clockwise". The result must satisfy V - E + F = 0.
    """
    pts = {p.id: p for p in points}
    n_v = len(points)
    if not separatrices:
        return PolygonPartition([{"vertices": sorted(pts), "edges": [],
                                  "sources": sorted(i for i, p in pts.items() if p.kind == MAXIMUM),
                                  "sinks": sorted(i for i, p in pts.items() if p.kind == MINIMUM)}],
                                n_v, 0)

    def probe_radius(pid):
        others = [torus_distance(pts[pid].position, q.position) for q in points if q.id != pid]
        return 0.2 * min(others) if others else 0.5

    # half-edge h = 2*e (saddle -> end) or 2*e+1 (end -> saddle)
    rot = {}
    for e, s in enumerate(separatrices):
        xy = np.column_stack([s.path.xi, s.path.eta])
        a_out = _departure_angle(xy, pts[s.saddle_id].position, probe_radius(s.saddle_id))
        a_in = _departure_angle(xy[::-1], pts[s.endpoint_id].position, probe_radius(s.endpoint_id))
        rot.setdefault(s.saddle_id, []).append((a_out, 2 * e))
        rot.setdefault(s.endpoint_id, []).append((a_in, 2 * e + 1))
    order, pos = {}, {}
    for v, lst in rot.items():
        lst.sort()
        order[v] = [h for _, h in lst]
        for i, h in enumerate(order[v]):
            pos[h] = (v, i)

    def head(h):
        s = separatrices[h // 2]
        return s.endpoint_id if h % 2 == 0 else s.saddle_id

    seen, faces = set(), []
    for h0 in range(2 * len(separatrices)):
        if h0 in seen:
            continue
        h, verts, edges = h0, [], []
        while h not in seen:
            seen.add(h)
            verts.append(pos[h][0])
            edges.append(h // 2)
            v = head(h)
            twin = h ^ 1
            _, i = pos[twin]
            h = order[v][(i - 1) % len(order[v])]
            if len(edges) > 4 * len(separatrices) + 4:
                raise TopologyError("face walk does not close")
        if h != h0:
            raise TopologyError("inconsistent rotation system")
        faces.append({"vertices": verts, "edges": edges,
                      "sources": sorted({v for v in verts if pts[v].kind == MAXIMUM}),
                      "sinks": sorted({v for v in verts if pts[v].kind == MINIMUM})})
    part = PolygonPartition(faces, n_v, len(separatrices))
    if part.euler != 0:
        raise TopologyError(f"V - E + F = {part.euler}, expected 0 on the torus "
                            "(separatrices cross or the graph is not cellular)")
    return part


def critical_points_csv(points):
    fh = io.StringIO()
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["xi", "eta", "kind", "lambda1", "lambda2", "detB"])
    for p in points:
        w.writerow([repr(float(p.xi)), repr(float(p.eta)), p.kind, repr(float(p.eigvals[0])),
                    repr(float(p.eigvals[1])),
                    repr(float(p.hessian.det))])
    return fh.getvalue()
