"""Command-line front end.

    beltrami-lab <subcommand> [--scenario FILE] [--out DIR] [--set key=value ...] [--threads N]

Each run writes its artifacts into a staging directory inside ``--out``
and moves them into place only on success, together with ``manifest.json``
(resolved scenario, config hash, versions, file list). Exit status is 0 on
success, 2 for invalid input and 3 for runtime failures; errors are reported
as a JSON object on stderr.
"""

import argparse
import json
import os
import platform
import shutil
import sys
import tempfile

from . import __version__
from .scenario import SUBCOMMANDS, config_hash, load_scenario, validate

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
LOCK_NAME = ".lock"
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class RunFailed(Exception):
    """A run finished but a check it performs did not pass."""


def _gp(title, body):
    return f"# gnuplot script\nset datafile separator ','\nset title '{title}'\n{body}\n"


def _csv(header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


# subcommands -------------------------------------------------------------------
def run_triplet(sc, E, args):
    import numpy as np

    from .beltrami_core import TripletState, triplet_evolve

    b = sc["triplet"]
    R = float(b["R"] or sc["R"])
    d = b["delta"]
    if isinstance(d, dict):
        mean, amp, om = float(d.get("mean", 0.0)), float(d.get("amp", 0.0)), float(d.get("omega", 1.0))
        delta_fn = lambda t: mean + amp * np.sin(om * t)
    else:
        delta_fn = lambda t, d=float(d): d
    s0 = TripletState(float(b["gamma0"]), float(b["gamma1"]), float(delta_fn(0.0)), float(b["A"]), R)
    rows, worst = [], 0.0
    c2 = s0.energy()
    for t in np.linspace(0.0, float(b["t_end"]), int(b["n_samples"])):
        s = triplet_evolve(s0, delta_fn, float(t))
        exact = c2 * np.exp(-2 * t / R)
        worst = max(worst, abs(s.energy() - exact) / exact)
        rows.append((t, s.gamma0, s.gamma1, s.delta, s.energy(), exact))
    files = {"triplet.csv": _csv(["t", "gamma0", "gamma1", "delta", "energy", "energy_exact"], rows),
             "triplet.gp": _gp("triplet energy", "plot 'triplet.csv' every ::1 using 1:5 with lines "
                                                 "title 'energy', '' every ::1 using 1:6 with points "
                                                 "title 'exp(-2t/R)'")}
    return files, {"max_rel_energy_error": worst}


def run_trace(sc, E, args):
    from .streamline_tracer import growth_law_error, integrate_streamline, trace_gradient_line, zero_phase

    b = sc["trace"]
    files, summary, plots = {}, {"streamlines": [], "gradient_lines": []}, []
    for k, start in enumerate(b["starts"]):
        tr = integrate_streamline(E, zero_phase, start, float(b["tau_end"]), tol=float(b["tol"]),
                                  mode=b["mode"])
        name = f"streamline_{k}.csv"
        files[name] = tr.to_csv()
        plots.append(f"'{name}' using 2:3 with lines notitle")
        summary["streamlines"].append({"file": name, "termination": tr.termination,
                                       "endpoint": tr.endpoint})
    for k, start in enumerate(b["gradient_starts"]):
        tr = trace_gradient_line(E, start, b["direction"], float(b["tau_max"]), tol=float(b["tol"]))
        name = f"gradient_{k}.csv"
        files[name] = tr.to_csv()
        plots.append(f"'{name}' using 2:3 with lines notitle")
        summary["gradient_lines"].append({"file": name, "termination": tr.termination,
                                          "endpoint": tr.endpoint,
                                          "growth_law_error": growth_law_error(E, tr)})
    if plots:
        files["trace.gp"] = _gp("streamline projections", "set size square\nset xrange [0:2*pi]\n"
                                "set yrange [0:2*pi]\nplot " + ", \\\n     ".join(plots))
    return files, summary


def run_topology(sc, E, args):
    from .morse_topology import (
        critical_points_csv, euler_check, find_critical_points, in_open_square,
        partition_polygons, trace_all_separatrices,
    )

    b = sc["topology"]
    pts = find_critical_points(E, scan_n=b["scan_n"])
    files = {"critical_points.csv": critical_points_csv(pts)}
    summary = {"n_points": len(pts), "n_in_square": len(in_open_square(pts)),
               "kinds": {k: sum(p.kind == k for p in pts) for k in ("maximum", "minimum", "saddle")},
               "euler": euler_check(pts)}
    if b["separatrices"]:
        seps = trace_all_separatrices(E, pts)
        rows = []
        for e, s in enumerate(seps):
            for t, x, y in zip(s.path.tau, s.path.xi, s.path.eta):
                rows.append((str(e), str(s.saddle_id), s.branch, str(s.endpoint_id), t, x, y))
        files["separatrices.csv"] = _csv(["edge", "saddle", "branch", "endpoint", "tau", "xi", "eta"],
                                         rows)
        part = partition_polygons(pts, seps)
        files["polygons.json"] = part.to_json() + "\n"
        summary.update({"n_separatrices": len(seps), "n_faces": part.n_faces,
                        "graph_euler": part.euler})
    files["topology.gp"] = _gp("critical points and separatrices",
                               "set size square\nset xrange [0:2*pi]\nset yrange [0:2*pi]\n"
                               "plot 'critical_points.csv' every ::1 using 1:2 with points pt 7 "
                               "title 'critical points'"
                               + (", 'separatrices.csv' every ::1 using 6:7 with dots title "
                                  "'separatrices'" if b["separatrices"] else ""))
    return files, summary


def run_phase(sc, E, args):
    import numpy as np

    from .phase_dynamics import initial_phase, mode_rate, phase_run
    from .slow_fields import TrigPoly2D, c0_eval

    b = sc["phase"]
    if b["init"] == "field":
        M0 = max(E.gamma0.max_degree, E.gamma1.max_degree, 1)
        phi0 = initial_phase(E, M0)
    else:
        m, n = map(int, b["mode"])
        a = complex(*b["alpha"])
        phi0 = TrigPoly2D.from_terms({(m, n): a, (-m, -n): a.conjugate()})
    states = phase_run(E, phi0, None, float(b["tau_end"]), b["cutoff"], b["dt"], b["snapshot_every"])
    rows = []
    for s in states:
        g = s.on_grid(32).real
        rows.append((s.tau, float(np.max(np.abs(g))), float(np.sqrt(np.mean(g * g)))))
    files = {"phase_final.csv": states[-1].to_csv(),
             "phase_history.csv": _csv(["tau", "max_abs_phi", "rms_phi"], rows),
             "phase.gp": _gp("phase growth", "set logscale y\nplot 'phase_history.csv' every ::1 "
                                             "using 1:2 with linespoints title 'max |phi|'")}
    summary = {"cutoff": states[-1].cutoff, "tau_end": states[-1].tau, "n_states": len(states)}
    if E.is_constant() and b["init"] == "mode":
        summary["mode_rate"] = mode_rate(float(c0_eval(E, 0.0, 0.0)), m, n)
    return files, summary


def run_latetime(sc, E, args):
    import numpy as np

    from .phase_dynamics import late_time_decay, zero_mean_norm
    from .scenario import build_poly

    b = sc["latetime"]
    delta = build_poly(b["delta"])
    tau1 = float(b["tau1"])
    after = late_time_decay(delta, tau1)
    rows = []
    for (m, n), c in sorted(delta.terms.items()):
        d = after.terms[(m, n)]
        rows.append((str(m), str(n), c.real, c.imag, d.real, d.imag, abs(d) / abs(c) if c else 0.0))
    before_norm = zero_mean_norm(delta)
    factor = zero_mean_norm(after) / before_norm if before_norm else 0.0
    files = {"latetime.csv": _csv(["m", "n", "re_before", "im_before", "re_after", "im_after",
                                   "ratio"], rows)}
    return files, {"tau1": tau1, "zero_mean_contraction": factor,
                   "bound": float(np.exp(-tau1))}


def run_vorticity(sc, E, args):
    import numpy as np

    from .morse_topology import find_critical_points
    from .phase_dynamics import ModePhase, ScalingFrame
    from .slow_fields import c0_eval
    from .vorticity_analysis import AsymptoticVelocity, plane_component_growth, vertical_singularity_fit

    b = sc["vorticity"]
    g = b["growth"]
    frame = ScalingFrame(float(sc["R"]))
    pts = find_critical_points(E)
    fits, files = [], {}
    for p in pts:
        if p.kind == "degenerate":
            continue
        V = AsymptoticVelocity(E, frame=frame)
        fit = vertical_singularity_fit(V, p, float(b["r_min"]), float(b["r_max"]), int(b["n_r"]),
                                       int(b["n_phi"]), others=pts)
        c = float(c0_eval(E, p.xi, p.eta))
        m, n = map(int, g["mode"])
        phase = ModePhase(c, m, n, complex(*g["alpha"]), p.position)
        Vg = AsymptoticVelocity(E, phase, frame=frame)
        t_end = float(g["rate_tau_end"]) / phase.rate
        times = np.linspace(0.0, t_end, int(g["n_times"]))
        growth = plane_component_growth(Vg, p, times, float(g["r_probe"]), n_phi=int(b["n_phi"]),
                                        fit_from=0.5 * t_end)
        fits.append({"id": p.id, "point": list(p.position), "kind": p.kind,
                     "eigvals": list(p.eigvals), "isotropic": fit.isotropic,
                     "slope": fit.slope, "slope_ci": fit.slope_ci, "prefactor": fit.prefactor,
                     "rate": growth.fitted_rate, "predicted_rate": growth.predicted_rate,
                     "halving_ratio": growth.halving_ratio})
        files[f"ring_{p.id}.csv"] = fit.ring_csv()
        files[f"growth_{p.id}.csv"] = _csv(["tau", "plane_vorticity"],
                                           zip(growth.times, growth.amplitudes))
    files["fits.json"] = json.dumps(fits, indent=1) + "\n"
    return files, {"n_points": len(fits)}


def run_validate(sc, E, args):
    from .beltrami_core import TripletState
    from .dns_validator import residual_scaling, validate_trkal, validate_triplet
    from .scenario import build_poly

    b = sc["validate"]
    cases = [args.case] if getattr(args, "case", None) else b["cases"]
    n, R = int(b["n"]), float(b["R"])
    report, ok = {}, True
    if "trkal" in cases:
        r = validate_trkal(n, R)
        r["passed"] = bool(r["max_rel_energy_error"] < 1e-8)
        r.pop("runtime_s")
        report["trkal"] = r
    if "triplet" in cases:
        st = TripletState(0.6, 0.8, 0.3, 1.0, R)
        r = validate_triplet(st, n, t_end=R / 10)
        r["passed"] = bool(r["max_error"] < 1e-6)
        report["triplet"] = r
    if "residual" in cases:
        phase = build_poly({"kind": "arnold", "a": 0.3, "d": 0.2})
        Rs = [float(sc["R"]), 4 * float(sc["R"])]
        res = residual_scaling(E, Rs, n, phase=phase, correction=True)
        ratio = float(res[0] / res[1])
        report["residual"] = {"R": Rs, "residual": res.tolist(), "ratio": ratio,
                              "passed": bool(abs(ratio - 4) < 0.4)}
    for name, r in report.items():
        ok = ok and r["passed"]
    files = {"validate.json": json.dumps(report, indent=1, sort_keys=True) + "\n"}
    summary = {k: v["passed"] for k, v in report.items()}
    if not ok:
        return files, dict(summary, failed=True)
    return files, summary


HANDLERS = {"triplet": run_triplet, "trace": run_trace, "topology": run_topology,
            "phase": run_phase, "latetime": run_latetime, "vorticity": run_vorticity,
            "validate": run_validate}


# plumbing ----------------------------------------------------------------------
def build_parser():
    parser = argparse.ArgumentParser(prog="beltrami-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", help="scenario JSON file")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a scenario value by dotted path (repeatable)")
        p.add_argument("--threads", type=int, default=None, help="threads for numeric libraries")
        if name == "validate":
            p.add_argument("--case", choices=["trkal", "triplet", "residual"])
    return parser


def _error(kind, message, code):
    print(json.dumps({"error": kind, "message": str(message), "exit_code": code}), file=sys.stderr)
    return code


def _acquire(out):
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, LOCK_NAME)
    fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)
    return path


def _versions():
    import numpy

    return {"beltrami_lab": __version__, "numpy": numpy.__version__,
            "python": platform.python_version()}


def execute(args):
    sc = load_scenario(args.scenario, args.overrides)
    E = validate(sc, args.command)
    fresh = not os.path.exists(args.out)
    try:
        lock = _acquire(args.out)
    except FileExistsError:
        raise RuntimeError(f"output directory {args.out} is locked by another run") from None
    staging = tempfile.mkdtemp(prefix=".staging-", dir=args.out)
    try:
        files, summary = HANDLERS[args.command](sc, E, args)
        manifest = {"name": sc["name"], "subcommand": args.command, "seed": sc["seed"],
                    "config_hash": config_hash(sc), "scenario": sc, "overrides": args.overrides,
                    "case": getattr(args, "case", None), "threads": args.threads,
                    "versions": _versions(), "files": sorted(files) + ["manifest.json"],
                    "summary": summary}
        files["manifest.json"] = json.dumps(manifest, indent=1, sort_keys=True, default=str) + "\n"
        for name, text in files.items():
            with open(os.path.join(staging, name), "w", newline="\n") as fh:
                fh.write(text)
        for name in files:
            os.replace(os.path.join(staging, name), os.path.join(args.out, name))
    except BaseException:
        if fresh:
            shutil.rmtree(args.out, ignore_errors=True)
        raise
    finally:
        shutil.rmtree(staging, ignore_errors=True)
        if os.path.exists(lock):
            os.remove(lock)
    if summary.get("failed"):
        raise RunFailed(f"{args.command}: checks failed: {summary}")
    return summary


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            return _error("ScenarioError", "--threads must be positive", EXIT_INVALID)
        for var in THREAD_VARS:
            os.environ[var] = str(args.threads)
    from .errors import BeltramiLabError

    try:
        summary = execute(args)
    except ValueError as exc:
        # scenario errors and every precondition failure derive from ValueError
        return _error(type(exc).__name__, exc, EXIT_INVALID)
    except (BeltramiLabError, RunFailed, RuntimeError, OSError, FloatingPointError) as exc:
        return _error(type(exc).__name__, exc, EXIT_RUNTIME)
    print(json.dumps({"subcommand": args.command, "out": args.out, "summary": summary},
                     default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
