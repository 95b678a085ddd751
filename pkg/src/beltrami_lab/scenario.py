"""Scenario files: JSON loading, dotted overrides, validation and hashing.

A scenario is a JSON object::

    {
      "name": "sin_product",
      "seed": 0,
      "R": 10000,
      "field": {"A": 1.0, "b0": 1.0,
                "gamma0": {"kind": "sin_product", "K": 0.2},
                "gamma1": null},
      "topology": {"scan_n": null, "separatrices": true},
      ...
    }

Polynomial descriptors take one of the forms ``{"kind": "sin_product", "K": k}``,
``{"kind": "arnold", "a": .., "b": .., "c": .., "d": .., "p": .., "q": ..}``,
``{"kind": "cos_sin", "cos": [[m, n, v], ...], "sin": [[m, n, v], ...]}``,
``{"kind": "terms", "terms": [[m, n, re, im], ...]}`` or null for zero.
Every run block is optional; missing keys take the defaults below.
"""

import copy
import hashlib
import json

from .errors import InvalidParameterError

DEFAULTS = {
    "name": "unnamed",
    "seed": 0,
    "R": 10000.0,
    "field": {"A": 1.0, "b0": 1.0, "gamma0": None, "gamma1": None},
    "triplet": {"gamma0": 0.6, "gamma1": 0.8, "A": 1.0, "delta": 0.0, "R": None,
                "t_end": 1.0, "n_samples": 21},
    "trace": {"starts": [], "tau_end": 5.0, "mode": "quasi_stationary", "tol": 1e-8,
              "gradient_starts": [], "direction": "ascend", "tau_max": 50.0},
    "topology": {"scan_n": None, "separatrices": True},
    "phase": {"init": "field", "mode": [1, 1], "alpha": [0.1, 0.0], "cutoff": None,
              "tau_end": 1.0, "dt": None, "snapshot_every": None},
    "latetime": {"tau1": 1.0, "delta": None},
    "vorticity": {"r_min": 1e-3, "r_max": 1e-1, "n_r": 12, "n_phi": 64,
                  "growth": {"mode": [1, 1], "alpha": [0.35355339059327373, 0.35355339059327373],
                             "r_probe": 1e-3, "n_times": 40, "rate_tau_end": 6.0}},
    "validate": {"cases": ["trkal", "triplet", "residual"], "n": 32, "R": 100.0},
}

SUBCOMMANDS = ("triplet", "trace", "topology", "phase", "latetime", "vorticity", "validate")


class ScenarioError(InvalidParameterError):
    """The scenario file or an override is malformed."""


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ScenarioError(f"unknown scenario key {path + k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict):
            out[k] = _merge(base[k], v, path + k + ".")
        else:
            out[k] = v
    return out


def parse_override(text):
    """``"a.b=1.5"`` -> ``(["a", "b"], 1.5)``; values are JSON when they parse, else strings."""
    if "=" not in text:
        raise ScenarioError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_override(sc, keys, value):
    node, free = sc, False
    for k in keys[:-1]:
        if not isinstance(node, dict) or (k not in node and not free):
            raise ScenarioError(f"unknown scenario key {'.'.join(keys)!r}")
        if node.get(k) is None:
            node[k] = {}
        node = node[k]
        # polynomial descriptors are open-ended
        free = free or "kind" in node or not node
    if not isinstance(node, dict) or (keys[-1] not in node and not free):
        raise ScenarioError(f"unknown scenario key {'.'.join(keys)!r}")
    node[keys[-1]] = value


def load_scenario(path=None, overrides=()):
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ScenarioError("scenario must be a JSON object")
    sc = _merge(DEFAULTS, raw)
    for text in overrides:
        apply_override(sc, *parse_override(text))
    return sc


def config_hash(sc):
    blob = json.dumps(sc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def build_poly(desc):
    from .slow_fields import TrigPoly2D

    if desc is None:
        return TrigPoly2D()
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ScenarioError(f"polynomial descriptor needs a 'kind': {desc!r}")
    kind = desc["kind"]
    args = {k: v for k, v in desc.items() if k != "kind"}
    try:
        if kind == "sin_product":
            return TrigPoly2D.sin_product(float(args["K"]))
        if kind == "arnold":
            return TrigPoly2D.arnold(**{k: float(v) for k, v in args.items()})
        if kind == "cos_sin":
            return TrigPoly2D.from_cos_sin(
                cos={(int(m), int(n)): float(v) for m, n, v in args.get("cos", [])},
                sin={(int(m), int(n)): float(v) for m, n, v in args.get("sin", [])})
        if kind == "terms":
            return TrigPoly2D.from_list(args["terms"], symmetrize=False)
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"bad {kind!r} descriptor: {exc}") from exc
    raise ScenarioError(f"unknown polynomial kind {kind!r}")


def build_field(sc):
    from .slow_fields import EnergyDensity

    f = sc["field"]
    return EnergyDensity(float(f["A"]), build_poly(f.get("gamma0")), build_poly(f.get("gamma1")),
                         float(f.get("b0", 1.0)))


def _positive(block, name, keys):
    for k in keys:
        v = block.get(k)
        if v is not None and not (isinstance(v, (int, float)) and v > 0):
            raise ScenarioError(f"{name}.{k} must be a positive number, got {v!r}")


def validate(sc, subcommand):
    """Check the blocks a subcommand reads; returns the built ``EnergyDensity`` (or None)."""
    if subcommand not in SUBCOMMANDS:
        raise ScenarioError(f"unknown subcommand {subcommand!r}")
    if not isinstance(sc.get("seed"), int):
        raise ScenarioError("seed must be an integer")
    b = sc[subcommand]
    if subcommand == "triplet":
        _positive(b, "triplet", ["t_end", "n_samples", "R"])
        d = b["delta"]
        if not isinstance(d, (int, float)) and not (isinstance(d, dict) and d.get("kind") == "sin"):
            raise ScenarioError("triplet.delta must be a number or {kind: sin, mean, amp, omega}")
        return None
    if subcommand == "validate":
        _positive(b, "validate", ["n", "R"])
        bad = set(b["cases"]) - {"trkal", "triplet", "residual"}
        if bad:
            raise ScenarioError(f"unknown validation case(s) {sorted(bad)}")
        n = b["n"]
        if n & (n - 1) or n < 16:
            raise ScenarioError("validate.n must be a power of two, at least 16")
    if not (isinstance(sc["R"], (int, float)) and sc["R"] > 1):
        raise ScenarioError("R must exceed 1")
    E = build_field(sc)
    if subcommand == "trace":
        _positive(b, "trace", ["tau_end", "tol", "tau_max"])
        if b["mode"] not in ("full", "quasi_stationary"):
            raise ScenarioError("trace.mode must be 'full' or 'quasi_stationary'")
        if b["direction"] not in ("ascend", "descend"):
            raise ScenarioError("trace.direction must be 'ascend' or 'descend'")
        for s in b["starts"]:
            if len(s) != 3:
                raise ScenarioError("trace.starts entries are [xi, eta, z]")
        for s in b["gradient_starts"]:
            if len(s) != 2:
                raise ScenarioError("trace.gradient_starts entries are [xi, eta]")
    elif subcommand == "topology":
        _positive(b, "topology", ["scan_n"])
    elif subcommand == "phase":
        _positive(b, "phase", ["tau_end", "dt", "cutoff", "snapshot_every"])
        if b["init"] not in ("field", "mode"):
            raise ScenarioError("phase.init must be 'field' or 'mode'")
    elif subcommand == "latetime":
        _positive(b, "latetime", ["tau1"])
        build_poly(b["delta"])
    elif subcommand == "vorticity":
        _positive(b, "vorticity", ["r_min", "r_max", "n_r", "n_phi"])
        if not b["r_min"] < b["r_max"]:
            raise ScenarioError("vorticity.r_min must be below r_max")
        _positive(b["growth"], "vorticity.growth", ["r_probe", "n_times", "rate_tau_end"])
    return E
