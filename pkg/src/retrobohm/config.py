"""Scenario files: a YAML tree with one section per field group, validated strictly.

Layout::

    name: golden_guidance_kg
    model: {kind: klein_gordon, mass: 1.0}
    states:
      psi_i: {kind: gaussian_momentum, p0: 0.5, sigma_p: 0.3}
      both:  {kind: superposition, terms: [[1.0, psi_i], [[0.0, 0.6], psi_f]]}
      pairs: {kind: multi_particle, terms: [[1.0, [a, b]], [1.0, [b, a]]], normalize: true}
    task: {type: identity_suite, initial: psi_i, final: psi_f, ...}
    numeric: {null_tol: 1.0e-10, epsilon: 0.02, seed: 0, tolerances: {continuity: 0.2}}
    outputs: {dir: out, csv: true, json: true}

Unknown keys are errors in strict mode.  Every error carries the dotted key
path of the offending entry.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .checks import CHECKS
from .entanglement import MultiParticleState
from .states import (MODEL_KINDS, PACKET_KINDS, PacketSpec, Superposition, WaveModel, Wavefunction,
                     build_wavefunction)


class ConfigParseError(Exception):
    """The file is missing or is not a YAML mapping."""


class ConfigValidationError(Exception):
    """The tree parsed but violates the schema; ``path`` names the offending key."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def _join(path: str, key) -> str:
    return f"{path}.{key}" if path else str(key)


# ---------------------------------------------------------------------------
# Field readers

_MISSING = object()


class _Section:
    """Reads keys from one mapping and remembers which were consumed."""

    def __init__(self, data, path: str, strict: bool):
        if not isinstance(data, dict):
            raise ConfigValidationError(path, f"expected a mapping, got {type(data).__name__}")
        self.data, self.path, self.strict = data, path, strict
        self.seen: set = set()

    def raw(self, key, default=_MISSING):
        self.seen.add(key)
        if key in self.data:
            return self.data[key]
        if default is _MISSING:
            raise ConfigValidationError(_join(self.path, key), "required key is missing")
        return default

    def number(self, key, default=_MISSING, *, positive=False, nonneg=False, integer=False, lo=None, hi=None):
        v = self.raw(key, default)
        p = _join(self.path, key)
        if v is None and default is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigValidationError(p, f"expected a number, got {v!r}")
        if integer and (not float(v).is_integer()):
            raise ConfigValidationError(p, f"expected an integer, got {v!r}")
        v = int(v) if integer else float(v)
        if not np.isfinite(v):
            raise ConfigValidationError(p, "must be finite")
        if positive and not v > 0:
            raise ConfigValidationError(p, f"must be positive, got {v}")
        if nonneg and v < 0:
            raise ConfigValidationError(p, f"must be non-negative, got {v}")
        if lo is not None and v < lo:
            raise ConfigValidationError(p, f"must be >= {lo}, got {v}")
        if hi is not None and v > hi:
            raise ConfigValidationError(p, f"must be <= {hi}, got {v}")
        return v

    def string(self, key, default=_MISSING, choices=None):
        v = self.raw(key, default)
        p = _join(self.path, key)
        if v is None and default is None:
            return None
        if not isinstance(v, str):
            raise ConfigValidationError(p, f"expected a string, got {v!r}")
        if choices is not None and v not in choices:
            raise ConfigValidationError(p, f"{v!r} is not one of {list(choices)}")
        return v

    def boolean(self, key, default=_MISSING):
        v = self.raw(key, default)
        if not isinstance(v, bool):
            raise ConfigValidationError(_join(self.path, key), f"expected true/false, got {v!r}")
        return v

    def sub(self, key, default=_MISSING) -> "_Section":
        v = self.raw(key, default)
        return _Section({} if v is None else v, _join(self.path, key), self.strict)

    def finish(self):
        extra = sorted(set(self.data) - self.seen, key=str)
        if extra and self.strict:
            raise ConfigValidationError(_join(self.path, extra[0]), "unknown key")


def _range(sec: _Section, key, default=_MISSING) -> np.ndarray | None:
    """{min, max, n} -> linspace."""
    if default is None and key not in sec.data:
        sec.seen.add(key)
        return None
    r = sec.sub(key, default)
    lo, hi = r.number("min"), r.number("max")
    n = r.number("n", integer=True, lo=1)
    r.finish()
    if n > 1 and not hi > lo:
        raise ConfigValidationError(_join(r.path, "max"), "must exceed min")
    return np.linspace(lo, hi, n)


def _pair_of_numbers(sec: _Section, key, default=_MISSING):
    v = sec.raw(key, default)
    p = _join(sec.path, key)
    if (not isinstance(v, (list, tuple)) or len(v) != 2
            or any(isinstance(a, bool) or not isinstance(a, (int, float)) for a in v)):
        raise ConfigValidationError(p, f"expected a two-number list, got {v!r}")
    return float(v[0]), float(v[1])


def _complex(v, path: str) -> complex:
    """A coefficient is a number or a [re, im] pair."""
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(
            isinstance(a, (int, float)) and not isinstance(a, bool) for a in v):
        return complex(v[0], v[1])
    raise ConfigValidationError(path, f"expected a number or [re, im], got {v!r}")


# ---------------------------------------------------------------------------
# Scenario

TASK_TYPES = ("current_grid", "trajectory", "averaging_check", "measurement_limit",
              "correlation_pipeline", "identity_suite")


@dataclass
class Numeric:
    null_tol: float = 1e-10
    overlap_floor: float = 1e-8
    fd_step: float = 1e-3
    quad_nodes: int | None = None
    epsilon: float = 0.02
    seed: int = 0
    tolerances: dict = field(default_factory=dict)


@dataclass
class Outputs:
    dir: str = "out"
    csv: bool = True
    json: bool = True


@dataclass
class Scenario:
    name: str
    model: WaveModel
    states: dict            # name -> Wavefunction or MultiParticleState
    state_specs: dict       # name -> validated plain mapping (for the report)
    task: dict              # validated task parameters, "type" included
    numeric: Numeric
    outputs: Outputs
    source: dict            # the raw tree as loaded
    path: str | None = None

    def state(self, name: str):
        return self.states[name]

    def config_hash(self) -> str:
        """sha256 of the raw tree serialised as canonical JSON."""
        blob = json.dumps(self.source, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()


def _load_model(sec: _Section) -> WaveModel:
    m = sec.sub("model")
    kind = m.string("kind", choices=MODEL_KINDS)
    mass = m.number("mass", 1.0, positive=True)
    m.finish()
    return WaveModel(kind, mass)


def _load_states(sec: _Section, model: WaveModel, numeric: Numeric) -> tuple[dict, dict]:
    raw = sec.raw("states")
    if not isinstance(raw, dict) or not raw:
        raise ConfigValidationError("states", "expected a non-empty mapping of named states")
    specs, built = {}, {}
    pending = dict(raw)
    # composite states may reference others defined anywhere in the section
    rank = {"superposition": 1, "multi_particle": 2}
    order = sorted(pending, key=lambda k: rank.get(pending[k].get("kind"), 0) if isinstance(pending[k], dict) else 0)
    for name in order:
        p = _join("states", name)
        s = _Section(pending[name], p, sec.strict)
        kind = s.string("kind", choices=PACKET_KINDS + ("superposition", "multi_particle"))
        if kind in PACKET_KINDS:
            params = {k: v for k, v in s.data.items() if k != "kind"}
            s.seen.update(params)
            for k, v in params.items():
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ConfigValidationError(_join(p, k), f"expected a number, got {v!r}")
            if kind == "gaussian_momentum" and "nodes" not in params and numeric.quad_nodes is not None:
                params["nodes"] = numeric.quad_nodes
            try:
                spec = PacketSpec(kind, model, params)
            except ValueError as exc:
                raise ConfigValidationError(p, str(exc)) from None
            built[name] = build_wavefunction(spec)
            specs[name] = spec.to_dict()
        elif kind == "superposition":
            terms = s.raw("terms")
            if not isinstance(terms, list) or not terms:
                raise ConfigValidationError(_join(p, "terms"), "expected a non-empty list of [coefficient, state]")
            out = []
            for i, term in enumerate(terms):
                tp = _join(_join(p, "terms"), i)
                if not isinstance(term, list) or len(term) != 2:
                    raise ConfigValidationError(tp, "expected [coefficient, state]")
                c = _complex(term[0], tp)
                out.append((c, _ref(built, term[1], tp, Wavefunction)))
            built[name] = Superposition(out)
            specs[name] = {"kind": kind, "terms": terms}
        else:
            terms = s.raw("terms")
            normalize = s.boolean("normalize", False)
            if not isinstance(terms, list) or not terms:
                raise ConfigValidationError(_join(p, "terms"), "expected a non-empty list of [coefficient, [states]]")
            out = []
            for i, term in enumerate(terms):
                tp = _join(_join(p, "terms"), i)
                if not isinstance(term, list) or len(term) != 2 or not isinstance(term[1], list):
                    raise ConfigValidationError(tp, "expected [coefficient, [state, state, ...]]")
                c = _complex(term[0], tp)
                out.append((c, [_ref(built, r, _join(tp, j), Wavefunction) for j, r in enumerate(term[1])]))
            try:
                st = MultiParticleState(out)
            except ValueError as exc:
                raise ConfigValidationError(p, str(exc)) from None
            built[name] = st.normalized() if normalize else st
            specs[name] = {"kind": kind, "terms": terms, "normalize": normalize}
        s.finish()
    return built, specs


def _ref(built: dict, name, path: str, cls):
    if not isinstance(name, str):
        raise ConfigValidationError(path, f"expected a state name, got {name!r}")
    if name not in built:
        raise ConfigValidationError(path, f"unknown or not yet buildable state {name!r}")
    obj = built[name]
    if not isinstance(obj, cls):
        raise ConfigValidationError(path, f"state {name!r} has the wrong type ({type(obj).__name__})")
    return obj


def _state_ref(t: _Section, key: str, states: dict, cls=Wavefunction, optional=False):
    name = t.string(key, None if optional else _MISSING)
    if name is None:
        return None
    _ref(states, name, _join(t.path, key), cls)
    return name


def _load_task(sec: _Section, states: dict, numeric: Numeric) -> dict:
    t = sec.sub("task")
    kind = t.string("type", choices=TASK_TYPES)
    out: dict[str, Any] = {"type": kind}
    if kind == "current_grid":
        out["initial"] = _state_ref(t, "initial", states)
        out["final"] = _state_ref(t, "final", states, optional=True)
        out["t"] = _range(t, "t")
        out["x"] = _range(t, "x")
    elif kind == "trajectory":
        out["initial"] = _state_ref(t, "initial", states)
        out["final"] = _state_ref(t, "final", states, optional=True)
        out["start"] = _pair_of_numbers(t, "start")
        out["span"] = t.number("span", positive=True)
        out["step"] = t.number("step", positive=True)
        out["box"] = _box(t)
        n = out["span"] / out["step"]
        if abs(n - round(n)) > 1e-9 * max(n, 1.0):
            raise ConfigValidationError(_join(t.path, "step"), "span must be an integer multiple of step")
    elif kind == "averaging_check":
        out["initial"] = _state_ref(t, "initial", states)
        f = t.sub("family")
        out["family"] = {
            "type": f.string("type", choices=("position", "momentum")),
            "min": f.number("min"), "max": f.number("max"),
            "n": f.number("n", integer=True, lo=2),
            "t_f": f.number("t_f", 0.0),
            "sampled": f.boolean("sampled", False),
        }
        f.finish()
        if not out["family"]["max"] > out["family"]["min"]:
            raise ConfigValidationError(_join(f.path, "max"), "must exceed min")
        if out["family"]["sampled"] and out["family"]["type"] != "position":
            raise ConfigValidationError(_join(f.path, "sampled"), "only position families can be sampled")
        p = t.sub("probes")
        out["probes"] = {"t": _range(p, "t"), "x": _range(p, "x")}
        p.finish()
    elif kind == "measurement_limit":
        out["initial"] = _state_ref(t, "initial", states)
        out["x_f"] = t.number("x_f")
        out["t_f"] = t.number("t_f")
        times = t.raw("times", None)
        if times is None:
            times = [out["t_f"] - 1.0, out["t_f"] - 0.1, out["t_f"] - 1e-3, out["t_f"]]
        if not isinstance(times, list) or not times or any(
                isinstance(v, bool) or not isinstance(v, (int, float)) for v in times):
            raise ConfigValidationError(_join(t.path, "times"), "expected a non-empty list of numbers")
        out["times"] = [float(v) for v in times]
        out["slice"] = _range(t, "slice", None)
    elif kind == "correlation_pipeline":
        out["state"] = _state_ref(t, "state", states, MultiParticleState)
        out["t_f"] = t.number("t_f")
        out["t_prime_f"] = t.number("t_prime_f")
        o = t.sub("outcomes")
        out["outcomes"] = {"min": o.number("min"), "max": o.number("max")}
        o.finish()
        if not out["outcomes"]["max"] > out["outcomes"]["min"]:
            raise ConfigValidationError(_join(o.path, "max"), "must exceed min")
        p = t.sub("probes")
        out["probes"] = {"x": _range(p, "x"), "x_prime": _range(p, "x_prime")}
        p.finish()
        times = t.raw("times", None)
        if times is None:
            times = [[out["t_f"], out["t_prime_f"]]]
        if not isinstance(times, list) or not times or any(
                not isinstance(v, list) or len(v) != 2 for v in times):
            raise ConfigValidationError(_join(t.path, "times"), "expected a list of [t, t_prime] pairs")
        out["times"] = [(float(a), float(b)) for a, b in times]
        out["expect_entangled"] = t.boolean("expect_entangled", True)
        if states[out["state"]].n != 2:
            raise ConfigValidationError(_join(t.path, "state"), "the correlation pipeline needs a two-particle state")
    else:  # identity_suite
        out["initial"] = _state_ref(t, "initial", states)
        out["final"] = _state_ref(t, "final", states)
        p = t.sub("probes")
        out["probes"] = {"t": _range(p, "t"), "x": _range(p, "x")}
        p.finish()
        tr = t.sub("trajectory")
        out["trajectory"] = {"start": _pair_of_numbers(tr, "start"),
                             "span": tr.number("span", positive=True),
                             "step": tr.number("step", positive=True)}
        tr.finish()
        sl = t.raw("slices", None)
        if sl is not None:
            out["slices"] = _pair_of_numbers(t, "slices")
        else:
            out["slices"] = None
        steps = t.raw("steps", None)
        out["steps"] = _pair_of_numbers(t, "steps") if steps is not None else (1e-2, 5e-3)
        out["box"] = _box(t)
    if kind in ("current_grid", "trajectory", "identity_suite"):
        out["overlap_quad"] = None
        if "overlap_quad" in t.data:
            q = t.sub("overlap_quad")
            out["overlap_quad"] = (q.number("min"), q.number("max"), q.number("n", integer=True, lo=3))
            q.finish()
            if not out["overlap_quad"][1] > out["overlap_quad"][0]:
                raise ConfigValidationError(_join(q.path, "max"), "must exceed min")
        else:
            t.seen.add("overlap_quad")
    t.finish()
    return out


def _box(t: _Section):
    if "box" not in t.data:
        t.seen.add("box")
        return None
    b = t.sub("box")
    box = tuple(b.number(k) for k in ("t_min", "t_max", "x_min", "x_max"))
    b.finish()
    if not (box[1] > box[0] and box[3] > box[2]):
        raise ConfigValidationError(b.path, "box must have t_max > t_min and x_max > x_min")
    return box


def _load_numeric(sec: _Section) -> Numeric:
    n = sec.sub("numeric", {})
    out = Numeric(
        null_tol=n.number("null_tol", 1e-10, nonneg=True),
        overlap_floor=n.number("overlap_floor", 1e-8, nonneg=True),
        fd_step=n.number("fd_step", 1e-3, positive=True),
        quad_nodes=n.number("quad_nodes", None, integer=True, lo=8),
        epsilon=n.number("epsilon", 0.02, positive=True),
        seed=n.number("seed", 0, integer=True, nonneg=True),
    )
    tol = n.sub("tolerances", {})
    for k in list(tol.data):
        if k not in CHECKS:
            raise ConfigValidationError(_join(tol.path, k), "unknown check name")
        out.tolerances[k] = tol.number(k, positive=True)
    tol.finish()
    n.finish()
    return out


def _load_outputs(sec: _Section) -> Outputs:
    o = sec.sub("outputs", {})
    out = Outputs(dir=o.string("dir", "out"), csv=o.boolean("csv", True), json=o.boolean("json", True))
    o.finish()
    return out


def parse_scenario(tree, strict: bool = True, path: str | None = None) -> Scenario:
    """Validate an already-parsed tree."""
    if not isinstance(tree, dict):
        raise ConfigParseError("configuration must be a mapping at the top level")
    top = _Section(tree, "", strict)
    name = top.string("name")
    model = _load_model(top)
    numeric = _load_numeric(top)
    states, specs = _load_states(top, model, numeric)
    task = _load_task(top, states, numeric)
    outputs = _load_outputs(top)
    top.finish()
    return Scenario(name, model, states, specs, task, numeric, outputs, tree, path)


def load_scenario(path, strict: bool = True) -> Scenario:
    """Read and validate a scenario file.

    Raises
    ------
    ConfigParseError
        The file is missing or is not valid YAML.
    ConfigValidationError
        A key is unknown, missing, or out of range.
    """
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigParseError(f"cannot read {p}: {exc.strerror}") from None
    try:
        tree = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"{p}: {exc}") from None
    return parse_scenario(tree, strict, str(p))
