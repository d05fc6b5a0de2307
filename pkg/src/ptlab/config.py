"""Scenario configuration: flat TOML with dotted section prefixes.

Example::

    command = "simulate"
    seed = 7
    horizon.T = 1.0
    controller.kind = "robust"
    controller.k = 0.1
    controller.theta = 0.25
    plant.preset = "robust_benchmark"
    initial.x0 = [-1.0, -0.1, 0.1, 1.0]

Every key is checked against the schema of its command before any work
starts: unknown keys, wrong types and out-of-range values are collected and
reported together, each under its full dotted path.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ValidationError

COMMANDS = ("simulate", "compare", "bound", "consensus", "containment")
BUNDLED_DIR = Path(__file__).parent / "configs"

SCALAR_KINDS = ("robust", "adaptive_ti", "adaptive_tv", "nussbaum")
MIMO_KINDS = ("square", "nonsquare")
PLANT_PRESETS = ("robust_benchmark", "polynomial", "random_square", "random_nonsquare", "matrix")
DIST_KINDS = ("constant", "sinusoid", "square")
BOUND_KINDS = ("FT1", "FastFT2", "SemiGlobal3", "PracticalFT4", "PracticalFT5", "Fixed6",
               "Fixed7", "Fixed8", "Fixed9", "Predefined10", "PT11", "PT12", "all")
COEFFICIENT_NAMES = ("k", "k1", "k2", "p", "q", "m", "n", "alpha", "beta", "gamma", "theta",
                     "eta", "Tp")


@dataclass(frozen=True)
class Key:
    kind: str                      # float, int, bool, str, strs, floats, matrix, ...
    default: object = None
    check: object = None           # callable value -> error text or None
    choices: tuple = ()


def _pos(v):
    return None if v > 0 else "must be > 0"


def _nonneg(v):
    return None if v >= 0 else "must be >= 0"


def _ge1(v):
    return None if v >= 1 else "must be >= 1"


def _unit_open(v):
    return None if 0 < v < 1 else "must satisfy 0 < value < 1"


COMMON = {
    "command": Key("str", choices=COMMANDS),
    "seed": Key("int", 0, _nonneg),
    "output.dir": Key("str"),
    "horizon.T": Key("float", 1.0, _pos),
    "horizon.eps": Key("float", None, _pos),
    "horizon.mu_cap": Key("float", 1e6, _ge1),
    "integration.dt": Key("float", None, _pos),
    "integration.t_end": Key("float", None, _pos),
}

SIMULATE = {
    "controller.kind": Key("str", None, None, SCALAR_KINDS + MIMO_KINDS),
    "controller.k": Key("float", None, _pos),
    "controller.theta": Key("float", 0.0, _nonneg),
    "controller.gamma_theta": Key("float", 1.0, _pos),
    "controller.gamma_rho": Key("float", 1.0, _pos),
    "controller.gamma_delta": Key("float", 1.0, _pos),
    "estimates.theta_hat": Key("float", 0.0, _nonneg),
    "estimates.rho_hat": Key("float", 1.0),
    "estimates.delta_hat": Key("float", 0.0, _nonneg),
    "estimates.xi": Key("float", 0.5, _pos),
    "plant.preset": Key("str", None, None, PLANT_PRESETS),
    "plant.b": Key("float", 1.0),
    "plant.b_sign": Key("str", None, None, ("positive", "negative", "unknown")),
    "plant.b_lower": Key("float", None, _pos),
    "plant.theta": Key("floats", [1.0]),
    "plant.count": Key("int", 10, _pos),
    "plant.n": Key("int", 2, _pos),
    "plant.m": Key("int", 3, _pos),
    "plant.margin": Key("float", 0.5, _pos),
    "plant.drift": Key("float", 0.2, _nonneg),
    "plant.B": Key("matrix"),
    "plant.A": Key("matrix"),
    "plant.M": Key("matrix"),
    "disturbance.kinds": Key("strs", ["constant"], None, DIST_KINDS),
    "disturbance.amplitude": Key("float", 0.5),
    "disturbance.frequency": Key("floats_scalar", [1.0]),
    "disturbance.offset": Key("float", 0.0),
    "initial.x0": Key("floats_or_matrix"),
    "initial.x0_range": Key("float", 1.0, _pos),
    "report.level": Key("float", 1e-2, _pos),
}

COMPARE = {
    "compare.suite": Key("str", "double_integrator", None, ("double_integrator", "equivalence")),
    "compare.kinds": Key("strs", ["finite", "fixed", "predefined", "prescribed"], None,
                         ("finite", "fixed", "predefined", "prescribed")),
    "compare.x0": Key("matrix", [[0.2, -0.2], [0.4, 0.0]]),
    "compare.T1": Key("float", 0.2, _pos),
    "compare.T2": Key("float", 0.8, _pos),
    "compare.span": Key("float", 8.0, _pos),
    "compare.pt_span": Key("float", 2.0, _pos),
    "compare.plot_script": Key("bool", True),
    "compare.alphas": Key("floats", [1 / 3, 1 / 2, 2 / 3]),
    "compare.x0_first_order": Key("floats", [-1.0, 0.5, 2.0]),
    "compare.eps_fraction": Key("float", 1e-3, _unit_open),
}

BOUND = {
    "bound.kind": Key("str", None, None, BOUND_KINDS),
    "bound.V0": Key("float", 1.0, _nonneg),
    "bound.oracle": Key("bool", True),
    "bound.draws": Key("int", 20, _pos),
    "bound.d": Key("float", 0.0),
    **{f"coefficients.{c}": Key("float") for c in COEFFICIENT_NAMES},
}

GRAPH = {
    "graph.preset": Key("str", None, None, ("cycle", "path", "complete", "star", "chain")),
    "graph.path": Key("str"),
    "graph.n": Key("int", None, _pos),
    "graph.weight": Key("float", 1.0, _pos),
    "initial.x0": Key("floats"),
}

CONSENSUS = {
    **GRAPH,
    "consensus.k": Key("float", 1.0, _pos),
    "consensus.c": Key("float", None, _pos),
}

CONTAINMENT = {
    **GRAPH,
    "containment.k": Key("float", 1.0, _pos),
    "containment.c": Key("float", None, _pos),
    "containment.root": Key("int", 1, _pos),
}

SCHEMAS = {"simulate": SIMULATE, "compare": COMPARE, "bound": BOUND,
           "consensus": CONSENSUS, "containment": CONTAINMENT}


def _flatten(tree, prefix="", out=None):
    out = {} if out is None else out
    for k, v in tree.items():
        path = f"{prefix}{k}"
        if isinstance(v, dict):
            _flatten(v, path + ".", out)
        else:
            out[path] = v
    return out


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _coerce(path, key, value, errors):
    """Type-check one value; returns the normalized value or None after logging."""
    kind = key.kind

    def fail(text):
        errors.append(f"{path}: {text}")
        return None

    if kind == "float":
        if not _is_num(value):
            return fail(f"expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            return fail("must be finite")
    elif kind == "int":
        if not isinstance(value, int) or isinstance(value, bool):
            return fail(f"expected an integer, got {value!r}")
    elif kind == "bool":
        if not isinstance(value, bool):
            return fail(f"expected true or false, got {value!r}")
    elif kind == "str":
        if not isinstance(value, str):
            return fail(f"expected a string, got {value!r}")
        if key.choices and value not in key.choices:
            return fail(f"must be one of {', '.join(key.choices)} (got {value!r})")
    elif kind == "strs":
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value) or not value:
            return fail(f"expected a non-empty list of strings, got {value!r}")
        bad = [v for v in value if key.choices and v not in key.choices]
        if bad:
            return fail(f"entries must be among {', '.join(key.choices)} (got {bad})")
    elif kind == "floats":
        if not isinstance(value, list) or not value or not all(_is_num(v) for v in value):
            return fail(f"expected a non-empty list of numbers, got {value!r}")
        value = [float(v) for v in value]
    elif kind == "matrix":
        if (not isinstance(value, list) or not value
                or not all(isinstance(r, list) and r and all(_is_num(v) for v in r) for r in value)):
            return fail("expected a list of rows of numbers")
        if len({len(r) for r in value}) != 1:
            return fail("rows must have equal length")
        value = [[float(v) for v in r] for r in value]
    elif kind == "floats_scalar":
        value = _coerce(path, Key("floats"), [value] if _is_num(value) else value, errors)
        if value is not None and min(value) <= 0:
            return fail("entries must be > 0")
    elif kind == "floats_or_matrix":
        if isinstance(value, list) and value and all(isinstance(r, list) for r in value):
            return _coerce(path, Key("matrix"), value, errors)
        return _coerce(path, Key("floats"), value, errors)
    if key.check is not None and kind in ("float", "int"):
        msg = key.check(value)
        if msg:
            return fail(f"{msg} (got {value})")
    return value


@dataclass
class ScenarioConfig:
    """A validated configuration: ``values`` maps dotted keys to values with defaults filled."""

    command: str
    values: dict
    source: str = "<memory>"
    given: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    def echo(self):
        """Config as given plus the filled defaults (JSON-friendly)."""
        return {k: v for k, v in sorted(self.values.items()) if v is not None}


def validate(tree, command=None, source="<memory>"):
    """Validate a parsed TOML tree; ``command`` (from the CLI) overrides a missing key."""
    flat = _flatten(tree)
    errors = []
    cfg_cmd = flat.get("command")
    if cfg_cmd is not None and cfg_cmd not in COMMANDS:
        raise ValidationError([f"command: must be one of {', '.join(COMMANDS)} (got {cfg_cmd!r})"])
    if command is not None and cfg_cmd is not None and command != cfg_cmd:
        raise ValidationError([f"command: config is for {cfg_cmd!r} but {command!r} was requested"])
    command = command or cfg_cmd
    if command is None:
        raise ValidationError(["command: missing (set it in the file or use a subcommand)"])
    schema = {**COMMON, **SCHEMAS[command]}
    values = {}
    for path, value in flat.items():
        if path not in schema:
            errors.append(f"{path}: unknown key for command {command!r}")
            continue
        v = _coerce(path, schema[path], value, errors)
        if v is not None:
            values[path] = v
    for path, key in schema.items():
        values.setdefault(path, key.default)
    errors += _cross_checks(command, values, flat)
    if errors:
        raise ValidationError(errors)
    if values["horizon.eps"] is None:
        values["horizon.eps"] = 1e-4 * values["horizon.T"]
    if values["integration.dt"] is None:
        values["integration.dt"] = (1e-4 if command == "compare"
                                    else min(1e-3, values["horizon.eps"] / 10))
    values["command"] = command
    return ScenarioConfig(command=command, values=values, source=source, given=flat)


def _cross_checks(command, v, given):
    err = []

    def missing(key):
        # a key that was given but rejected already has its own message
        return v[key] is None and key not in given

    if v["horizon.eps"] is not None and not v["horizon.eps"] < v["horizon.T"]:
        err.append("horizon.eps: must be < horizon.T")
    if command == "simulate":
        kind = v["controller.kind"]
        if missing("controller.kind"):
            err.append("controller.kind: required")
        if missing("controller.k"):
            err.append("controller.k: required (k > 0)")
        if kind == "robust" or kind in MIMO_KINDS:
            if not v["controller.theta"] > 0:
                err.append(f"controller.theta: must be > 0 for {kind} (got {v['controller.theta']})")
        if missing("plant.preset"):
            err.append("plant.preset: required")
        preset = v["plant.preset"]
        if missing("initial.x0") and preset not in ("random_square", "random_nonsquare"):
            err.append("initial.x0: required")
        mimo_preset = preset in ("random_square", "random_nonsquare", "matrix")
        if kind in MIMO_KINDS and preset is not None and not mimo_preset:
            err.append(f"plant.preset: {preset!r} is a scalar plant but controller.kind is {kind!r}")
        if kind in SCALAR_KINDS and preset is not None and mimo_preset:
            err.append(f"plant.preset: {preset!r} is a matrix plant but controller.kind is {kind!r}")
        if preset == "matrix":
            if kind == "square" and v["plant.B"] is None:
                err.append("plant.B: required for a square matrix plant")
            if kind == "nonsquare" and (v["plant.A"] is None or v["plant.M"] is None):
                err.append("plant.A and plant.M: required for a non-square matrix plant")
        if kind == "square" and preset == "random_nonsquare" or \
                kind == "nonsquare" and preset == "random_square":
            err.append(f"plant.preset: {preset!r} does not match controller.kind {kind!r}")
        nf, nk = len(v["disturbance.frequency"] or [1]), len(v["disturbance.kinds"] or [1])
        if nf not in (1, nk):
            err.append(f"disturbance.frequency: give one value or one per disturbance kind "
                       f"({nk}), got {nf}")
    elif command == "bound":
        if missing("bound.kind"):
            err.append("bound.kind: required")
    elif command in ("consensus", "containment"):
        has_p, has_f = "graph.preset" in given, "graph.path" in given
        if has_p and has_f:
            err.append("graph: graph.preset and graph.path are mutually exclusive")
        elif not has_p and not has_f:
            err.append("graph: one of graph.preset or graph.path is required")
        if has_p and v["graph.n"] is None:
            err.append("graph.n: required with graph.preset")
        if missing("initial.x0"):
            err.append("initial.x0: required")
        elif v["initial.x0"] is not None and v["graph.n"] is not None and has_p and len(v["initial.x0"]) != v["graph.n"]:
            err.append(f"initial.x0: expected {v['graph.n']} entries (got {len(v['initial.x0'])})")
        if command == "consensus" and v["graph.preset"] == "chain":
            err.append("graph.preset: consensus needs an undirected graph (chain is directed)")
        if command == "containment" and has_p and v["graph.preset"] != "chain":
            err.append("graph.preset: containment needs a directed graph (use chain or graph.path)")
    return err


def parse_text(text, command=None, source="<memory>"):
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError([f"{source}: parse error: {exc}"]) from None
    return validate(tree, command, source)


def resolve(path):
    """A config path, or the name of a bundled config (with or without ``.toml``)."""
    p = Path(path)
    if p.exists():
        return p
    name = p.name if p.suffix == ".toml" else p.name + ".toml"
    bundled = BUNDLED_DIR / name
    if bundled.exists() and len(p.parts) == 1:
        return bundled
    return p


def load_config(path, command=None):
    """Read, parse and validate a configuration file.

    Raises
    ------
    OSError
        If the file cannot be read.
    ValidationError
        Parse errors (with line numbers) or every schema violation at once.
    """
    p = resolve(path)
    text = p.read_text(encoding="utf-8")
    cfg = parse_text(text, command, str(p))
    base = p.parent
    gp = cfg.values.get("graph.path")
    if gp is not None and not Path(gp).is_absolute():
        cfg.values["graph.path"] = str(base / gp)
    return cfg


def bundled_configs():
    return sorted(BUNDLED_DIR.glob("*.toml"))
