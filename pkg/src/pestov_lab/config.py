"""Run configuration: a flat table of dotted keys loaded from YAML.

Precedence, lowest first: built-in defaults, the config file, the
``PESTOV_LAB_SEED`` environment variable (for ``seed`` only), command-line flags.
Nested mappings in the file are flattened, so ``model: {kind: ...}`` and
``model.kind: ...`` are equivalent.
"""

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .manifold import ModelKind, make_model
from .measure import RNG_ALGORITHM

__all__ = ["DEFAULTS", "SUITES", "MIN_MC_COUNT", "RunConfig", "load_config", "parse_config"]

MIN_MC_COUNT = 1000
SUITES = ("structural", "pointwise", "global", "associated", "curvature", "all")
CONVERGENCE_KINDS = ("fd", "mc", "integrator")

DEFAULTS = {
    "model.kind": "FlatTorus",
    "model.dim": 2,
    "model.periods": None,
    "model.radius": None,
    "model.eps": None,
    "model.freq": None,
    "suite": "all",
    "seed": 20240601,
    "workers": 1,
    "points": 50,
    "functions": 5,
    "function.degree": 2,
    "mc.count": 100000,
    "fd.h": 1e-2,
    "fd.levels": 2,
    "tolerance.structural": 1e-6,
    "tolerance.pointwise": 1e-6,
    "tolerance.example": 1e-8,
    "tolerance.crosscheck": 1e-8,
    "tolerance.image": 1e-12,
    "tolerance.mc": 1e-12,
    "tolerance.invariance": 1e-8,
    "curvature.draws": 1000,
    "crosscheck.draws": 100,
    "convergence.kind": "mc",
    "convergence.ladder": [1e4, 1e5, 1e6],
    "flow.t": 2 * math.pi,
    "flow.dt": 1e-3,
    "flow.x0": None,
    "flow.a0": None,
    "flow.chart": 0,
    "flow.theta": None,
    "output.dir": "pestov_out",
    "rng.algorithm": RNG_ALGORITHM,
}

_INT_KEYS = {"model.dim", "seed", "workers", "points", "functions", "function.degree", "mc.count", "fd.levels",
             "curvature.draws", "crosscheck.draws", "flow.chart"}
_FLOAT_KEYS = {"model.radius", "model.eps", "model.freq", "fd.h", "flow.t", "flow.dt"} | {
    k for k in DEFAULTS if k.startswith("tolerance.")
}
_LIST_KEYS = {"model.periods", "convergence.ladder", "flow.x0", "flow.a0", "flow.theta"}


def _flatten(mapping, prefix=""):
    out = {}
    for key, value in mapping.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, name + "."))
        else:
            out[name] = value
    return out


def _key_lines(text):
    """Line numbers (1-based) of every flattened key in a YAML mapping document."""
    lines = {}

    def walk(node, prefix):
        if not isinstance(node, yaml.MappingNode):
            return
        for k, v in node.value:
            name = f"{prefix}{k.value}"
            lines[name] = k.start_mark.line + 1
            walk(v, name + ".")

    try:
        walk(yaml.compose(text), "")
    except yaml.YAMLError:
        pass
    return lines


def _coerce(key, value):
    if value is None:
        return None
    if key in _INT_KEYS:
        if isinstance(value, bool) or not float(value).is_integer():
            raise ValueError("expected an integer")
        return int(value)
    if key in _FLOAT_KEYS:
        if isinstance(value, bool):
            raise ValueError("expected a number")
        return float(value)
    if key in _LIST_KEYS:
        if key == "model.periods" and not isinstance(value, (list, tuple)):
            return [float(value)]
        if not isinstance(value, (list, tuple)):
            raise ValueError("expected a list")
        if key == "flow.a0":
            return [[float(c) for c in row] if isinstance(row, (list, tuple)) else float(row) for row in value]
        return [float(c) for c in value]
    return str(value)


@dataclass
class RunConfig:
    """Validated configuration values keyed by dotted names."""

    values: dict = field(default_factory=lambda: dict(DEFAULTS))
    lines: dict = field(default_factory=dict, repr=False)

    def __getitem__(self, key):
        return self.values[key]

    def with_overrides(self, overrides):
        """A new config with non-``None`` overrides applied and re-validated."""
        values = dict(self.values)
        for key, value in overrides.items():
            if value is not None:
                if key not in DEFAULTS:
                    raise ConfigError(f"unknown configuration key {key!r}", key=key)
                try:
                    values[key] = _coerce(key, value)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"{key}: {exc}", key=key) from None
        cfg = RunConfig(values, self.lines)
        cfg.validate()
        return cfg

    def _fail(self, key, message):
        raise ConfigError(f"{key}: {message}", key=key, line=self.lines.get(key))

    def validate(self):
        v = self.values
        try:
            ModelKind(v["model.kind"])
        except ValueError:
            self._fail("model.kind", f"unknown model {v['model.kind']!r}; choose from {[k.value for k in ModelKind]}")
        if v["model.dim"] < 2:
            self._fail("model.dim", "dimension must be at least 2")
        if v["suite"] not in SUITES:
            self._fail("suite", f"unknown suite {v['suite']!r}; choose from {list(SUITES)}")
        if not 0 <= v["seed"] < 2**64:
            self._fail("seed", "seed must be an unsigned 64-bit integer")
        for key in ("workers", "points", "functions", "curvature.draws", "crosscheck.draws"):
            if v[key] < 1:
                self._fail(key, "must be at least 1")
        if not 0 <= v["function.degree"] <= 3:
            self._fail("function.degree", "must be between 0 and 3")
        if v["mc.count"] < MIN_MC_COUNT:
            self._fail("mc.count", f"count {v['mc.count']} is below the minimum {MIN_MC_COUNT} for MC checks")
        for key in DEFAULTS:
            if key.startswith("tolerance.") and not v[key] > 0:
                self._fail(key, "tolerances must be positive")
        if not v["fd.h"] > 0:
            self._fail("fd.h", "step must be positive")
        if v["fd.levels"] < 0:
            self._fail("fd.levels", "must be non-negative")
        if not v["flow.dt"] > 0:
            self._fail("flow.dt", "integrator step must be positive")
        if v["convergence.kind"] not in CONVERGENCE_KINDS:
            self._fail("convergence.kind", f"choose from {list(CONVERGENCE_KINDS)}")
        if v["rng.algorithm"] != RNG_ALGORITHM:
            self._fail("rng.algorithm", f"only {RNG_ALGORITHM!r} is available")
        try:
            self.model()
        except ValueError as exc:
            self._fail("model", str(exc))
        return self

    def model(self):
        v = self.values
        params = {
            "periods": v["model.periods"],
            "radius": v["model.radius"],
            "eps": v["model.eps"],
            "freq": v["model.freq"],
        }
        if params["periods"] is not None and len(params["periods"]) == 1:
            params["periods"] = params["periods"][0]
        return make_model(v["model.kind"], v["model.dim"], **params)

    def to_dict(self):
        return {k: self.values[k] for k in sorted(self.values)}

    def dumps(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=None)

    def digest(self):
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def parse_config(text, env=None):
    """Parse YAML text into a validated :class:`RunConfig`."""
    env = os.environ if env is None else env
    lines = _key_lines(text)
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"malformed config: {getattr(exc, 'problem', exc)}", line=line) from None
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of dotted keys", line=1)
    values = dict(DEFAULTS)
    for key, value in _flatten(data).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown configuration key {key!r}", key=key, line=lines.get(key))
        try:
            values[key] = _coerce(key, value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: {exc}", key=key, line=lines.get(key)) from None
    seed = env.get("PESTOV_LAB_SEED")
    if seed:
        try:
            values["seed"] = int(seed)
        except ValueError:
            raise ConfigError("PESTOV_LAB_SEED must be an integer", key="seed") from None
    cfg = RunConfig(values, lines)
    return cfg.validate()


def load_config(path=None, env=None):
    if path is None:
        return parse_config("", env)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, env)
