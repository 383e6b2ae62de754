"""Experiment configuration: a strict JSON document validated by a schema.

Complex values may be written as a JSON number, a string such as ``"0.1-0.2j"``
or an object ``{"re": 0.1, "im": -0.2}``.  Omitted fields take the defaults
of :data:`DEFAULTS`, adjusted per experiment by :data:`EXPERIMENT_DEFAULTS`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace

import jsonschema

from .drivers import DriverSpec, Family
from .errors import SchemaError
from .observables import names as observable_names

EXPERIMENTS = ("green-converge", "invariance", "mixing", "entropy-separated",
               "entropy-partition", "entropy-local", "lyapunov", "birkhoff",
               "graph-volume", "log-moment", "alpha-ergodic")

UINT64_MAX = (1 << 64) - 1

_COMPLEX = {
    "oneOf": [
        {"type": "number"},
        {"type": "string", "pattern": r"^\s*[-+0-9.eEjJ()\s]+$"},
        {"type": "object", "properties": {"re": {"type": "number"}, "im": {"type": "number"}},
         "required": ["re"], "additionalProperties": False},
    ]
}
_COMPLEX_OR_LIST = {"oneOf": [_COMPLEX, {"type": "array", "items": _COMPLEX, "minItems": 1}]}
_POS_INT = {"type": "integer", "minimum": 1}
_OBSERVABLE_NAMES = observable_names() + [n + "*param" for n in observable_names()]

DRIVER_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["iid", "cycle", "parameter_map"]},
        "family": {"enum": ["power", "diagonal"]},
        "center": _COMPLEX_OR_LIST,
        "radius": {"oneOf": [{"type": "number", "minimum": 0},
                             {"type": "array", "items": {"type": "number", "minimum": 0},
                              "minItems": 1}]},
        "params": {"type": "array", "minItems": 1, "items": _COMPLEX_OR_LIST},
        "poly": {"type": "array", "minItems": 1, "items": _COMPLEX},
        "origin": _COMPLEX_OR_LIST,
        "direction": _COMPLEX_OR_LIST,
        "init": {"enum": ["circle", "point", "disk"]},
        "init_value": _COMPLEX,
        "project_circle": {"type": "boolean"},
        "floor": {"type": "number", "exclusiveMinimum": 0},
    },
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["experiment", "k", "d", "driver"],
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "k": {"type": "integer", "minimum": 1, "maximum": 4},
        "d": {"type": "integer", "minimum": 2, "maximum": 8},
        "driver": DRIVER_SCHEMA,
        "depth": {"type": "integer", "minimum": 0},
        "n_min": _POS_INT,
        "n_max": _POS_INT,
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "samples": _POS_INT,
        "orbits": _POS_INT,
        "steps": _POS_INT,
        "candidates": _POS_INT,
        "candidate_source": {"enum": ["mu", "fs"]},
        "sectors": {"type": "integer", "minimum": 1, "maximum": 62},
        "rings": {"type": "integer", "minimum": 1, "maximum": 8},
        "centers": _POS_INT,
        "probes": _POS_INT,
        "observables": {"type": "array", "items": {"enum": _OBSERVABLE_NAMES}, "minItems": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": UINT64_MAX},
        "output_path": {"type": "string", "minLength": 1},
    },
}

DEFAULTS = {
    "depth": 20,
    "n_min": 1,
    "n_max": 8,
    "epsilon": 0.05,
    "samples": 100_000,
    "orbits": 1000,
    "steps": 1000,
    "candidates": 200_000,
    "candidate_source": "mu",
    "sectors": 2,
    "rings": 1,
    "centers": 1000,
    "probes": 1000,
    "observables": ["re_z", "im_z", "height", "re_u2", "im_u2", "re_u3", "poisson", "bump"],
    "seed": 0,
}

EXPERIMENT_DEFAULTS = {
    "green-converge": {"n_max": 25},
    "mixing": {"samples": 1_000_000, "observables": ["poisson", "poisson"]},
    "entropy-separated": {"n_min": 4},
    "entropy-partition": {"n_max": 10},
    "entropy-local": {"n_min": 4, "epsilon": 0.1, "samples": 200_000},
    "graph-volume": {"n_max": 4, "samples": 1_000_000},
    "alpha-ergodic": {"orbits": 100, "steps": 10_000, "observables": ["cos_angle"]},
}


# ---------------------------------------------------------------------------
# complex values


def parse_complex(v) -> complex:
    if isinstance(v, dict):
        return complex(float(v["re"]), float(v.get("im", 0.0)))
    if isinstance(v, str):
        return complex(v.replace(" ", ""))
    return complex(v)


def emit_complex(z: complex):
    z = complex(z)
    return {"re": z.real, "im": z.imag}


def _ctuple(v) -> tuple:
    if isinstance(v, list):
        return tuple(parse_complex(x) for x in v)
    return (parse_complex(v),)


# ---------------------------------------------------------------------------
# typed config


@dataclass(frozen=True)
class DriverConfig:
    kind: str
    family: str = "power"
    center: tuple = (0j,)
    radius: tuple = (0.1,)
    params: tuple = ()
    poly: tuple = ()
    origin: tuple = (0j,)
    direction: tuple = (1 + 0j,)
    init: str = "circle"
    init_value: complex = 0j
    project_circle: bool = False
    floor: float = 1e-8

    def to_spec(self, k: int, d: int) -> DriverSpec:
        fam = Family(self.family, k, d)
        if self.kind == "iid":
            return DriverSpec.iid(fam, list(self.center), list(self.radius), floor=self.floor)
        if self.kind == "cycle":
            return DriverSpec.cycle_of(fam, [list(p) for p in self.params], floor=self.floor)
        return DriverSpec.parameter_map(fam, list(self.poly), origin=list(self.origin),
                                        direction=list(self.direction), init=self.init,
                                        init_value=self.init_value,
                                        project_circle=self.project_circle, floor=self.floor)

    def to_json(self) -> dict:
        out = {"kind": self.kind, "family": self.family,
               "center": [emit_complex(c) for c in self.center],
               "radius": list(self.radius)}
        if self.params:
            out["params"] = [[emit_complex(c) for c in p] for p in self.params]
        if self.poly:
            out["poly"] = [emit_complex(c) for c in self.poly]
        out.update({"origin": [emit_complex(c) for c in self.origin],
                    "direction": [emit_complex(c) for c in self.direction],
                    "init": self.init, "init_value": emit_complex(self.init_value),
                    "project_circle": self.project_circle, "floor": self.floor})
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    k: int
    d: int
    driver: DriverConfig
    depth: int
    n_min: int
    n_max: int
    epsilon: float
    samples: int
    orbits: int
    steps: int
    candidates: int
    candidate_source: str
    sectors: int
    rings: int
    centers: int
    probes: int
    observables: tuple
    seed: int
    output_path: str

    def driver_spec(self) -> DriverSpec:
        return self.driver.to_spec(self.k, self.d)

    def to_json(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "driver":
                v = v.to_json()
            elif f.name == "observables":
                v = list(v)
            out[f.name] = v
        return out

    def config_hash(self) -> str:
        """Hash of everything except the output location."""
        doc = self.to_json()
        doc.pop("output_path")
        text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {key: v for key, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self


_VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)


def _error_path(err) -> str:
    return ".".join(str(p) for p in err.absolute_path)


def _schema_errors(doc) -> list:
    out = []
    for err in sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path))):
        base = _error_path(err)
        if err.validator == "additionalProperties":
            allowed = set(err.schema.get("properties", {}))
            for key in sorted(set(err.instance) - allowed):
                out.append((f"{base}.{key}" if base else key, "unknown key"))
        elif err.validator in ("minimum", "maximum", "exclusiveMinimum", "exclusiveMaximum"):
            out.append((base, f"out of range: {err.message}"))
        elif err.validator == "type":
            out.append((base, f"wrong type: {err.message}"))
        else:
            out.append((base, err.message))
    return out


def _driver_config(raw: dict, k: int, d: int, errors: list) -> DriverConfig | None:
    kind = raw["kind"]
    kw = {"kind": kind}
    for key in ("family", "init", "project_circle", "floor"):
        if key in raw:
            kw[key] = raw[key]
    for key in ("center", "origin", "direction", "poly"):
        if key in raw:
            kw[key] = _ctuple(raw[key])
    if "init_value" in raw:
        kw["init_value"] = parse_complex(raw["init_value"])
    if "radius" in raw:
        r = raw["radius"]
        kw["radius"] = tuple(float(x) for x in (r if isinstance(r, list) else [r]))
    if "params" in raw:
        kw["params"] = tuple(_ctuple(p) for p in raw["params"])
    cfg = DriverConfig(**kw)
    if kind == "cycle" and not cfg.params:
        errors.append(("driver.params", "cycle drivers need a nonempty params list"))
    if kind == "parameter_map" and not cfg.poly:
        errors.append(("driver.poly", "parameter_map drivers need poly coefficients"))
    if kind != "cycle" and "params" in raw:
        errors.append(("driver.params", f"only cycle drivers take params (kind is {kind})"))
    try:
        p = Family(cfg.family, k, d).n_params
    except ValueError as exc:
        errors.append(("driver.family", str(exc)))
        return None
    for key in ("center", "radius", "origin", "direction"):
        v = getattr(cfg, key)
        if len(v) not in (1, p):
            errors.append((f"driver.{key}", f"needs 1 or {p} entries for family {cfg.family}"))
    for i, prm in enumerate(cfg.params):
        if len(prm) not in (1, p):
            errors.append((f"driver.params.{i}", f"needs 1 or {p} entries for family {cfg.family}"))
    return cfg


def parse_config_dict(doc) -> ExperimentConfig:
    errors = _schema_errors(doc)
    if errors:
        raise SchemaError(errors)
    exp = doc["experiment"]
    merged = dict(DEFAULTS)
    merged.update(EXPERIMENT_DEFAULTS.get(exp, {}))
    merged.update({key: v for key, v in doc.items() if key != "driver"})
    merged.setdefault("output_path", f"{exp}.csv")
    driver = _driver_config(doc["driver"], doc["k"], doc["d"], errors)
    if merged["n_min"] > merged["n_max"]:
        errors.append(("n_min", f"out of range: n_min={merged['n_min']} exceeds n_max={merged['n_max']}"))
    if errors:
        raise SchemaError(errors)
    merged["driver"] = driver
    merged["observables"] = tuple(merged["observables"])
    merged["epsilon"] = float(merged["epsilon"])
    return ExperimentConfig(**merged)


def parse_config(text: str) -> ExperimentConfig:
    """Validate a JSON document and return the typed config with defaults."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError([("", f"not valid JSON: {exc}")]) from None
    return parse_config_dict(doc)


def emit_config(cfg: ExperimentConfig) -> str:
    """Canonical JSON text; ``parse_config(emit_config(c)) == c``."""
    return json.dumps(cfg.to_json(), indent=2, sort_keys=False)


def config_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)
