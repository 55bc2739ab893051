"""JSON scenarios: schema, defaults, validation and object construction.

Every default lives in ``SCHEMA``; ``load_scenario`` fills them in before
hashing, so the digest identifies the full configuration that ran.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .control import ControlScenario, OptimizerConfig, controlled_model
from .errors import ModelValidationError, ParseError, ValidationError
from .grid import KERNEL_FAMILIES, REGION_SHAPES, ControlRegion, build_domain, build_kernel, make_region, \
    assemble_robin_laplacian
from .integrator import SCHEMES, Operators, SolverConfig, StateField, build_system, read_field_csv
from .models import FOI_FAMILIES, MODEL_TAGS, ForceOfInfection, ModelSpec, Seasonality
from .spectral import LogisticConfig, PeriodicConfig

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 1, "maxItems": 2}

_FIELD = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"kind": {"const": "constant"}, "value": _NUM},
            "required": ["kind", "value"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "gaussian-bump"},
                "center": _VEC,
                "width": _NUM,
                "height": _NUM,
            },
            "required": ["kind", "center", "width", "height"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "from-file"},
                "path": {"type": "string", "description": "CSV relative to the scenario file"},
                "column": {"type": "string"},
            },
            "required": ["kind", "path", "column"],
            "additionalProperties": False,
        },
    ]
}

_RESPONSE = {
    "type": "object",
    "properties": {
        "family": {"enum": list(FOI_FAMILIES), "default": "linear"},
        "k": {**_NUM, "default": 1.0},
        "p": {**_NUM, "default": 1.0},
        "q": {**_NUM, "default": 1.0},
        "alpha_g": {**_NUM, "default": 1.0},
        "beta_g": {**_NUM, "default": 0.0},
    },
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["domain", "diffusion", "kernel", "model", "solver", "initial"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "default": "scenario"},
        "domain": {
            "type": "object",
            "required": ["extents", "nodes"],
            "additionalProperties": False,
            "properties": {
                "dimension": {"enum": [1, 2], "default": 1},
                "extents": _VEC,
                "nodes": {"type": "array", "items": {"type": "integer"}, "minItems": 1, "maxItems": 2},
            },
        },
        "diffusion": {
            "type": "object",
            "required": ["d1"],
            "additionalProperties": False,
            "properties": {"d1": _NUM, "alpha": {**_NUM, "default": 0.0}},
        },
        "kernel": {
            "type": "object",
            "required": ["family"],
            "additionalProperties": False,
            "properties": {
                "family": {"enum": list(KERNEL_FAMILIES)},
                "sigma": {"oneOf": [_NUM, _VEC, {"type": "null"}], "default": None},
                "amplitude": {**_NUM, "default": 1.0},
            },
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tag": {"enum": list(MODEL_TAGS), "default": "core"},
                "a11": {**_NUM, "default": 0.0},
                "a22": {**_NUM, "default": 1.0},
                "d2": {**_NUM, "default": 0.0},
                "d3": {**_NUM, "default": 0.0},
                "mu": {**_NUM, "default": 0.0},
                "gamma_r": {**_NUM, "default": 0.0},
                "capacity": {**_FIELD, "description": "human capacity C(x), malaria only"},
            },
        },
        "force": {**_RESPONSE, "default": {}},
        "response": {**_RESPONSE, "description": "mosquito response h, malaria only"},
        "seasonality": {
            "type": "object",
            "additionalProperties": False,
            "default": {},
            "properties": {
                "family": {"enum": ["constant", "cosine"], "default": "constant"},
                "mean": {**_NUM, "default": 1.0},
                "depth": {**_NUM, "default": 0.0},
                "period": {**_NUM, "default": 1.0},
            },
        },
        "region": {
            "type": "object",
            "required": ["shape", "center", "size"],
            "additionalProperties": False,
            "properties": {
                "shape": {"enum": list(REGION_SHAPES)},
                "center": _VEC,
                "size": {"oneOf": [_NUM, _VEC]},
            },
        },
        "gamma": {**_NUM, "default": 0.0},
        "solver": {
            "type": "object",
            "required": ["dt", "t_end"],
            "additionalProperties": False,
            "properties": {
                "dt": _NUM,
                "t_end": _NUM,
                "scheme": {"enum": list(SCHEMES), "default": SCHEMES[0]},
                "snapshot_stride": {"type": "integer", "default": 0},
                "steady_tol": {**_NUM, "default": 1e-8},
            },
        },
        "initial": {"type": "object", "additionalProperties": _FIELD, "minProperties": 1},
        "eigen": {
            "type": "object",
            "additionalProperties": False,
            "default": {},
            "properties": {
                "zeta": {"oneOf": [_NUM, {"type": "null"}], "default": None},
                "y0": {**_NUM, "default": 1.0},
                "record_every": {**_NUM, "default": 0.5},
                "tol": {**_NUM, "default": 1e-10},
                "t_max": {**_NUM, "default": 5000.0},
                "steps_per_period": {"type": "integer", "default": 400},
                "agreement": {**_NUM, "default": 1e-2, "description": "relative |direct - logistic| tolerance"},
            },
        },
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "default": {},
            "properties": {
                "step": {**_NUM, "default": 0.1},
                "step_min": {"oneOf": [_NUM, {"type": "null"}], "default": None},
                "grad_tol": {**_NUM, "default": 1e-8},
                "max_iter": {"type": "integer", "default": 20},
                "snap_to_grid": {"type": "boolean", "default": True},
                "domain_flag": {"enum": ["whole", "region"], "default": "whole"},
            },
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)


def _fill_defaults(schema: dict, data: dict) -> None:
    for key, sub in schema.get("properties", {}).items():
        if key not in data and "default" in sub:
            data[key] = copy.deepcopy(sub["default"])
        if isinstance(data.get(key), dict) and sub.get("type") == "object":
            _fill_defaults(sub, data[key])


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass(frozen=True, eq=False)
class Scenario:
    data: dict
    base_dir: Path

    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.data).encode()).hexdigest()

    def dumps(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)

    def save(self, path):
        Path(path).write_text(self.dumps() + "\n")
        return Path(path)

    # -- construction ---------------------------------------------------

    def domain(self):
        d = self.data["domain"]
        return build_domain(d["dimension"], d["extents"], d["nodes"])

    def operators(self, domain=None) -> Operators:
        domain = domain or self.domain()
        diff, ker = self.data["diffusion"], self.data["kernel"]
        lap = assemble_robin_laplacian(domain, diff["d1"], diff["alpha"])
        return Operators(domain, lap, build_kernel(domain, ker["family"], ker["sigma"], ker["amplitude"]))

    def field(self, spec: dict, domain) -> np.ndarray:
        kind = spec["kind"]
        if kind == "constant":
            return np.full(domain.n, float(spec["value"]))
        if kind == "gaussian-bump":
            c = np.asarray(spec["center"], dtype=float)
            r2 = np.sum((domain.coords - c) ** 2, axis=1)
            return spec["height"] * np.exp(-r2 / spec["width"] ** 2)
        vals = read_field_csv(self.base_dir / spec["path"], spec["column"])
        if vals.shape != (domain.n,):
            raise ValidationError(f"{spec['path']} has {vals.size} values, grid has {domain.n} nodes")
        return vals

    def model(self, domain=None) -> ModelSpec:
        m = self.data["model"]
        domain = domain or self.domain()
        kw = dict(tag=m["tag"], a11=m["a11"], a22=m["a22"], d2=m["d2"], d3=m["d3"], mu=m["mu"],
                  gamma_r=m["gamma_r"], seasonality=Seasonality(**self.data["seasonality"]))
        if m["tag"] == "malaria":
            if "capacity" not in m or "response" not in self.data:
                raise ValidationError("malaria model needs model.capacity and response")
            kw["capacity"] = self.field(m["capacity"], domain)
            kw["response"] = ForceOfInfection(**self.data["response"])
        if m["tag"] in ("core", "controlled", "periodic"):
            kw["foi"] = ForceOfInfection(**self.data["force"])
        return ModelSpec(**kw)

    def region(self, domain=None) -> ControlRegion | None:
        r = self.data.get("region")
        if r is None:
            return None
        return make_region(domain or self.domain(), r["shape"], r["center"], r["size"])

    @property
    def gamma(self) -> float:
        return float(self.data["gamma"])

    def solver(self, **overrides) -> SolverConfig:
        return SolverConfig(**{**self.data["solver"], **overrides})

    def initial(self, model: ModelSpec, domain) -> StateField:
        init = self.data["initial"]
        names = model.components
        missing = [c for c in names if c not in init]
        extra = [c for c in init if c not in names]
        if missing or extra:
            raise ValidationError(f"initial data must give exactly {list(names)}; missing {missing}, unexpected {extra}")
        return StateField(names, np.stack([self.field(init[c], domain) for c in names]))

    def logistic_config(self) -> LogisticConfig:
        e = self.data["eigen"]
        return LogisticConfig(record_every=e["record_every"], tol=e["tol"], t_max=e["t_max"])

    def periodic_config(self) -> PeriodicConfig:
        return PeriodicConfig(steps_per_period=self.data["eigen"]["steps_per_period"])

    def optimizer_config(self) -> OptimizerConfig:
        o = self.data["optimizer"]
        return OptimizerConfig(step=o["step"], step_min=o["step_min"], grad_tol=o["grad_tol"],
                               max_iter=o["max_iter"], snap_to_grid=o["snap_to_grid"])

    def control_scenario(self, domain_flag: str | None = None) -> ControlScenario:
        domain = self.domain()
        model = self.model(domain)
        return ControlScenario(self.operators(domain), model, self.gamma, self.initial(model, domain),
                               self.solver(), domain_flag or self.data["optimizer"]["domain_flag"])

    def build(self):
        """Everything needed to run: (domain, operators, model, region, initial, solver)."""
        domain = self.domain()
        ops = self.operators(domain)
        model = self.model(domain)
        region = self.region(domain)
        return domain, ops, model, region, self.initial(model, domain), self.solver()


def _semantic_checks(sc: Scenario) -> None:
    data = sc.data
    if data["kernel"]["amplitude"] < 0:
        raise ValidationError(f"kernel nonnegativity violated: kernel amplitude must be >= 0, got {data['kernel']['amplitude']}")
    if data["diffusion"]["d1"] <= 0:
        raise ValidationError("diffusivity d1 must be positive")
    if data["diffusion"]["alpha"] < 0:
        raise ValidationError("Robin coefficient alpha must be >= 0")
    if data["gamma"] < 0:
        raise ValidationError("feedback gain gamma must be >= 0")
    try:
        domain, ops, model, region, initial, solver = sc.build()
    except ValidationError:
        raise
    except (ModelValidationError, OSError, KeyError) as exc:
        raise ValidationError(str(exc)) from exc

    for label, g in (("force", model.foi), ("response", model.response)):
        if g is not None:
            problems = g.check_admissible()
            if problems:
                raise ValidationError(f"{label}: {problems[0]}")
    if np.any(initial.values < 0):
        raise ValidationError("nonnegativity violated: initial data must be nonnegative")
    if data["gamma"] > 0 and region is None and model.tag != "sir_kendall":
        raise ValidationError("gamma > 0 needs a control region")
    run_model = controlled_model(model, sc.gamma) if region is not None and sc.gamma > 0 else model
    bound = build_system(run_model, ops, region).dt_limit(solver.scheme)
    if solver.dt > bound * (1 + 1e-12):
        raise ValidationError(f"dt = {solver.dt:.6g} exceeds the explicit positivity bound {bound:.6g}")


def parse_scenario(text: str, base_dir=".") -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, where=f"line {exc.lineno}") from exc
    errors = sorted(_VALIDATOR.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ParseError(err.message, where=where)
    _fill_defaults(SCHEMA, data)
    sc = Scenario(data=data, base_dir=Path(base_dir))
    _semantic_checks(sc)
    return sc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(str(exc), where=str(path)) from exc
    return parse_scenario(text, base_dir=path.parent)
