"""Strict JSON run configuration.

Unknown keys are rejected and every problem is reported with its field path,
so one parse lists all errors at once. Defaults are filled for every
optional field; :data:`DEFAULTS` documents them.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass

from .errors import ConfigurationError
from .fibers import fiber_param_violations
from .lattice import Box, Lattice
from .loads import LoadPath, load_profile, time_scaling
from .material import FrobeniusDissipation, MaterialTensors, Tensor4, validate_parameters

DEFAULTS = {
    "d": 1,
    "domain": None,  # unit box [0, 1]^d, closed
    "eps": 0.0625,
    "eps_list": [0.125, 0.0625, 0.03125],
    "s": 0.25,
    "p": 2.0,
    "fibers": True,
    "material": {
        "A": {"type": "identity", "scale": 1.0},
        "H": {"type": "identity", "scale": 2.0},
        "kappa": 0.05,
    },
    "yield_stress": 0.05,
    "load": {"profile": "constant", "params": {}, "scaling": "identity", "scaling_params": {}},
    "time": {"T": 1.0, "steps": 16},
    "seed": 0,
    "seeds": [0, 1, 2, 3, 4],
    "solver": {"tol": 1e-10, "max_iter": 20000, "init": "previous", "init_seed": 0},
    "stability": {"competitors": 200},
    "output_dir": "fiberplast_out",
    "verify": {"trials": 1000, "lindqvist_trials": 100000},
    "converge": {"eps_ref": 0.015625, "mc_seeds": 500, "mc_eps": [0.125, 0.0625, 0.03125], "z0_amplitude": 0.0},
}

_SCHEMA = {
    "d": int,
    "domain": dict,
    "eps": float,
    "eps_list": list,
    "s": float,
    "p": float,
    "fibers": bool,
    "material": dict,
    "yield_stress": float,
    "load": dict,
    "time": dict,
    "seed": int,
    "seeds": list,
    "solver": dict,
    "stability": dict,
    "output_dir": str,
    "verify": dict,
    "converge": dict,
}
_SUB = {
    "domain": {"lower": list, "upper": list, "upper_closed": bool},
    "material": {"A": dict, "H": dict, "kappa": float},
    "load": {"profile": str, "params": dict, "scaling": str, "scaling_params": dict},
    "time": {"T": float, "steps": int},
    "solver": {"tol": float, "max_iter": int, "init": str, "init_seed": int},
    "stability": {"competitors": int},
    "verify": {"trials": int, "lindqvist_trials": int},
    "converge": {"eps_ref": float, "mc_seeds": int, "mc_eps": list, "z0_amplitude": float},
}
_TENSOR = {"type": str, "scale": float, "lambda": float, "mu": float, "matrix": list}


def _type_ok(v, t):
    if t is float:
        return isinstance(v, (int, float)) and not isinstance(v, bool)
    if t is int:
        return isinstance(v, int) and not isinstance(v, bool)
    return isinstance(v, t)


def _check_keys(obj, schema, path, errors):
    for k, v in obj.items():
        if k not in schema:
            errors.append(f"{path}{k}: unknown field")
        elif not _type_ok(v, schema[k]):
            errors.append(f"{path}{k}: expected {schema[k].__name__}, got {type(v).__name__}")


def _merge(defaults, given):
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _tensor(spec, d, path, errors):
    _check_keys(spec, _TENSOR, path, errors)
    kind = spec.get("type", "identity")
    try:
        if kind == "identity":
            return Tensor4.identity(d, float(spec.get("scale", 1.0)))
        if kind == "isotropic":
            return Tensor4.isotropic(d, float(spec["lambda"]), float(spec["mu"]))
        if kind == "mandel":
            return Tensor4(spec["matrix"])
        if kind == "voigt":
            return Tensor4.from_voigt(d, spec["matrix"])
    except KeyError as err:
        errors.append(f"{path}{err.args[0]}: required for tensor type {kind!r}")
        return None
    except (ConfigurationError, ValueError, TypeError) as err:
        errors.append(f"{path}: {err}")
        return None
    errors.append(f"{path}type: unknown tensor type {kind!r}")
    return None


@dataclass
class RunConfig:
    raw: dict
    box: Box
    material: MaterialTensors
    dissipation: FrobeniusDissipation
    load: LoadPath

    def __getattr__(self, name):
        raw = self.__dict__.get("raw")
        if raw is not None and name in raw:
            return raw[name]
        raise AttributeError(name)

    @property
    def hash(self):
        return config_hash(self.raw)

    def lattice(self, eps=None):
        return Lattice(self.box, self.raw["eps"] if eps is None else eps)

    def with_seed(self, seed):
        raw = copy.deepcopy(self.raw)
        raw["seed"] = int(seed)
        raw["seeds"] = [int(seed) + i for i in range(len(raw["seeds"]))]
        return build_config(raw)


def config_hash(raw):
    return hashlib.sha256(json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def build_config(given):
    """Validate a config mapping; raises :class:`ConfigurationError` listing every problem."""
    errors = []
    if not isinstance(given, dict):
        raise ConfigurationError("config root must be a JSON object")
    _check_keys(given, _SCHEMA, "", errors)
    for key, sub in _SUB.items():
        if isinstance(given.get(key), dict):
            _check_keys(given[key], sub, f"{key}.", errors)
    if errors:
        raise ConfigurationError("; ".join(errors), errors)
    raw = _merge(DEFAULTS, given)
    for key in ("A", "H"):
        # a tensor entry replaces the default one instead of merging with it
        if key in given.get("material", {}):
            raw["material"][key] = copy.deepcopy(given["material"][key])
    d = raw["d"]
    if d not in (1, 2, 3):
        errors.append("d: must be 1, 2 or 3")
        raise ConfigurationError("; ".join(errors), errors)
    if raw["domain"] is None:
        raw["domain"] = {"lower": [0.0] * d, "upper": [1.0] * d, "upper_closed": True}
    dom = _merge({"lower": [0.0] * d, "upper": [1.0] * d, "upper_closed": True}, raw["domain"])
    raw["domain"] = dom
    box = None
    if len(dom["lower"]) != d or len(dom["upper"]) != d:
        errors.append("domain: lower and upper must have d entries")
    else:
        try:
            box = Box(tuple(float(v) for v in dom["lower"]), tuple(float(v) for v in dom["upper"]), dom["upper_closed"])
        except (ConfigurationError, ValueError) as err:
            errors.append(f"domain: {err}")
    raw["p"] = float(raw["p"])
    raw["s"] = float(raw["s"])
    for key in ("eps",):
        if not (0.0 < raw[key] < 1.0):
            errors.append(f"{key}: must satisfy 0 < eps < 1")
    for key, seq in (("eps_list", raw["eps_list"]), ("converge.mc_eps", raw["converge"]["mc_eps"])):
        if not seq or not all(_type_ok(v, float) and 0 < v < 1 for v in seq):
            errors.append(f"{key}: must be a nonempty list of spacings in (0, 1)")
        elif any(b >= a for a, b in zip(seq, seq[1:])):
            errors.append(f"{key}: must be strictly decreasing")
    if not (0 < raw["converge"]["eps_ref"] < 1):
        errors.append("converge.eps_ref: must satisfy 0 < eps < 1")
    elif raw["eps_list"] and raw["converge"]["eps_ref"] >= min(raw["eps_list"]):
        errors.append("converge.eps_ref: must be finer than every entry of eps_list")
    if not all(_type_ok(v, int) for v in raw["seeds"]) or not raw["seeds"]:
        errors.append("seeds: must be a nonempty list of integers")
    for v in fiber_param_violations(d, raw["s"], raw["p"]):
        errors.append(f"s/p: {v}")
    if not raw["yield_stress"] > 0:
        errors.append("yield_stress: yield stress > 0 violated")
    t = raw["time"]
    if not (t["T"] > 0):
        errors.append("time.T: must be positive")
    if not (t["steps"] >= 1):
        errors.append("time.steps: must be at least 1")
    sol = raw["solver"]
    if sol["init"] not in ("previous", "zero", "random"):
        errors.append("solver.init: must be one of previous, zero, random")
    if not sol["tol"] > 0:
        errors.append("solver.tol: must be positive")
    mat = raw["material"]
    A = _tensor(mat["A"], d, "material.A.", errors)
    H = _tensor(mat["H"], d, "material.H.", errors)
    material = None
    if A is not None and H is not None:
        if A.d != d or H.d != d:
            errors.append("material: tensor size does not match d")
        else:
            material = MaterialTensors(A, H, float(mat["kappa"]))
            errors += [f"material: {v}" for v in validate_parameters(material)]
    ld = raw["load"]
    load = None
    try:
        load = LoadPath(load_profile(ld["profile"], d, **ld["params"]), time_scaling(ld["scaling"], t["T"], **ld["scaling_params"]))
    except (ConfigurationError, TypeError, ValueError) as err:
        errors.append(f"load: {err}")
    if errors:
        raise ConfigurationError("; ".join(errors), errors)
    return RunConfig(raw, box, material, FrobeniusDissipation(float(raw["yield_stress"])), load)


def parse_config(path):
    """Read and validate a JSON config file."""
    try:
        with open(path) as fh:
            given = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"{path}: config file not found")
    except json.JSONDecodeError as err:
        raise ConfigurationError(f"{path}: invalid JSON ({err.msg} at line {err.lineno})")
    return build_config(given)

