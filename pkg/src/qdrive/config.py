"""Run configuration: a JSON document with schema validation and defaults.

Defaults reproduce the benchmark settings (lam = 0.1, j = 0.8, x0 = 8,
x_max = 10, 2^12 grid points, batch of 8 runs, 10^5 shots, penalty 100).
Command-line flags override file keys; the resolved document is frozen into
every run directory so a run can be reproduced byte-for-byte.
"""
from __future__ import annotations

import copy
import json
import math
from importlib import resources
from pathlib import Path

from .model import ClassifierThresholds, Grid, PotentialModel
from .optimize import OptimizerConfig
from .pipeline import RunPlan
from .simulator import NoiseModel, load_noise_profile, scale_noise

OUTPUT_ROOT_ENV = "QDRIVE_OUTPUT_ROOT"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


DEFAULTS: dict = {
    "model": {"lam": 0.1, "j": 0.8, "x0": 8.0, "x_max": 10.0, "n_points": 4096},
    "q": 3,
    "parities": ["even", "odd"],
    "n_states": {"even": 4, "odd": 2},
    "batch_size": 8,
    "tier": "statevector",
    "shots": 100000,
    "final_shots_factor": 10,
    "seed": 20240601,
    "noise_profile": None,
    "gate_noise_reduction_factor": 1.0,
    "qubit_longevity_factor": None,
    "mitigation": {"readout": True, "zne": True},
    "optimizer": {
        "penalty_c": 100.0,
        "hermitian_kind": None,
        "hermitian_f_max": 2048,
        "hermitian_max_iterations": 512,
        "reset_interval": 32,
        "nonhermitian_f_max": 1024,
        "f_tol": 0.05,
        "retries": 3,
        "r_beg": 1.0,
        "p_beg": 1.0,
    },
    "classifier": {
        "cap_weight": 0.5,
        "im_gain": 1e-3,
        "sigma_max": 0.5,
        "gamma_max": 0.05,
    },
    "dedup_overlap_tol": 0.5,
    "workers": 4,
    "output_dir": "out",
    "sweep": {
        "reduction_factors": [1.0, 10000.0],
        "longevity_factors": [10.0, "inf"],
        "repeats": 8,
    },
}

# key -> (expected type(s), optional allowed values)
_SCALAR_SCHEMA: dict[str, tuple] = {
    "model.lam": ((int, float), None),
    "model.j": ((int, float), None),
    "model.x0": ((int, float), None),
    "model.x_max": ((int, float), None),
    "model.n_points": (int, None),
    "q": (int, None),
    "parities": (list, None),
    "n_states.even": (int, None),
    "n_states.odd": (int, None),
    "batch_size": (int, None),
    "tier": (str, ("statevector", "shots", "noisy")),
    "shots": (int, None),
    "final_shots_factor": (int, None),
    "seed": (int, None),
    "noise_profile": ((str, type(None)), None),
    "gate_noise_reduction_factor": ((int, float), None),
    "qubit_longevity_factor": ((int, float, str, type(None)), None),
    "mitigation.readout": (bool, None),
    "mitigation.zne": (bool, None),
    "optimizer.penalty_c": ((int, float), None),
    "optimizer.hermitian_kind": ((str, type(None)), (None, "nft", "trust_region", "simplex")),
    "optimizer.hermitian_f_max": (int, None),
    "optimizer.hermitian_max_iterations": (int, None),
    "optimizer.reset_interval": (int, None),
    "optimizer.nonhermitian_f_max": (int, None),
    "optimizer.f_tol": ((int, float), None),
    "optimizer.retries": (int, None),
    "optimizer.r_beg": ((int, float), None),
    "optimizer.p_beg": ((int, float), None),
    "classifier.cap_weight": ((int, float), None),
    "classifier.im_gain": ((int, float), None),
    "classifier.sigma_max": ((int, float), None),
    "classifier.gamma_max": ((int, float), None),
    "dedup_overlap_tol": ((int, float), None),
    "workers": (int, None),
    "output_dir": (str, None),
    "sweep.reduction_factors": (list, None),
    "sweep.longevity_factors": (list, None),
    "sweep.repeats": (int, None),
}


def _walk(doc: dict, prefix: str = ""):
    for key, value in doc.items():
        path = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict) and path in ("model", "n_states", "mitigation", "optimizer", "classifier", "sweep"):
            yield from _walk(value, path)
        else:
            yield path, value


def validate_config(doc: dict) -> None:
    for path, value in _walk(doc):
        if path not in _SCALAR_SCHEMA:
            raise ConfigError(f"unknown config key {path!r}")
        expected, allowed = _SCALAR_SCHEMA[path]
        if isinstance(expected, type):
            expected = (expected,)
        # bool is an int subclass; require exact bool where schema says bool
        if bool in expected:
            if not isinstance(value, bool):
                raise ConfigError(f"config key {path!r} must be a boolean")
        elif isinstance(value, bool) and int in expected and float not in expected:
            raise ConfigError(f"config key {path!r} must be an integer")
        elif not isinstance(value, tuple(expected)):
            raise ConfigError(
                f"config key {path!r} has type {type(value).__name__}, "
                f"expected {'/'.join(t.__name__ for t in expected)}"
            )
        if allowed is not None and value not in allowed:
            raise ConfigError(f"config key {path!r} must be one of {allowed}")
    for parity in doc.get("parities", []):
        if parity not in ("even", "odd"):
            raise ConfigError(f"config key 'parities' entries must be 'even' or 'odd'")


def merge_defaults(doc: dict) -> dict:
    merged = copy.deepcopy(DEFAULTS)

    def recurse(dst: dict, src: dict):
        for key, value in src.items():
            if isinstance(value, dict) and isinstance(dst.get(key), dict):
                recurse(dst[key], value)
            else:
                dst[key] = value

    recurse(merged, doc)
    return merged


def load_config(path: str | None, overrides: dict | None = None) -> dict:
    doc = {}
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    merged = merge_defaults(doc)
    if overrides:
        merged = merge_defaults_into(merged, overrides)
    validate_config(merged)
    return merged


def merge_defaults_into(base: dict, overrides: dict) -> dict:
    out = copy.deepcopy(base)

    def recurse(dst: dict, src: dict):
        for key, value in src.items():
            if isinstance(value, dict) and isinstance(dst.get(key), dict):
                recurse(dst[key], value)
            else:
                dst[key] = value

    recurse(out, overrides)
    return out


def _longevity(value) -> float | None:
    if value is None:
        return None
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return math.inf
        raise ConfigError("config key 'qubit_longevity_factor' string must be 'inf'")
    return float(value)


def bundled_profile_path() -> Path:
    return Path(resources.files("qdrive.data") / "torino.json")


def resolve_noise(doc: dict) -> NoiseModel | None:
    if doc["tier"] != "noisy":
        return None
    path = doc["noise_profile"] or bundled_profile_path()
    noise = load_noise_profile(path)
    noise.gate_noise_reduction_factor = float(doc["gate_noise_reduction_factor"])
    noise.qubit_longevity_factor = _longevity(doc["qubit_longevity_factor"])
    return scale_noise(noise)


def build_grid(doc: dict) -> Grid:
    m = doc["model"]
    return Grid(x_max=float(m["x_max"]), n_points=int(m["n_points"]))


def build_model(doc: dict) -> PotentialModel:
    m = doc["model"]
    return PotentialModel(lam=float(m["lam"]), j=float(m["j"]), x0=float(m["x0"]))


def build_plan(doc: dict) -> RunPlan:
    opt = doc["optimizer"]
    parities = tuple(doc["parities"])
    hermitian_cfg = None
    if opt["hermitian_kind"] is not None:
        hermitian_cfg = OptimizerConfig(
            kind=opt["hermitian_kind"],
            max_iterations=opt["hermitian_max_iterations"],
            f_max=opt["hermitian_f_max"],
            reset_interval=opt["reset_interval"],
        )
    else:
        kind = "simplex" if doc["tier"] == "statevector" else "nft"
        hermitian_cfg = OptimizerConfig(
            kind=kind,
            max_iterations=opt["hermitian_max_iterations"],
            f_max=opt["hermitian_f_max"],
            reset_interval=opt["reset_interval"],
        )
    nonhermitian_cfg = OptimizerConfig(
        kind="trust_region",
        f_max=opt["nonhermitian_f_max"],
        f_tol=float(opt["f_tol"]),
        retries=opt["retries"],
        r_beg=float(opt["r_beg"]),
        p_beg=float(opt["p_beg"]),
    )
    cls = doc["classifier"]
    return RunPlan(
        q=doc["q"],
        parities=parities,
        n_states={p: int(doc["n_states"][p]) for p in parities},
        batch_size=doc["batch_size"],
        tier=doc["tier"],
        shots=doc["shots"],
        final_shots=doc["shots"] * doc["final_shots_factor"],
        seed=doc["seed"],
        noise=resolve_noise(doc),
        penalty=float(opt["penalty_c"]),
        overlap_tol=float(doc["dedup_overlap_tol"]),
        thresholds=ClassifierThresholds(
            cap_weight=float(cls["cap_weight"]),
            im_gain=float(cls["im_gain"]),
            sigma_max=float(cls["sigma_max"]),
            gamma_max=float(cls["gamma_max"]),
        ),
        hermitian_cfg=hermitian_cfg,
        nonhermitian_cfg=nonhermitian_cfg,
        mitigate_readout=doc["mitigation"]["readout"],
        mitigate_zne=doc["mitigation"]["zne"],
    )
