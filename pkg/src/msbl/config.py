"""JSON run configuration with strict keys and ``--set`` overrides."""

from __future__ import annotations

import copy
import dataclasses
import json
import os
from pathlib import Path

import numpy as np

from .coefficients import MODEL_CATALOG, ModelSpec, general_model, get_model, linear_gaussian
from .integrators import SimParams
from .noise import CovSpec
from .spectral import SineField

__all__ = ["ConfigError", "DEFAULTS", "load_config", "apply_override", "build_model",
           "build_params", "initial_state", "SEED_ENV"]

SEED_ENV = "MSBL_SEED"


class ConfigError(ValueError):
    exit_code = 2


_SIM = {"eps": 2.0**-4, "T": 0.5, "macro_dt": 1e-3, "kappa": 0.05, "m": 32, "n_paths": 100,
        "master_seed": 20240101, "fast_policy": "mean"}

DEFAULTS: dict = {
    "model": "linear_gaussian_default",
    "cov1": {"law": "power_decay", "params": [1.0, 4.0], "m_max": 128},
    "cov2": {"law": "power_decay", "params": [1.0, 2.0], "m_max": 128},
    "sim": _SIM,
    "strong": {"eps_grid": [2.0**-k for k in range(3, 9)], "n_paths": 100, "p": 2.0,
               "x0": [1.0], "y0": [], "band": [0.4, 0.6], "guard": True},
    "weak": {"eps_grid": [2.0**-k for k in range(2, 7)], "n_paths": 2000, "phi": "sin_e1",
             "x0": [1.0], "y0": [50.0], "band": [0.8, 1.2], "guard": True},
    "moments": {"eps_grid": [2.0**-2, 2.0**-4, 2.0**-6], "n_paths": 200, "p": 2.0,
                "x0": [1.0], "y0": [], "threshold": 1.2},
    "galerkin": {"eps": 2.0**-4, "m_list": [8, 16, 32], "m_ref": 64, "n_paths": 50,
                 "x0": [1.0], "y0": []},
    "simulate": {"n_paths": 1, "x0": [1.0], "y0": [], "averaged": True},
    "fbar": {"window": 200.0, "micro_dt": 1e-3, "burn_in": None, "ergodic": True, "seed": 0},
    "out": "runs",
}

# keys allowed in an inline model object
_MODEL_KEYS = {"id", "family", "a", "c", "f1", "g1", "f", "g", "L_F", "L_G", "name", "metadata"}


def _check_keys(given: dict, allowed: dict, where: str) -> None:
    for k, v in given.items():
        path = f"{where}.{k}" if where else k
        if k not in allowed:
            raise ConfigError(f"unknown key {path!r}")
        if isinstance(allowed[k], dict) and k not in ("cov1", "cov2"):
            if not isinstance(v, dict):
                raise ConfigError(f"{path!r} must be an object")
            _check_keys(v, allowed[k], path)


def _merge(base: dict, new: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in new.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("cov1", "cov2", "model"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _check_model(model) -> None:
    if isinstance(model, str):
        if model not in MODEL_CATALOG:
            raise ConfigError(f"model: unknown id {model!r}")
        return
    if not isinstance(model, dict):
        raise ConfigError("model must be an id string or an object")
    bad = set(model) - _MODEL_KEYS
    if bad:
        raise ConfigError(f"unknown key 'model.{sorted(bad)[0]}'")


def load_config(path: str | Path | None = None, overrides=(), env=None) -> dict:
    """Defaults, then the file, then ``MSBL_SEED``, then ``key=value`` overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        text = Path(path).read_text()
        try:
            user = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be an object")
        _check_keys(user, DEFAULTS, "")
        cfg = _merge(cfg, user)
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            cfg["sim"]["master_seed"] = int(env[SEED_ENV], 0)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env[SEED_ENV]!r} is not an integer") from None
    for item in overrides:
        apply_override(cfg, item)
    _check_model(cfg["model"])
    return cfg


def apply_override(cfg: dict, item: str) -> None:
    """Apply ``a.b.c=value``; ``value`` is parsed as JSON, else kept as a string."""
    if "=" not in item:
        raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.strip().split(".")
    if parts[0] == "model" and len(parts) == 2:
        if isinstance(cfg["model"], str):
            cfg["model"] = {"id": cfg["model"]}
        if parts[1] not in _MODEL_KEYS:
            raise ConfigError(f"unknown key {key!r}")
        cfg["model"][parts[1]] = value
        return
    node, allowed = cfg, DEFAULTS
    for i, part in enumerate(parts):
        if not isinstance(allowed, dict) or part not in allowed:
            raise ConfigError(f"unknown key {key!r}")
        if i == len(parts) - 1:
            node[part] = value
        else:
            node, allowed = node[part], allowed[part]


def build_model(cfg: dict) -> ModelSpec:
    spec = cfg["model"]
    try:
        if isinstance(spec, str):
            return get_model(spec)
        spec = dict(spec)
        lip = {k: float(spec.pop(k)) for k in ("L_F", "L_G") if k in spec}
        if "id" in spec:
            model = get_model(spec.pop("id"))
        elif spec.get("family") == "linear_gaussian":
            model = linear_gaussian(spec.get("a", 1.0), spec.get("c", 1.0), spec.get("f1", "sin"),
                                    spec.get("g1", "identity"), spec.get("name"), spec.get("metadata"))
        elif spec.get("family") == "general":
            model = general_model(spec["f"], spec["g"], name=spec.get("name"),
                                  metadata=spec.get("metadata"))
        else:
            raise ConfigError("model: object needs 'id' or 'family'")
        return dataclasses.replace(model, **lip) if lip else model
    except (KeyError, ValueError, TypeError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"model: {e}") from None


def _cov(cfg: dict, key: str) -> CovSpec:
    try:
        return CovSpec.from_dict(cfg[key])
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError(f"{key}: {e}") from None


def build_params(cfg: dict, section: str | None = None, **extra) -> SimParams:
    """``SimParams`` from ``sim``, with ``n_paths`` taken from ``section`` if given."""
    kw = dict(cfg["sim"])
    if section is not None and "n_paths" in cfg[section]:
        kw["n_paths"] = cfg[section]["n_paths"]
    kw.update(extra)
    try:
        kw["m"] = int(kw["m"])
        kw["n_paths"] = int(kw["n_paths"])
        kw["master_seed"] = int(kw["master_seed"])
        return SimParams(cov1=_cov(cfg, "cov1"), cov2=_cov(cfg, "cov2"), **kw)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"sim: {e}") from None


def initial_state(coeffs, m: int) -> SineField:
    """Leading coefficients padded with zeros to ``m`` modes."""
    c = np.asarray(coeffs if coeffs is not None else [], dtype=float).reshape(-1)
    if len(c) > m:
        raise ConfigError(f"initial state has {len(c)} coefficients but m={m}")
    out = np.zeros(m)
    out[: len(c)] = c
    return SineField(out)
