"""Experiment configuration: TOML (or JSON) parsing and strict validation.

Grammar (TOML)::

    [model]
    a = 0.5

    [model.q]                 # kind: linear | quadratic | abs
    kind = "quadratic"
    c1 = 1.0
    c2 = 1.0

    [model.coeffs]            # kind: explicit | power_law | frac_integrated
    kind = "explicit"
    values = [0.3]
    # power_law: beta, d, cutoff    frac_integrated: b, d, cutoff

    [model.innovations]       # family: gaussian | rademacher | exponential | student_t | uniform
    family = "gaussian"
    # nu = 6.0                (student_t only)

    [run]
    n = 100000
    burn_in = 1000            # optional, default max(window, 1000)
    window = 1                # optional, default: coefficient cutoff
    seed = 1
    replicates = 1

    [[tasks]]                 # optional for check, compare and longmem
    kind = "check"            # check | simulate | moments | leverage | longmem | couple | signtest
    p = [2.0, 4.0]

    [output]
    dir = "out"
    json = true

Unknown keys anywhere are rejected. A JSON file with the same structure, or a
run manifest (which embeds the config under ``"config"``), is accepted too.
"""
from __future__ import annotations

import copy
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from qarch.coeffs import Explicit, FracIntegrated, ParameterDomainError, PowerLaw
from qarch.model import InnovationSpec, ModelSpec, VolatilityMap

__all__ = ["ConfigError", "ExperimentConfig", "TaskConfig", "load_config", "parse_config", "TASK_KINDS"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


_NUM = (int, float)
_INT = (int,)
_STR = (str,)
_BOOL = (bool,)
_LIST = (list,)

# per-task allowed keys with expected types and defaults
TASK_SCHEMA: dict[str, dict[str, tuple[tuple, Any]]] = {
    "check": {"p": (_LIST + _NUM, [2.0])},
    "simulate": {"format": (_STR, "csv"), "replicate": (_INT, 0)},
    "moments": {"t_max": (_INT, 10)},
    "leverage": {"J": (_INT, None), "tol": (_NUM, 1e-12), "k": (_INT, None), "max_iter": (_INT, 10_000)},
    "longmem": {
        "lag_lo": (_INT, 10), "lag_hi": (_INT, 200),
        "lengths": (_LIST, None), "targets": (_LIST, ["X", "r2"]),
        "ps_replicates": (_INT, None),
    },
    "couple": {
        "coupling": (_STR, "single_swap"), "lags": (_LIST, None), "p": (_NUM, 2.0),
        "target": (_STR, "X"), "fit_lo": (_INT, 8), "fit_hi": (_INT, 128),
    },
    "signtest": {"K": (_NUM, None), "quantile": (_NUM, 0.99)},
}
TASK_KINDS = tuple(TASK_SCHEMA)

_TOP = {"model", "run", "tasks", "output"}
_MODEL = {"a", "q", "coeffs", "innovations"}
_Q = {"linear": set(), "quadratic": {"c1", "c2"}, "abs": set()}
_COEFFS = {"explicit": {"values", "cutoff"}, "power_law": {"beta", "d", "cutoff"},
           "frac_integrated": {"b", "d", "cutoff"}}
_INNOV = {"family", "nu"}
_RUN = {"n", "burn_in", "window", "seed", "replicates", "method"}
_OUTPUT = {"dir", "json"}


@dataclass(frozen=True)
class TaskConfig:
    kind: str
    params: dict

    def __getitem__(self, key: str):
        return self.params[key]


@dataclass(frozen=True)
class ExperimentConfig:
    spec: ModelSpec
    n: int
    burn_in: int | None
    window: int
    seed: int
    replicates: int
    method: str
    tasks: tuple[TaskConfig, ...]
    out_dir: str
    write_json: bool
    raw: dict

    def to_dict(self) -> dict:
        """Normalized config; feeding it back through :func:`parse_config` reproduces this object."""
        return copy.deepcopy(self.raw)


def _unknown(section: dict, allowed: set, where: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key {where}{key!r} (allowed: {', '.join(sorted(allowed))})")


def _get(section: dict, key: str, types: tuple, where: str, default=..., check=None, what: str = ""):
    if key not in section:
        if default is ...:
            raise ConfigError(f"missing required key {where}{key!r}")
        return default
    v = section[key]
    if isinstance(v, bool) and bool not in types:
        raise ConfigError(f"{where}{key!r} must be {types[0].__name__}, got bool")
    if not isinstance(v, types):
        raise ConfigError(f"{where}{key!r} must be {'/'.join(t.__name__ for t in types)}, got {type(v).__name__}")
    if isinstance(v, float) and not math.isfinite(v):
        raise ConfigError(f"{where}{key!r} must be finite")
    if check is not None and not check(v):
        raise ConfigError(f"{where}{key!r} = {v!r} violates: {what}")
    return v


def _table(cfg: dict, key: str, where: str) -> dict:
    v = cfg.get(key, {})
    if not isinstance(v, dict):
        raise ConfigError(f"{where}{key!r} must be a table")
    return v


def _model(m: dict) -> tuple[ModelSpec, dict]:
    _unknown(m, _MODEL, "model.")
    a = float(_get(m, "a", _NUM, "model."))
    q = _table(m, "q", "model.")
    kind = _get(q, "kind", _STR, "model.q.", check=lambda v: v in _Q, what=f"one of {sorted(_Q)}")
    _unknown(q, {"kind"} | _Q[kind], "model.q.")
    if kind == "quadratic":
        c1 = float(_get(q, "c1", _NUM, "model.q.", 1.0, lambda v: v >= 0, ">= 0"))
        c2 = float(_get(q, "c2", _NUM, "model.q.", 1.0, lambda v: v >= 0, ">= 0"))
        vmap = VolatilityMap.quadratic(c1, c2)
        qraw = {"kind": kind, "c1": c1, "c2": c2}
    else:
        vmap = VolatilityMap.linear() if kind == "linear" else VolatilityMap.abs()
        qraw = {"kind": kind}

    c = _table(m, "coeffs", "model.")
    ck = _get(c, "kind", _STR, "model.coeffs.", check=lambda v: v in _COEFFS, what=f"one of {sorted(_COEFFS)}")
    _unknown(c, {"kind"} | _COEFFS[ck], "model.coeffs.")
    try:
        if ck == "explicit":
            vals = _get(c, "values", _LIST, "model.coeffs.")
            if not all(isinstance(v, _NUM) and not isinstance(v, bool) for v in vals):
                raise ConfigError("'model.coeffs.values' must be a list of numbers")
            cutoff = _get(c, "cutoff", _INT, "model.coeffs.", None, lambda v: v >= 1, ">= 1")
            coeffs = Explicit(tuple(float(v) for v in vals), cutoff)
        elif ck == "power_law":
            d = float(_get(c, "d", _NUM, "model.coeffs.", check=lambda v: 0 < v < 0.5, what="0 < d < 1/2"))
            coeffs = PowerLaw(float(_get(c, "beta", _NUM, "model.coeffs.")), d,
                              _get(c, "cutoff", _INT, "model.coeffs.", check=lambda v: v >= 1, what=">= 1"))
        else:
            d = float(_get(c, "d", _NUM, "model.coeffs.", check=lambda v: 0 < v < 0.5, what="0 < d < 1/2"))
            coeffs = FracIntegrated(float(_get(c, "b", _NUM, "model.coeffs.")), d,
                                    _get(c, "cutoff", _INT, "model.coeffs.", check=lambda v: v >= 1, what=">= 1"))
    except ParameterDomainError as exc:
        raise ConfigError(f"model.coeffs: {exc}") from None

    inn = _table(m, "innovations", "model.")
    _unknown(inn, _INNOV, "model.innovations.")
    fam = _get(inn, "family", _STR, "model.innovations.", "gaussian")
    nu = _get(inn, "nu", _NUM, "model.innovations.", None)
    try:
        innov = InnovationSpec(fam, None if nu is None else float(nu))
    except ParameterDomainError as exc:
        raise ConfigError(f"model.innovations: {exc}") from None

    spec = ModelSpec(a, vmap, coeffs, innov)
    raw = {"a": a, "q": qraw, "coeffs": dict(c), "innovations": dict(inn) or {"family": "gaussian"}}
    return spec, raw


def _tasks(tasks) -> tuple[tuple[TaskConfig, ...], list]:
    if tasks is None:
        return (), []
    if not isinstance(tasks, list):
        raise ConfigError("'tasks' must be an array of tables")
    out, raw = [], []
    for i, t in enumerate(tasks):
        where = f"tasks[{i}]."
        if not isinstance(t, dict):
            raise ConfigError(f"tasks[{i}] must be a table")
        kind = _get(t, "kind", _STR, where, check=lambda v: v in TASK_SCHEMA, what=f"one of {list(TASK_KINDS)}")
        schema = TASK_SCHEMA[kind]
        _unknown(t, {"kind"} | set(schema), where)
        params = {}
        for key, (types, default) in schema.items():
            params[key] = _get(t, key, types, where, default)
        _check_task(kind, params, where)
        out.append(TaskConfig(kind, params))
        raw.append({"kind": kind, **{k: v for k, v in params.items() if v is not None}})
    return tuple(out), raw


def _check_task(kind: str, p: dict, where: str) -> None:
    def bad(key, what):
        raise ConfigError(f"{where}{key!r} = {p[key]!r} violates: {what}")

    if kind == "check":
        ps = p["p"] if isinstance(p["p"], list) else [p["p"]]
        if not ps or not all(isinstance(v, _NUM) and not isinstance(v, bool) and v > 0 for v in ps):
            bad("p", "positive number or list of positive numbers")
        p["p"] = [float(v) for v in ps]
    elif kind == "simulate":
        if p["format"] not in ("csv", "binary"):
            bad("format", "'csv' or 'binary'")
        if p["replicate"] < 0:
            bad("replicate", ">= 0")
    elif kind == "moments":
        if p["t_max"] < 0:
            bad("t_max", ">= 0")
    elif kind == "leverage":
        if p["J"] is not None and p["J"] < 1:
            bad("J", ">= 1")
        if not p["tol"] > 0:
            bad("tol", "> 0")
        if p["k"] is not None and p["k"] < 1:
            bad("k", ">= 1")
        if p["max_iter"] < 1:
            bad("max_iter", ">= 1")
    elif kind == "longmem":
        if not 1 <= p["lag_lo"] < p["lag_hi"]:
            bad("lag_hi", "1 <= lag_lo < lag_hi")
        if p["lengths"] is not None:
            if len(p["lengths"]) < 3 or not all(isinstance(v, int) and v >= 1 for v in p["lengths"]):
                bad("lengths", "at least 3 positive integers")
        if not p["targets"] or not set(p["targets"]) <= {"X", "r2"}:
            bad("targets", "subset of ['X', 'r2']")
        if p["ps_replicates"] is not None and p["ps_replicates"] < 2:
            bad("ps_replicates", ">= 2")
    elif kind == "couple":
        if p["coupling"] not in ("single_swap", "past_swap"):
            bad("coupling", "'single_swap' or 'past_swap'")
        if p["lags"] is not None and not all(isinstance(v, int) and v >= 0 for v in p["lags"]):
            bad("lags", "non-negative integers")
        if not p["p"] >= 1:
            bad("p", ">= 1")
        if p["target"] not in ("r", "X"):
            bad("target", "'r' or 'X'")
        if not 1 <= p["fit_lo"] < p["fit_hi"]:
            bad("fit_hi", "1 <= fit_lo < fit_hi")
    elif kind == "signtest":
        if p["K"] is not None and not p["K"] > 0:
            bad("K", "> 0")
        if not 0 < p["quantile"] < 1:
            bad("quantile", "0 < quantile < 1")


def parse_config(cfg: dict, *, seed: int | None = None, out_dir: str | None = None) -> ExperimentConfig:
    """Validate a config mapping; ``seed``/``out_dir`` override the file values."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a table")
    if "config" in cfg and "outputs" in cfg:  # a run manifest
        cfg = cfg["config"]
    _unknown(cfg, _TOP, "")
    spec, model_raw = _model(_table(cfg, "model", ""))

    run = _table(cfg, "run", "")
    _unknown(run, _RUN, "run.")
    n = _get(run, "n", _INT, "run.", check=lambda v: v >= 1, what=">= 1")
    window = _get(run, "window", _INT, "run.", spec.cutoff, lambda v: v >= 1, ">= 1")
    if window > spec.cutoff:
        raise ConfigError(f"'run.window' = {window} exceeds the coefficient cutoff {spec.cutoff}")
    burn_in = _get(run, "burn_in", _INT, "run.", None, lambda v: v >= 0, ">= 0")
    seed_v = _get(run, "seed", _INT, "run.", 0, lambda v: v >= 0, ">= 0")
    if seed is not None:
        if seed < 0:
            raise ConfigError("--seed must be >= 0")
        seed_v = seed
    reps = _get(run, "replicates", _INT, "run.", 1, lambda v: v >= 1, ">= 1")
    method = _get(run, "method", _STR, "run.", "auto", lambda v: v in ("auto", "direct", "blocked"),
                  "one of auto, direct, blocked")

    tasks, tasks_raw = _tasks(cfg.get("tasks"))
    output = _table(cfg, "output", "")
    _unknown(output, _OUTPUT, "output.")
    out = _get(output, "dir", _STR, "output.", "qarch-out")
    if out_dir is not None:
        out = out_dir
    write_json = _get(output, "json", _BOOL, "output.", True)

    run_raw = {"n": n, "window": window, "seed": seed_v, "replicates": reps, "method": method}
    if burn_in is not None:
        run_raw["burn_in"] = burn_in
    raw = {"model": model_raw, "run": run_raw, "tasks": tasks_raw,
           "output": {"dir": out, "json": write_json}}
    return ExperimentConfig(spec, n, burn_in, window, seed_v, reps, method, tasks, out, write_json, raw)


def load_config(path, **overrides) -> ExperimentConfig:
    p = FsPath(path)
    try:
        text = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        if p.suffix == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text.decode())
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parse_config(data, **overrides)
