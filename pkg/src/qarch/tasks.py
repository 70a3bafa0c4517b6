"""Task implementations behind the command line.

Every task returns a :class:`TaskOutput` (one CSV table plus a JSON-able
summary). Nothing here depends on wall-clock time or thread scheduling, so
the CSV bodies are reproducible byte for byte.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from qarch import simulate as sim
from qarch.closed_moments import Arch1Params, arch1_moments
from qarch.coeffs import ParameterDomainError, PowerLaw
from qarch.config import ConfigError, ExperimentConfig, TaskConfig
from qarch.estimators import (
    autocov_array, batch_means_se, conditional_sign_test, delta_profile, fit_loglog,
    jackknife_means, leverage_hat, map_replicates, partial_sum_variances, tau_profile,
)
from qarch.leverage import sign_criterion, solve_leverage
from qarch.model import contraction_margin, longmem_constants, moment_bound, stationary_m2

__all__ = ["TaskOutput", "precheck", "run_task", "compare", "format_cell", "render_csv", "Z_FLAG"]

Z_FLAG = 4.0
EST_COLUMNS = ["estimator", "params", "value", "stderr", "n", "seed", "target", "flag"]


@dataclass
class TaskOutput:
    name: str
    columns: list[str]
    rows: list[list]
    summary: dict = field(default_factory=dict)
    comment: str | None = None
    extra: dict[str, bytes] = field(default_factory=dict)  # suffix -> raw bytes


def format_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def render_csv(out: TaskOutput) -> str:
    buf = io.StringIO()
    if out.comment:
        buf.write(f"# {out.comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(out.columns)
    for row in out.rows:
        w.writerow([format_cell(v) for v in row])
    return buf.getvalue()


def _path_config(cfg: ExperimentConfig, **kw) -> sim.PathConfig:
    base = dict(n=cfg.n, window=cfg.window, burn_in=cfg.burn_in, seed=cfg.seed, method=cfg.method)
    base.update(kw)
    return sim.PathConfig(**base)


# ----------------------------------------------------------------------------
# validation of task preconditions (run before any work)


def _arch1(cfg: ExperimentConfig, where: str) -> Arch1Params:
    spec = cfg.spec
    if spec.q.kind != "quadratic" or spec.q.c2 != 1.0:
        raise ConfigError(f"{where}: closed-form moments need model.q.kind = 'quadratic' with c2 = 1")
    b = np.asarray(spec.b)
    if len(b) > 1 and np.any(b[1:] != 0):
        raise ConfigError(f"{where}: closed-form moments need a single lag (model.coeffs with one value)")
    try:
        p = Arch1Params.from_innovations(spec.a, float(b[0]), spec.q.c1, spec.innovations)
        arch1_moments(p, 0)
    except ParameterDomainError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return p


def _check_leverage(cfg: ExperimentConfig, where: str) -> None:
    spec = cfg.spec
    if spec.q.kind != "quadratic" or spec.q.c2 != 1.0:
        raise ConfigError(f"{where}: leverage needs model.q.kind = 'quadratic' with c2 = 1")
    if spec.innovations.mu3 != 0:
        raise ConfigError(f"{where}: leverage needs innovations with zero third moment")
    if 3 * spec.B2 >= 1:
        raise ConfigError(f"{where}: B^2 = {spec.B2:.6g} >= 1/3, the leverage map is not a contraction")


def precheck(cfg: ExperimentConfig, tasks=None) -> None:
    """Domain checks that need the whole config; raises :class:`ConfigError`."""
    if cfg.window < 1:
        raise ConfigError("'run.window' must be >= 1")
    try:
        _path_config(cfg)
    except ParameterDomainError as exc:
        raise ConfigError(f"run: {exc}") from None
    for i, task in enumerate(cfg.tasks if tasks is None else tasks):
        where = f"tasks[{i}] ({task.kind})"
        if task.kind == "moments":
            _arch1(cfg, where)
        elif task.kind == "leverage":
            _check_leverage(cfg, where)
        elif task.kind == "longmem":
            if not isinstance(cfg.spec.coeffs, PowerLaw):
                raise ConfigError(f"{where}: long-memory diagnostics need model.coeffs.kind = 'power_law'")
            if task["lag_hi"] >= cfg.n:
                raise ConfigError(f"{where}: 'lag_hi' must be < run.n")
            if task["lengths"] is not None and max(task["lengths"]) > cfg.n:
                raise ConfigError(f"{where}: 'lengths' must not exceed run.n")
        elif task.kind == "couple":
            if task["lags"] is not None and task["lags"] and max(task["lags"]) >= cfg.n:
                raise ConfigError(f"{where}: 'lags' must be < run.n")
        elif task.kind == "simulate":
            if task["replicate"] >= cfg.replicates:
                raise ConfigError(f"{where}: 'replicate' must be < run.replicates")
        elif task.kind == "signtest":
            if cfg.n < 200:
                raise ConfigError(f"{where}: run.n must be >= 200")


# ----------------------------------------------------------------------------
# tasks


def task_check(cfg: ExperimentConfig, task: TaskConfig, threads: int) -> TaskOutput:
    rows = []
    for p in task["p"]:
        res = contraction_margin(cfg.spec, p)
        mb = moment_bound(cfg.spec, p)
        rows.append([p, res.margin, res.verdict, res.rosenthal, res.abs_moment, res.lipschitz, res.Bp,
                     res.sharp_margin, res.sufficient_only, mb.denominator, mb.near_critical])
    summary = {"verdicts": {format_cell(r[0]): r[2] for r in rows}, "B2": cfg.spec.B2}
    if cfg.spec.q.kind == "quadratic":
        try:
            m2, ex2 = stationary_m2(cfg.spec)
            summary.update(m2=m2, EX2=ex2)
        except ParameterDomainError:
            pass
    cols = ["p", "margin", "verdict", "rosenthal", "abs_moment", "lipschitz", "Bp",
            "sharp_margin", "sufficient_only", "bound_denominator", "near_critical"]
    return TaskOutput("check", cols, rows, summary)


def task_simulate(cfg: ExperimentConfig, task: TaskConfig, threads: int) -> TaskOutput:
    path = sim.simulate_path(cfg.spec, _path_config(cfg, replicate_id=task["replicate"]))
    rows = [[t, r, x, s] for t, (r, x, s) in enumerate(zip(path.r, path.x, path.sigma))]
    out = TaskOutput("simulate", ["t", "r", "x", "sigma"], rows,
                     {"n": len(path), "replicate": task["replicate"], "mean_r2": float(np.mean(path.r ** 2))})
    if task["format"] == "binary":
        buf = io.BytesIO()
        sim.write_binary(path, buf)
        out.extra[".bin"] = buf.getvalue()
    return out


def task_moments(cfg: ExperimentConfig, task: TaskConfig, threads: int) -> TaskOutput:
    p = _arch1(cfg, "moments")
    rows = []
    for t in range(task["t_max"] + 1):
        m = arch1_moments(p, t)
        rows.append([t, m.m2, m.m3, m.m4, m.rho4])
    return TaskOutput("moments", ["t", "m2", "m3", "m4", "rho4"], rows,
                      {"a": p.a, "b": p.b, "c": p.c, "mu4": p.mu4, "m2": p.m2})


def task_leverage(cfg: ExperimentConfig, task: TaskConfig, threads: int) -> TaskOutput:
    spec = cfg.spec
    sol = solve_leverage(spec, J=task["J"], tol=task["tol"], max_iter=task["max_iter"])
    verdict = sign_criterion(spec, task["k"])
    B = math.sqrt(spec.B2)
    rows = [[j, h] for j, h in enumerate(sol.h, start=1)]
    comment = f"spec_hash={spec.spec_hash()} residual={format_cell(sol.residual)}"
    summary = {"residual": sol.residual, "iterations": sol.iterations, "norm": sol.norm,
               "norm_bound": sol.norm_bound(spec.a, B), "J": sol.J, "sign_criterion": verdict.value,
               "k": task["k"]}
    return TaskOutput("leverage", ["j", "h"], rows, summary, comment=comment)


def _default_lengths(n: int) -> list[int]:
    kmax = int(math.floor(math.log2(n)))
    return [2 ** k for k in range(max(4, kmax - 7), kmax + 1)]


def _fit_row(name, params, x, y, lo, hi, cfg, n, target, flag=None):
    try:
        f = fit_loglog(x, y, lo, hi)
        return [name, params, f.slope, f.stderr, n, cfg.seed, target, flag], f
    except ParameterDomainError as exc:
        return [name, params, math.nan, math.nan, n, cfg.seed, target, f"fit-failed: {exc}"], None


def task_longmem(cfg: ExperimentConfig, task: TaskConfig, threads: int) -> TaskOutput:
    spec = cfg.spec
    d = spec.coeffs.d
    lo, hi = task["lag_lo"], task["lag_hi"]
    pc = _path_config(cfg)

    def acv(rep: int) -> tuple[np.ndarray, np.ndarray, float]:
        path = sim.simulate_path(spec, pc.replace(replicate_id=rep))
        r2 = path.r ** 2
        return autocov_array(r2, hi), autocov_array(path.x, hi), float(r2.mean())

    res = map_replicates(acv, range(cfg.replicates), threads)
    acv_r2 = np.mean(np.stack([r[0] for r in res]), axis=0)
    acv_x = np.mean(np.stack([r[1] for r in res]), axis=0)
    m2_mc = float(np.mean([r[2] for r in res]))
    lags = np.arange(hi + 1)

    if spec.q.kind == "quadratic":
        consts = longmem_constants(spec)
    else:
        consts = longmem_constants(spec, m2=m2_mc)
    undefined = consts.kappa1_sq is not None and consts.kappa1_sq == 0.0
    target_acv, target_ps = 2 * d - 1, 2 * d + 1
    rows = []
    nrep = cfg.replicates
    row, fit_r2 = _fit_row("autocov_slope", f"series=r2;lags={lo}..{hi}", lags, acv_r2, lo, hi, cfg, nrep,
                           target_acv, "undefined-target" if undefined else None)
    rows.append(row)
    row, fit_x = _fit_row("autocov_slope", f"series=X;lags={lo}..{hi}", lags, acv_x, lo, hi, cfg, nrep, target_acv)
    rows.append(row)

    lengths = task["lengths"] or _default_lengths(cfg.n)
    ps_reps = task["ps_replicates"] or cfg.replicates
    ps = {}
    if ps_reps >= 2:
        ps = partial_sum_variances(spec, lengths, ps_reps, task["targets"], pc.replace(n=max(lengths)), threads)
        for tgt, r in ps.items():
            for n_, v in zip(r.lengths, r.variances):
                rows.append(["partial_sum_var", f"series={tgt};n={int(n_)}", v, None, ps_reps, cfg.seed, None, None])
            flag = "undefined-target" if (tgt == "r2" and undefined) else None
            rows.append(["partial_sum_slope", f"series={tgt};n={int(r.lengths[0])}..{int(r.lengths[-1])}",
                         r.fit.slope, r.fit.stderr, ps_reps, cfg.seed, target_ps, flag])
    # a finite fourth moment is assumed for r^2 targets; a p = 4 contraction is the checkable proxy
    r4 = contraction_margin(spec, 4)
    r4_flag = None if r4.exists else "fourth-moment-unverified"
    rows.append(["fourth_moment_proxy", "contraction_margin;p=4", r4.margin, None, None, None, None, r4_flag])
    for name in ("lambda1_sq", "lambda2_sq", "kappa1_sq", "kappa2_sq", "m2", "B2"):
        v = getattr(consts, name)
        rows.append(["constant", name, math.nan if v is None else v, None, None, None, None,
                     "undefined" if v is None else None])
    summary = {
        "targets": {"autocov_slope": target_acv, "partial_sum_slope": target_ps},
        "autocov_slope": {"r2": None if fit_r2 is None else fit_r2.slope, "X": None if fit_x is None else fit_x.slope},
        "partial_sum_slope": {k: v.fit.slope for k, v in ps.items()},
        "hurst": {k: v.hurst for k, v in ps.items()},
        "constants": {k: getattr(consts, k) for k in ("d", "lambda1_sq", "lambda2_sq", "kappa1_sq",
                                                      "kappa2_sq", "m2", "B2")},
        "r2_target_undefined": undefined,
        "mc_m2": m2_mc,
        "fourth_moment_proxy": {"margin": r4.margin, "verdict": r4.verdict},
    }
    return TaskOutput("longmem", EST_COLUMNS, rows, summary)


def _default_lags(n: int) -> list[int]:
    lags = {0}
    k = 0.0
    while 2 ** k < n:
        lags.add(int(2 ** k))
        k += 0.25
    return sorted(lags)


def task_couple(cfg: ExperimentConfig, task: TaskConfig, threads: int) -> TaskOutput:
    kind = task["coupling"]
    pc = _path_config(cfg)
    couples = map_replicates(lambda rep: sim.simulate_coupled(cfg.spec, pc.replace(replicate_id=rep), kind),
                             range(cfg.replicates), threads)
    lags = task["lags"] or _default_lags(cfg.n)
    p, target = task["p"], task["target"]
    if kind == sim.SINGLE_SWAP:
        vals, ses = delta_profile(couples, lags, p, target)
        name = "delta"
    else:
        vals = tau_profile(couples, lags, p, target)
        ses = [None] * len(lags)
        name = "tau_bound"
    rows = [[name, f"k={k};p={format_cell(float(p))};target={target}", v, se, cfg.replicates, cfg.seed, None, None]
            for k, v, se in zip(lags, vals, ses)]
    lg = np.asarray(lags, dtype=float)
    vv = np.asarray(vals, dtype=float)
    keep = (lg >= task["fit_lo"]) & (lg <= task["fit_hi"]) & (vv > 0)
    row, fit = _fit_row(f"{name}_slope", f"k={task['fit_lo']}..{task['fit_hi']}", lg[keep], vv[keep],
                        None, None, cfg, cfg.replicates, None)
    rows.append(row)
    summary = {"coupling": kind, "replicates": cfg.replicates, "slope": None if fit is None else fit.slope}
    return TaskOutput("couple", EST_COLUMNS, rows, summary)


def task_signtest(cfg: ExperimentConfig, task: TaskConfig, threads: int) -> TaskOutput:
    path = sim.simulate_path(cfg.spec, _path_config(cfg))
    K = task["K"]
    if K is None:
        K = float(np.quantile(np.abs(path.r), task["quantile"]))
    res = conditional_sign_test(path, K)
    flag = "few-exceedances" if res.flagged else None
    params = f"K={format_cell(K)}"
    rows = [
        ["sign_upper", params, res.upper.value, res.upper.stderr, res.upper.n, cfg.seed, None, flag],
        ["sign_lower", params, res.lower.value, res.lower.stderr, res.lower.n, cfg.seed, None, flag],
    ]
    summary = {"K": K, "upper_z": res.upper.z(0.0), "lower_z": res.lower.z(0.0), "flagged": res.flagged}
    return TaskOutput("signtest", EST_COLUMNS, rows, summary)


TASKS = {
    "check": task_check,
    "simulate": task_simulate,
    "moments": task_moments,
    "leverage": task_leverage,
    "longmem": task_longmem,
    "couple": task_couple,
    "signtest": task_signtest,
}


def run_task(cfg: ExperimentConfig, task: TaskConfig, threads: int = 1) -> TaskOutput:
    return TASKS[task.kind](cfg, task, threads)


# ----------------------------------------------------------------------------
# closed form vs Monte Carlo


def _z(est: float, se: float, target: float, scale: float = 1.0) -> float:
    diff = est - target
    if se == 0:
        # a degenerate (constant) statistic: rounding-level gaps count as a match
        tiny = 1e-12 * max(abs(est), abs(target), scale)
        return 0.0 if abs(diff) <= tiny else math.copysign(math.inf, diff)
    return diff / se


def compare(cfg: ExperimentConfig, what: str, threads: int = 1) -> TaskOutput:
    """Closed-form values against single-path Monte Carlo estimates with z-scores."""
    spec = cfg.spec
    rows = []
    if what == "moments":
        p = _arch1(cfg, "compare moments")
        path = sim.simulate_path(spec, _path_config(cfg))
        r2 = path.r ** 2
        m2 = arch1_moments(p, 0)
        est = float(r2.mean())
        rows.append(["m2", m2.m2, est, batch_means_se(r2)])
        lev = leverage_hat(path, 1)
        rows.append(["m3(1)", arch1_moments(p, 1).m3, lev.value, lev.stderr])
        r4 = r2 * r2
        rows.append(["m4(0)", m2.m4, float(r4.mean()), batch_means_se(r4)])
        for t in range(1, 6):
            e = jackknife_means([r2[t:] * r2[:-t], r2[t:], r2[:-t]], lambda a, b, c: a - b * c)
            rows.append([f"rho4({t})", arch1_moments(p, t).rho4, e.value, e.stderr])
    elif what == "leverage":
        _check_leverage(cfg, "compare leverage")
        sol = solve_leverage(spec)
        path = sim.simulate_path(spec, _path_config(cfg))
        for j in range(1, 6):
            closed = float(sol.h[j - 1]) if j <= sol.J else 0.0
            e = leverage_hat(path, j)
            rows.append([f"h({j})", closed, e.value, e.stderr])
    else:
        raise ConfigError(f"compare supports 'moments' and 'leverage', got {what!r}")
    # magnitude of the fourth-order quantities, used only for degenerate rows
    scale = float(np.mean(r2) ** 2) if what == "moments" else float(np.mean(np.abs(path.r)) ** 3)
    rows = [r + [_z(r[2], r[3], r[1], scale)] for r in rows]
    maxz = max(abs(r[4]) for r in rows)
    summary = {"max_abs_z": maxz, "flagged": bool(maxz > Z_FLAG), "threshold": Z_FLAG, "n": cfg.n}
    return TaskOutput(f"compare-{what}", ["quantity", "closed_form", "estimate", "stderr", "z"], rows, summary)


def write_output(out: TaskOutput, out_dir: FsPath, spec_hash: str, write_json: bool) -> list[FsPath]:
    """Write ``<name>-<hash>.csv`` (plus JSON summary and extras); returns the files."""
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{out.name}-{spec_hash}"
    files = []
    csv_path = out_dir / f"{stem}.csv"
    csv_path.write_text(render_csv(out))
    files.append(csv_path)
    if write_json:
        js = out_dir / f"{stem}.json"
        js.write_text(json.dumps(_jsonable(out.summary), indent=2, sort_keys=True) + "\n")
        files.append(js)
    for suffix, data in out.extra.items():
        fp = out_dir / f"{stem}{suffix}"
        fp.write_bytes(data)
        files.append(fp)
    return files


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v
