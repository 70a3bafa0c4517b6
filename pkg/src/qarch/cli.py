"""Command line: ``qarch check|run|compare|longmem <config> [--out DIR] [--seed N] [--threads N]``.

Exit status is 0 on success, 1 on configuration errors and 2 when a task
fails. Each task writes ``<task>-<spec hash>.csv`` (plus a JSON summary) to
the output directory; ``manifest.json`` lists every file together with the
normalized config, seed and library version, and is itself a valid config.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import os
import sys
import time
from pathlib import Path as FsPath

from qarch import __version__
from qarch.config import TASK_SCHEMA, ConfigError, ExperimentConfig, TaskConfig, load_config
from qarch.kernels import BACKEND
from qarch.tasks import Z_FLAG, TaskOutput, compare, precheck, run_task, write_output

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_TASK = 2


def resolve_threads(arg: int | None) -> int:
    if arg is not None:
        if arg < 1:
            raise ConfigError("--threads must be >= 1")
        return arg
    env = os.environ.get("QARCH_THREADS")
    if env is None or env == "":
        return 1
    try:
        n = int(env)
    except ValueError:
        raise ConfigError(f"QARCH_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise ConfigError("QARCH_THREADS must be >= 1")
    return n


def _sha256(path: FsPath) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class Runner:
    def __init__(self, cfg: ExperimentConfig, command: str, threads: int, quiet: bool = False):
        self.cfg = cfg
        self.command = command
        self.threads = threads
        self.quiet = quiet
        self.out_dir = FsPath(cfg.out_dir)
        self.spec_hash = cfg.spec.spec_hash()
        self.entries: list[dict] = []
        self.names: set[str] = set()
        self.started = _now()

    def log(self, msg: str) -> None:
        if not self.quiet:
            print(msg)

    def emit(self, out: TaskOutput, task: TaskConfig | None, elapsed: float) -> None:
        # a task kind listed twice gets couple-<hash>.csv, couple2-<hash>.csv, ...
        base, k = out.name, 1
        while out.name in self.names:
            k += 1
            out.name = f"{base}{k}"
        self.names.add(out.name)
        files = write_output(out, self.out_dir, self.spec_hash, self.cfg.write_json)
        for f in files:
            self.entries.append({
                "task": out.name,
                "params": None if task is None else task.params,
                "file": f.name,
                "sha256": _sha256(f),
                "seed": self.cfg.seed,
                "replicates": self.cfg.replicates,
                "seconds": round(elapsed, 3),
            })
        self.log(f"{out.name}: wrote {', '.join(f.name for f in files)}")

    def manifest(self, status: str) -> FsPath:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        data = {
            "version": __version__,
            "backend": BACKEND,
            "command": self.command,
            "status": status,
            "started": self.started,
            "finished": _now(),
            "threads": self.threads,
            "seed": self.cfg.seed,
            "spec_hash": self.spec_hash,
            "config": self.cfg.to_dict(),
            "outputs": self.entries,
        }
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")
        return path


def _run_tasks(runner: Runner, tasks) -> None:
    for task in tasks:
        t0 = time.perf_counter()
        out = run_task(runner.cfg, task, runner.threads)
        runner.emit(out, task, time.perf_counter() - t0)
        _report(runner, out)


def _report(runner: Runner, out: TaskOutput) -> None:
    s = out.summary
    if out.name == "check":
        for p, verdict in s["verdicts"].items():
            runner.log(f"  p={p}: {verdict}")
    elif out.name == "leverage":
        runner.log(f"  residual={s['residual']:.3g} iterations={s['iterations']} sign={s['sign_criterion']}")
    elif out.name == "longmem":
        t = s["targets"]
        runner.log(f"  targets: autocov slope 2d-1 = {t['autocov_slope']:g}, "
                   f"partial-sum slope 2d+1 = {t['partial_sum_slope']:g}")
        runner.log(f"  autocov slope: {s['autocov_slope']}  partial-sum slope: {s['partial_sum_slope']}")
        if s["r2_target_undefined"]:
            runner.log("  kappa1^2 = 0: squared-process slope has no defined target")
        fm = s["fourth_moment_proxy"]
        if fm["verdict"] != "exists-unique":
            runner.log(f"  p = 4 contraction margin {fm['margin']:.4g}: finite fourth moment not verified")


def cmd_run(cfg: ExperimentConfig, args, command: str) -> int:
    runner = Runner(cfg, command, args.threads, args.quiet)
    tasks = cfg.tasks
    if command == "check":
        tasks = tuple(t for t in cfg.tasks if t.kind == "check") or (TaskConfig("check", {"p": [2.0]}),)
    elif command == "longmem":
        tasks = tuple(t for t in cfg.tasks if t.kind == "longmem")
        if not tasks:
            tasks = (TaskConfig("longmem", {k: v for k, (_, v) in TASK_SCHEMA["longmem"].items()}),)
    if not tasks:
        raise ConfigError("no [[tasks]] to run")
    precheck(cfg, tasks)
    try:
        _run_tasks(runner, tasks)
    except ConfigError:
        raise
    except Exception as exc:  # noqa: BLE001 - any task failure maps to exit 2
        runner.manifest("failed")
        print(f"error: task failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_TASK
    runner.manifest("ok")
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig, args) -> int:
    runner = Runner(cfg, f"compare --task {args.task}", args.threads, args.quiet)
    precheck(cfg, ())
    t0 = time.perf_counter()
    try:
        out = compare(cfg, args.task, args.threads)
    except ConfigError:
        raise
    except Exception as exc:  # noqa: BLE001
        runner.manifest("failed")
        print(f"error: task failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_TASK
    runner.emit(out, None, time.perf_counter() - t0)
    for q, closed, est, se, z in out.rows:
        runner.log(f"  {q:>9}  closed={closed:.6g}  mc={est:.6g}  se={se:.3g}  z={z:+.2f}")
    if out.summary["flagged"]:
        runner.log(f"  FLAG: some |z| > {Z_FLAG:g}")
    runner.manifest("ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qarch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qarch {__version__} ({BACKEND} backend)")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "check": "validate the config and report the existence verdicts",
        "run": "run every task in the config",
        "compare": "closed form vs Monte Carlo with z-scores",
        "longmem": "long-memory slope report",
    }
    for name, h in helps.items():
        p = sub.add_parser(name, help=h)
        p.add_argument("config", help="TOML config (or JSON config / manifest)")
        p.add_argument("--out", default=None, help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, default=None, help="base seed (overrides run.seed)")
        p.add_argument("--threads", type=int, default=None, help="worker threads (default $QARCH_THREADS or 1)")
        p.add_argument("-q", "--quiet", action="store_true")
        if name == "compare":
            p.add_argument("--task", choices=("moments", "leverage"), default="moments")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.threads = resolve_threads(args.threads)
        cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
        if args.command == "compare":
            return cmd_compare(cfg, args)
        return cmd_run(cfg, args, args.command)
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
