"""Trajectory generation by the truncated recursion with zero initial condition.

Time runs over ``t = -burn_in, ..., n - 1``; ``r_s = 0`` for ``s < -burn_in``
and only ``t >= 0`` is retained. ``X_t`` sums at most ``window`` lags.

Random numbers come from one Philox stream per ``(seed, replicate_id)``;
coupled shadows draw their replacements from a separate substream so the
shared draws are bit-identical.
"""
from __future__ import annotations

import json
import struct
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path as FsPath

import numpy as np
from scipy.signal import fftconvolve

from qarch.coeffs import ParameterDomainError
from qarch.kernels import get_backend
from qarch.model import ModelSpec, contraction_margin

__all__ = [
    "PathConfig",
    "Path",
    "CoupledPaths",
    "SINGLE_SWAP",
    "PAST_SWAP",
    "innovation_rng",
    "run_recursion",
    "simulate_path",
    "simulate_coupled",
    "simulate_rcar1",
    "volterra_larch",
    "BurnInDiagnostic",
    "burn_in_diagnostic",
    "write_csv",
    "read_csv",
    "write_binary",
    "read_binary",
]

SINGLE_SWAP = "single_swap"
PAST_SWAP = "past_swap"

MAIN_STREAM = 0
SHADOW_STREAM = 1

DEFAULT_BURN_IN = 1000
# windows above this use the blocked (FFT divide-and-conquer) path under method="auto"
BLOCKED_MIN_WINDOW = 256
LEAF = 128


class RecursionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PathConfig:
    n: int
    window: int
    burn_in: int | None = None
    seed: int = 0
    replicate_id: int = 0
    method: str = "auto"

    def __post_init__(self):
        if self.n < 1:
            raise ParameterDomainError("n must be positive")
        if self.window < 1:
            raise ParameterDomainError("window must be positive")
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", max(self.window, DEFAULT_BURN_IN))
        if self.burn_in < 0:
            raise ParameterDomainError("burn_in must be non-negative")
        if not 0 <= self.seed < 2 ** 64:
            raise ParameterDomainError("seed must be a 64-bit unsigned integer")
        if self.replicate_id < 0:
            raise ParameterDomainError("replicate_id must be non-negative")
        if self.method not in ("auto", "direct", "blocked"):
            raise ParameterDomainError(f"unknown method {self.method!r}")

    @property
    def total(self) -> int:
        return self.burn_in + self.n

    def replace(self, **kw) -> PathConfig:
        d = asdict(self)
        d.update(kw)
        return PathConfig(**d)


@dataclass(frozen=True, eq=False)
class Path:
    """Retained segment ``t = 0..n-1``; ``zeta`` holds the draws used there."""

    r: np.ndarray
    x: np.ndarray
    sigma: np.ndarray
    zeta: np.ndarray
    config: PathConfig
    spec_hash: str = ""

    def __len__(self) -> int:
        return len(self.r)


@dataclass(frozen=True, eq=False)
class CoupledPaths:
    primary: Path
    shadow: Path
    kind: str


def innovation_rng(seed: int, replicate_id: int, substream: int = MAIN_STREAM) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate_id), int(substream)))
    return np.random.Generator(np.random.Philox(ss))


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def run_recursion(b, zeta, a: float, qcode: int, c1: float, c2: float,
                  method: str = "auto", backend: str | None = None):
    """Run ``X_t = sum_{j<=min(W,t)} b_j r_{t-j}``, ``sigma_t = Q(a + X_t)``,
    ``r_t = zeta_t sigma_t`` from zero initial condition over all of ``zeta``.

    ``method="direct"`` is the O(N W) windowed loop; ``"blocked"`` splits time
    recursively and adds cross-block contributions by FFT convolution,
    O(N log^2 N). Returns ``(r, x, sigma)``.
    """
    kern = get_backend(backend)
    b = np.ascontiguousarray(b, dtype=float)
    zeta = np.ascontiguousarray(zeta, dtype=float)
    N = len(zeta)
    W = len(b)
    r = np.zeros(N)
    x = np.zeros(N)
    sigma = np.zeros(N)
    if method == "auto":
        method = "blocked" if W > BLOCKED_MIN_WINDOW and N > 2 * LEAF else "direct"
    if method == "direct":
        kern.fill_block(b, zeta, float(a), int(qcode), float(c1), float(c2), r, x, sigma, 0, N)
        return r, x, sigma
    if method != "blocked":
        raise ValueError(f"unknown method {method!r}")

    bfull = np.concatenate(([0.0], b))

    def solve(lo: int, hi: int) -> None:
        if hi - lo <= LEAF:
            kern.fill_block(b, zeta, float(a), int(qcode), float(c1), float(c2), r, x, sigma, lo, hi)
            return
        mid = (lo + hi) // 2
        solve(lo, mid)
        s0 = max(lo, mid - W)
        t1 = min(hi, mid + W)
        if t1 > mid:
            ker = bfull[: min(W + 1, t1 - s0)]
            src = r[s0:mid]
            if min(len(src), len(ker)) < 64:
                conv = np.convolve(src, ker)
            else:
                conv = fftconvolve(src, ker)
            x[mid:t1] += conv[mid - s0:t1 - s0]
        solve(mid, hi)

    solve(0, N)
    return r, x, sigma


def _check_spec(spec: ModelSpec, config: PathConfig) -> np.ndarray:
    if config.window > spec.cutoff:
        raise ParameterDomainError(
            f"window {config.window} exceeds the {spec.cutoff} materialized coefficients"
        )
    if config.burn_in < config.window:
        warnings.warn(f"burn_in {config.burn_in} < window {config.window}", RecursionWarning, stacklevel=3)
    cm = contraction_margin(spec, 2)
    if not cm.exists:
        warnings.warn(
            f"spec not admissible at p=2 (margin {cm.margin:.6g}); paths may diverge",
            RecursionWarning,
            stacklevel=3,
        )
    return spec.b[: config.window]


def _draw(spec: ModelSpec, config: PathConfig) -> np.ndarray:
    rng = innovation_rng(config.seed, config.replicate_id, MAIN_STREAM)
    return spec.innovations.sample(rng, config.total)


def _make_path(spec, config, b, zeta, backend) -> Path:
    r, x, s = run_recursion(b, zeta, spec.a, spec.q.code, spec.q.c1, spec.q.c2, config.method, backend)
    k = config.burn_in
    return Path(
        r=_frozen(r[k:].copy()),
        x=_frozen(x[k:].copy()),
        sigma=_frozen(s[k:].copy()),
        zeta=_frozen(np.array(zeta[k:], dtype=float)),
        config=config,
        spec_hash=spec.spec_hash(),
    )


def simulate_path(spec: ModelSpec, config: PathConfig, zeta=None, backend: str | None = None) -> Path:
    """Simulate one path. ``zeta`` (length ``burn_in + n``) overrides the RNG draws."""
    b = _check_spec(spec, config)
    if zeta is None:
        zeta = _draw(spec, config)
    else:
        zeta = np.asarray(zeta, dtype=float)
        if zeta.shape != (config.total,):
            raise ParameterDomainError(f"zeta must have length burn_in + n = {config.total}")
    return _make_path(spec, config, b, zeta, backend)


def simulate_coupled(spec: ModelSpec, config: PathConfig, kind: str = SINGLE_SWAP,
                     backend: str | None = None) -> CoupledPaths:
    """Primary path plus a shadow sharing all draws except the swapped ones.

    ``single_swap`` redraws ``zeta_0`` only; ``past_swap`` redraws every
    ``zeta_s`` with ``s < 0`` (the whole burn-in segment).
    """
    b = _check_spec(spec, config)
    zeta = _draw(spec, config)
    shadow_zeta = zeta.copy()
    rng = innovation_rng(config.seed, config.replicate_id, SHADOW_STREAM)
    k = config.burn_in
    if kind == SINGLE_SWAP:
        shadow_zeta[k] = spec.innovations.sample(rng, 1)[0]
    elif kind == PAST_SWAP:
        shadow_zeta[:k] = spec.innovations.sample(rng, k)
    else:
        raise ParameterDomainError(f"unknown coupling kind {kind!r}")
    return CoupledPaths(
        primary=_make_path(spec, config, b, zeta, backend),
        shadow=_make_path(spec, config, b, shadow_zeta, backend),
        kind=kind,
    )


def simulate_rcar1(kappa: float, b: float, rho: float, eta, xi, n: int, burn_in: int = 1000,
                   seed: int = 0, replicate_id: int = 0, backend: str | None = None) -> np.ndarray:
    """RC-AR(1) ``y_t = kappa eps_t + b eta_t y_{t-1}`` with
    ``eps = rho eta + sqrt(1 - rho^2) xi`` (``eta``, ``xi`` independent
    standardized families). Returns the ``n`` values after burn-in."""
    rng = innovation_rng(seed, replicate_id, MAIN_STREAM)
    N = n + burn_in
    eta_draw = eta.sample(rng, N)
    xi_draw = xi.sample(rng, N)
    eps = rho * eta_draw + np.sqrt(max(0.0, 1.0 - rho * rho)) * xi_draw
    out = np.zeros(N)
    get_backend(backend).rcar1(np.ascontiguousarray(eps), np.ascontiguousarray(eta_draw), float(kappa), float(b), out)
    return out[burn_in:]


def volterra_larch(spec: ModelSpec, zeta, t: int, order: int, window: int) -> float:
    """Approximate ``X_t`` of the LARCH model by its Volterra series.

    ``a * sum_{k=1}^{order} sum_{s_k < ... < s_1 < t} b_{t-s_1} ... b_{s_{k-1}-s_k}
    zeta_{s_1} ... zeta_{s_k}`` over chains whose gaps are at most ``window``
    and whose times lie in ``[0, t)`` (``zeta[i]`` is the draw at time ``i``).
    Evaluated level by level: ``L_1(u) = a sum_j b_j zeta_{u-j}``,
    ``L_k(u) = sum_j b_j zeta_{u-j} L_{k-1}(u-j)``.
    """
    if spec.q.kind != "linear":
        raise ParameterDomainError("the Volterra expansion is specific to the linear (LARCH) map")
    if window > spec.cutoff:
        raise ParameterDomainError("window exceeds the materialized coefficients")
    zeta = np.asarray(zeta, dtype=float)
    b = np.asarray(spec.b[:window], dtype=float)
    if spec.a == 0:
        return 0.0
    U = t + 1
    level = np.full(U, float(spec.a))  # L_0 = a: chain end
    total = 0.0
    for _ in range(order):
        nxt = np.zeros(U)
        for u in range(1, U):
            jmax = min(window, u)
            src = zeta[u - jmax:u][::-1] * level[u - jmax:u][::-1]
            nxt[u] = float(np.dot(b[:jmax], src))
        level = nxt
        total += level[t]
        if not level.any():
            break
    return total


@dataclass(frozen=True, eq=False)
class BurnInDiagnostic:
    """RMS gap in ``X_t`` between a short and a long burn-in run on shared draws.

    ``predicted_rms[t] = (m2 * sum_{j > short + t} b_j^2)^{1/2}`` is the size
    of the first-order truncation term, with ``m2`` the sample ``E r^2``.
    """

    short_burn_in: int
    long_burn_in: int
    rms_diff: np.ndarray
    predicted_rms: np.ndarray
    replicates: int


def burn_in_diagnostic(spec: ModelSpec, config: PathConfig, short_burn_in: int,
                       replicates: int = 20, backend: str | None = None) -> BurnInDiagnostic:
    """Compare ``burn_in = short_burn_in`` with ``config.burn_in`` on the same
    post-burn-in innovations, over ``config.n`` retained steps."""
    b = _check_spec(spec, config)
    long_burn_in = config.burn_in
    if not 0 <= short_burn_in < long_burn_in:
        raise ParameterDomainError("short_burn_in must lie in [0, config.burn_in)")
    if replicates < 1:
        raise ParameterDomainError("replicates must be positive")
    q = spec.q
    sq = np.zeros(config.n)
    m2 = 0.0
    for rep in range(replicates):
        zeta = _draw(spec, config.replace(replicate_id=rep))
        r_long, x_long, _ = run_recursion(b, zeta, spec.a, q.code, q.c1, q.c2, config.method, backend)
        _, x_short, _ = run_recursion(b, zeta[long_burn_in - short_burn_in:], spec.a, q.code, q.c1, q.c2,
                                      config.method, backend)
        sq += (x_long[long_burn_in:] - x_short[short_burn_in:]) ** 2
        m2 += float(np.mean(r_long[long_burn_in:] ** 2))
    m2 /= replicates
    # tails[i] = sum_{j > i} b_j^2 (1-based j), accumulated from the far end
    tails = np.concatenate((np.cumsum((b * b)[::-1])[::-1], [0.0]))
    idx = np.minimum(short_burn_in + np.arange(config.n), len(b))
    return BurnInDiagnostic(short_burn_in, long_burn_in, np.sqrt(sq / replicates),
                            np.sqrt(m2 * tails[idx]), replicates)


# ----------------------------------------------------------------------------
# serialization


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_csv(path: Path, dest) -> None:
    """Columns ``t, r, x, sigma``; floats with 17 significant digits (round-trip exact)."""
    lines = ["t,r,x,sigma"]
    lines.extend(
        f"{t},{_fmt(r)},{_fmt(x)},{_fmt(s)}" for t, (r, x, s) in enumerate(zip(path.r, path.x, path.sigma))
    )
    FsPath(dest).write_text("\n".join(lines) + "\n")


def read_csv(src) -> dict[str, np.ndarray]:
    data = np.loadtxt(src, delimiter=",", skiprows=1, ndmin=2, dtype=float)
    return {"t": data[:, 0].astype(np.int64), "r": data[:, 1], "x": data[:, 2], "sigma": data[:, 3]}


_MAGIC = b"QARCHPT1"


def write_binary(path: Path, dest) -> None:
    """Little-endian layout: magic, u32 header length, JSON header, then
    ``r``, ``x``, ``sigma`` as ``<f8`` arrays."""
    header = json.dumps(
        {"config": asdict(path.config), "n": len(path.r), "spec_hash": path.spec_hash,
         "columns": ["r", "x", "sigma"]},
        sort_keys=True,
    ).encode()
    if hasattr(dest, "write"):
        _write_binary(dest, header, path)
        return
    with open(dest, "wb") as fh:
        _write_binary(fh, header, path)


def _write_binary(fh, header: bytes, path: Path) -> None:
    fh.write(_MAGIC)
    fh.write(struct.pack("<I", len(header)))
    fh.write(header)
    for arr in (path.r, path.x, path.sigma):
        fh.write(np.asarray(arr, dtype="<f8").tobytes())


def read_binary(src) -> tuple[dict, dict[str, np.ndarray]]:
    with open(src, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError("not a qarch binary path file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen))
        n = header["n"]
        cols = {name: np.frombuffer(fh.read(8 * n), dtype="<f8").astype(float) for name in header["columns"]}
    return header, cols
