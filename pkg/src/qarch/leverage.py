"""Leverage function of the quadratic model and the sign criterion.

For ``sigma_t^2 = c^2 + (a + sum_j b_j r_{t-j})^2`` with ``E zeta^3 = 0`` the
leverage ``h_j = E[r_j^2 r_0]`` solves the linear equation

    h_j = 2 a b_j m2 + sum_{0<i<j} b_i^2 h_{j-i} + 2 b_j sum_{i>0} b_{i+j} h_i,

whose right-hand side is a contraction with factor at most ``3 B^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path as FsPath

import numpy as np
from scipy.signal import fftconvolve

from qarch.coeffs import ParameterDomainError
from qarch.model import ModelSpec, stationary_m2

__all__ = [
    "LeverageSolution",
    "LeverageVerdict",
    "ConvergenceError",
    "leverage_map",
    "solve_leverage",
    "default_truncation",
    "sign_criterion",
    "write_solution_csv",
]

MAX_DEFAULT_J = 1 << 16
# sweeps are cheap, so short coefficient lists still get this many lags
MIN_DEFAULT_J = 64


class ConvergenceError(RuntimeError):
    pass


class LeverageVerdict(str, Enum):
    LEVERAGE = "leverage"
    ANTI_LEVERAGE = "anti-leverage"
    INAPPLICABLE = "inapplicable"


@dataclass(frozen=True)
class LeverageSolution:
    h: np.ndarray
    residual: float
    iterations: int
    norm: float
    m2: float
    tol: float

    @property
    def J(self) -> int:
        return len(self.h)

    def norm_bound(self, a: float, B: float) -> float:
        """``2|a| m2 B / (1 - 3B^2)``; infinite when ``B^2 >= 1/3``."""
        if 3 * B * B >= 1:
            return math.inf
        return 2 * abs(a) * self.m2 * B / (1 - 3 * B * B)


def _conv(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    if min(len(u), len(v)) < 256:
        return np.convolve(u, v)
    return fftconvolve(u, v)


def leverage_map(h: np.ndarray, b: np.ndarray, a: float, m2: float) -> np.ndarray:
    """Right-hand side of the leverage equation on ``h_1..h_J`` (tail taken as zero)."""
    J = len(h)
    bb = np.zeros(J)
    m = min(J, len(b))
    bb[:m] = b[:m]
    # causal part: sum_{0<i<j} b_i^2 h_{j-i}; index 0 of the conv is lag 2 (b_1 h_1)
    renewal = np.zeros(J)
    c = _conv(bb * bb, h)
    renewal[1:] = c[: J - 1]
    # anticausal part: g_j = sum_{i>=1} b_{i+j} h_i; needs b beyond J
    bl = np.zeros(2 * J + 1)
    mm = min(len(b), 2 * J)
    bl[1: mm + 1] = b[:mm]
    corr = _conv(bl[::-1], h)  # corr[L-1-(i+j)+ (i-1)] pairs b_{i+j} with h_i
    L = len(bl)
    j = np.arange(1, J + 1)
    g = corr[L - 2 - j]
    return 2 * a * bb * m2 + renewal + 2 * bb * g


def default_truncation(b: np.ndarray, tol: float) -> int:
    """Smallest ``J`` with ``sum_{j>J} b_j^2 < tol^2``, but at least ``log(tol) / log(B^2)``
    and at least 64.

    The second bound matters for short coefficient lists: ``h`` keeps decaying
    like ``B^{2j}`` well past the last non-zero ``b_j``.
    """
    b = np.asarray(b, dtype=float)
    sq = b * b
    tails = np.cumsum(sq[::-1])[::-1]  # tails[k] = sum_{j>=k+1} b_j^2
    ok = np.nonzero(np.append(tails, 0.0)[1:] < tol * tol)[0]
    J = int(ok[0]) + 1 if len(ok) else len(b)
    B2 = float(tails[0]) if len(tails) else 0.0
    if 0 < B2 < 1:
        J = max(J, int(math.ceil(math.log(tol) / math.log(B2))) + 1)
    return max(MIN_DEFAULT_J, min(J, MAX_DEFAULT_J))


def _check(spec: ModelSpec) -> tuple[float, float]:
    if spec.q.kind != "quadratic" or spec.q.c2 != 1.0:
        raise ParameterDomainError("the leverage equation holds for the quadratic map with c2 = 1")
    if spec.innovations.mu3 != 0:
        raise ParameterDomainError("the leverage equation needs E zeta^3 = 0")
    B2 = spec.B2
    if 3 * B2 >= 1:
        raise ParameterDomainError(
            f"B^2 = {B2:.6g} >= 1/3: the leverage map is not a certified contraction"
        )
    m2, _ = stationary_m2(spec)
    return B2, m2


def solve_leverage(spec: ModelSpec, J: int | None = None, tol: float = 1e-12,
                   max_iter: int = 10_000) -> LeverageSolution:
    """Picard iteration from ``h = 0`` until successive iterates differ by < ``tol`` (l2)."""
    B2, m2 = _check(spec)
    if not tol > 0:
        raise ParameterDomainError("tol must be positive")
    b = np.asarray(spec.b, dtype=float)
    if J is None:
        J = default_truncation(b, tol)
    if J < 1:
        raise ParameterDomainError("J must be positive")
    h = np.zeros(J)
    for it in range(1, max_iter + 1):
        new = leverage_map(h, b, spec.a, m2)
        step = float(np.linalg.norm(new - h))
        h = new
        if step < tol:
            break
    else:
        raise ConvergenceError(f"no convergence to {tol} in {max_iter} iterations (last step {step:.3g})")
    residual = float(np.linalg.norm(leverage_map(h, b, spec.a, m2) - h))
    h.setflags(write=False)
    return LeverageSolution(h, residual, it, float(np.linalg.norm(h)), m2, tol)


def sign_criterion(spec: ModelSpec, k: int | None = None) -> LeverageVerdict:
    """Sign of ``h_1..h_k`` guaranteed by the coefficient signs (``k=None`` means all).

    Needs the quadratic map with ``c2 = 1``, ``E zeta^3 = 0`` and
    ``B^2 < 1/5``; otherwise the verdict is ``inapplicable``.
    """
    if spec.q.kind != "quadratic" or spec.q.c2 != 1.0 or spec.innovations.mu3 != 0:
        return LeverageVerdict.INAPPLICABLE
    if not spec.B2 < 0.2:
        return LeverageVerdict.INAPPLICABLE
    if k is not None and k < 1:
        raise ParameterDomainError("k must be >= 1")
    ab = spec.a * np.asarray(spec.b, dtype=float)
    if k is not None:
        ab = ab[:k] if k <= len(ab) else np.concatenate([ab, np.zeros(k - len(ab))])
    if len(ab) == 0:
        return LeverageVerdict.INAPPLICABLE
    if ab[0] < 0 and np.all(ab[1:] <= 0):
        return LeverageVerdict.LEVERAGE
    if ab[0] > 0 and np.all(ab[1:] >= 0):
        return LeverageVerdict.ANTI_LEVERAGE
    return LeverageVerdict.INAPPLICABLE


def write_solution_csv(sol: LeverageSolution, dest, spec_hash: str = "") -> None:
    lines = [
        f"# spec_hash={spec_hash} residual={sol.residual:.17g} iterations={sol.iterations} J={sol.J}",
        "j,h",
    ]
    lines.extend(f"{j},{float(v):.17g}" for j, v in enumerate(sol.h, start=1))
    FsPath(dest).write_text("\n".join(lines) + "\n")
