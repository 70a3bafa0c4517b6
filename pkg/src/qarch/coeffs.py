"""Lag-coefficient sequences and the renewal recursions built on them.

Coefficients ``b_1, b_2, ...`` are described by a small spec object and
materialized to a finite array of length ``J``; every infinite sum in the
package is truncated there.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from qarch.kernels import backend

__all__ = [
    "ParameterDomainError",
    "Explicit",
    "PowerLaw",
    "FracIntegrated",
    "CoefficientSpec",
    "RenewalSequence",
    "materialize",
    "bp_norm",
    "tail_sum",
    "phi_weights",
    "chain_sum",
    "chain_sum_bruteforce",
]

BRUTE_FORCE_MAX_K = 14


class ParameterDomainError(ValueError):
    """A parameter lies outside the domain where an operation is defined."""


def _check_d(d: float) -> None:
    if not 0.0 < d < 0.5:
        raise ParameterDomainError(f"memory parameter d must lie in (0, 1/2), got {d}")


def _check_J(J: int) -> int:
    if int(J) != J or J < 1:
        raise ParameterDomainError(f"cutoff J must be a positive integer, got {J}")
    return int(J)


@dataclass(frozen=True)
class Explicit:
    """A finite list ``b_1..b_m``; zero beyond ``m``."""

    values: tuple[float, ...]
    cutoff: int | None = None
    kind: str = field(default="explicit", init=False)

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def materialize(self, J: int | None = None) -> np.ndarray:
        J = _check_J(J if J is not None else (self.cutoff or max(len(self.values), 1)))
        out = np.zeros(J)
        m = min(J, len(self.values))
        out[:m] = self.values[:m]
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "values": list(self.values), "cutoff": self.cutoff}


@dataclass(frozen=True)
class PowerLaw:
    """``b_j = beta * j**(d - 1)``."""

    beta: float
    d: float
    cutoff: int | None = None
    kind: str = field(default="power_law", init=False)

    def __post_init__(self):
        if not self.beta > 0:
            raise ParameterDomainError(f"beta must be positive, got {self.beta}")
        _check_d(self.d)

    def materialize(self, J: int | None = None) -> np.ndarray:
        J = _check_J(J if J is not None else self.cutoff or 1)
        j = np.arange(1, J + 1, dtype=float)
        return self.beta * j ** (self.d - 1.0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "beta": self.beta, "d": self.d, "cutoff": self.cutoff}


@dataclass(frozen=True)
class FracIntegrated:
    """``b_j = b * phi_j`` with the weights of ``(1 - L)^{-d} - 1``.

    ``phi_j = Gamma(d + j) / (Gamma(d) Gamma(j + 1))``, evaluated through
    log-gamma so large ``j`` does not overflow.
    """

    b: float
    d: float
    cutoff: int | None = None
    kind: str = field(default="frac_integrated", init=False)

    def __post_init__(self):
        _check_d(self.d)

    def materialize(self, J: int | None = None) -> np.ndarray:
        J = _check_J(J if J is not None else self.cutoff or 1)
        j = np.arange(1, J + 1, dtype=float)
        logw = gammaln(self.d + j) - gammaln(self.d) - gammaln(j + 1.0)
        return self.b * np.exp(logw)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "b": self.b, "d": self.d, "cutoff": self.cutoff}


CoefficientSpec = Explicit | PowerLaw | FracIntegrated


def materialize(spec: CoefficientSpec, J: int | None = None) -> np.ndarray:
    """Return ``b_1..b_J`` for ``spec`` (``J`` defaults to the spec's cutoff)."""
    return spec.materialize(J)


def _as_array(b) -> np.ndarray:
    return np.asarray(b, dtype=float).reshape(-1)


def bp_norm(b, p: float) -> float:
    """``sum |b_j|^p`` for ``p < 2`` and ``(sum b_j^2)^(p/2)`` for ``p >= 2``."""
    if not p > 0:
        raise ParameterDomainError(f"p must be positive, got {p}")
    b = _as_array(b)
    if p < 2:
        return float(np.sum(np.abs(b) ** p))
    return float(np.sum(b * b) ** (p / 2.0))


def tail_sum(b, p: float, n: int) -> float:
    """``sum_{j >= n} |b_j|^p`` over the materialized range (1-based ``j``)."""
    if not p > 0:
        raise ParameterDomainError(f"p must be positive, got {p}")
    if n < 1:
        raise ParameterDomainError(f"n must be >= 1, got {n}")
    b = _as_array(b)
    terms = np.abs(b[n - 1:]) ** p
    if len(terms) == 0:
        return 0.0
    # accumulate from the far end so tail_sum(n) >= tail_sum(n+1) holds in floating point too
    return float(np.cumsum(terms[::-1])[-1])


@dataclass(frozen=True)
class RenewalSequence:
    """Output of a renewal recursion.

    ``kind == "phi"`` holds ``phi_0..phi_J`` (``start == 0``);
    ``kind == "chain"`` holds ``A_1..A_K`` (``start == 1``).
    Indexing with ``seq[k]`` uses the mathematical index.
    """

    values: np.ndarray
    kind: str
    start: int

    def __getitem__(self, k: int) -> float:
        if k < self.start or k - self.start >= len(self.values):
            raise IndexError(k)
        return float(self.values[k - self.start])

    def __len__(self) -> int:
        return len(self.values)

    @property
    def index(self) -> np.ndarray:
        return np.arange(self.start, self.start + len(self.values))


def _renewal(alpha: np.ndarray, K: int) -> np.ndarray:
    out = np.zeros(K)
    backend.renewal(np.ascontiguousarray(alpha, dtype=float), out)
    return out


def phi_weights(b, J: int) -> RenewalSequence:
    """Coefficients ``phi_0..phi_J`` of ``(1 - sum_j b_j^2 z^j)^{-1}``.

    Computed by ``phi_j = sum_{i=1}^{j} b_i^2 phi_{j-i}``, ``phi_0 = 1``.
    Raises if ``sum b_j^2 >= 1``, where the inverse is not summable.
    """
    J = _check_J(J)
    b = _as_array(b)
    B2 = float(np.sum(b * b))
    if B2 >= 1.0:
        raise ParameterDomainError(f"sum of b_j^2 = {B2} >= 1; the inverse series is not summable")
    phi = np.empty(J + 1)
    phi[0] = 1.0
    phi[1:] = _renewal(b * b, J)
    return RenewalSequence(values=phi, kind="phi", start=0)


def chain_sum(alpha, K: int) -> RenewalSequence:
    """Chain sums ``A_1..A_K`` for non-negative ``alpha_1, alpha_2, ...``.

    ``A_k`` adds ``alpha_{i_1} alpha_{i_2 - i_1} ... alpha_{k - i_p}`` over all
    chains ``0 < i_1 < ... < i_p < k``; equivalently
    ``A_k = alpha_k + sum_{0<i<k} alpha_i A_{k-i}``.
    """
    K = _check_J(K)
    alpha = _as_array(alpha)
    if np.any(alpha < 0):
        raise ParameterDomainError("chain_sum requires non-negative alpha")
    return RenewalSequence(values=_renewal(alpha, K), kind="chain", start=1)


def chain_sum_bruteforce(alpha, k: int) -> float:
    """``A_k`` by enumerating all ``2^(k-1)`` chains. Only for ``k <= 14``."""
    if k > BRUTE_FORCE_MAX_K:
        raise ParameterDomainError(f"brute-force enumeration limited to k <= {BRUTE_FORCE_MAX_K}")
    alpha = _as_array(alpha)

    def a(j: int) -> float:
        return float(alpha[j - 1]) if j <= len(alpha) else 0.0

    total = 0.0
    interior = range(1, k)
    for p in range(k):
        for cut in itertools.combinations(interior, p):
            points = (0, *cut, k)
            total += math.prod(a(points[i + 1] - points[i]) for i in range(len(points) - 1))
    return total
