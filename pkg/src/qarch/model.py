"""Model definition ``r_t = zeta_t * Q(a + X_t)``, ``X_t = sum_{j>=1} b_j r_{t-j}``.

Existence checks, Rosenthal constants and the closed-form second-order and
long-memory constants live here.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import gammaln

from qarch.coeffs import CoefficientSpec, ParameterDomainError, PowerLaw, bp_norm
from qarch.kernels import Q_ABS, Q_LINEAR, Q_QUADRATIC

__all__ = [
    "VolatilityMap",
    "InnovationSpec",
    "ModelSpec",
    "ContractionResult",
    "MomentBound",
    "LongMemoryConstants",
    "rosenthal_constant",
    "contraction_margin",
    "moment_bound",
    "stationary_m2",
    "cov_X_closed",
    "beta_function",
    "longmem_constants",
    "EXISTS",
    "NOT_EXISTS",
    "INCONCLUSIVE",
]

EXISTS = "exists-unique"
NOT_EXISTS = "does-not-exist"
INCONCLUSIVE = "inconclusive"

NEAR_CRITICAL = 1e-3


@dataclass(frozen=True)
class VolatilityMap:
    """The map ``Q`` with Lipschitz constant and envelope ``Q^2 <= c1^2 + c2^2 x^2``."""

    kind: str
    c1: float = 0.0
    c2: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "quadratic", "abs"):
            raise ParameterDomainError(f"unknown volatility map {self.kind!r}")
        if self.kind == "quadratic":
            if self.c1 < 0 or self.c2 < 0:
                raise ParameterDomainError("quadratic map needs c1 >= 0 and c2 >= 0")
        else:
            object.__setattr__(self, "c1", 0.0)
            object.__setattr__(self, "c2", 1.0)

    @classmethod
    def linear(cls) -> VolatilityMap:
        return cls("linear")

    @classmethod
    def quadratic(cls, c1: float = 1.0, c2: float = 1.0) -> VolatilityMap:
        return cls("quadratic", float(c1), float(c2))

    @classmethod
    def abs(cls) -> VolatilityMap:
        return cls("abs")

    @property
    def code(self) -> int:
        return {"linear": Q_LINEAR, "quadratic": Q_QUADRATIC, "abs": Q_ABS}[self.kind]

    @property
    def lipschitz(self) -> float:
        return self.c2 if self.kind == "quadratic" else 1.0

    @property
    def envelope(self) -> tuple[float, float]:
        return (self.c1, self.c2)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "quadratic":
            return np.sqrt(self.c1 ** 2 + self.c2 ** 2 * x * x)
        if self.kind == "abs":
            return np.abs(x)
        return x

    def to_dict(self) -> dict:
        return {"kind": self.kind, "c1": self.c1, "c2": self.c2}


def _subfactorial(k: int) -> int:
    d0, d1 = 1, 0
    if k == 0:
        return 1
    for m in range(2, k + 1):
        d0, d1 = d1, (m - 1) * (d0 + d1)
    return d1


_FAMILIES = ("rademacher", "gaussian", "exponential", "student_t", "uniform")


@dataclass(frozen=True)
class InnovationSpec:
    """Standardized i.i.d. driver (mean 0, variance 1) with an exact moment oracle.

    Families: ``rademacher``, ``gaussian``, ``exponential`` (``Exp(1) - 1``),
    ``student_t`` (scaled to unit variance, needs ``nu > 4``) and ``uniform``
    on ``[-sqrt 3, sqrt 3]``.
    """

    family: str = "gaussian"
    nu: float | None = None

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ParameterDomainError(f"unknown innovation family {self.family!r}; expected one of {_FAMILIES}")
        if self.family == "student_t":
            if self.nu is None or not self.nu > 4:
                raise ParameterDomainError(f"student_t innovations need nu > 4, got {self.nu}")
        elif self.nu is not None:
            object.__setattr__(self, "nu", None)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        f = self.family
        if f == "gaussian":
            return rng.standard_normal(size)
        if f == "rademacher":
            return rng.integers(0, 2, size=size).astype(float) * 2.0 - 1.0
        if f == "exponential":
            return rng.standard_exponential(size) - 1.0
        if f == "uniform":
            s = math.sqrt(3.0)
            return rng.uniform(-s, s, size)
        return rng.standard_t(self.nu, size) * math.sqrt((self.nu - 2.0) / self.nu)

    def abs_moment(self, p: float) -> float:
        """``E|zeta|^p``."""
        if not p > 0:
            raise ParameterDomainError(f"p must be positive, got {p}")
        f = self.family
        if f == "rademacher":
            return 1.0
        if f == "gaussian":
            if p == int(p) and int(p) % 2 == 0:
                # (p-1)!!, exact where the gamma route is off by an ulp
                return float(math.prod(range(int(p) - 1, 0, -2)))
            return math.exp(p / 2 * math.log(2.0) + gammaln((p + 1) / 2) - 0.5 * math.log(math.pi))
        if f == "uniform":
            return 3.0 ** (p / 2) / (p + 1)
        if f == "exponential":
            # E|E-1|^p = e^{-1} (Gamma(p+1) + int_0^1 u^p e^u du)
            head = 0.0
            term_fact = 1.0
            for m in range(60):
                if m > 0:
                    term_fact *= m
                head += 1.0 / (term_fact * (p + m + 1))
            return math.exp(-1.0) * (math.gamma(p + 1) + head)
        nu = self.nu
        if p >= nu:
            return math.inf
        log_t = (p / 2 * math.log(nu) + gammaln((p + 1) / 2) + gammaln((nu - p) / 2)
                 - 0.5 * math.log(math.pi) - gammaln(nu / 2))
        return math.exp(log_t + p / 2 * math.log((nu - 2) / nu))

    def moment(self, k: int) -> float:
        """Signed moment ``E zeta^k`` for integer ``k >= 0``."""
        if k < 0 or int(k) != k:
            raise ParameterDomainError(f"k must be a non-negative integer, got {k}")
        k = int(k)
        if k == 0:
            return 1.0
        if self.family == "exponential":
            return float(_subfactorial(k))
        if k % 2:
            return 0.0 if (self.family != "student_t" or k < self.nu) else math.nan
        return self.abs_moment(k)

    @property
    def mu3(self) -> float:
        return self.moment(3)

    @property
    def mu4(self) -> float:
        return self.moment(4)

    def to_dict(self) -> dict:
        d = {"family": self.family}
        if self.nu is not None:
            d["nu"] = self.nu
        return d


@dataclass(frozen=True)
class ModelSpec:
    """Full model: intercept ``a``, map ``q``, coefficients, innovations."""

    a: float
    q: VolatilityMap
    coeffs: CoefficientSpec
    innovations: InnovationSpec = field(default_factory=InnovationSpec)

    @cached_property
    def b(self) -> np.ndarray:
        """Coefficients materialized at the spec's cutoff (read-only)."""
        arr = self.coeffs.materialize()
        arr.setflags(write=False)
        return arr

    @property
    def cutoff(self) -> int:
        return len(self.b)

    @property
    def B2(self) -> float:
        return float(np.sum(self.b * self.b))

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "q": self.q.to_dict(),
            "coeffs": self.coeffs.to_dict(),
            "innovations": self.innovations.to_dict(),
        }

    def spec_hash(self) -> str:
        """Short stable hash of the spec, used to name output files."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def rosenthal_constant(p: float) -> float:
    """Constant ``K_p`` of the martingale moment inequality, or a certified bound.

    Exact values 1 (``p <= 1`` or ``p == 2``) and 2 (``1 < p < 2``); for
    ``p > 2`` Osekowski's bound
    ``(2^{3/2 + 1/p} (p/4 + 1)^{1/p} (1 + p / log(p/2)))^p``.
    """
    if not p > 0:
        raise ParameterDomainError(f"p must be positive, got {p}")
    if p <= 1 or p == 2:
        return 1.0
    if p < 2:
        return 2.0
    root = 2.0 ** (1.5 + 1.0 / p) * (p / 4.0 + 1.0) ** (1.0 / p) * (1.0 + p / math.log(p / 2.0))
    return root ** p


@dataclass(frozen=True)
class ContractionResult:
    p: float
    margin: float
    verdict: str
    rosenthal: float
    abs_moment: float
    lipschitz: float
    Bp: float
    sharp_margin: float | None = None
    sufficient_only: bool = True

    @property
    def exists(self) -> bool:
        return self.verdict == EXISTS


def contraction_margin(spec: ModelSpec, p: float) -> ContractionResult:
    """``K_p |mu|_p Lip_Q^p B_p`` and the resulting existence verdict.

    For a quadratic map at ``p = 2`` (unit-variance innovations) the sharp
    criterion ``c2^2 B_2 < 1`` decides both ways; the same holds for the
    linear map (LARCH). Elsewhere the condition is only sufficient, so a
    margin >= 1 gives ``inconclusive``.
    """
    Kp = rosenthal_constant(p)
    mu = spec.innovations.abs_moment(p)
    lip = spec.q.lipschitz
    Bp = bp_norm(spec.b, p)
    margin = Kp * mu * lip ** p * Bp
    if p == 2 and spec.q.kind in ("quadratic", "linear"):
        sharp = spec.q.c2 ** 2 * bp_norm(spec.b, 2)
        verdict = EXISTS if sharp < 1 else NOT_EXISTS
        return ContractionResult(p, margin, verdict, Kp, mu, lip, Bp, sharp, sufficient_only=False)
    verdict = EXISTS if margin < 1 else INCONCLUSIVE
    return ContractionResult(p, margin, verdict, Kp, mu, lip, Bp, None, sufficient_only=True)


@dataclass(frozen=True)
class MomentBound:
    """Denominator of the p-th moment bound; the constant ``C(p, Q)`` is not available."""

    margin: float
    denominator: float
    finite: bool
    near_critical: bool

    @classmethod
    def from_margin(cls, margin: float) -> MomentBound:
        den = 1.0 - margin
        finite = den > 0
        return cls(margin, den, finite, finite and den < NEAR_CRITICAL)


def moment_bound(spec: ModelSpec, p: float) -> MomentBound:
    return MomentBound.from_margin(contraction_margin(spec, p).margin)


def _require_quadratic(spec: ModelSpec) -> None:
    if spec.q.kind != "quadratic":
        raise ParameterDomainError(
            f"closed-form second moments need a quadratic map, got {spec.q.kind!r}; use Monte Carlo"
        )


def stationary_m2(spec: ModelSpec) -> tuple[float, float]:
    """``(E r^2, E X^2)`` for the quadratic map with unit-variance innovations.

    ``E X^2 = B_2 (c1^2 + c2^2 a^2) / (1 - c2^2 B_2)``,
    ``E r^2 = c1^2 + c2^2 (a^2 + E X^2)``.
    """
    _require_quadratic(spec)
    c1, c2 = spec.q.envelope
    B2 = spec.B2
    sharp = c2 * c2 * B2
    if sharp >= 1:
        raise ParameterDomainError(f"c2^2 B_2 = {sharp} >= 1: no stationary L2 solution")
    ex2 = B2 * (c1 * c1 + c2 * c2 * spec.a ** 2) / (1.0 - sharp)
    m2 = c1 * c1 + c2 * c2 * (spec.a ** 2 + ex2)
    return m2, ex2


def _autocorr_b(b: np.ndarray, t: int) -> float:
    if t >= len(b):
        return 0.0
    return float(np.dot(b[t:], b[: len(b) - t]))


def cov_X_closed(spec: ModelSpec, t: int, m2: float | None = None) -> float:
    """``E[X_t X_0] = m2 * sum_{s>=1} b_{t+s} b_s`` over the materialized range."""
    if t < 0:
        raise ParameterDomainError("lag must be non-negative")
    if m2 is None:
        m2 = stationary_m2(spec)[0]
    return m2 * _autocorr_b(spec.b, int(t))


def beta_function(x: float, y: float) -> float:
    return math.exp(gammaln(x) + gammaln(y) - gammaln(x + y))


@dataclass(frozen=True)
class LongMemoryConstants:
    d: float
    lambda1_sq: float
    lambda2_sq: float
    kappa1_sq: float | None
    kappa2_sq: float | None
    m2: float
    B2: float


def longmem_constants(spec: ModelSpec, m2: float | None = None) -> LongMemoryConstants:
    """Asymptotic constants for ``b_j = beta j^{d-1}``.

    ``Cov(X_0, X_t) ~ lambda1^2 t^{2d-1}`` and
    ``Cov(r_0^2, r_t^2) ~ kappa1^2 t^{2d-1}``, with partial-sum variances
    ``lambda2^2 = lambda1^2 / (d(1+2d))`` and ``kappa2^2`` likewise.
    ``kappa`` constants are only defined for the quadratic map with ``c2 = 1``.
    ``B^2`` and ``m2`` use the materialized (truncated) coefficients; pass
    ``m2`` explicitly (e.g. a Monte Carlo value) for non-quadratic maps.
    """
    if not isinstance(spec.coeffs, PowerLaw):
        raise ParameterDomainError("long-memory constants need power-law coefficients")
    d, beta = spec.coeffs.d, spec.coeffs.beta
    B2 = spec.B2
    if B2 >= 1:
        raise ParameterDomainError(f"B^2 = {B2} >= 1")
    if m2 is None:
        m2, _ = stationary_m2(spec)
    beta_fn = beta_function(d, 1.0 - 2.0 * d)
    lam1 = beta ** 2 * beta_fn * m2
    lam2 = lam1 / (d * (1.0 + 2.0 * d))
    kap1 = kap2 = None
    if spec.q.kind == "quadratic" and spec.q.c2 == 1.0:
        kap1 = (2.0 * spec.a * beta / (1.0 - B2)) ** 2 * beta_fn * m2
        kap2 = kap1 / (d * (1.0 + 2.0 * d))
    return LongMemoryConstants(d, lam1, lam2, kap1, kap2, m2, B2)
