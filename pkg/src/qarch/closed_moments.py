"""Exact low-order moments of the asymmetric ARCH(1) and its random-coefficient twin.

ARCH(1):  ``r_t = zeta_t (c^2 + (a + b r_{t-1})^2)^{1/2}``
RC-AR(1): ``y_t = kappa eps_t + b eta_t y_{t-1}``

With ``kappa rho = a`` and ``kappa^2 = a^2 + c^2`` both share the same
conditional variance. For each process ``m2 = E r^2``,
``m3(t) = E[r_t^2 r_0]``, ``m4(t) = E[r_t^2 r_0^2]`` and
``rho4(t) = Cov(r_t^2, r_0^2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from qarch.coeffs import ParameterDomainError
from qarch.model import InnovationSpec

__all__ = [
    "Arch1Params",
    "RcAr1Params",
    "Moments",
    "arch1_moments",
    "rcar1_moments",
    "match_params",
    "arch1_leverage",
]

# past this lag the closed forms are used instead of iterating the recursion
RECURSION_MAX_T = 64


@dataclass(frozen=True)
class Arch1Params:
    a: float
    b: float
    c: float
    mu3: float = 0.0
    mu4: float = 3.0

    def __post_init__(self):
        if self.c < 0:
            raise ParameterDomainError("c must be non-negative")
        if self.b * self.b >= 1:
            raise ParameterDomainError(f"b^2 = {self.b ** 2} >= 1: no stationary solution with finite variance")
        if self.mu3 != 0:
            raise ParameterDomainError("moment formulas assume mu3 = E zeta^3 = 0")

    @classmethod
    def from_innovations(cls, a: float, b: float, c: float, innovations: InnovationSpec) -> Arch1Params:
        return cls(a, b, c, innovations.mu3, innovations.mu4)

    @property
    def m2(self) -> float:
        return (self.a ** 2 + self.c ** 2) / (1.0 - self.b ** 2)


@dataclass(frozen=True)
class RcAr1Params:
    """RC-AR(1) parameters with the cross-moment table ``nu[(i, j)] = E[eps^i eta^j]``."""

    kappa: float
    b: float
    rho: float
    nu: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if not -1.0 <= self.rho <= 1.0:
            raise ParameterDomainError(f"rho must lie in [-1, 1], got {self.rho}")
        if self.b * self.b >= 1:
            raise ParameterDomainError(f"b^2 = {self.b ** 2} >= 1")
        nu = {(1, 0): 0.0, (0, 1): 0.0, (2, 0): 1.0, (0, 2): 1.0, (1, 1): self.rho}
        nu.update(self.nu)
        for key, want in ((1, 0), 0.0), ((0, 1), 0.0), ((2, 0), 1.0), ((0, 2), 1.0), ((1, 1), self.rho):
            if not math.isclose(nu[key], want, abs_tol=1e-12):
                raise ParameterDomainError(f"nu{key} = {nu[key]} inconsistent with a standardized pair")
        object.__setattr__(self, "nu", nu)

    @classmethod
    def gaussian(cls, kappa: float, b: float, rho: float) -> RcAr1Params:
        """Centered Gaussian pair with unit variances; moments by Isserlis' rule."""
        nu = {
            (3, 0): 0.0, (2, 1): 0.0, (1, 2): 0.0, (0, 3): 0.0,
            (4, 0): 3.0, (0, 4): 3.0, (3, 1): 3.0 * rho, (1, 3): 3.0 * rho,
            (2, 2): 1.0 + 2.0 * rho * rho,
        }
        return cls(kappa, b, rho, nu)

    @classmethod
    def mixed(cls, kappa: float, b: float, rho: float,
              eta: InnovationSpec, xi: InnovationSpec) -> RcAr1Params:
        """Pair built as ``eps = rho*eta + sqrt(1-rho^2)*xi`` with independent ``eta``, ``xi``."""
        s = math.sqrt(max(0.0, 1.0 - rho * rho))
        nu = {}
        for i in range(5):
            for j in range(5 - i):
                nu[(i, j)] = sum(
                    math.comb(i, m) * rho ** m * s ** (i - m) * eta.moment(m + j) * xi.moment(i - m)
                    for m in range(i + 1)
                )
        return cls(kappa, b, rho, nu)


@dataclass(frozen=True)
class Moments:
    m2: float
    m3: float
    m4: float
    rho4: float
    t: int


def _arch1_t0(p: Arch1Params) -> tuple[float, float]:
    s = p.a ** 2 + p.c ** 2
    if p.mu4 * p.b ** 4 >= 1:
        raise ParameterDomainError(f"mu4 b^4 = {p.mu4 * p.b ** 4} >= 1: fourth moments are infinite")
    m2 = p.m2
    m40 = p.mu4 * (s * s + ((2 * p.a * p.b) ** 2 + 2 * s * p.b ** 2) * m2) / (1.0 - p.mu4 * p.b ** 4)
    return m2, m40


def arch1_moments(p: Arch1Params, t: int, method: str = "auto") -> Moments:
    """``m2, m3(t), m4(t), rho4(t)`` for the asymmetric ARCH(1).

    ``method`` is ``"recursion"``, ``"closed"`` or ``"auto"`` (recursion for
    ``t <= 64``, closed form beyond).
    """
    if t < 0:
        raise ParameterDomainError("t must be non-negative")
    m2, m40 = _arch1_t0(p)
    s = p.a ** 2 + p.c ** 2
    b2 = p.b ** 2
    if method == "auto":
        method = "recursion" if t <= RECURSION_MAX_T else "closed"
    if t == 0:
        return Moments(m2, 0.0, m40, m40 - m2 * m2, 0)
    if method == "recursion":
        m3 = 2 * p.a * p.b * m2
        m4 = s * m2 + b2 * m40
        # carried separately: m4 - m2^2 cancels badly when rho4 is tiny
        rho4 = b2 * (m40 - m2 * m2)
        for _ in range(1, t):
            m3 = b2 * m3
            m4 = s * m2 + b2 * m4
            rho4 = b2 * rho4
    elif method == "closed":
        m3 = 2 * p.a * p.b * s / (1 - b2) * b2 ** (t - 1)
        m4 = m2 * s * (1 - b2 ** t) / (1 - b2) + b2 ** t * m40
        rho4 = (m40 - m2 * m2) * b2 ** t
    else:
        raise ValueError(f"unknown method {method!r}")
    return Moments(m2, m3, m4, rho4, t)


def rcar1_moments(p: RcAr1Params, t: int, method: str = "auto") -> Moments:
    """``m2, m3(t), m4(t), rho4(t)`` for the RC-AR(1) process.

    Needs the cross moments ``nu[(i, j)]`` with ``i + j <= 4``.
    """
    if t < 0:
        raise ParameterDomainError("t must be non-negative")
    k, b, rho, nu = p.kappa, p.b, p.rho, p.nu
    missing = [key for key in ((3, 0), (1, 2), (0, 3), (4, 0), (2, 2), (1, 3), (0, 4)) if key not in nu]
    if missing:
        raise ParameterDomainError(f"missing cross moments {missing}")
    if nu[(0, 4)] * b ** 4 >= 1:
        raise ParameterDomainError(f"nu04 b^4 = {nu[(0, 4)] * b ** 4} >= 1: fourth moments are infinite")
    if nu[(0, 3)] * b ** 3 == 1:
        raise ParameterDomainError("nu03 b^3 = 1: third moment undefined")
    b2 = b * b
    m2 = k * k / (1.0 - b2)
    m30 = (k ** 3 * nu[(3, 0)] + 3 * k * b2 * nu[(1, 2)] * m2) / (1.0 - nu[(0, 3)] * b ** 3)
    m40 = (k ** 4 * nu[(4, 0)] + 6 * k * k * b2 * nu[(2, 2)] * m2 + 4 * k * b ** 3 * nu[(1, 3)] * m30) / (
        1.0 - nu[(0, 4)] * b ** 4
    )
    if t == 0:
        return Moments(m2, m30, m40, m40 - m2 * m2, 0)
    if method == "auto":
        method = "recursion" if t <= RECURSION_MAX_T else "closed"
    if method == "recursion":
        m3 = 2 * k * rho * b * m2 + b2 * m30
        m4 = k * k * m2 + 2 * k * rho * b * m30 + b2 * m40
        rho4 = 2 * k * rho * b * m30 + b2 * (m40 - m2 * m2)
        for _ in range(1, t):
            m3 = b2 * m3
            m4 = k * k * m2 + b2 * m4
            rho4 = b2 * rho4
    elif method == "closed":
        m3 = b2 ** (t - 1) * (2 * k * rho * b * m2 + b2 * m30)
        # the (2 kappa rho m30 / b) term is b^{2t} times that, i.e. 2 kappa rho b^{2t-1} m30
        m4 = m2 * k * k * (1 - b2 ** t) / (1 - b2) + b2 ** t * m40 + 2 * k * rho * b ** (2 * t - 1) * m30
        rho41 = 2 * rho * k * b * m30 + b2 * (m40 - m2 * m2)
        rho4 = b2 ** (t - 1) * rho41
    else:
        raise ValueError(f"unknown method {method!r}")
    return Moments(m2, m3, m4, rho4, t)


def match_params(a: float, b: float, c: float) -> tuple[float, float]:
    """``(kappa, rho)`` with ``kappa rho = a`` and ``kappa^2 = a^2 + c^2``.

    ``b`` is shared unchanged between the two processes.
    """
    kappa2 = a * a + c * c
    if kappa2 <= 0:
        raise ParameterDomainError("a = c = 0 has no matching RC-AR(1) parameters")
    kappa = math.sqrt(kappa2)
    rho = min(1.0, max(-1.0, a / kappa))
    return kappa, rho


def arch1_leverage(p: Arch1Params, j: int) -> float:
    """``h_j = E[r_j^2 r_0] = 2 m2 a b^{2j-1}``."""
    if j < 1:
        raise ParameterDomainError("j must be >= 1")
    return 2.0 * p.m2 * p.a * p.b ** (2 * j - 1)
