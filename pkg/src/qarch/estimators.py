"""Empirical statistics on simulated paths.

Standard errors for time averages use non-overlapping batch means or a
delete-one-block jackknife; for statistics across independent replicates the
ordinary replicate standard error is used. Accumulation over replicates is
done on arrays in replicate order, so results do not depend on scheduling.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from qarch.coeffs import ParameterDomainError, PowerLaw
from qarch.model import ModelSpec
from qarch.simulate import PAST_SWAP, SINGLE_SWAP, CoupledPaths, Path, PathConfig, simulate_path

__all__ = [
    "Estimate",
    "SlopeFit",
    "SignTest",
    "PartialSumResult",
    "fit_loglog",
    "batch_means_se",
    "jackknife_means",
    "autocov",
    "autocov_array",
    "leverage_hat",
    "delta_hat",
    "delta_profile",
    "tau_hat",
    "tau_profile",
    "partial_sum_variance",
    "partial_sum_variances",
    "ecdf",
    "conditional_sign_test",
    "map_replicates",
    "FEW_REPLICATES",
]

FEW_REPLICATES = 100
MIN_EXCEEDANCES = 30


class EstimatorWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    n: int

    def __float__(self) -> float:
        return float(self.value)

    def z(self, target: float) -> float:
        diff = self.value - target
        if self.stderr == 0:
            return 0.0 if diff == 0 else math.copysign(math.inf, diff)
        return diff / self.stderr


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    lo: float
    hi: float
    npoints: int


def fit_loglog(x, y, lo: float | None = None, hi: float | None = None) -> SlopeFit:
    """OLS of ``log y`` on ``log x`` over ``lo <= x <= hi``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = np.ones(len(x), dtype=bool)
    if lo is not None:
        keep &= x >= lo
    if hi is not None:
        keep &= x <= hi
    x, y = x[keep], y[keep]
    if len(x) < 3:
        raise ParameterDomainError("a slope fit needs at least 3 points")
    if np.any(y <= 0) or np.any(x <= 0):
        raise ParameterDomainError("log-log fit needs strictly positive x and y")
    lx, ly = np.log(x), np.log(y)
    xm = lx.mean()
    sxx = np.sum((lx - xm) ** 2)
    slope = float(np.sum((lx - xm) * (ly - ly.mean())) / sxx)
    intercept = float(ly.mean() - slope * xm)
    resid = ly - (intercept + slope * lx)
    dof = len(x) - 2
    se = float(math.sqrt(np.sum(resid ** 2) / dof / sxx)) if dof > 0 else math.nan
    return SlopeFit(slope, intercept, se, float(x.min()), float(x.max()), len(x))


def batch_means_se(values, n_batches: int = 100) -> float:
    """Standard error of ``mean(values)`` from non-overlapping batch means."""
    v = np.asarray(values, dtype=float)
    size = len(v) // n_batches
    if size < 1:
        raise ParameterDomainError("too few values for batch means")
    means = v[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def jackknife_means(columns: Sequence[np.ndarray], fn: Callable[..., float],
                    n_blocks: int = 100) -> Estimate:
    """``fn(mean(col_1), mean(col_2), ...)`` with a delete-one-block jackknife SE.

    Columns must be aligned and of equal length.
    """
    cols = [np.asarray(c, dtype=float) for c in columns]
    n = len(cols[0])
    size = n // n_blocks
    if size < 1:
        raise ParameterDomainError("too few values for the jackknife")
    m = size * n_blocks
    sums = np.array([c[:m].reshape(n_blocks, size).sum(axis=1) for c in cols])  # (ncol, blocks)
    tot = sums.sum(axis=1)
    full = fn(*(tot / m))
    loo = (tot[:, None] - sums) / (m - size)
    thetas = np.array([fn(*loo[:, i]) for i in range(n_blocks)])
    se = math.sqrt((n_blocks - 1) / n_blocks * np.sum((thetas - thetas.mean()) ** 2))
    return Estimate(float(full), float(se), m)


def autocov_array(series, max_lag: int) -> np.ndarray:
    """Biased autocovariances ``(1/n) sum (y_t - ybar)(y_{t+k} - ybar)`` for k = 0..max_lag."""
    y = np.asarray(series, dtype=float)
    n = len(y)
    if max_lag >= n:
        raise ParameterDomainError(f"lag {max_lag} >= series length {n}")
    yc = y - y.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(yc, nfft)
    acf = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1] / n
    return acf


def autocov(series, lags: Iterable[int]) -> dict[int, float]:
    """Biased autocovariance at each lag in ``lags`` (direct sums)."""
    y = np.asarray(series, dtype=float)
    n = len(y)
    yc = y - y.mean()
    out = {}
    for k in lags:
        k = int(k)
        if k < 0 or k >= n:
            raise ParameterDomainError(f"lag {k} outside [0, {n})")
        out[k] = float(np.dot(yc[: n - k], yc[k:]) / n)
    return out


def _series(path_or_array, attr: str = "r") -> np.ndarray:
    if isinstance(path_or_array, Path):
        return getattr(path_or_array, attr)
    return np.asarray(path_or_array, dtype=float)


def leverage_hat(path, j: int, n_batches: int = 100) -> Estimate:
    """``(1/(n-j)) sum_t r_t^2 r_{t-j}``; no centering since ``E r = 0``."""
    r = _series(path)
    n = len(r)
    if not 1 <= j < n:
        raise ParameterDomainError(f"lag j={j} outside [1, {n})")
    prod = r[j:] ** 2 * r[:-j]
    return Estimate(float(prod.mean()), batch_means_se(prod, n_batches), len(prod))


def _target(path: Path, target: str) -> np.ndarray:
    if target == "r":
        return path.r
    if target == "X":
        return path.x
    raise ParameterDomainError(f"target must be 'r' or 'X', got {target!r}")


def _diff_matrix(couples: Sequence[CoupledPaths], target: str, kind: str) -> np.ndarray:
    if len(couples) < FEW_REPLICATES:
        warnings.warn(f"only {len(couples)} coupled replicates (< {FEW_REPLICATES})", EstimatorWarning, stacklevel=3)
    for c in couples:
        if c.kind != kind:
            raise ParameterDomainError(f"expected {kind} couplings, got {c.kind}")
    n = min(len(c.primary) for c in couples)
    return np.stack([_target(c.primary, target)[:n] - _target(c.shadow, target)[:n] for c in couples])


def _lp_norm(diff: np.ndarray, p: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-column ``(mean |D|^p)^{1/p}`` and its delta-method SE over rows."""
    R = diff.shape[0]
    powd = np.abs(diff) ** p
    m = powd.mean(axis=0)
    se_m = powd.std(axis=0, ddof=1) / math.sqrt(R)
    val = m ** (1.0 / p)
    with np.errstate(divide="ignore", invalid="ignore"):
        se = np.where(m > 0, se_m * m ** (1.0 / p - 1.0) / p, 0.0)
    return val, se


def delta_profile(couples: Sequence[CoupledPaths], ks, p: float = 2.0, target: str = "X"):
    """``delta_p(k)`` estimates for every ``k`` in ``ks``. Returns ``(values, stderrs)``."""
    if p < 1:
        raise ParameterDomainError("p must be >= 1")
    diff = _diff_matrix(couples, target, SINGLE_SWAP)
    ks = np.asarray(ks, dtype=int)
    if ks.max() >= diff.shape[1]:
        raise ParameterDomainError("lag exceeds path length")
    val, se = _lp_norm(diff[:, ks], p)
    return val, se


def delta_hat(couples: Sequence[CoupledPaths], k: int, p: float = 2.0, target: str = "X") -> Estimate:
    """``(mean over replicates |y_k - y'_k|^p)^{1/p}`` with ``zeta_0`` swapped."""
    val, se = delta_profile(couples, [k], p, target)
    return Estimate(float(val[0]), float(se[0]), len(couples))


def tau_profile(couples: Sequence[CoupledPaths], n_lags, p: float = 1.0, target: str = "X") -> np.ndarray:
    """Coupling bound ``sup_{j >= n} ||y_j - y*_j||_p`` for each ``n`` in ``n_lags``.

    This bounds the tau coefficient from above; it is not the coefficient
    itself.
    """
    if p < 1:
        raise ParameterDomainError("p must be >= 1")
    diff = _diff_matrix(couples, target, PAST_SWAP)
    norms, _ = _lp_norm(diff, p)
    # running sup from the right: sup over j >= n
    tail_sup = np.maximum.accumulate(norms[::-1])[::-1]
    n_lags = np.asarray(n_lags, dtype=int)
    if n_lags.max() >= len(norms):
        raise ParameterDomainError("lag exceeds path length")
    return tail_sup[n_lags]


def tau_hat(couples: Sequence[CoupledPaths], n_lag: int, p: float = 1.0, target: str = "X") -> float:
    return float(tau_profile(couples, [n_lag], p, target)[0])


def map_replicates(fn: Callable[[int], object], replicate_ids: Sequence[int], threads: int = 1) -> list:
    """Apply ``fn`` to each replicate id, results in input order."""
    if threads <= 1:
        return [fn(i) for i in replicate_ids]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, replicate_ids))


@dataclass(frozen=True)
class PartialSumResult:
    lengths: np.ndarray
    variances: np.ndarray
    fit: SlopeFit
    target: str
    replicates: int

    @property
    def hurst(self) -> float:
        return self.fit.slope / 2.0


def partial_sum_variance(spec: ModelSpec, lengths, replicates: int, target: str = "X",
                         config: PathConfig | None = None, threads: int = 1) -> PartialSumResult:
    """Across-replicate variance of ``S_n = sum_{t<n} y_t`` for each ``n``.

    ``y`` is ``X_t`` (``target="X"``) or ``r_t^2`` (``target="r2"``). Each
    replicate is one path of length ``max(lengths)``; ``S_n`` uses its first
    ``n`` values. The log-log slope estimates ``2H``.
    """
    return partial_sum_variances(spec, lengths, replicates, (target,), config, threads)[target]


def partial_sum_variances(spec: ModelSpec, lengths, replicates: int, targets=("X", "r2"),
                          config: PathConfig | None = None, threads: int = 1) -> dict[str, PartialSumResult]:
    """:func:`partial_sum_variance` for several targets computed from the same paths."""
    lengths = np.asarray(sorted(set(int(n) for n in lengths)))
    if len(lengths) < 3:
        raise ParameterDomainError("need at least 3 lengths")
    targets = tuple(targets)
    if not targets or not set(targets) <= {"X", "r2"}:
        raise ParameterDomainError("targets must be drawn from 'X' and 'r2'")
    if replicates < 2:
        raise ParameterDomainError("need at least 2 replicates for a variance")
    if not isinstance(spec.coeffs, PowerLaw):
        warnings.warn("partial-sum scaling is meant for power-law coefficients", EstimatorWarning, stacklevel=2)
    nmax = int(lengths[-1])
    if config is None:
        config = PathConfig(n=nmax, window=spec.cutoff)
    else:
        config = config.replace(n=nmax)

    def one(rep: int) -> np.ndarray:
        path = simulate_path(spec, config.replace(replicate_id=rep))
        out = []
        for tgt in targets:
            y = path.x if tgt == "X" else path.r ** 2
            out.append(np.cumsum(y)[lengths - 1])
        return np.stack(out)

    sums = np.stack(map_replicates(one, range(replicates), threads))  # (rep, target, length)
    result = {}
    for i, tgt in enumerate(targets):
        var = sums[:, i, :].var(axis=0, ddof=1)
        result[tgt] = PartialSumResult(lengths, var, fit_loglog(lengths, var), tgt, replicates)
    return result


def ecdf(series, grid) -> np.ndarray:
    """Right-continuous empirical CDF ``n^{-1} #{t: y_t <= u}`` at each ``u``."""
    y = np.sort(np.asarray(series, dtype=float))
    if len(y) == 0:
        raise ParameterDomainError("empty series")
    return np.searchsorted(y, np.asarray(grid, dtype=float), side="right") / len(y)


@dataclass(frozen=True)
class SignTest:
    K: float
    upper: Estimate
    lower: Estimate
    flagged: bool


def conditional_sign_test(path, K: float, n_batches: int = 100) -> SignTest:
    """Sample versions of ``E r_t^3 1(r_{t-1} > K)`` and ``E r_t^3 1(r_{t-1} < -K)``.

    Both are averages over all ``t`` (indicator-weighted), so their signs
    are those of the unconditional moments; SEs use batch means. Flagged
    when either side has fewer than 30 exceedances.
    """
    r = _series(path)
    if not K > 0:
        raise ParameterDomainError("K must be positive")
    cube = r[1:] ** 3
    prev = r[:-1]
    up = cube * (prev > K)
    lo = cube * (prev < -K)
    n_up = int(np.count_nonzero(prev > K))
    n_lo = int(np.count_nonzero(prev < -K))
    upper = Estimate(float(up.mean()), batch_means_se(up, n_batches), n_up)
    lower = Estimate(float(lo.mean()), batch_means_se(lo, n_batches), n_lo)
    return SignTest(float(K), upper, lower, min(n_up, n_lo) < MIN_EXCEEDANCES)
