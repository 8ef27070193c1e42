"""k-th order increments, power variations and the statistics built on them."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import DegeneratePathError, ParameterDomainError, SizeError, UnsupportedRegimeError
from .limit_laws import Regime, RegimeReport


@dataclass(frozen=True)
class PowerVariationResult:
    """``raw = V(p; k)_n``; ``normalized = n^exponent * raw``."""

    raw: float
    normalized: float
    p: float
    k: int
    n: int
    normalization_exponent: float = 0.0
    regime: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _values(path) -> np.ndarray:
    vals = getattr(path, "values", path)
    x = np.asarray(vals, dtype=float)
    if x.ndim != 1:
        raise SizeError("path must be one-dimensional")
    return x


def abs_pow(x, p: float) -> np.ndarray:
    """``|x|^p`` as ``exp(p log|x|)`` with ``0 -> 0``."""
    a = np.abs(np.asarray(x, dtype=float))
    out = np.zeros_like(a)
    nz = a > 0.0
    out[nz] = np.exp(p * np.log(a[nz]))
    return out


def kth_increments(path, k: int) -> np.ndarray:
    """``Delta_{i,k} X = sum_j (-1)^j C(k, j) X_{(i-j)/n}`` for ``i = k..n``."""
    x = _values(path)
    if int(k) != k or k < 1:
        raise ParameterDomainError("k must be a positive integer")
    if x.size < k + 1:
        raise SizeError(f"path of length {x.size} too short for k={k}")
    return np.diff(x, n=int(k))


def _sum(terms: np.ndarray) -> float:
    # numpy's reduction is pairwise, error O(log N eps)
    return float(np.sum(terms))


def power_variation(path, p: float, k: int = 1) -> PowerVariationResult:
    if not p > 0.0:
        raise ParameterDomainError("p must be positive")
    x = _values(path)
    raw = _sum(abs_pow(kth_increments(x, k), p))
    return PowerVariationResult(raw, raw, float(p), int(k), x.size - 1)


def normalization_exponent(regime, alpha: float, beta: float, p: float, k: int) -> float:
    reg = regime.regime if isinstance(regime, RegimeReport) else Regime(regime)
    if reg is Regime.THM1I:
        return alpha * p
    if reg is Regime.THM1II:
        return -1.0 + p * (alpha + 1.0 / beta)
    if reg is Regime.THM1III:
        return -1.0 + p * k
    raise UnsupportedRegimeError(f"no normalisation for regime {reg.value}")


def normalize(result: PowerVariationResult, regime, alpha: float, beta: float) -> PowerVariationResult:
    """Multiply ``raw`` by ``n^e`` with the regime's exponent ``e``."""
    e = normalization_exponent(regime, alpha, beta, result.p, result.k)
    reg = regime.regime if isinstance(regime, RegimeReport) else Regime(regime)
    return replace(result, normalized=result.raw * float(result.n) ** e,
                   normalization_exponent=e, regime=reg.value)


def ratio_statistic(path, p: float) -> tuple[float, float]:
    """``R = sum |X_i - X_{i-2}|^p / sum |X_i - X_{i-1}|^p`` and
    ``H_hat = log R / (p log 2)``."""
    if not 0.0 < p <= 1.0:
        raise ParameterDomainError("ratio statistic needs p in (0, 1]")
    x = _values(path)
    if x.size < 3:
        raise SizeError("need at least three path values")
    den = _sum(abs_pow(x[1:] - x[:-1], p))
    num = _sum(abs_pow(x[2:] - x[:-2], p))
    if den == 0.0:
        raise DegeneratePathError("constant path: zero denominator")
    if num == 0.0:
        raise DegeneratePathError("zero numerator: log R = -inf")
    R = num / den
    return R, math.log(R) / (p * math.log(2.0))


def log_scale_statistic(path, p: float) -> float:
    """``S(n, p) = -log V(p; 1)_n / log n``."""
    res = power_variation(path, p, 1)
    if res.n < 2:
        raise SizeError("need n >= 2")
    if res.raw == 0.0:
        raise DegeneratePathError("zero power variation")
    return -math.log(res.raw) / math.log(res.n)


def default_lag_cutoff(length: int) -> int:
    return int(math.floor(length ** (1.0 / 3.0) + 1e-9))


def empirical_eta2(scaled_increments, p: float, lag_cutoff: int | None = None) -> float:
    """Long-run variance of ``|Y|^p`` truncated at ``lag_cutoff`` lags, with
    biased (``1/N``) autocovariances.  Default cutoff ``floor(N^(1/3))``."""
    f = abs_pow(np.asarray(scaled_increments, dtype=float).ravel(), p)
    N = f.size
    if N < 2:
        raise SizeError("need at least two increments")
    L = default_lag_cutoff(N) if lag_cutoff is None else int(lag_cutoff)
    if L < 0 or L >= N:
        raise SizeError(f"lag cutoff {L} must lie in [0, {N})")
    if f.min() == f.max():
        return 0.0
    c = f - f.mean()
    acov = [float(np.dot(c[: N - l], c[l:])) / N for l in range(L + 1)]
    return acov[0] + 2.0 * math.fsum(acov[1:])


def eta2_band(scaled_increments, p: float, cutoffs=None) -> dict:
    """``empirical_eta2`` at several cutoffs plus ``min``/``max``.  The default
    cutoffs are ``L/2, L, 2L`` around the default ``L``."""
    N = np.asarray(scaled_increments).size
    if cutoffs is None:
        L = max(default_lag_cutoff(N), 2)
        cutoffs = [c for c in (L // 2, L, 2 * L) if c < N]
    vals = {int(c): empirical_eta2(scaled_increments, p, int(c)) for c in cutoffs}
    return {"values": vals, "min": min(vals.values()), "max": max(vals.values())}
