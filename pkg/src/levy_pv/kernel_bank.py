"""Deterministic kernels ``g``, their derivatives, difference kernels and
``L^beta`` quadrature.

Two kernel families are built in: ``PurePower`` with ``g(t) = c0 t^alpha``
(the tangent/LFSM case) and ``GammaDamped`` with
``g(t) = c0 t^alpha exp(-lam t)``.  Every ``g`` vanishes on ``t < 0``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, interpolate, special

from .errors import (DivergentIntegralError, DivergentSeriesError, ParameterDomainError,
                     SingularKernelError, UnsupportedOrderError)


class KernelFamily(str, enum.Enum):
    PURE_POWER = "pure_power"
    GAMMA_DAMPED = "gamma_damped"


@dataclass(frozen=True)
class KernelSpec:
    family: KernelFamily
    alpha: float
    c0: float = 1.0
    lam: float = 0.0
    g0_equals_g: bool = True
    k_max: int = 8

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        if not self.alpha > 0.0:
            raise ParameterDomainError(f"alpha must be positive, got {self.alpha}")
        if self.c0 == 0.0 or not math.isfinite(self.c0):
            raise ParameterDomainError("c0 must be finite and non-zero")
        if self.family is KernelFamily.PURE_POWER and self.lam != 0.0:
            raise ParameterDomainError("PurePower has lam = 0")
        if self.lam < 0.0:
            raise ParameterDomainError("damping rate must be >= 0")
        if self.k_max < 1:
            raise ParameterDomainError("k_max must be >= 1")

    @classmethod
    def pure_power(cls, alpha: float, c0: float = 1.0, g0_equals_g: bool = True) -> "KernelSpec":
        return cls(KernelFamily.PURE_POWER, alpha, c0, 0.0, g0_equals_g)

    @classmethod
    def gamma_damped(cls, alpha: float, lam: float = 1.0, c0: float = 1.0,
                     g0_equals_g: bool = False) -> "KernelSpec":
        return cls(KernelFamily.GAMMA_DAMPED, alpha, c0, lam, g0_equals_g)

    def to_dict(self) -> dict:
        return {"family": self.family.value, "alpha": self.alpha, "c0": self.c0,
                "lam": self.lam, "g0_equals_g": self.g0_equals_g, "k_max": self.k_max}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(**d)


# ---------------------------------------------------------------------------
# difference operator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DifferenceKernel:
    """Coefficients ``(-1)^j binom(k, j)`` of the ``k``-th backward difference."""

    k: int
    alpha: float = 1.0
    coefficients: tuple = field(init=False)

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ParameterDomainError(f"k must be a positive integer, got {self.k}")
        object.__setattr__(self, "coefficients", binomial_coefficients(int(self.k)))

    def __call__(self, x):
        return h_k(self.alpha, self.k, x)


def binomial_coefficients(k: int) -> tuple:
    return tuple((-1) ** j * math.comb(k, j) for j in range(k + 1))


def dk_apply(phi, k: int, x):
    """``sum_j (-1)^j binom(k, j) phi(x - j)``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for j, c in enumerate(binomial_coefficients(int(k))):
        out = out + c * np.asarray(phi(x - j), dtype=float)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# h_k and its large-x expansion
# ---------------------------------------------------------------------------

_SERIES_TERMS = 40


@lru_cache(maxsize=None)
def _moment_sums(k: int, terms: int) -> tuple:
    # D_m = sum_j (-1)^j binom(k,j) j^m, exact integers; zero for m < k
    return tuple(sum((-1) ** j * math.comb(k, j) * j**m for j in range(k + 1)) for m in range(terms))


@lru_cache(maxsize=None)
def hk_expansion(alpha: float, k: int, terms: int = _SERIES_TERMS) -> tuple[float, np.ndarray]:
    """``(k_alpha, a)`` with ``h_k(x) = k_alpha x^(alpha-k) (1 + sum_j a_j x^-j)``.

    ``k_alpha = alpha (alpha-1) ... (alpha-k+1)``; ``a[0] = 1``.  The
    expansion converges for ``x > k``.
    """
    d = _moment_sums(k, k + terms)
    coef = np.empty(terms)
    for j in range(terms):
        m = k + j
        coef[j] = special.binom(alpha, m) * (-1) ** m * float(d[m])
    k_alpha = coef[0]
    if k_alpha == 0.0:
        return 0.0, np.zeros(terms)
    return float(k_alpha), coef / k_alpha


def falling_factorial(alpha: float, k: int) -> float:
    out = 1.0
    for j in range(k):
        out *= alpha - j
    return out


def h_k(alpha: float, k: int, x):
    """``h_k(x) = sum_j (-1)^j binom(k, j) (x - j)_+^alpha``.

    Beyond ``x = 8k`` the value comes from the convergent large-``x``
    expansion, which avoids the cancellation of the direct sum.
    """
    xa = np.asarray(x, dtype=float)
    out = np.zeros_like(xa)
    far = xa > 8.0 * k
    near = (xa > 0.0) & ~far
    if near.any():
        xn = xa[near]
        acc = np.zeros_like(xn)
        for j, c in enumerate(binomial_coefficients(k)):
            acc += c * np.maximum(xn - j, 0.0) ** alpha
        out[near] = acc
    if far.any():
        k_alpha, a = hk_expansion(float(alpha), int(k))
        xf = xa[far]
        y = 1.0 / xf
        poly = np.polynomial.polynomial.polyval(y, a)
        out[far] = k_alpha * xf ** (alpha - k) * poly
    return out if out.ndim else float(out)


def power_series_power(a: np.ndarray, p: float) -> np.ndarray:
    """Coefficients of ``(sum_j a_j y^j)^p`` for ``a[0] = 1`` (Miller recurrence)."""
    m_max = len(a)
    b = np.zeros(m_max)
    b[0] = 1.0
    for m in range(1, m_max):
        j = np.arange(1, m + 1)
        b[m] = np.sum(((p + 1.0) * j - m) * a[j] * b[m - j]) / m
    return b


# ---------------------------------------------------------------------------
# g and its derivatives
# ---------------------------------------------------------------------------

def _check_order(spec: KernelSpec, order: int):
    if int(order) != order or order < 0:
        raise ParameterDomainError(f"order must be a non-negative integer, got {order}")
    if order > spec.k_max:
        raise UnsupportedOrderError(f"order {order} exceeds k_max={spec.k_max}")


def _singular_at_zero(alpha: float, order: int) -> bool:
    return any(alpha - j < 0.0 and falling_factorial(alpha, j) != 0.0 for j in range(order + 1))


def eval_g(spec: KernelSpec, t, order: int = 0):
    """``g^(order)(t)`` from the Leibniz expansion of ``t^alpha exp(-lam t)``.

    Zero for ``t < 0``.  At ``t = 0`` a term ``t^(alpha-j)`` with a negative
    exponent and non-zero coefficient raises :class:`SingularKernelError`.
    """
    _check_order(spec, order)
    ta = np.asarray(t, dtype=float)
    if np.any(ta == 0.0) and _singular_at_zero(spec.alpha, order):
        raise SingularKernelError(f"g^({order}) is singular at t=0 for alpha={spec.alpha}")
    out = np.zeros_like(ta)
    pos = ta > 0.0
    zero = ta == 0.0
    tp = ta[pos]
    lam = spec.lam
    acc = np.zeros_like(tp)
    val0 = 0.0
    for j in range(order + 1):
        ff = falling_factorial(spec.alpha, j)
        c = math.comb(order, j) * ff * (-lam) ** (order - j)
        if c == 0.0:
            continue
        acc += c * tp ** (spec.alpha - j)
        if spec.alpha - j == 0.0:
            val0 += c
    if lam:
        acc *= np.exp(-lam * tp)
    out[pos] = spec.c0 * acc
    out[zero] = spec.c0 * val0
    return out if out.ndim else float(out)


def eval_g0(spec: KernelSpec, t, order: int = 0):
    if spec.g0_equals_g:
        return eval_g(spec, t, order)
    ta = np.asarray(t, dtype=float)
    return np.zeros_like(ta) if ta.ndim else 0.0


def g_in(spec: KernelSpec, i: int, n: int, k: int, x):
    """``g_{i,n}(x) = sum_j (-1)^j binom(k, j) g((i - j)/n - x)``."""
    x = np.asarray(x, dtype=float)
    return dk_apply(lambda y: eval_g(spec, y / n), k, i - n * x)


def _bspline_nodes(k: int, nodes: int = 12):
    # D^k phi(x) = int_0^k phi^(k)(x - y) B_k(y) dy with the cardinal B-spline
    spline = interpolate.BSpline.basis_element(np.arange(k + 1, dtype=float), extrapolate=False)
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    ys, ws = [], []
    for j in range(k):
        y = j + 0.5 * (gx + 1.0)
        ys.append(y)
        ws.append(0.5 * gw * np.nan_to_num(spline(y)))
    return np.concatenate(ys), np.concatenate(ws)


_BSPLINE_CACHE: dict = {}


def scaled_kernel_phi_n(spec: KernelSpec, n: int, r, s, k: int = 1):
    """``phi_r^n(s) = D^k g_n(r - s)`` with ``g_n(x) = n^alpha g(x / n)``.

    For ``PurePower`` this is exactly ``c0 h_k(r - s)``.  For damped kernels
    and ``r - s > 4k + 4`` the difference is evaluated as a B-spline
    smoothing of ``g_n^(k)``, which avoids the cancellation of the direct
    alternating sum.
    """
    if n < 1:
        raise ParameterDomainError("n must be >= 1")
    x = np.asarray(r, dtype=float) - np.asarray(s, dtype=float)
    if spec.family is KernelFamily.PURE_POWER:
        return spec.c0 * h_k(spec.alpha, k, x)
    xa = np.atleast_1d(x).astype(float)
    out = np.zeros_like(xa)
    far = xa > 4.0 * k + 4.0
    if n == 1:
        far[:] = False
    near = ~far
    if near.any():
        out[near] = dk_apply(lambda y: n**spec.alpha * eval_g(spec, y / n), k, xa[near])
    if far.any():
        if k not in _BSPLINE_CACHE:
            _BSPLINE_CACHE[k] = _bspline_nodes(k)
        ys, ws = _BSPLINE_CACHE[k]
        t = (xa[far, None] - ys[None, :]) / n
        deriv = eval_g(spec, t, k) * n ** (spec.alpha - k)
        out[far] = deriv @ ws
    return out.reshape(x.shape) if x.ndim else float(out[0])


# ---------------------------------------------------------------------------
# L^beta quadrature
# ---------------------------------------------------------------------------

def _quad_pieces(fun, edges, tol):
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        val, _ = integrate.quad(fun, a, b, epsabs=1e-14, epsrel=tol, limit=400)
        total += val
    return total


def lbeta_norm(f, beta: float, domain=(0.0, np.inf), tol: float = 1e-8, points=None,
               tail_exponent: float | None = None, cutoff: float | None = None) -> float:
    """``int_domain |f(x)|^beta dx``.

    Finite stretches use adaptive Gauss-Kronrod with breakpoints at
    ``points``.  An infinite right end is handled by integrating geometric
    blocks ``[X 2^j, X 2^(j+1)]`` and summing the remaining blocks as
    a geometric series with ratio ``2^(e beta + 1)``, where ``e`` is the
    power-law exponent of ``|f|`` at infinity (given, or read off the block
    ratios).  A non-integrable tail raises :class:`DivergentIntegralError`.
    """
    if not beta > 0.0:
        raise ParameterDomainError("beta must be positive")
    a, b = float(domain[0]), float(domain[1])
    if not a < b:
        raise ParameterDomainError(f"empty domain [{a}, {b}]")
    if a == -np.inf:
        raise ParameterDomainError("left-infinite domains are not supported; reflect f")
    if tail_exponent is not None and b == np.inf and tail_exponent * beta >= -1.0:
        raise DivergentIntegralError(f"tail exponent {tail_exponent} * beta >= -1")
    fun = lambda x: abs(float(f(x))) ** beta
    pts = sorted(p for p in (points or ()) if a < p < (b if b < np.inf else np.inf))
    if b < np.inf:
        return _quad_pieces(fun, [a, *pts, b], tol)
    x_cut = cutoff if cutoff is not None else max(64.0, 2.0 * (pts[-1] if pts else 1.0), 2.0 * abs(a) + 1.0)
    head = _quad_pieces(fun, [a, *[p for p in pts if p < x_cut], x_cut], tol)
    blocks, prev_rest = [], None
    lo = x_cut
    for _ in range(80):
        blocks.append(_quad_pieces(fun, [lo, 2.0 * lo], 1e-12))
        lo *= 2.0
        if blocks[-1] == 0.0 and len(blocks) > 2 and blocks[-2] == 0.0:
            return head + sum(blocks)
        if len(blocks) < 3:
            continue
        if tail_exponent is not None:
            q = 2.0 ** (tail_exponent * beta + 1.0)
        else:
            q = blocks[-1] / blocks[-2] if blocks[-2] else 0.0
            if q >= 0.995:
                raise DivergentIntegralError("|f|^beta tail does not decay: blocks grow")
        rest = blocks[-1] * q / (1.0 - q)
        total = head + sum(blocks) + rest
        # successive extrapolations must agree on the same remaining tail
        if prev_rest is not None and abs(prev_rest - blocks[-1] - rest) <= tol * abs(total):
            return total
        prev_rest = rest
    raise DivergentIntegralError("tail extrapolation did not settle")


@lru_cache(maxsize=None)
def hk_lbeta_integral(alpha: float, k: int, beta: float) -> float:
    """``int_R |h_k(x)|^beta dx`` with an exact series tail beyond ``x = 16k``."""
    if not beta > 0.0:
        raise ParameterDomainError("beta must be positive")
    s = (k - alpha) * beta
    if s <= 1.0:
        raise DivergentIntegralError(f"(alpha - k) beta = {-s} >= -1: h_k not in L^beta")
    x_cut = 16.0 * k
    head = _quad_pieces(lambda x: abs(h_k(alpha, k, x)) ** beta,
                        [0.0, *range(1, k + 1), 2.0 * k, 4.0 * k, 8.0 * k, x_cut], 1e-12)
    k_alpha, a = hk_expansion(float(alpha), int(k))
    coeff = power_series_power(a, beta)
    m = np.arange(coeff.size)
    tail = abs(k_alpha) ** beta * np.sum(coeff * x_cut ** (1.0 - s - m) / (s + m - 1.0))
    return float(head + tail)


def hk_lbeta_norm(alpha: float, k: int, beta: float) -> float:
    """``||h_k||_{L^beta}``."""
    return hk_lbeta_integral(float(alpha), int(k), float(beta)) ** (1.0 / beta)


# ---------------------------------------------------------------------------
# V_m series
# ---------------------------------------------------------------------------

def vm_series(alpha: float, k: int, p: float, U, tol: float = 1e-12):
    """``V = sum_{l >= 0} |h_k(l + U)|^p`` for ``U`` in ``[0, 1)`` (vectorised).

    The first ``L`` terms are summed directly.  The tail uses the expansion
    ``|h_k(x)|^p = |k_alpha|^p x^-s sum_m b_m x^-m`` with ``s = (k - alpha) p``,
    summed term by term with Hurwitz zeta values, so its truncation error
    is below ``tol`` rather than merely bounded.
    """
    s = (k - alpha) * p
    if s <= 1.0:
        raise DivergentSeriesError(f"alpha={alpha} >= k - 1/p: V_m diverges")
    u = np.asarray(U, dtype=float)
    if np.any((u < 0.0) | (u >= 1.0)):
        raise ParameterDomainError("U must lie in [0, 1)")
    big_l = max(64, 16 * k)
    hp = _abs_pow(h_k(alpha, k, np.arange(big_l)[:, None] + u.ravel()[None, :]), p)
    head = hp.sum(axis=0)
    k_alpha, a = hk_expansion(float(alpha), int(k))
    coeff = power_series_power(a, p)
    base = big_l + u.ravel()
    tail = np.zeros_like(base)
    for m, c in enumerate(coeff):
        term = c * special.zeta(s + m, base)
        tail += term
        if m > 4 and np.all(np.abs(term) * abs(k_alpha) ** p < 0.01 * tol):
            break
    out = head + abs(k_alpha) ** p * tail
    return out.reshape(u.shape) if u.ndim else float(out[0])


def _abs_pow(x, p):
    ax = np.abs(x)
    with np.errstate(divide="ignore"):
        return np.where(ax > 0.0, np.exp(p * np.log(np.where(ax > 0.0, ax, 1.0))), 0.0)


# ---------------------------------------------------------------------------
# bound constants and Assumption (A) checks
# ---------------------------------------------------------------------------

def fit_bound_constant(spec: KernelSpec, k: int, n_values=None, n_probe: int = 300) -> float:
    """``K`` for the near/far bounds on ``g_{i,n}``: 1.05 times the largest
    observed ratio over a log-spaced probe grid.

    Near region (``y = i/n - x`` in ``[0, k/n]``): ``|g_{i,n}| / y^alpha``;
    far region (``y`` in ``(k/n, 1)``): ``|g_{i,n}| / (n^-k (y - k/n)^(alpha-k))``.
    The bound depends on ``(i, n, x)`` only through ``(n, y)``.
    """
    if n_values is None:
        n_values = np.unique(np.round(np.geomspace(8, 4096, 28)).astype(int))
    worst = 0.0
    for n in n_values:
        near, far = _bound_ratios(spec, k, int(n), n_probe)
        worst = max(worst, np.max(near), np.max(far))
    return 1.05 * float(worst)


def _bound_ratios(spec: KernelSpec, k: int, n: int, n_probe: int):
    u_near = np.geomspace(1e-6 * k, k, n_probe)
    u_far = k + np.geomspace(1e-6, max(n - k, 1) - 1e-9, n_probe)
    u_far = u_far[u_far < n]
    gn = lambda u: dk_apply(lambda z: eval_g(spec, z / n), k, u)
    near = np.abs(gn(u_near)) / (u_near / n) ** spec.alpha
    far = np.abs(gn(u_far)) / (n ** (-k) * ((u_far - k) / n) ** (spec.alpha - k))
    return near, far


@dataclass
class ClauseResult:
    name: str
    passed: bool
    detail: str


@dataclass
class AssumptionReport:
    theta: float
    k: int
    delta: float
    K: float
    clauses: list
    a_log_finite: bool | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def clause(self, name: str) -> ClauseResult:
        for c in self.clauses:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list:
        return [c.name for c in self.clauses if not c.passed]


def _log_slope(fun, t: float) -> float:
    eps = 1e-3
    lo, hi = abs(fun(t * (1 - eps))), abs(fun(t * (1 + eps)))
    if lo == 0.0 or hi == 0.0:
        return -np.inf
    return (math.log(hi) - math.log(lo)) / (math.log1p(eps) - math.log1p(-eps))


def _tail_probe(spec: KernelSpec) -> float:
    return 1e6 if spec.lam == 0.0 else max(1e3, 200.0 / spec.lam)


def validate_assumption_A(spec: KernelSpec, theta: float, k: int, p: float | None = None) -> AssumptionReport:
    """Numerical check of the regularity/decay conditions on ``g``.

    Clauses: ``a`` smoothness on ``(0, inf)``; ``b`` ``g(t) t^-alpha -> c0``;
    ``c`` ``|g^(k)(t)| <= K t^(alpha-k)`` near 0; ``d`` ``|g'|``, ``|g^(k)|``
    in ``L^theta((delta, inf))`` and decreasing there; ``g_minus_g0``
    ``g - g0`` bounded and in ``L^theta``; ``e`` the logarithmic
    integrability condition, checked when ``theta == 1`` or ``p == theta``.
    """
    if not 0.0 < theta <= 2.0:
        raise ParameterDomainError("theta must lie in (0, 2]")
    if k > spec.k_max:
        raise UnsupportedOrderError(f"k={k} exceeds k_max")
    clauses = []
    g = lambda t, o=0: eval_g(spec, t, o)

    # (a) derivative continuity probes
    probes = np.geomspace(1e-3, 50.0, 25)
    h = 1e-7
    worst = 0.0
    for o in range(k + 1):
        left, right = g(probes * (1 - h), o), g(probes * (1 + h), o)
        scale = np.maximum(np.abs(g(probes, o)), 1e-300) + np.abs(g(probes, o + 1) if o < spec.k_max else 0.0) * probes
        worst = max(worst, float(np.max(np.abs(right - left) / scale)))
    clauses.append(ClauseResult("a", worst < 1e-4, f"max scaled jump {worst:.2e}"))

    # (b) small-t behaviour
    ts = np.array([1e-4, 1e-6, 1e-8])
    ratio = g(ts) / (spec.c0 * ts**spec.alpha)
    err = np.abs(ratio - 1.0)
    ok_b = bool(err[-1] < 1e-6 and err[-1] <= err[0] + 1e-15)
    clauses.append(ClauseResult("b", ok_b, f"|g/(c0 t^alpha) - 1| at 1e-8: {err[-1]:.2e}"))

    # monotone-decrease start delta for |g'| and |g^(k)|
    grid = np.geomspace(1e-6, _tail_probe(spec), 4000)
    d1, dk = np.abs(g(grid, 1)), np.abs(g(grid, k))
    delta = 1e-3
    for arr in (d1, dk):
        inc = np.flatnonzero(np.diff(arr) > 1e-14 * np.maximum(arr[1:], 1e-300))
        if inc.size:
            delta = max(delta, float(grid[inc[-1] + 1]))

    # (c) near-zero derivative bound
    tc = np.geomspace(1e-10, delta, 500)
    rc = np.abs(g(tc, k)) / tc ** (spec.alpha - k)
    K = 1.05 * float(np.max(rc))
    ok_c = bool(np.isfinite(K) and rc[0] <= 2.0 * np.max(rc[: 50]) + 1e-300)
    clauses.append(ClauseResult("c", ok_c, f"K={K:.4g} on (0, {delta:.3g})"))

    # (d) integrability and monotonicity beyond delta
    t_big = _tail_probe(spec)
    msgs, ok_d = [], True
    for o in sorted({1, k}):
        slope = theta * _log_slope(lambda t: eval_g(spec, t, o), t_big)
        tail = grid[grid > delta]
        vals = np.abs(g(tail, o))
        mono = bool(np.all(np.diff(vals) <= 1e-12 * vals[:-1] + 1e-300))
        integrable = slope < -1.0
        ok_d &= mono and integrable
        msgs.append(f"order {o}: theta-log-slope {slope:.3g}, decreasing={mono}")
    clauses.append(ClauseResult("d", ok_d, "; ".join(msgs)))

    # g - g0
    if spec.g0_equals_g:
        clauses.append(ClauseResult("g_minus_g0", True, "g - g0 = 0"))
    else:
        slope = theta * _log_slope(g, t_big)
        ok = slope < -1.0
        clauses.append(ClauseResult("g_minus_g0", ok, f"theta-log-slope of g at {t_big:.3g}: {slope:.3g}"))

    a_log = None
    if theta == 1.0 or (p is not None and p == theta):
        fun = lambda s: _alog_integrand(spec, k, theta, s)
        try:
            val = lbeta_norm(fun, 1.0, (delta, np.inf), tol=1e-6, cutoff=max(2 * delta, 10.0))
            a_log = bool(np.isfinite(val))
        except DivergentIntegralError:
            a_log = False
        clauses.append(ClauseResult("e", bool(a_log), "A-log integral finite" if a_log else "A-log integral diverges"))
    return AssumptionReport(theta, k, delta, K, clauses, a_log)


def _alog_integrand(spec, k, theta, s):
    v = abs(eval_g(spec, s, k))
    if v == 0.0:
        return 0.0
    return v**theta * abs(math.log(1.0 / v))


def best_theta(spec: KernelSpec, k: int, grid=None) -> float | None:
    """Smallest ``theta`` on ``grid`` (default 0.05..2.0) passing all clauses."""
    grid = np.round(np.arange(0.05, 2.0001, 0.05), 10) if grid is None else grid
    for th in grid:
        if validate_assumption_A(spec, float(th), k).passed:
            return float(th)
    return None
