"""Regime classification, limit constants and samplers for the limiting laws
of power variations."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special, stats

from . import kernel_bank as kb
from .errors import DivergentIntegralError, InfiniteMomentError, ParameterDomainError
from .levy_driver import (JumpList, LevyKind, LevySpec, StreamLike, as_generator,
                          sample_compound_poisson_jumps, stable_levy_density_constant)

QUAD_RTOL = 1e-6
QUAD_ATOL = 1e-12
CRITICAL_TOL = 1e-12


class Regime(str, enum.Enum):
    THM1I = "Thm1i"
    THM1II = "Thm1ii"
    THM1III = "Thm1iii"
    CRITICAL = "Critical"
    UNDEFINED = "Undefined"


class SecondOrder(str, enum.Enum):
    THM2I = "Thm2i"
    THM2II = "Thm2ii"
    NONE = "None"


@dataclass
class RegimeReport:
    regime: Regime
    second_order: SecondOrder
    normalization_exponent: float | None
    limit_description: str
    conditions_checked: list = field(default_factory=list)
    alpha: float = 0.0
    beta: float = 0.0
    p: float = 0.0
    k: int = 1
    a_log_required: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["regime"] = self.regime.value
        d["second_order"] = self.second_order.value
        return d


def _near(a: float, b: float) -> bool:
    return abs(a - b) <= CRITICAL_TOL * max(1.0, abs(a), abs(b))


def classify_regime(alpha: float, beta: float, p: float, k: int, theta: float | None = None) -> RegimeReport:
    """Which first- and second-order limit theorem applies to ``V(p; k)_n``.

    ``theta`` defaults to ``beta`` (the stable choice).  Critical boundaries
    are detected with relative tolerance ``1e-12``.
    """
    if not (alpha > 0 and 0 < beta < 2 and p > 0 and int(k) == k and k >= 1):
        raise ParameterDomainError("need alpha > 0, beta in (0, 2), p > 0, integer k >= 1")
    theta = beta if theta is None else theta
    conds = []

    def check(label, value):
        conds.append((label, bool(value)))
        return bool(value)

    crit_pb = check("p == beta", _near(p, beta))
    crit_ap = check("alpha == k - 1/p", _near(alpha, k - 1.0 / p))
    crit_ab = check("alpha == k - 1/beta", _near(alpha, k - 1.0 / beta))
    c1 = check("alpha < k - 1/p", alpha < k - 1.0 / p) and check("p > beta", p > beta)
    c2 = check("alpha < k - 1/beta", alpha < k - 1.0 / beta) and check("p < beta", p < beta)
    c3 = check("p >= 1", p >= 1.0) and check("alpha > k - 1/max(beta, p)", alpha > k - 1.0 / max(beta, p))
    a_log = False
    second = SecondOrder.NONE
    if crit_pb or crit_ap or crit_ab:
        regime, expo = Regime.CRITICAL, None
        desc = "critical boundary: no limit theorem"
    elif c1:
        regime, expo = Regime.THM1I, alpha * p
        a_log = check("A-log needed (theta == 1)", theta == 1.0)
        desc = "n^(alpha p) V -> |c0|^p sum_m |dL_Tm|^p V_m (stable convergence, jumps in [0, 1])"
    elif c2:
        regime, expo = Regime.THM1II, -1.0 + p * (alpha + 1.0 / beta)
        desc = "n^(-1 + p H) V -> m_p in probability"
        if check("p < beta/2", p < beta / 2.0):
            w1 = check("alpha > k - 2/beta", alpha > k - 2.0 / beta)
            if beta < 0.5:
                w1 = w1 and check("alpha > k - 1/(beta (1 - beta))", alpha > k - 1.0 / (beta * (1.0 - beta)))
            w2 = check("alpha < k - 2/beta", alpha < k - 2.0 / beta)
            if _near(alpha, k - 2.0 / beta):
                pass
            elif w1:
                second = SecondOrder.THM2I
            elif w2:
                second = SecondOrder.THM2II
    elif c3:
        regime, expo = Regime.THM1III, -1.0 + p * k
        a_log = check("A-log needed (p == theta)", p == theta)
        desc = "n^(-1 + p k) V -> int_0^1 |F_u|^p du in probability"
    else:
        regime, expo = Regime.UNDEFINED, None
        desc = "outside the three regimes (p < 1 with alpha above k - 1/beta)"
    return RegimeReport(regime, second, expo, desc, conds, alpha, beta, p, int(k), a_log)


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------

def stable_abs_moment(beta: float, p: float) -> float:
    """``E|Z|^p`` for ``Z`` standard symmetric ``beta``-stable (``exp(-|u|^beta)``)."""
    if not 0.0 < beta <= 2.0:
        raise ParameterDomainError("beta must lie in (0, 2]")
    if not p > -1.0:
        raise ParameterDomainError("p must exceed -1")
    if beta < 2.0 and p >= beta:
        raise InfiniteMomentError(f"E|Z|^p is infinite for p={p} >= beta={beta}")
    if p == 0.0:
        return 1.0
    return float(2.0**p * special.gamma((1.0 + p) / 2.0) * special.gamma(1.0 - p / beta)
                 / (special.gamma(1.0 - p / 2.0) * math.sqrt(math.pi)))


def m_p(alpha: float, beta: float, sigma: float, p: float, k: int, c0: float = 1.0) -> float:
    """Ergodic limit ``|c0|^p sigma^p ||h_k||_beta^p E|Z|^p``."""
    norm = kb.hk_lbeta_integral(float(alpha), int(k), float(beta))
    return float(abs(c0) ** p * sigma**p * norm ** (p / beta) * stable_abs_moment(beta, p))


def tau(rho: float) -> float:
    """``(rho - 1) / (Gamma(2 - rho) |cos(pi rho / 2)|)`` for ``rho`` in ``[1 + 1e-6, 2)``."""
    if not 1.0 + 1e-6 <= rho < 2.0:
        raise ParameterDomainError(f"tau needs rho in (1, 2) (and >= 1 + 1e-6), got {rho}")
    return float((rho - 1.0) / (special.gamma(2.0 - rho) * abs(math.cos(math.pi * rho / 2.0))))


def a_p(p: float) -> float:
    """``int_R (1 - cos u) |u|^(-1-p) du = 2 Gamma(1-p) cos(pi p/2) / p``."""
    if not 0.0 < p < 2.0:
        raise ParameterDomainError("a_p needs p in (0, 2)")
    if p == 1.0:
        return math.pi
    return float(2.0 * special.gamma(1.0 - p) * math.cos(math.pi * p / 2.0) / p)


def phi_rho(rho: float, beta: float, p: float, x) -> np.ndarray | float:
    """``Phi_rho(x) = E|W + x|^p - E|W|^p`` for ``W`` symmetric stable with
    scale ``rho``, from its Fourier representation.

    ``(2/a_p) int_0^inf (1 - cos ux) f(u) du`` with
    ``f(u) = exp(-(rho u)^beta) u^(-1-p)``, evaluated after the change of
    variable ``v = ux``; the cosine tail on ``[1, inf)`` uses QUADPACK's
    Fourier-weight routine.
    """
    if not 0.0 < p < 1.0:
        raise ParameterDomainError("phi_rho needs p in (0, 1)")
    if not rho > 0.0:
        raise ParameterDomainError("rho must be positive")
    xa = np.abs(np.asarray(x, dtype=float))
    out = np.vectorize(lambda v: _phi_scalar(float(rho), float(beta), float(p), v), otypes=[float])(xa)
    return out if out.ndim else float(out)


def _phi_scalar(rho, beta, p, x):
    if x == 0.0:
        return 0.0
    if x <= rho:
        # damping scale 1/rho is inside one oscillation: plain quadrature in u
        f = lambda u: 2.0 * math.sin(0.5 * u * x) ** 2 * math.exp(-((rho * u) ** beta)) * u ** (-1.0 - p)
        u_max = 700.0 ** (1.0 / beta) / rho
        pts = [w / rho for w in (0.1, 1.0, 4.0) if w / rho < u_max]
        return 2.0 / a_p(p) * integrate.quad(f, 0.0, u_max, points=pts, epsabs=1e-15,
                                             epsrel=1e-11, limit=400)[0]
    # rescaled by v = u x so the oscillation has unit frequency
    amp = lambda v: v ** (-1.0 - p) * math.exp(-((rho * v / x) ** beta))
    head = integrate.quad(lambda v: 2.0 * math.sin(0.5 * v) ** 2 * amp(v), 0.0, 1.0,
                          epsabs=1e-13, epsrel=1e-11)[0]
    t_max = max(math.log(700.0 ** (1.0 / beta) * x / rho), 1.0)
    plain = integrate.quad(lambda t: amp(math.exp(t)) * math.exp(t), 0.0, t_max,
                           epsabs=1e-13, epsrel=1e-11, limit=400)[0]
    osc = integrate.quad(amp, 1.0, np.inf, weight="cos", wvar=1.0, limlst=400)[0]
    return 2.0 / a_p(p) * x**p * (head + plain - osc)


def _kappa_checks(alpha, beta, p, k):
    if not 0.0 < p < 1.0:
        raise ParameterDomainError("kappa needs p in (0, 1)")
    gam = 1.0 / (k - alpha)
    if not (p < gam < 2.0):
        raise ParameterDomainError(f"kappa integral diverges: need p < 1/(k - alpha) < 2, got {gam}")
    return gam


def kappa(alpha: float, beta: float, p: float, k: int, y_max: float | None = None) -> float:
    """``|k_alpha|^g g int_0^inf Phi(y) y^(-1-g) dy`` with ``g = 1/(k - alpha)``
    and ``rho = ||h_k||_beta``, by nested quadrature.

    Beyond ``y_max`` the integrand is replaced by its expansion
    ``(y^p - E|W|^p) y^(-1-g)``, integrated in closed form.
    """
    gam = _kappa_checks(alpha, beta, p, k)
    rho = kb.hk_lbeta_norm(alpha, k, beta)
    y_max = 1e3 * rho if y_max is None else float(y_max)
    phi = lambda y: _phi_scalar(rho, beta, p, y)
    integrand = lambda y: phi(y) * y ** (-1.0 - gam)
    edges = [0.0, *[rho * v for v in (0.1, 1.0, 10.0, 100.0)], y_max]
    edges = sorted(e for e in set(edges) if e <= y_max)
    body = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        body += integrate.quad(integrand, lo, hi, epsabs=QUAD_ATOL, epsrel=1e-9, limit=200)[0]
    ew = rho**p * stable_abs_moment(beta, p)
    tail = y_max ** (p - gam) / (gam - p) - ew * y_max ** (-gam) / gam
    ka = abs(kb.falling_factorial(alpha, k))
    return float(ka**gam * gam * (body + tail))


def kappa_closed_form(alpha: float, beta: float, p: float, k: int) -> float:
    """Closed form obtained by exchanging the ``y`` and Fourier integrals."""
    gam = _kappa_checks(alpha, beta, p, k)
    rho = kb.hk_lbeta_norm(alpha, k, beta)
    c_gam = math.pi / 2.0 if gam == 1.0 else -special.gamma(-gam) * math.cos(math.pi * gam / 2.0)
    ka = abs(kb.falling_factorial(alpha, k))
    return float(ka**gam * gam * (2.0 / a_p(p)) * c_gam * rho ** (p - gam)
                 * special.gamma((gam - p) / beta) / beta)


def second_order_index(alpha: float, beta: float, k: int) -> float:
    return float((k - alpha) * beta)


def sigma_tilde(alpha: float, beta: float, p: float, k: int, c0: float = 1.0, sigma: float = 1.0,
                use_closed_form: bool = False) -> float:
    """Scale of the skewed stable second-order limit,
    ``|c0|^p sigma^p (tau_beta / tau_rho)^(1/rho) kappa`` with
    ``rho = (k - alpha) beta`` (reduces to the ``k = 1`` formula)."""
    rho = second_order_index(alpha, beta, k)
    if not 1.0 < rho < 2.0:
        raise ParameterDomainError(f"(k - alpha) beta = {rho} outside (1, 2)")
    if not 1.0 < beta < 2.0:
        raise ParameterDomainError("tau_beta needs beta in (1, 2)")
    kap = kappa_closed_form(alpha, beta, p, k) if use_closed_form else kappa(alpha, beta, p, k)
    return float(abs(c0) ** p * sigma**p * (tau(beta) / tau(rho)) ** (1.0 / rho) * kap)


def clt_reference(eta2: float):
    """CDF of ``N(0, eta2)``."""
    if not eta2 > 0.0:
        raise ParameterDomainError("eta2 must be positive")
    sd = math.sqrt(eta2)
    return lambda x: stats.norm.cdf(np.asarray(x, dtype=float), scale=sd)


# ---------------------------------------------------------------------------
# first-regime limit sampler
# ---------------------------------------------------------------------------

def sample_limit_Z_thm1i(jumps, alpha: float, p: float, k: int, c0: float = 1.0, stream: StreamLike = 0,
                         jump_threshold: float | None = None, tol: float = 1e-12) -> float:
    """``|c0|^p sum_m |dL_m|^p V_m`` with fresh ``U_m ~ U[0, 1)``.

    ``jumps`` is a jump list on ``[0, 1]`` (``JumpList`` or (time, size)
    pairs) or a :class:`LevySpec`.  Compound-Poisson specs are sampled
    exactly; stable specs keep only jumps with ``|x| > jump_threshold``
    (default ``1e-3``).
    """
    rng = as_generator(stream)
    sizes = _jump_sizes(jumps, rng, jump_threshold)
    if sizes.size == 0:
        return 0.0
    u = rng.random(sizes.size)
    vm = kb.vm_series(alpha, k, p, u, tol)
    return float(abs(c0) ** p * np.sum(np.abs(sizes) ** p * vm))


def sample_limit_Z_batch(levy: LevySpec, alpha: float, p: float, k: int, count: int, stream: StreamLike,
                         c0: float = 1.0, jump_threshold: float | None = None) -> np.ndarray:
    """``count`` i.i.d. draws of the first-regime limit for one driver."""
    rng = as_generator(stream)
    return np.array([sample_limit_Z_thm1i(levy, alpha, p, k, c0, rng, jump_threshold) for _ in range(count)])


def _jump_sizes(jumps, rng, threshold) -> np.ndarray:
    if isinstance(jumps, LevySpec):
        if jumps.kind is LevyKind.COMPOUND_POISSON:
            if jumps.intensity == 0.0:
                return np.zeros(0)
            jl = sample_compound_poisson_jumps(jumps.intensity, (jumps.jump_law, jumps.jump_param), (0.0, 1.0), rng)
            return jl.sizes
        if jumps.kind is LevyKind.SYMMETRIC_STABLE:
            eps = 1e-3 if threshold is None else threshold
            c = stable_levy_density_constant(jumps.beta, jumps.sigma)
            rate = 2.0 * c * eps ** (-jumps.beta) / jumps.beta
            m = rng.poisson(rate)
            mag = eps * (1.0 - rng.random(m)) ** (-1.0 / jumps.beta)
            return np.where(rng.random(m) < 0.5, -mag, mag)
        raise ParameterDomainError("tempered drivers are not supported by the limit sampler")
    if isinstance(jumps, JumpList):
        return jumps.restrict(0.0, 1.0).sizes
    jumps = list(jumps)
    return np.array([s for t, s in jumps if 0.0 <= t <= 1.0], dtype=float)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass
class LimitConstants:
    alpha: float
    beta: float
    p: float
    k: int
    c0: float
    sigma: float
    regime: str
    second_order: str
    normalization_exponent: float | None
    m_p: float | None = None
    eta2_reference: float | None = None
    tau_beta: float | None = None
    tau_rho: float | None = None
    kappa: float | None = None
    sigma_tilde: float | None = None
    stable_index_second_order: float | None = None
    quad_rtol: float = QUAD_RTOL
    quad_atol: float = QUAD_ATOL
    notes: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({"schema_version": 1, **asdict(self)}, sort_keys=True, indent=2)


def limit_constants(alpha: float, beta: float, p: float, k: int, c0: float = 1.0, sigma: float = 1.0,
                    eta2_reference: float | None = None) -> LimitConstants:
    rep = classify_regime(alpha, beta, p, k)
    lc = LimitConstants(alpha, beta, p, int(k), c0, sigma, rep.regime.value, rep.second_order.value,
                        rep.normalization_exponent, eta2_reference=eta2_reference)
    if rep.regime is Regime.THM1II:
        lc.m_p = m_p(alpha, beta, sigma, p, k, c0)
    if 1.0 < beta < 2.0:
        lc.tau_beta = tau(beta)
    rho = second_order_index(alpha, beta, k)
    lc.stable_index_second_order = rho
    if rep.second_order is SecondOrder.THM2I:
        if 1.0 < rho < 2.0 and 1.0 < beta < 2.0:
            lc.tau_rho = tau(rho)
            lc.kappa = kappa(alpha, beta, p, k)
            lc.sigma_tilde = float(abs(c0) ** p * sigma**p * (lc.tau_beta / lc.tau_rho) ** (1.0 / rho) * lc.kappa)
        if k >= 2:
            lc.notes.append("sigma_tilde for k >= 2 uses the index (k - alpha) beta; not validated numerically")
    return lc
