"""Random variates for the driving Lévy noises and the stable limit laws.

All samplers take an explicit stream (an :class:`RngStream`, a
``numpy.random.Generator`` or an integer seed) and hold no global state.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np
from scipy import integrate, special

from .errors import ParameterDomainError

_U64 = 2**64


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Streams with distinct keys are statistically independent (they are
    separate spawn keys of one ``SeedSequence``); identical keys reproduce
    identical draws.  Extra ``subkeys`` split one replication into named
    independent sub-streams.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) < _U64:
                raise ParameterDomainError(f"{name} must be a 64-bit unsigned integer, got {v!r}")

    def generator(self, *subkeys: int) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed),
                                    spawn_key=(int(self.stream_id), *map(int, subkeys)))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


StreamLike = Union[RngStream, np.random.Generator, int]


def as_generator(stream: StreamLike, *subkeys: int) -> np.random.Generator:
    if isinstance(stream, np.random.Generator):
        return stream
    if isinstance(stream, (int, np.integer)):
        stream = RngStream(int(stream))
    if isinstance(stream, RngStream):
        return stream.generator(*subkeys)
    raise TypeError(f"cannot build a generator from {type(stream).__name__}")


# ---------------------------------------------------------------------------
# stable laws
# ---------------------------------------------------------------------------

def _check_count(count):
    if int(count) != count or count < 1:
        raise ParameterDomainError(f"count must be a positive integer, got {count}")
    return int(count)


def _unit_symmetric_stable(beta: float, count: int, rng: np.random.Generator) -> np.ndarray:
    # Chambers-Mallows-Stuck, symmetric case: E exp(iuX) = exp(-|u|^beta)
    v = np.pi * (rng.random(count) - 0.5)
    w = rng.standard_exponential(count)
    if beta == 1.0:
        return np.tan(v)
    if beta == 2.0:
        return 2.0 * np.sin(v) * np.sqrt(w)
    a = np.sin(beta * v) / np.cos(v) ** (1.0 / beta)
    b = (np.cos((1.0 - beta) * v) / w) ** ((1.0 - beta) / beta)
    return a * b


def sample_symmetric_stable(beta: float, sigma: float, count: int, stream: StreamLike) -> np.ndarray:
    """I.i.d. symmetric stable draws with ``E exp(iuX) = exp(-sigma^beta |u|^beta)``.

    ``beta = 2`` gives ``N(0, 2 sigma^2)`` and ``beta = 1`` the Cauchy law
    with scale ``sigma``.
    """
    if not 0.0 < beta <= 2.0:
        raise ParameterDomainError(f"beta must lie in (0, 2], got {beta}")
    if not sigma > 0.0:
        raise ParameterDomainError(f"sigma must be positive, got {sigma}")
    count = _check_count(count)
    return sigma * _unit_symmetric_stable(float(beta), count, as_generator(stream))


def sample_totally_skewed_stable(rho: float, scale: float, count: int, stream: StreamLike) -> np.ndarray:
    """Mean-zero, skewness +1 stable draws with index ``rho`` in (1, 2).

    Characteristic function
    ``exp(-scale^rho |t|^rho (1 - i sign(t) tan(pi rho / 2)))``; the heavy
    tail is on the right.
    """
    if not 1.0 < rho < 2.0:
        raise ParameterDomainError(f"rho must lie in (1, 2), got {rho}")
    if not scale > 0.0:
        raise ParameterDomainError(f"scale must be positive, got {scale}")
    count = _check_count(count)
    rng = as_generator(stream)
    v = np.pi * (rng.random(count) - 0.5)
    w = rng.standard_exponential(count)
    t = math.tan(math.pi * rho / 2.0)
    b = math.atan(t) / rho
    s = (1.0 + t * t) ** (1.0 / (2.0 * rho))
    x = (s * np.sin(rho * (v + b)) / np.cos(v) ** (1.0 / rho)
         * (np.cos(v - rho * (v + b)) / w) ** ((1.0 - rho) / rho))
    return scale * x


def stable_levy_density_constant(beta: float, sigma: float = 1.0) -> float:
    """``C`` such that ``C |x|^(-1-beta)`` is the Lévy density of the
    symmetric stable law with exponent ``-sigma^beta |u|^beta``."""
    return sigma**beta * math.gamma(1.0 + beta) * math.sin(math.pi * beta / 2.0) / math.pi


# ---------------------------------------------------------------------------
# jump laws and driver specs
# ---------------------------------------------------------------------------

class JumpLaw(str, enum.Enum):
    UNIT = "unit"          # +-1 with probability 1/2
    NORMAL = "normal"      # N(0, param^2)
    UNIFORM = "uniform"    # U(-param, param)
    PARETO = "pareto"      # sign * |x|, P(|x| > y) = y^-param for y >= 1


def sample_jump_sizes(law: JumpLaw | str, param: float, count: int, rng: np.random.Generator) -> np.ndarray:
    law = JumpLaw(law)
    if count == 0:
        return np.zeros(0)
    if law is JumpLaw.UNIT:
        return rng.choice(np.array([-1.0, 1.0]), size=count)
    if law is JumpLaw.NORMAL:
        return param * rng.standard_normal(count)
    if law is JumpLaw.UNIFORM:
        return param * (2.0 * rng.random(count) - 1.0)
    mag = (1.0 - rng.random(count)) ** (-1.0 / param)
    return np.where(rng.random(count) < 0.5, -mag, mag)


def jump_characteristic_function(law: JumpLaw | str, param: float, u: np.ndarray) -> np.ndarray:
    """``E cos(u J)`` for the symmetric jump law (the imaginary part vanishes)."""
    law = JumpLaw(law)
    u = np.abs(np.asarray(u, dtype=float))
    if law is JumpLaw.UNIT:
        return np.cos(u)
    if law is JumpLaw.NORMAL:
        return np.exp(-0.5 * (param * u) ** 2)
    if law is JumpLaw.UNIFORM:
        return np.sinc(param * u / np.pi)

    def one(ui):
        if ui == 0.0:
            return 1.0
        val, _ = integrate.quad(lambda x: x ** (-1.0 - param), 1.0, np.inf, weight="cos", wvar=ui)
        return param * val

    return np.vectorize(one, otypes=[float])(u)


class LevyKind(str, enum.Enum):
    SYMMETRIC_STABLE = "symmetric_stable"
    COMPOUND_POISSON = "compound_poisson"
    TEMPERED_STABLE = "tempered_stable"


@dataclass(frozen=True)
class LevySpec:
    """Driving noise description.

    ``TemperedStable`` has Lévy density ``C |x|^(-1-beta)`` on
    ``|x| <= cutoff`` (``C`` matches the symmetric stable law with scale
    ``sigma``) and ``C |x|^(-1-beta) exp(-(|x| - cutoff)/cutoff)`` beyond.
    """

    kind: LevyKind
    beta: float | None = None
    sigma: float = 1.0
    intensity: float = 0.0
    jump_law: JumpLaw = JumpLaw.UNIT
    jump_param: float = 1.0
    cutoff: float = 1.0
    gauss_fraction: float = 1.0 / 16.0

    def __post_init__(self):
        object.__setattr__(self, "kind", LevyKind(self.kind))
        object.__setattr__(self, "jump_law", JumpLaw(self.jump_law))
        if self.kind is LevyKind.COMPOUND_POISSON:
            if self.intensity < 0.0:
                raise ParameterDomainError("compound Poisson intensity must be >= 0")
            if self.jump_law is not JumpLaw.UNIT and not self.jump_param > 0.0:
                raise ParameterDomainError("jump_param must be positive")
        else:
            if self.beta is None or not 0.0 < self.beta <= 2.0:
                raise ParameterDomainError(f"beta must lie in (0, 2], got {self.beta}")
            if not self.sigma > 0.0:
                raise ParameterDomainError("sigma must be positive")
            if self.kind is LevyKind.TEMPERED_STABLE:
                if not self.beta < 2.0:
                    raise ParameterDomainError("tempered stable needs beta < 2")
                if not self.cutoff > 0.0:
                    raise ParameterDomainError("cutoff must be positive")
                if not 0.0 < self.gauss_fraction < 1.0:
                    raise ParameterDomainError("gauss_fraction must lie in (0, 1)")

    @classmethod
    def stable(cls, beta: float, sigma: float = 1.0) -> "LevySpec":
        return cls(LevyKind.SYMMETRIC_STABLE, beta=beta, sigma=sigma)

    @classmethod
    def compound_poisson(cls, intensity: float, jump_law: JumpLaw | str = JumpLaw.UNIT,
                         jump_param: float = 1.0) -> "LevySpec":
        return cls(LevyKind.COMPOUND_POISSON, intensity=intensity, jump_law=JumpLaw(jump_law),
                   jump_param=jump_param)

    @classmethod
    def tempered(cls, beta: float, sigma: float = 1.0, cutoff: float = 1.0) -> "LevySpec":
        return cls(LevyKind.TEMPERED_STABLE, beta=beta, sigma=sigma, cutoff=cutoff)

    def blumenthal_getoor(self) -> float:
        if self.kind is LevyKind.COMPOUND_POISSON:
            return 0.0
        return float(self.beta)

    def tail_index(self) -> float:
        """Largest ``theta <= 2`` with ``limsup nu(|x| >= t) t^theta < inf``."""
        if self.kind is LevyKind.SYMMETRIC_STABLE:
            return float(self.beta)
        if self.kind is LevyKind.COMPOUND_POISSON and self.jump_law is JumpLaw.PARETO:
            return min(float(self.jump_param), 2.0)
        return 2.0

    @property
    def is_stable(self) -> bool:
        return self.kind is LevyKind.SYMMETRIC_STABLE

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "beta": self.beta, "sigma": self.sigma,
                "intensity": self.intensity, "jump_law": self.jump_law.value,
                "jump_param": self.jump_param, "cutoff": self.cutoff,
                "gauss_fraction": self.gauss_fraction}

    @classmethod
    def from_dict(cls, d: dict) -> "LevySpec":
        return cls(**d)

    # tempered-stable helpers -------------------------------------------------
    @cached_property
    def _tempered_big_rate(self) -> float:
        c = stable_levy_density_constant(self.beta, self.sigma)
        val, _ = integrate.quad(lambda x: x ** (-1.0 - self.beta) * math.exp(-(x - self.cutoff) / self.cutoff),
                                self.cutoff, np.inf)
        return 2.0 * c * val

    def levy_density(self, x: np.ndarray) -> np.ndarray:
        """Lévy density (absolutely continuous kinds only)."""
        if self.kind is LevyKind.COMPOUND_POISSON:
            raise ParameterDomainError("compound Poisson with atomic jump law has no density in general")
        c = stable_levy_density_constant(self.beta, self.sigma)
        ax = np.abs(np.asarray(x, dtype=float))
        dens = c * ax ** (-1.0 - self.beta)
        if self.kind is LevyKind.TEMPERED_STABLE:
            dens = dens * np.exp(-np.maximum(ax - self.cutoff, 0.0) / self.cutoff)
        return dens


def characteristic_exponent(spec: LevySpec, u: np.ndarray) -> np.ndarray:
    """``log E exp(iu L_1)`` (real, since all drivers are symmetric)."""
    u = np.asarray(u, dtype=float)
    if spec.kind is LevyKind.SYMMETRIC_STABLE:
        return -(spec.sigma ** spec.beta) * np.abs(u) ** spec.beta
    if spec.kind is LevyKind.COMPOUND_POISSON:
        return spec.intensity * (jump_characteristic_function(spec.jump_law, spec.jump_param, u) - 1.0)
    c = stable_levy_density_constant(spec.beta, spec.sigma)
    b, cut = spec.beta, spec.cutoff

    def one(ui):
        ui = abs(ui)
        if ui == 0.0:
            return 0.0
        small, _ = integrate.quad(lambda x: -2.0 * math.sin(ui * x / 2.0) ** 2 * x ** (-1.0 - b),
                                  0.0, cut, limit=200)
        f = lambda x: x ** (-1.0 - b) * math.exp(-(x - cut) / cut)
        big_cos, _ = integrate.quad(f, cut, np.inf, weight="cos", wvar=ui)
        big_one, _ = integrate.quad(f, cut, np.inf)
        return 2.0 * c * (small + big_cos - big_one)

    return np.vectorize(one, otypes=[float])(u)


# ---------------------------------------------------------------------------
# increments and jump lists
# ---------------------------------------------------------------------------

def _compound_poisson_sums(rate_mesh: float, count: int, law, param, rng):
    counts = rng.poisson(rate_mesh, size=count)
    sizes = sample_jump_sizes(law, param, int(counts.sum()), rng)
    owner = np.repeat(np.arange(count), counts)
    return np.bincount(owner, weights=sizes, minlength=count), counts


def _tempered_big_jump_sizes(spec: LevySpec, count: int, rng: np.random.Generator) -> np.ndarray:
    # Pareto proposal on (cutoff, inf) accepted with prob exp(-(x - cutoff)/cutoff)
    out = np.empty(count)
    filled = 0
    while filled < count:
        need = count - filled
        m = max(16, int(need * 1.5) + 8)
        x = spec.cutoff * (1.0 - rng.random(m)) ** (-1.0 / spec.beta)
        keep = x[rng.random(m) < np.exp(-(x - spec.cutoff) / spec.cutoff)][:need]
        out[filled:filled + keep.size] = keep
        filled += keep.size
    return np.where(rng.random(count) < 0.5, -out, out)


def _tempered_small_part(spec: LevySpec, mesh: float, count: int, rng: np.random.Generator,
                         chunk: int = 2 * 10**7) -> np.ndarray:
    # Jumps in (eps, cutoff] exactly as compound Poisson with truncated Pareto
    # sizes; jumps below eps = gauss_fraction * cutoff by a variance-matched
    # Gaussian (Asmussen-Rosinski).
    b, c = spec.beta, spec.cutoff
    eps = spec.gauss_fraction * c
    dens = stable_levy_density_constant(b, spec.sigma)
    lo, hi = eps ** (-b), c ** (-b)
    rate = 2.0 * dens * (lo - hi) / b
    var = 2.0 * dens * eps ** (2.0 - b) / (2.0 - b)
    out = math.sqrt(var * mesh) * rng.standard_normal(count)
    counts = rng.poisson(rate * mesh, size=count)
    per = max(1, int(chunk / max(rate * mesh, 1.0)))
    for a in range(0, count, per):
        cnt = counts[a:a + per]
        m = int(cnt.sum())
        x = (lo - rng.random(m) * (lo - hi)) ** (-1.0 / b)
        x = np.where(rng.random(m) < 0.5, -x, x)
        out[a:a + per] += np.bincount(np.repeat(np.arange(cnt.size), cnt), weights=x, minlength=cnt.size)
    return out


def sample_levy_increments(spec: LevySpec, mesh: float, count: int, stream: StreamLike,
                           return_counts: bool = False):
    """I.i.d. increments ``L_{t+mesh} - L_t``.

    For compound Poisson drivers ``return_counts=True`` also returns the
    number of jumps inside each increment.
    """
    if not mesh > 0.0:
        raise ParameterDomainError(f"mesh must be positive, got {mesh}")
    count = _check_count(count)
    rng = as_generator(stream)
    if spec.kind is LevyKind.SYMMETRIC_STABLE:
        out = spec.sigma * mesh ** (1.0 / spec.beta) * _unit_symmetric_stable(spec.beta, count, rng)
        counts = None
    elif spec.kind is LevyKind.COMPOUND_POISSON:
        out, counts = _compound_poisson_sums(spec.intensity * mesh, count, spec.jump_law, spec.jump_param, rng)
    else:
        counts = rng.poisson(spec._tempered_big_rate * mesh, size=count)
        sizes = _tempered_big_jump_sizes(spec, int(counts.sum()), rng)
        big = np.bincount(np.repeat(np.arange(count), counts), weights=sizes, minlength=count)
        out = big + _tempered_small_part(spec, mesh, count, rng)
    if return_counts:
        return out, counts
    return out


@dataclass(frozen=True)
class JumpList:
    """Finite set of jumps, sorted by time."""

    times: np.ndarray
    sizes: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        s = np.asarray(self.sizes, dtype=float).ravel()
        if t.shape != s.shape:
            raise ParameterDomainError("times and sizes must have equal length")
        order = np.argsort(t, kind="stable")
        object.__setattr__(self, "times", t[order])
        object.__setattr__(self, "sizes", s[order])

    def __len__(self):
        return self.times.size

    def __iter__(self):
        return iter(zip(self.times.tolist(), self.sizes.tolist()))

    def restrict(self, a: float, b: float) -> "JumpList":
        m = (self.times >= a) & (self.times <= b)
        return JumpList(self.times[m], self.sizes[m])

    @classmethod
    def empty(cls) -> "JumpList":
        return cls(np.zeros(0), np.zeros(0))


def sample_compound_poisson_jumps(lam: float, jump_sampler, window, stream: StreamLike) -> JumpList:
    """Exact jumps of a compound Poisson process on ``window = (a, b)``.

    ``jump_sampler`` is either a callable ``(rng, size) -> sizes``, a
    :class:`JumpLaw` (unit parameter), or a ``(JumpLaw, param)`` pair.
    Each unit-length slab ``[a + j, a + j + 1)`` uses its own sub-stream, so
    widening the window to the left only adds jumps.
    """
    a, b = map(float, window)
    if not a < b:
        raise ParameterDomainError(f"empty window [{a}, {b}]")
    if not lam > 0.0:
        raise ParameterDomainError(f"lambda must be positive, got {lam}")
    sampler = _as_sampler(jump_sampler)
    if isinstance(stream, np.random.Generator):
        rng = stream
        n = rng.poisson(lam * (b - a))
        times = a + (b - a) * rng.random(n)
        return JumpList(times, sampler(rng, n))
    times, sizes = [], []
    lo = math.floor(a)
    for j in range(lo, math.ceil(b)):
        rng = as_generator(stream, 0x5CA1AB1E, j - (-(2**31)))
        n = rng.poisson(lam)
        t = j + rng.random(n)
        s = sampler(rng, n)
        m = (t >= a) & (t <= b)
        times.append(t[m])
        sizes.append(s[m])
    return JumpList(np.concatenate(times), np.concatenate(sizes))


def _as_sampler(jump_sampler):
    if callable(jump_sampler) and not isinstance(jump_sampler, (JumpLaw, str)):
        return lambda rng, n: np.asarray(jump_sampler(rng, n), dtype=float)
    if isinstance(jump_sampler, tuple):
        law, param = jump_sampler
    else:
        law, param = jump_sampler, 1.0
    return lambda rng, n: sample_jump_sizes(law, param, n, rng)


def levy_jumps(spec: LevySpec, window, stream: StreamLike) -> JumpList:
    """Jump list of a compound-Poisson ``spec`` on ``window``."""
    if spec.kind is not LevyKind.COMPOUND_POISSON:
        raise ParameterDomainError("only compound Poisson drivers have a finite jump list")
    if spec.intensity == 0.0:
        return JumpList.empty()
    return sample_compound_poisson_jumps(spec.intensity, (spec.jump_law, spec.jump_param), window, stream)
