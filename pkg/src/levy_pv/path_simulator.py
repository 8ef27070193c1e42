"""Trajectories of the moving average, its scaled increments, the LFSM and
the derivative process.

Infinite-activity drivers go through a discretisation engine working in
unit-lag coordinates (lag ``x = n t``):

* near field: cells of width ``1/r`` on ``s`` in ``[-M, T]``; each cell weight
  is ``sign * (r int_cell |K|^beta)^(1/beta)`` so that the ``L^beta`` mass of
  the kernel is kept exactly, applied as an FFT convolution;
* far field: geometric cells on ``[-H, -M]`` evaluated at their midpoints,
  applied through Chebyshev interpolation in the output index;
* remainder beyond ``H``: a single stable variable whose scale is the
  analytic tail norm (power-law kernels only).

Compound-Poisson drivers are evaluated exactly from their jump lists.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import fft as sfft
from scipy import integrate

from . import kernel_bank as kb
from .errors import ConfigError, ParameterDomainError, SizeError, UnsupportedDriverError
from .levy_driver import (JumpList, LevyKind, LevySpec, RngStream, _unit_symmetric_stable,
                          levy_jumps, sample_levy_increments, stable_levy_density_constant)

NOISE_CHUNK = 256          # lag units per independent noise block
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True)
class SimConfig:
    """Discretisation parameters.

    ``truncation_M`` is the near-field (or compound-Poisson window) depth in
    time units; ``None`` picks a kernel-dependent default.  ``horizon`` is
    the far-field depth in time units.  ``noise_r`` is the resolution at
    which near-field noise is drawn before being summed down to
    ``refinement_r``; equal ``noise_r`` couple runs at different ``r``.
    """

    n: int
    truncation_M: float | None = None
    refinement_r: int = 8
    stream: RngStream = RngStream(0)
    far_field: bool = True
    far_ratio: float = 1.05
    horizon: float | None = None
    noise_r: int | None = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ConfigError(f"n must be an integer >= 2, got {self.n}")
        if int(self.refinement_r) != self.refinement_r or self.refinement_r < 1:
            raise ConfigError("refinement_r must be a positive integer")
        if self.truncation_M is not None and not self.truncation_M > 0.0:
            raise ConfigError("truncation_M must be positive")
        if self.noise_r is not None and self.noise_r % self.refinement_r:
            raise ConfigError("noise_r must be a multiple of refinement_r")
        if not self.far_ratio > 1.0:
            raise ConfigError("far_ratio must exceed 1")

    @property
    def r_noise(self) -> int:
        return int(self.noise_r or self.refinement_r)

    def with_stream(self, stream: RngStream) -> "SimConfig":
        return SimConfig(self.n, self.truncation_M, self.refinement_r, stream, self.far_field,
                         self.far_ratio, self.horizon, self.noise_r)

    def to_dict(self) -> dict:
        return {"n": self.n, "truncation_M": self.truncation_M, "refinement_r": self.refinement_r,
                "seed": self.stream.seed, "stream_id": self.stream.stream_id,
                "far_field": self.far_field, "far_ratio": self.far_ratio,
                "horizon": self.horizon, "noise_r": self.noise_r}


@dataclass(frozen=True)
class BiasReport:
    """Truncation/discretisation diagnostics.

    ``truncation_scale``: stable scale (or L2 norm for compound Poisson) of
    the neglected part of one output; ``truncation_bound``: its 99.9% level.
    ``discretization_rel``: ``||K_r - K||_beta / ||K||_beta`` for the kernel
    of the ``diag_order``-th increments; ``discretization_bound`` bounds the
    relative scale of the change under ``r -> 2r``.
    """

    truncation_scale: float = 0.0
    truncation_bound: float = 0.0
    discretization_rel: float = 0.0
    discretization_bound: float = 0.0
    near_depth: float = 0.0
    horizon: float = 0.0
    far_cells: int = 0
    exact: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class PathSample:
    values: np.ndarray
    config: SimConfig
    kernel: kb.KernelSpec | None
    levy: LevySpec | None
    bias_report: BiasReport = field(default_factory=BiasReport)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.config.n + 1,):
            raise SizeError(f"path length {v.shape} != n+1 = {self.config.n + 1}")
        if not np.all(np.isfinite(v)):
            raise ConfigError("path contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.config.n

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.n + 1) / self.n

    def header(self) -> dict:
        return {"schema_version": 1, "config": self.config.to_dict(),
                "kernel": None if self.kernel is None else self.kernel.to_dict(),
                "levy": None if self.levy is None else self.levy.to_dict(),
                "bias_report": self.bias_report.to_dict()}

    def to_csv(self, fh=None) -> str | None:
        buf = io.StringIO() if fh is None else fh
        buf.write("# " + json.dumps(self.header(), sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "t", "X"])
        for i, (t, x) in enumerate(zip(self.t, self.values)):
            w.writerow([i, repr(float(t)), repr(float(x))])
        return buf.getvalue() if fh is None else None


def read_path_csv(fh) -> tuple[np.ndarray, dict | None]:
    """Read the ``i,t,X`` schema; returns ``(X, header or None)``.

    Comment lines start with ``#``; the first one, if JSON, is the header.
    """
    header = None
    rows = []
    for line in fh:
        if line.startswith("#"):
            if header is None:
                try:
                    header = json.loads(line[1:])
                except json.JSONDecodeError:
                    header = {}
            continue
        if not line.strip():
            continue
        rows.append(line)
    reader = csv.reader(rows)
    head = next(reader, None)
    if head is None or [h.strip() for h in head] != ["i", "t", "X"]:
        raise ConfigError(f"expected header i,t,X, got {head}")
    vals = [float(r[2]) for r in reader]
    return np.asarray(vals), header


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    """Driver increments over lag-widths ``w``: ``L`` increments over ``w * mesh_scale``."""

    levy: LevySpec
    mesh_scale: float = 1.0

    @property
    def beta(self) -> float:
        return float(self.levy.beta)

    def draw(self, width: float, count: int, rng: np.random.Generator) -> np.ndarray:
        if self.levy.kind is LevyKind.SYMMETRIC_STABLE:
            scale = self.levy.sigma * (width * self.mesh_scale) ** (1.0 / self.levy.beta)
            return scale * _unit_symmetric_stable(self.levy.beta, count, rng)
        return sample_levy_increments(self.levy, width * self.mesh_scale, count, rng)

    def draw_widths(self, widths: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.levy.kind is LevyKind.SYMMETRIC_STABLE:
            scale = self.levy.sigma * (widths * self.mesh_scale) ** (1.0 / self.levy.beta)
            return scale * _unit_symmetric_stable(self.levy.beta, widths.size, rng)
        return np.array([sample_levy_increments(self.levy, w * self.mesh_scale, 1, rng)[0] for w in widths])


@dataclass(frozen=True)
class Layout:
    M: int                    # near-field depth (lag units)
    T: int                    # last output index
    r: int
    r_noise: int
    far_edges: tuple = ()     # distances to the left of 0, from M to H
    remainder: bool = False

    @property
    def near_cells(self) -> int:
        return (self.M + self.T) * self.r


@dataclass
class Noise:
    near: np.ndarray
    far: np.ndarray
    rem: float


def draw_noise(model: NoiseModel, layout: Layout, stream: RngStream) -> Noise:
    """Noise for one replication.

    Near noise is drawn per block of ``NOISE_CHUNK`` lag units from its own
    sub-stream and summed from ``r_noise`` down to ``r``, so extending ``M``
    or changing ``r`` keeps the shared part of the driver identical.
    """
    rn = layout.r_noise
    b_lo = math.floor(-layout.M / NOISE_CHUNK)
    b_hi = math.ceil(layout.T / NOISE_CHUNK)
    parts = []
    for b in range(b_lo, b_hi):
        rng = stream.generator(1, b + 2**32)
        parts.append(model.draw(1.0 / rn, NOISE_CHUNK * rn, rng))
    fine = np.concatenate(parts)
    start = (-layout.M - b_lo * NOISE_CHUNK) * rn
    fine = fine[start:start + (layout.M + layout.T) * rn]
    group = rn // layout.r
    near = fine.reshape(-1, group).sum(axis=1) if group > 1 else fine
    far = np.zeros(0)
    if layout.far_edges:
        widths = np.diff(np.asarray(layout.far_edges))
        far = model.draw_widths(widths, stream.generator(2))
    rem = 0.0
    if layout.remainder:
        rem = float(model.draw(1.0, 1, stream.generator(3))[0])
    return Noise(near, far, rem)


# ---------------------------------------------------------------------------
# discretisation engine
# ---------------------------------------------------------------------------

def _cheb_nodes(m: int) -> np.ndarray:
    return np.cos(np.pi * np.arange(m) / (m - 1))


def _barycentric_matrix(nodes_unit: np.ndarray, x_unit: np.ndarray) -> np.ndarray:
    m = nodes_unit.size
    w = (-1.0) ** np.arange(m)
    w[0] *= 0.5
    w[-1] *= 0.5
    diff = x_unit[:, None] - nodes_unit[None, :]
    exact = diff == 0.0
    diff[exact] = 1.0
    mat = w[None, :] / diff
    mat /= mat.sum(axis=1, keepdims=True)
    rows = np.flatnonzero(exact.any(axis=1))
    for i in rows:
        mat[i] = exact[i].astype(float)
    return mat


def cell_weights(fun: Callable, J: int, r: int, beta: float, kinks=(), rule: str = "lbeta") -> np.ndarray:
    """Weights of the cells ``[j/r, (j+1)/r]``, ``j < J``.

    ``rule="lbeta"``: ``sign(int K) (r int |K|^beta)^(1/beta)``;
    ``rule="mean"``: ``r int K``.  Cells touching a kink use adaptive
    quadrature, the rest 8-point Gauss-Legendre.
    """
    j = np.arange(J)
    x = (j[:, None] + 0.5 * (_GL_X[None, :] + 1.0)) / r
    vals = np.asarray(fun(x), dtype=float)
    mean = 0.5 * vals @ _GL_W
    if rule == "lbeta":
        mass = 0.5 * (np.abs(vals) ** beta) @ _GL_W
    special_cells = set()
    for kp in kinks:
        c = int(round(kp * r))
        special_cells.update(range(max(c - 2, 0), min(c + 2, J)))
    scalar = lambda y: float(np.asarray(fun(np.asarray([y])))[0])
    for c in sorted(special_cells):
        a, b = c / r, (c + 1) / r
        mean[c] = r * integrate.quad(scalar, a, b, limit=200, epsabs=1e-15, epsrel=1e-12)[0]
        if rule == "lbeta":
            mass[c] = r * integrate.quad(lambda y: abs(scalar(y)) ** beta, a, b, limit=200,
                                         epsabs=1e-15, epsrel=1e-12)[0]
    if rule == "mean":
        return mean
    return np.sign(mean) * mass ** (1.0 / beta)


def _cell_error_norm(fun, weights, r, beta, shift_cells=0, order=0):
    """``int |D(K_r) - D(K)|^beta`` and ``int |D K|^beta`` on the cells,
    where ``D`` is the ``order``-th difference with lag ``shift_cells/r``."""
    J = weights.size
    j = np.arange(J)
    x = (j[:, None] + 0.5 * (_GL_X[None, :] + 1.0)) / r
    if order == 0:
        dk = np.asarray(fun(x))
        dw = weights
    else:
        coeffs = kb.binomial_coefficients(order)
        dk = sum(c * np.asarray(fun(x - i * shift_cells / r)) for i, c in enumerate(coeffs))
        padded = np.concatenate([np.zeros(order * shift_cells), weights])
        dw = sum(c * padded[order * shift_cells - i * shift_cells:][:J] for i, c in enumerate(coeffs))
    err = 0.5 * (np.abs(dw[:, None] - dk) ** beta) @ _GL_W / r
    ref = 0.5 * (np.abs(dk) ** beta) @ _GL_W / r
    return float(err.sum()), float(ref.sum())


class Engine:
    """Linear functional ``out_t = int {K(t - s) - K0(-s)} dL_s`` for outputs
    ``t = t0..T`` on a fixed :class:`Layout`."""

    N_CHEB = 32

    def __init__(self, K, layout: Layout, beta: float, t0: int = 0, K0=None, kinks=(0.0,),
                 rule: str = "lbeta", tail_norm: float = 0.0, tail_kind: str = "none",
                 diag_order: int = 0, diag_lag: int = 1):
        self.K, self.K0, self.layout, self.beta = K, K0, layout, beta
        self.t0 = int(t0)
        self.t_out = np.arange(self.t0, layout.T + 1)
        r, M = layout.r, layout.M
        jn = layout.near_cells
        self.e = cell_weights(K, jn, r, beta, kinks, rule)
        self.nfft = sfft.next_fast_len(2 * jn, real=True)
        self.e_hat = sfft.rfft(self.e, self.nfft)
        self.idx = (self.t_out + M) * r - 1
        self.e0 = None
        if K0 is not None:
            self.e0 = cell_weights(K0, M * r, r, beta, kinks, rule)[::-1]  # aligned to noise q = 0..Mr-1
        self.far_B = self.far_C = None
        self.far_const = None
        if layout.far_edges:
            d = np.asarray(layout.far_edges, dtype=float)
            s_mid = -0.5 * (d[:-1] + d[1:])
            t_lo, t_hi = float(self.t_out[0]), float(self.t_out[-1])
            nodes = _cheb_nodes(self.N_CHEB)
            t_nodes = 0.5 * (t_lo + t_hi) + 0.5 * (t_hi - t_lo) * nodes if t_hi > t_lo else np.full(self.N_CHEB, t_lo)
            self.far_C = np.asarray(K(t_nodes[:, None] - s_mid[None, :]), dtype=float)
            if t_hi > t_lo:
                x_unit = (2.0 * self.t_out - (t_lo + t_hi)) / (t_hi - t_lo)
                self.far_B = _barycentric_matrix(nodes, x_unit)
            else:
                self.far_B = np.zeros((1, self.N_CHEB))
                self.far_B[0, 0] = 1.0
            if K0 is not None:
                self.far_const = np.asarray(K0(-s_mid), dtype=float)
        self.tail_norm, self.tail_kind = float(tail_norm), tail_kind
        if layout.remainder and tail_kind == "none":
            raise ConfigError("layout requests a remainder but the kernel has no tail model")
        err, ref = _cell_error_norm(K, self.e, r, beta, diag_lag * r, diag_order)
        self.disc_rel = (err / ref) ** (1.0 / beta) if ref > 0 else 0.0

    def apply(self, noises: list[Noise]) -> np.ndarray:
        R = len(noises)
        out = np.empty((R, self.t_out.size))
        chunk = max(1, int(2**22 // self.nfft))
        for c0 in range(0, R, chunk):
            block = np.stack([nz.near for nz in noises[c0:c0 + chunk]])
            conv = sfft.irfft(sfft.rfft(block, self.nfft, axis=1) * self.e_hat[None, :], self.nfft, axis=1)
            out[c0:c0 + block.shape[0]] = conv[:, self.idx]
        if self.e0 is not None:
            mr = self.layout.M * self.layout.r
            c = np.array([nz.near[:mr] @ self.e0 for nz in noises])
            out -= c[:, None]
        if self.far_C is not None:
            far = np.stack([nz.far for nz in noises])          # R x J
            out += (far @ self.far_C.T) @ self.far_B.T
            if self.far_const is not None:
                out -= (far @ self.far_const)[:, None]
        if self.layout.remainder:
            rem = np.array([nz.rem for nz in noises])[:, None] * self.tail_norm
            if self.tail_kind == "stationary":
                out += rem
            elif self.tail_kind == "increment":
                out += rem * self.t_out[None, :]
        return out


def far_edges(M: float, H: float, ratio: float) -> tuple:
    if H <= M:
        return ()
    m = max(1, math.ceil(math.log(H / M) / math.log(ratio)))
    return tuple(M * (H / M) ** (np.arange(m + 1) / m))


# ---------------------------------------------------------------------------
# kernel bookkeeping for the engine
# ---------------------------------------------------------------------------

def _default_depth_time(kernel: kb.KernelSpec) -> float:
    if kernel.family is kb.KernelFamily.GAMMA_DAMPED and kernel.lam > 0:
        return min(1.0, 40.0 / kernel.lam)
    return 1.0


def _default_horizon_lag(kernel: kb.KernelSpec, n: int, span: int) -> float:
    if kernel.family is kb.KernelFamily.GAMMA_DAMPED and kernel.lam > 0:
        return 50.0 * n / kernel.lam
    return 1e6 * span


def _stable_quantile_factor(beta: float, level: float = 1e-3) -> float:
    # P(|Z| > x) ~ (2C/beta) x^-beta for unit scale
    c = stable_levy_density_constant(beta, 1.0)
    return (2.0 * c / (beta * level)) ** (1.0 / beta)


def _check_well_defined(kernel: kb.KernelSpec, beta: float, k: int | None, path: bool):
    if kernel.family is kb.KernelFamily.PURE_POWER:
        if path:
            if not kernel.g0_equals_g:
                raise ConfigError("PurePower with g0 = 0 is not a well-defined moving average")
            if not kernel.alpha < 1.0 - 1.0 / beta:
                raise ConfigError(f"PurePower path needs alpha < 1 - 1/beta = {1 - 1 / beta:.4g}")
        elif not kernel.alpha < k - 1.0 / beta:
            raise ConfigError(f"h_k not in L^beta: alpha={kernel.alpha} >= k - 1/beta")
        return
    rep = kb.validate_assumption_A(kernel, min(beta, 2.0), max(k or 1, 1))
    if not rep.passed:
        raise ConfigError(f"kernel fails the regularity/decay checks: {rep.failures()}")


@lru_cache(maxsize=32)
def _engine_cached(kind: str, kernel: kb.KernelSpec, beta: float, n: int, k: int, M: int, T: int,
                   r: int, r_noise: int, far: bool, ratio: float, H: float | None) -> Engine:
    if kind == "scaled":
        K = lambda x: kb.scaled_kernel_phi_n(kernel, n, x, 0.0, k=k)
        kinks = tuple(float(j) for j in range(k + 1))
        K0, t0, diag_order = None, k, 0
    elif kind == "path":
        K = lambda x: kb.eval_g(kernel, np.asarray(x) / n)
        K0 = (lambda x: kb.eval_g(kernel, np.asarray(x) / n)) if kernel.g0_equals_g else None
        kinks, t0, diag_order = (0.0,), 0, max(k, 1)
    elif kind == "derivative":
        K = lambda x: _safe_derivative(kernel, np.asarray(x) / n, k)
        K0, kinks, t0, diag_order = None, (0.0,), 0, 0
    else:
        raise ValueError(kind)
    H_lag = H * n if H is not None else _default_horizon_lag(kernel, n, M + T)
    power = kernel.lam == 0.0
    edges = far_edges(float(M), H_lag, ratio) if far else ()
    remainder = bool(far and power)
    tail_norm, tail_kind = 0.0, "none"
    if remainder:
        tail_norm, tail_kind = _tail_model(kind, kernel, beta, n, k, H_lag)
    layout = Layout(M, T, r, r_noise, edges, remainder)
    return Engine(K, layout, beta, t0=t0, K0=K0, kinks=kinks, tail_norm=tail_norm,
                  tail_kind=tail_kind, diag_order=diag_order, diag_lag=1)


def _safe_derivative(kernel, t, k):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = kb.eval_g(kernel, t[pos], k)
    return out


def _tail_model(kind, kernel, beta, n, k, H_lag):
    """Norm of the kernel beyond ``H`` for pure-power kernels (leading order)."""
    a, c0 = kernel.alpha, kernel.c0
    if kind == "scaled":
        ka = kb.falling_factorial(a, k)
        e = a - k
        coef = abs(c0 * ka)
        kind_out = "stationary"
    elif kind == "path":
        # g(t - s) - g(-s) ~ t g'(-s) for -s > H
        coef, e, kind_out = abs(c0 * a) * n ** (-a), a - 1.0, "increment"
    else:
        coef, e, kind_out = abs(c0 * kb.falling_factorial(a, k)) * n ** (k - a), a - k, "stationary"
    if e * beta >= -1.0:
        raise ConfigError("kernel tail not in L^beta")
    mass = coef**beta * H_lag ** (1.0 + e * beta) / (-1.0 - e * beta)
    return mass ** (1.0 / beta), kind_out


def _layout_ints(kernel, sim: SimConfig) -> tuple[int, int]:
    depth = sim.truncation_M if sim.truncation_M is not None else _default_depth_time(kernel)
    M = max(1, int(math.ceil(depth * sim.n)))
    return M, sim.n


def _neglected_scale(kind, kernel, beta, n, k, M, T, far):
    """Scale of the part of the integral left out entirely (no far field)."""
    if far:
        return 0.0
    if kind == "scaled":
        f = lambda x: abs(kb.scaled_kernel_phi_n(kernel, n, x, 0.0, k=k))
        e = kernel.alpha - k if kernel.lam == 0 else None
        lo = float(M + k)
    else:
        if kernel.g0_equals_g:
            f = lambda x: abs(kb.eval_g(kernel, (x + T) / n) - kb.eval_g(kernel, x / n))
        else:
            f = lambda x: abs(kb.eval_g(kernel, x / n))
        e = kernel.alpha - 1.0 if (kernel.lam == 0 and kernel.g0_equals_g) else None
        lo = float(M)
    try:
        mass = kb.lbeta_norm(f, beta, (lo, np.inf), tol=1e-6, tail_exponent=e, cutoff=2.0 * lo)
    except Exception:
        return float("inf")
    return mass ** (1.0 / beta)


# ---------------------------------------------------------------------------
# public simulation routes
# ---------------------------------------------------------------------------

def _stable_model(levy: LevySpec, scale_time: float) -> NoiseModel:
    return NoiseModel(levy, scale_time)


def _bias(engine: Engine, kind, kernel, beta, n, k, M, T, far, scale_factor) -> BiasReport:
    neg = _neglected_scale(kind, kernel, beta, n, k, M, T, far) * scale_factor
    layout = engine.layout
    return BiasReport(truncation_scale=float(neg),
                      truncation_bound=float(neg * _stable_quantile_factor(min(beta, 1.999))),
                      discretization_rel=float(engine.disc_rel),
                      discretization_bound=float(2.0 * engine.disc_rel),
                      near_depth=M / n, horizon=(layout.far_edges[-1] / n if layout.far_edges else M / n),
                      far_cells=max(len(layout.far_edges) - 1, 0))


def simulate_moving_average(kernel: kb.KernelSpec, levy: LevySpec, sim: SimConfig, k: int = 1) -> PathSample:
    """Path ``X_{i/n}``, ``i = 0..n``.

    ``k`` only selects which increments the discretisation diagnostic
    refers to.  Compound-Poisson drivers are simulated exactly.
    """
    if levy.kind is LevyKind.COMPOUND_POISSON:
        M = sim.truncation_M if sim.truncation_M is not None else default_cp_window(kernel)
        jumps = levy_jumps(levy, (-M, 1.0), sim.stream)
        path = simulate_compound_poisson_X(kernel, jumps, sim.n, config=sim, levy=levy)
        trunc = _cp_truncation_l2(kernel, levy, M)
        rep = BiasReport(truncation_scale=trunc, truncation_bound=6.0 * trunc, near_depth=M, horizon=M, exact=True)
        return PathSample(path.values, sim, kernel, levy, rep)
    beta = levy.blumenthal_getoor()
    if levy.kind is LevyKind.SYMMETRIC_STABLE and beta >= 2.0:
        raise UnsupportedDriverError("Gaussian drivers are not supported for path simulation")
    _check_well_defined(kernel, beta, k, path=True)
    M, T = _layout_ints(kernel, sim)
    eng = _engine_cached("path", kernel, beta, sim.n, k, M, T, sim.refinement_r, sim.r_noise,
                         sim.far_field, sim.far_ratio, sim.horizon)
    model = NoiseModel(levy, 1.0 / sim.n)
    vals = eng.apply([draw_noise(model, eng.layout, sim.stream)])[0]
    rep = _bias(eng, "path", kernel, beta, sim.n, k, M, T, sim.far_field,
                levy.sigma * sim.n ** (-1.0 / beta))
    return PathSample(vals, sim, kernel, levy, rep)


def scaled_increments_batch(kernel: kb.KernelSpec, beta: float, sigma: float, k: int, sim: SimConfig,
                            stream_ids) -> np.ndarray:
    """Rows of ``Y_i^n = int D^k g_n(i - s) dL_s``, ``i = k..n``, one per stream id."""
    if not 0.0 < beta < 2.0:
        raise UnsupportedDriverError("the scaled route needs a symmetric stable driver with beta < 2")
    _check_well_defined(kernel, beta, k, path=False)
    if sim.n < k + 1:
        raise ConfigError("n must be >= k + 1")
    M, T = _layout_ints(kernel, sim)
    eng = _engine_cached("scaled", kernel, float(beta), sim.n, k, M, T, sim.refinement_r, sim.r_noise,
                         sim.far_field, sim.far_ratio, sim.horizon)
    model = NoiseModel(LevySpec.stable(beta, sigma), 1.0)
    noises = [draw_noise(model, eng.layout, RngStream(sim.stream.seed, int(s))) for s in stream_ids]
    return eng.apply(noises)


def scaled_route_bias(kernel, beta, k, sim: SimConfig) -> BiasReport:
    M, T = _layout_ints(kernel, sim)
    eng = _engine_cached("scaled", kernel, float(beta), sim.n, k, M, T, sim.refinement_r, sim.r_noise,
                         sim.far_field, sim.far_ratio, sim.horizon)
    return _bias(eng, "scaled", kernel, beta, sim.n, k, M, T, sim.far_field, 1.0)


def simulate_scaled_increments(kernel: kb.KernelSpec, beta: float, sigma: float, n: int, k: int,
                               sim: SimConfig) -> np.ndarray:
    """``Y_i^n``, ``i = k..n``: equal in law to ``n^(alpha + 1/beta) Delta_{i,k} X``.

    Only symmetric stable drivers are supported (the identity relies on
    ``1/beta`` self-similarity).
    """
    if isinstance(beta, LevySpec):
        raise UnsupportedDriverError("pass beta and sigma of a symmetric stable driver")
    if n != sim.n:
        sim = SimConfig(n, sim.truncation_M, sim.refinement_r, sim.stream, sim.far_field,
                        sim.far_ratio, sim.horizon, sim.noise_r)
    return scaled_increments_batch(kernel, beta, sigma, k, sim, [sim.stream.stream_id])[0]


def simulate_lfsm(alpha: float, beta: float, sigma: float, n: int, sim: SimConfig, c0: float = 1.0) -> PathSample:
    """LFSM on ``{i/n}``: ``n^-H`` times the cumulative sum of unit-scale
    first increments, ``H = alpha + 1/beta``."""
    if not 0.0 < beta < 2.0:
        raise ParameterDomainError("beta must lie in (0, 2)")
    H = alpha + 1.0 / beta
    if not 0.0 < H < 1.0 or alpha < 0.0:
        raise ParameterDomainError(f"H = alpha + 1/beta = {H} outside (0, 1)")
    if n != sim.n:
        sim = SimConfig(n, sim.truncation_M, sim.refinement_r, sim.stream, sim.far_field,
                        sim.far_ratio, sim.horizon, sim.noise_r)
    levy = LevySpec.stable(beta, sigma)
    if alpha == 0.0:
        rng = sim.stream.generator(1)
        inc = c0 * sigma * _unit_symmetric_stable(beta, n, rng)
        vals = np.concatenate([[0.0], np.cumsum(inc)]) * n ** (-H)
        return PathSample(vals, sim, None, levy, BiasReport(exact=True))
    kernel = kb.KernelSpec.pure_power(alpha, c0)
    y = scaled_increments_batch(kernel, beta, sigma, 1, sim, [sim.stream.stream_id])[0]
    vals = np.concatenate([[0.0], np.cumsum(y)]) * n ** (-H)
    return PathSample(vals, sim, kernel, levy, scaled_route_bias(kernel, beta, 1, sim))


def lfsm_batch(alpha, beta, sigma, sim: SimConfig, stream_ids, c0: float = 1.0) -> np.ndarray:
    """Rows of LFSM paths (length ``n+1``), one per stream id."""
    H = alpha + 1.0 / beta
    kernel = kb.KernelSpec.pure_power(alpha, c0)
    y = scaled_increments_batch(kernel, beta, sigma, 1, sim, stream_ids)
    return np.concatenate([np.zeros((y.shape[0], 1)), np.cumsum(y, axis=1)], axis=1) * sim.n ** (-H)


# ---------------------------------------------------------------------------
# exact compound-Poisson routes
# ---------------------------------------------------------------------------

def default_cp_window(kernel: kb.KernelSpec) -> float:
    if kernel.family is kb.KernelFamily.GAMMA_DAMPED and kernel.lam > 0:
        return math.ceil(30.0 / kernel.lam)
    return 1000.0


def _cp_truncation_l2(kernel, levy: LevySpec, M: float) -> float:
    """L2 norm of the contribution of jumps before ``-M`` to ``X_1``."""
    if levy.intensity == 0.0:
        return 0.0
    if levy.jump_law.value == "pareto" and levy.jump_param <= 2:
        return float("inf")
    m2 = {"unit": 1.0, "normal": levy.jump_param**2, "uniform": levy.jump_param**2 / 3.0,
          "pareto": levy.jump_param / (levy.jump_param - 2.0) if levy.jump_param > 2 else np.inf}[levy.jump_law.value]
    return math.sqrt(levy.intensity * m2 * _cp_tail_mass(kernel, float(M)))


@lru_cache(maxsize=64)
def _cp_tail_mass(kernel: kb.KernelSpec, M: float) -> float:
    # kernel-only quadrature, shared across replications
    if kernel.g0_equals_g:
        f = lambda x: kb.eval_g(kernel, x + 1.0) - kb.eval_g(kernel, x)
        e = kernel.alpha - 1.0 if kernel.lam == 0 else None
    else:
        f = lambda x: kb.eval_g(kernel, x + 1.0)
        e = kernel.alpha if kernel.lam == 0 else None
    try:
        return kb.lbeta_norm(f, 2.0, (M, np.inf), tol=1e-6, tail_exponent=e, cutoff=2 * M)
    except Exception:
        return float("inf")


def _smooth_far_sum(fun, T_far, S_far, u: np.ndarray) -> np.ndarray:
    # sum_m S_m fun(u - T_m) for T_m <= -1, analytic on [0, 1]: Chebyshev interpolation
    if T_far.size == 0:
        return np.zeros_like(u)
    lo, hi = float(u.min()), float(u.max())
    nodes = _cheb_nodes(40)
    un = 0.5 * (lo + hi) + 0.5 * (hi - lo) * nodes
    vals = np.asarray(fun(un[:, None] - T_far[None, :])) @ S_far
    if hi == lo:
        return np.full_like(u, vals[0])
    B = _barycentric_matrix(nodes, (2.0 * u - (lo + hi)) / (hi - lo))
    return B @ vals


def _jump_sum(fun, jumps: JumpList, u: np.ndarray, cut: float = -1.0) -> np.ndarray:
    far = jumps.times <= cut
    near = ~far
    out = _smooth_far_sum(fun, jumps.times[far], jumps.sizes[far], u)
    Tn, Sn = jumps.times[near], jumps.sizes[near]
    for tm, sm in zip(Tn, Sn):
        m = u > tm
        if m.any():
            out[m] += sm * np.asarray(fun(u[m] - tm))
    return out


def simulate_compound_poisson_X(kernel: kb.KernelSpec, jumps, n: int, config: SimConfig | None = None,
                                levy: LevySpec | None = None) -> PathSample:
    """Exact ``X_{i/n} = sum_m {g(i/n - T_m) - g0(-T_m)} DeltaL_m``.

    Jumps at times ``<= -1`` enter through a 40-node Chebyshev interpolant
    of their (analytic on ``[0, 1]``) joint contribution.
    """
    jumps = jumps if isinstance(jumps, JumpList) else _to_jumplist(jumps)
    cfg = config if config is not None else SimConfig(n)
    u = np.arange(n + 1) / n
    if len(jumps) == 0:
        return PathSample(np.zeros(n + 1), cfg, kernel, levy, BiasReport(exact=True))
    g = lambda t: kb.eval_g(kernel, np.maximum(t, 0.0)) * (np.asarray(t) > 0)
    x = _jump_sum(g, jumps, u)
    if kernel.g0_equals_g:
        x -= float(np.sum(jumps.sizes * np.asarray(g(-jumps.times))))
    return PathSample(x, cfg, kernel, levy, BiasReport(exact=True))


def _to_jumplist(jumps) -> JumpList:
    jumps = list(jumps)
    if not jumps:
        return JumpList.empty()
    t, s = zip(*jumps)
    return JumpList(np.array(t, dtype=float), np.array(s, dtype=float))


@dataclass(frozen=True)
class DerivativeSample:
    u: np.ndarray
    F: np.ndarray
    integral: float
    integral_winsorized: float
    p: float


def _trapz_abs_p(u, F, p):
    v = np.abs(F) ** p
    return float(np.sum(0.5 * (v[1:] + v[:-1]) * np.diff(u)))


def _derivative_sample(u, F, p):
    F = np.asarray(F, dtype=float)
    cap = np.quantile(np.abs(F), 0.999) if F.size else 0.0
    Fw = np.clip(F, -cap, cap)
    return DerivativeSample(u, F, _trapz_abs_p(u, F, p), _trapz_abs_p(u, Fw, p), p)


def derivative_from_jumps(kernel: kb.KernelSpec, jumps, u: np.ndarray, k: int, p: float) -> DerivativeSample:
    """``F_u = sum_{T_m < u} g^(k)(u - T_m) DeltaL_m`` (exact)."""
    jumps = jumps if isinstance(jumps, JumpList) else _to_jumplist(jumps)
    u = np.asarray(u, dtype=float)
    if len(jumps) == 0:
        return _derivative_sample(u, np.zeros_like(u), p)
    fun = lambda t: _safe_derivative(kernel, t, k)
    return _derivative_sample(u, _jump_sum(fun, jumps, u), p)


def simulate_derivative_process(kernel: kb.KernelSpec, levy: LevySpec, u_grid, sim: SimConfig,
                                p: float = 1.0, k: int = 1) -> DerivativeSample:
    """``F_u = int g^(k)(u - s) dL_s`` on the observation grid ``u = i/n`` and
    ``int_0^1 |F_u|^p du`` by the trapezoid rule (also with the top 0.1% of
    ``|F|`` winsorised).  Shares the driver with :func:`simulate_moving_average`
    for the same ``sim``.
    """
    beta = levy.blumenthal_getoor()
    if not kernel.alpha > k - 1.0 / max(beta, p, 1e-300):
        raise ConfigError(f"alpha={kernel.alpha} <= k - 1/(beta v p): F is not defined")
    u = np.arange(sim.n + 1) / sim.n if u_grid is None else np.asarray(u_grid, dtype=float)
    if levy.kind is LevyKind.COMPOUND_POISSON:
        M = sim.truncation_M if sim.truncation_M is not None else default_cp_window(kernel)
        jumps = levy_jumps(levy, (-M, 1.0), sim.stream)
        return derivative_from_jumps(kernel, jumps, u, k, p)
    if not np.allclose(u, np.arange(sim.n + 1) / sim.n):
        raise ConfigError("for infinite-activity drivers the u-grid is the observation grid")
    _check_well_defined(kernel, beta, k, path=True)
    M, T = _layout_ints(kernel, sim)
    eng = _engine_cached("derivative", kernel, beta, sim.n, k, M, T, sim.refinement_r, sim.r_noise,
                         sim.far_field, sim.far_ratio, sim.horizon)
    model = NoiseModel(levy, 1.0 / sim.n)
    F = eng.apply([draw_noise(model, eng.layout, sim.stream)])[0]
    return _derivative_sample(u, F, p)


def cp_coupled(kernel: kb.KernelSpec, levy: LevySpec, n: int, k: int, p: float, stream: RngStream,
               window: float | None = None):
    """``(X path values, DerivativeSample)`` from one exact jump list."""
    M = window if window is not None else default_cp_window(kernel)
    jumps = levy_jumps(levy, (-M, 1.0), stream)
    x = simulate_compound_poisson_X(kernel, jumps, n)
    return x.values, derivative_from_jumps(kernel, jumps, x.t, k, p), jumps
