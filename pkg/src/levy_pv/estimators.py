"""Recovery of ``H``, ``alpha`` and ``beta`` from a single high-frequency path."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import power_variation as pv
from .errors import DegeneratePathError, EstimationError, ParameterDomainError

EPS_FEAS = 1e-9
GRID_OFFSET = (math.sqrt(2.0) - 1.0) / 2.0      # irrational shift keeps grid points off branch boundaries


def default_p_grid(m: int = 33, lo: float = 1.05, hi: float = 1.95) -> np.ndarray:
    return np.linspace(lo, hi, m)


def trapezoid_weights(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    w = np.zeros_like(x)
    dx = np.diff(x)
    w[:-1] += dx / 2.0
    w[1:] += dx / 2.0
    return w


def in_window(alpha: float, beta: float) -> bool:
    H = alpha + 1.0 / beta
    return alpha > 0.0 and 1.0 < beta < 2.0 and 0.5 < H < 1.0


def theoretical_scale_function(alpha: float, beta: float, p):
    """Limit of ``-log V(p)_n / log n``: ``alpha p`` (jump regime),
    ``p H - 1`` (ergodic regime) or ``p - 1`` (smooth regime).

    Boundaries follow the strict inequalities of the three regimes and are
    filled by continuity (the branches agree there).
    """
    if not in_window(alpha, beta):
        raise ParameterDomainError(f"(alpha, beta) = ({alpha}, {beta}) outside the estimation window")
    pa = np.asarray(p, dtype=float)
    if np.any((pa <= 1.0) | (pa >= 2.0)):
        raise ParameterDomainError("p must lie in (1, 2)")
    H = alpha + 1.0 / beta
    out = np.empty_like(pa)
    flat_p, flat_o = pa.ravel(), out.ravel()
    for i, q in enumerate(flat_p):
        if alpha < 1.0 - 1.0 / q and q > beta:
            flat_o[i] = alpha * q
        elif alpha < 1.0 - 1.0 / beta and q < beta:
            flat_o[i] = q * H - 1.0
        elif alpha > 1.0 - 1.0 / max(q, beta):
            flat_o[i] = q - 1.0
        else:
            flat_o[i] = alpha * q      # q == beta: branches one and two coincide
    return out.reshape(pa.shape) if out.ndim else float(out)


@dataclass(frozen=True)
class OptimizerConfig:
    grid_size: int = 41
    max_iter: int = 200
    restarts: int = 3
    reflect: float = 1.0
    expand: float = 2.0
    contract: float = 0.5
    shrink: float = 0.5
    ftol: float = 1e-22
    init_step: float | None = None


@dataclass
class EstimatorResult:
    H_hat: float | None = None
    alpha_hat: float | None = None
    beta_hat: float | None = None
    objective_value: float | None = None
    p_grid: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = 1
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# (a, b) coordinates with b = 1/beta: the window is b in (1/2, 1), 0 < a < 1 - b
def _project(x: np.ndarray) -> np.ndarray:
    b = min(max(x[1], 0.5 + EPS_FEAS), 1.0 - 2.0 * EPS_FEAS)
    a = min(max(x[0], EPS_FEAS), 1.0 - b - EPS_FEAS)
    return np.array([a, b])


def _objective_factory(p_grid, s_obs, w):
    def f(x):
        a, b = x
        return float(np.dot(w, (s_obs - theoretical_scale_function(a, 1.0 / b, p_grid)) ** 2))
    return f


def _grid(cfg: OptimizerConfig) -> list:
    m = cfg.grid_size
    ticks = (np.arange(m) + GRID_OFFSET) / m
    pts = []
    for b in 0.5 + 0.5 * ticks:
        for a in ticks:
            if a < 1.0 - b - EPS_FEAS:
                pts.append((float(a), float(b)))
    return pts


def nelder_mead(f, x0, step, cfg: OptimizerConfig):
    """Projected Nelder-Mead in two dimensions.

    Returns ``(x_best, f_best, log)`` where ``log`` is the best objective
    after each iteration (non-increasing).
    """
    simplex = [_project(np.asarray(x0, float))]
    for d in range(2):
        e = np.zeros(2)
        e[d] = step
        simplex.append(_project(simplex[0] + e))
    vals = [f(x) for x in simplex]
    log = []
    for _ in range(cfg.max_iter):
        order = np.argsort(vals, kind="stable")
        simplex = [simplex[i] for i in order]
        vals = [vals[i] for i in order]
        log.append(vals[0])
        if vals[-1] - vals[0] <= cfg.ftol:
            break
        centroid = (simplex[0] + simplex[1]) / 2.0
        xr = _project(centroid + cfg.reflect * (centroid - simplex[-1]))
        fr = f(xr)
        if fr < vals[0]:
            xe = _project(centroid + cfg.expand * (xr - centroid))
            fe = f(xe)
            simplex[-1], vals[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < vals[1]:
            simplex[-1], vals[-1] = xr, fr
        else:
            if fr < vals[-1]:
                xc = _project(centroid + cfg.contract * (xr - centroid))
            else:
                xc = _project(centroid + cfg.contract * (simplex[-1] - centroid))
            fc = f(xc)
            if fc < min(fr, vals[-1]):
                simplex[-1], vals[-1] = xc, fc
            else:
                for i in (1, 2):
                    simplex[i] = _project(simplex[0] + cfg.shrink * (simplex[i] - simplex[0]))
                    vals[i] = f(simplex[i])
    i = int(np.argmin(vals))
    log.append(vals[i])
    return simplex[i], vals[i], log


def fit_scale_curve(p_grid, s_values, config: OptimizerConfig | None = None) -> EstimatorResult:
    """Least-squares fit of the theoretical scale function to ``s_values``."""
    cfg = config or OptimizerConfig()
    p_grid = np.asarray(p_grid, dtype=float)
    s_obs = np.asarray(s_values, dtype=float)
    if p_grid.size < 8:
        raise ParameterDomainError("p grid needs at least 8 points")
    if p_grid.shape != s_obs.shape:
        raise ParameterDomainError("p grid and statistics differ in length")
    ok = np.isfinite(s_obs)
    if not ok.any():
        raise EstimationError("all scale statistics are degenerate")
    w = trapezoid_weights(p_grid) * ok
    f = _objective_factory(p_grid, np.where(ok, s_obs, 0.0), w)
    cells = _grid(cfg)
    cell_vals = [f(c) for c in cells]
    best_cells = np.argsort(cell_vals, kind="stable")[: cfg.restarts]
    step = cfg.init_step or 0.5 / cfg.grid_size
    runs = []
    for ci in best_cells:
        x, fx, log = nelder_mead(f, cells[ci], step, cfg)
        runs.append((fx, x, log, cells[ci]))
    # near-equal minima are broken by the grid rank of the starting cell
    fx, x, log, start = min(runs, key=lambda r: r[0])
    a, b = float(x[0]), float(x[1])
    return EstimatorResult(
        H_hat=a + b, alpha_hat=a, beta_hat=1.0 / b, objective_value=fx,
        p_grid=p_grid.tolist(),
        diagnostics={"S": s_obs.tolist(), "objective_log": log, "start_cell": list(start),
                     "restarts": [float(r[0]) for r in runs]})


def scale_statistics(path, p_grid) -> np.ndarray:
    out = []
    for q in np.asarray(p_grid, dtype=float):
        try:
            out.append(pv.log_scale_statistic(path, q))
        except DegeneratePathError:
            out.append(float("nan"))
    return np.asarray(out)


def scale_function_fit(path, p_grid=None, config: OptimizerConfig | None = None) -> EstimatorResult:
    """``(alpha_hat, beta_hat)`` minimising the weighted squared distance
    between ``S(n, p)`` and the theoretical scale function."""
    p_grid = default_p_grid() if p_grid is None else np.asarray(p_grid, dtype=float)
    if np.any((p_grid <= 1.0) | (p_grid >= 2.0)):
        raise ParameterDomainError("p grid must lie in (1, 2)")
    return fit_scale_curve(p_grid, scale_statistics(path, p_grid), config)


def estimate_H_ratio(path, p: float = 0.5) -> float:
    return pv.ratio_statistic(path, p)[1]
