"""Replicated Monte Carlo experiments with distributional checks and persistence.

Every replication ``r`` draws from ``RngStream(seed, r)``; results are merged
in replication order, so the output does not depend on the worker count.
"""
from __future__ import annotations

import csv
import enum
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import estimators as est
from . import kernel_bank as kb
from . import limit_laws as ll
from . import path_simulator as ps
from . import power_variation as pv
from .errors import ConfigError, ParameterDomainError, SchemaVersionError, SizeError
from .levy_driver import LevyKind, LevySpec, RngStream, levy_jumps

SCHEMA_VERSION = 1
LIMIT_SUBKEY = 0x11A17          # substream of a replication used for limit-law reference draws
LIGHT_TAIL_INDEX = 5.0
DEFAULT_MAX_WORK = 5e10         # replications x sum(n_ladder)
CP_BETA_PROXY = 1e-9            # compound Poisson has index 0; classification needs beta > 0


class Experiment(str, enum.Enum):
    THM1I = "VerifyThm1i"
    THM1II = "VerifyThm1ii"
    THM1III = "VerifyThm1iii"
    THM2I = "VerifyThm2i"
    THM2II = "VerifyThm2ii"
    ESTIMATOR = "EstimatorStudy"
    RATE = "RateStudy"


DEFAULT_TOLERANCES = {
    Experiment.THM1I: {"ks_level": 0.01, "min_pass_fraction": 0.8},
    Experiment.THM1II: {"rel_mean": 0.02},
    Experiment.THM1III: {"rel_median": 0.03},
    Experiment.THM2I: {"hill_abs": 0.15},
    Experiment.THM2II: {"ks_level": 0.01, "min_pass_fraction": 0.8},
    Experiment.ESTIMATOR: {"H_abs": 0.02, "alpha_abs": 0.05, "beta_abs": 0.15},
    Experiment.RATE: {"slope_se": 2.0},
}

DEFAULT_OPTIONS = {
    "batches": 1,
    "top_fraction": 0.05,
    "lag_cutoff": None,
    "estimators": ["ratio", "scale"],
    "ratio_p": 0.5,
    "max_work": DEFAULT_MAX_WORK,
}


@dataclass
class ExperimentConfig:
    experiment: Experiment
    kernel: kb.KernelSpec
    levy: LevySpec
    p: float
    k: int
    n_ladder: list
    replications: int
    seed: int = 0
    sim: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        self.experiment = Experiment(self.experiment)
        if isinstance(self.kernel, dict):
            self.kernel = kb.KernelSpec.from_dict(self.kernel)
        if isinstance(self.levy, dict):
            self.levy = LevySpec.from_dict(self.levy)
        self.n_ladder = [int(n) for n in self.n_ladder]
        self.k = int(self.k)
        self.p = float(self.p)
        if not self.n_ladder or min(self.n_ladder) < self.k + 1:
            raise ConfigError("n_ladder must be non-empty with every n >= k + 1")
        if int(self.replications) != self.replications or self.replications < 1:
            raise ConfigError("replications must be a positive integer")
        self.replications = int(self.replications)
        unknown = set(self.sim) - {"truncation_M", "refinement_r", "far_field", "far_ratio", "horizon", "noise_r"}
        if unknown:
            raise ConfigError(f"unknown sim overrides {sorted(unknown)}")
        unknown = set(self.options) - set(DEFAULT_OPTIONS)
        if unknown:
            raise ConfigError(f"unknown options {sorted(unknown)}")

    @property
    def tol(self) -> dict:
        return {**DEFAULT_TOLERANCES[self.experiment], **self.tolerances}

    @property
    def opt(self) -> dict:
        return {**DEFAULT_OPTIONS, **self.options}

    @property
    def beta(self) -> float:
        b = self.levy.blumenthal_getoor()
        return CP_BETA_PROXY if b == 0.0 else b

    def sim_config(self, n: int, rep: int) -> ps.SimConfig:
        return ps.SimConfig(n, stream=RngStream(self.seed, rep), **self.sim)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment.value, "kernel": self.kernel.to_dict(),
                "levy": self.levy.to_dict(), "p": self.p, "k": self.k, "n_ladder": list(self.n_ladder),
                "replications": self.replications, "seed": self.seed, "sim": dict(self.sim),
                "tolerances": dict(self.tolerances), "options": dict(self.options)}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class Criterion:
    name: str
    value: float
    reference: str
    tolerance: str
    passed: bool


@dataclass
class ExperimentSummary:
    config: dict
    statistics: dict            # str(n) -> per-replication statistic
    references: dict            # str(n) -> per-replication reference (or empty)
    extras: dict                # per-replication auxiliary values
    theory: dict
    ks: dict = field(default_factory=dict)
    hill: dict = field(default_factory=dict)
    rate_slope: dict = field(default_factory=dict)
    criteria: list = field(default_factory=list)
    passed: bool = False
    runtime: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("runtime")        # wall-clock time would break byte-identical replays
        d["schema_version"] = SCHEMA_VERSION
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSummary":
        d = dict(d)
        ver = d.pop("schema_version", None)
        if ver != SCHEMA_VERSION:
            raise SchemaVersionError(f"summary schema_version {ver} != {SCHEMA_VERSION}")
        d["criteria"] = [Criterion(**c) for c in d.get("criteria", [])]
        return cls(**d)

    def criterion(self, name: str) -> Criterion:
        for c in self.criteria:
            if c.name == name:
                return c
        raise KeyError(name)


# ---------------------------------------------------------------------------
# statistics helpers
# ---------------------------------------------------------------------------

def ks_statistic(samples, reference) -> float:
    """Sup-distance between the empirical cdf of ``samples`` and a cdf
    (callable) or a second sample (array)."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 20:
        raise SizeError("KS needs at least 20 samples")
    if callable(reference):
        return float(stats.kstest(x, reference).statistic)
    y = np.asarray(reference, dtype=float).ravel()
    if y.size < 20:
        raise SizeError("KS needs at least 20 reference samples")
    return float(stats.ks_2samp(x, y).statistic)


def ks_critical(n: int, m: int | None = None, level: float = 0.01) -> float:
    """Asymptotic critical value ``c(level) sqrt(1/n + 1/m)`` (``m=None``:
    one-sample).  Conservative-to-exact only for samples in the hundreds."""
    c = math.sqrt(-0.5 * math.log(level / 2.0))
    return c * math.sqrt(1.0 / n + (0.0 if m is None else 1.0 / m))


@dataclass(frozen=True)
class HillResult:
    index: float
    se: float
    k: int
    light_tail: bool


def hill_tail_index(samples, top_fraction: float = 0.05) -> HillResult:
    """Hill estimator from the ``floor(top_fraction * N)`` largest positive
    values (``N`` = total sample size)."""
    if not 0.0 < top_fraction <= 0.2:
        raise ParameterDomainError("top_fraction must lie in (0, 0.2]")
    x = np.asarray(samples, dtype=float).ravel()
    pos = np.sort(x[x > 0.0])[::-1]
    k = int(math.floor(top_fraction * x.size))
    if k < 2 or pos.size <= k:
        raise SizeError(f"need more than {k} positive values, have {pos.size}")
    xi = float(np.mean(np.log(pos[:k])) - math.log(pos[k]))
    index = 1.0 / xi
    return HillResult(index, index / math.sqrt(k), k, index > LIGHT_TAIL_INDEX)


def rate_regression(n_ladder, statistics) -> tuple[float, float]:
    """Least-squares slope (and its SE) of ``log(mean statistic)`` on ``log n``."""
    n = np.asarray(n_ladder, dtype=float)
    if n.size < 4:
        raise SizeError("rate regression needs at least 4 ladder points")
    means = np.array([float(np.mean(s)) for s in statistics])
    if means.size != n.size:
        raise SizeError("one statistic (or sample) per ladder point")
    if np.any(means <= 0.0):
        raise ParameterDomainError("statistics must be positive for a log-log fit")
    x, y = np.log(n), np.log(means)
    xc = x - x.mean()
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    resid = y - y.mean() - slope * xc
    se = math.sqrt(float(np.dot(resid, resid)) / (n.size - 2) / float(np.dot(xc, xc)))
    return slope, se


def sample_skewness(x) -> float:
    return float(stats.skew(np.asarray(x, dtype=float)))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

_EXPECTED_REGIME = {
    Experiment.THM1I: (ll.Regime.THM1I, None),
    Experiment.THM1II: (ll.Regime.THM1II, None),
    Experiment.THM1III: (ll.Regime.THM1III, None),
    Experiment.THM2I: (ll.Regime.THM1II, ll.SecondOrder.THM2I),
    Experiment.THM2II: (ll.Regime.THM1II, ll.SecondOrder.THM2II),
}


def validate(config: ExperimentConfig) -> ll.RegimeReport | None:
    """Regime check plus driver/route compatibility; raises ConfigError."""
    opt = config.opt
    work = config.replications * sum(config.n_ladder)
    if work > opt["max_work"]:
        raise SizeError(f"work {work:.3g} exceeds the cap {opt['max_work']:.3g}")
    exp = config.experiment
    if exp is Experiment.ESTIMATOR:
        if config.levy.kind is not LevyKind.SYMMETRIC_STABLE or config.kernel.family is not kb.KernelFamily.PURE_POWER:
            raise ConfigError("EstimatorStudy runs on LFSM (pure-power kernel, stable driver)")
        if not est.in_window(config.kernel.alpha, config.levy.beta):
            raise ConfigError("EstimatorStudy parameters outside the estimation window")
        return None
    rep = ll.classify_regime(config.kernel.alpha, config.beta, config.p, config.k,
                             theta=config.levy.tail_index())
    if exp is Experiment.RATE:
        if rep.regime in (ll.Regime.CRITICAL, ll.Regime.UNDEFINED):
            raise ConfigError(f"RateStudy needs a non-critical regime, got {rep.regime.value}")
        return rep
    want, second = _EXPECTED_REGIME[exp]
    if rep.regime is not want or (second is not None and rep.second_order is not second):
        raise ConfigError(f"{exp.value} declared but parameters give {rep.regime.value}/{rep.second_order.value}")
    if exp is Experiment.THM1I and config.levy.kind is not LevyKind.COMPOUND_POISSON:
        raise ConfigError("VerifyThm1i reference draws need a compound Poisson driver")
    if exp in (Experiment.THM1II, Experiment.THM2I, Experiment.THM2II) and \
            config.levy.kind is not LevyKind.SYMMETRIC_STABLE:
        raise ConfigError(f"{exp.value} compares against stable limits: use a symmetric stable driver")
    return rep


# ---------------------------------------------------------------------------
# replications
# ---------------------------------------------------------------------------

def _scaled_route(config: ExperimentConfig) -> bool:
    return config.levy.kind is LevyKind.SYMMETRIC_STABLE and config.kernel.family is kb.KernelFamily.PURE_POWER


def _exponent(config: ExperimentConfig, rep_report) -> float:
    return pv.normalization_exponent(rep_report, config.kernel.alpha, config.beta, config.p, config.k)


def _one_replication(config: ExperimentConfig, r: int) -> dict:
    exp, p, k = config.experiment, config.p, config.k
    rep_report = validate(config) if exp is not Experiment.ESTIMATOR else None
    out = {"stat": {}, "ref": {}, "extra": {}}
    if exp is Experiment.ESTIMATOR:
        opt = config.opt
        for n in config.n_ladder:
            path = ps.simulate_lfsm(config.kernel.alpha, config.levy.beta, config.levy.sigma, n,
                                    config.sim_config(n, r), c0=config.kernel.c0)
            ex = {}
            if "ratio" in opt["estimators"]:
                ex["H_hat"] = est.estimate_H_ratio(path, opt["ratio_p"])
            if "scale" in opt["estimators"]:
                res = est.scale_function_fit(path)
                ex["alpha_hat"], ex["beta_hat"] = res.alpha_hat, res.beta_hat
            out["stat"][str(n)] = ex.get("H_hat", ex.get("alpha_hat"))
            out["extra"][str(n)] = ex
        return out
    e = _exponent(config, rep_report)
    jumps = None
    if exp is Experiment.THM1III and config.levy.kind is LevyKind.COMPOUND_POISSON:
        M = config.sim.get("truncation_M") or ps.default_cp_window(config.kernel)
        jumps = levy_jumps(config.levy, (-M, 1.0), RngStream(config.seed, r))
    for n in config.n_ladder:
        sim = config.sim_config(n, r)
        ex = {}
        if _scaled_route(config) and exp is not Experiment.THM1III:
            y = ps.scaled_increments_batch(config.kernel, config.levy.beta, config.levy.sigma, k, sim, [r])[0]
            norm = float(np.sum(pv.abs_pow(y, p))) / n
            raw = norm * float(n) ** (-e)
            if exp is Experiment.THM2II:
                ex["eta2"] = pv.empirical_eta2(y, p, config.opt["lag_cutoff"])
        else:
            if jumps is not None:
                path = ps.simulate_compound_poisson_X(config.kernel, jumps, n)
                # trapezoid over the observation grid, same jumps as the path
                ref = ps.derivative_from_jumps(config.kernel, jumps, path.t, k, p).integral
            else:
                path = ps.simulate_moving_average(config.kernel, config.levy, sim, k)
            res = pv.normalize(pv.power_variation(path, p, k), rep_report, config.kernel.alpha, config.beta)
            norm, raw = res.normalized, res.raw
            if exp is Experiment.THM1III and jumps is None:
                ref = ps.simulate_derivative_process(config.kernel, config.levy, None, sim, p, k).integral
        out["stat"][str(n)] = raw if exp is Experiment.RATE else norm
        if exp is Experiment.THM1III:
            out["ref"][str(n)] = ref
        if exp is Experiment.THM1I:
            rng = RngStream(config.seed, r).generator(LIMIT_SUBKEY, n)
            out["ref"][str(n)] = ll.sample_limit_Z_thm1i(config.levy, config.kernel.alpha, p, k,
                                                         config.kernel.c0, rng)
        if ex:
            out["extra"][str(n)] = ex
    return out


def _run_chunk(config_dict: dict, indices: list) -> list:
    cfg = ExperimentConfig.from_dict(config_dict)
    return [(r, _one_replication(cfg, r)) for r in indices]


def _replicate(config: ExperimentConfig, workers: int) -> list:
    idx = list(range(config.replications))
    if workers <= 1:
        return [rec for _, rec in _run_chunk(config.to_dict(), idx)]
    chunks = [idx[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, [config.to_dict()] * len(chunks), chunks))
    merged = sorted((r, rec) for part in parts for r, rec in part)
    return [rec for _, rec in merged]


def _batches(x: np.ndarray, count: int) -> list:
    return np.array_split(np.asarray(x), count)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentSummary:
    t0 = time.perf_counter()
    rep_report = validate(config)
    records = _replicate(config, workers)
    keys = [str(n) for n in config.n_ladder]
    statistics = {key: [rec["stat"][key] for rec in records] for key in keys}
    references = {key: [rec["ref"][key] for rec in records] for key in keys if records and key in records[0]["ref"]}
    extras = {key: [rec["extra"][key] for rec in records] for key in keys if records and key in records[0]["extra"]}
    summary = ExperimentSummary(config.to_dict(), statistics, references, extras, theory={})
    if rep_report is not None:
        summary.theory["regime"] = rep_report.regime.value
        summary.theory["second_order"] = rep_report.second_order.value
        summary.theory["normalization_exponent"] = rep_report.normalization_exponent
    _evaluate(config, summary)
    summary.passed = bool(summary.criteria) and all(c.passed for c in summary.criteria)
    summary.runtime = time.perf_counter() - t0
    return summary


def _evaluate(config: ExperimentConfig, s: ExperimentSummary) -> None:
    exp, tol, opt = config.experiment, config.tol, config.opt
    a, b, p, k = config.kernel.alpha, config.beta, config.p, config.k
    last = str(config.n_ladder[-1])
    n_last = config.n_ladder[-1]
    stat = np.asarray(s.statistics[last], dtype=float)
    if exp in (Experiment.THM1II, Experiment.THM2I, Experiment.THM2II):
        s.theory["m_p"] = ll.m_p(a, b, config.levy.sigma, p, k, config.kernel.c0)
    if exp is Experiment.THM1II:
        mp = s.theory["m_p"]
        for key in s.statistics:
            s.theory.setdefault("rel_mean_by_n", {})[key] = float(np.mean(s.statistics[key]) / mp - 1.0)
        dev = abs(float(np.mean(stat)) / mp - 1.0)
        s.criteria.append(Criterion("rel_mean_deviation", dev, f"m_p={mp!r}", f"< {tol['rel_mean']}",
                                    dev < tol["rel_mean"]))
    elif exp is Experiment.THM1I:
        ref = np.asarray(s.references[last], dtype=float)
        _ks_batches(s, stat, ref, None, opt["batches"], tol, "sample_limit_Z_thm1i draws")
    elif exp is Experiment.THM2II:
        mp = s.theory["m_p"]
        z = math.sqrt(n_last) * (stat - mp)
        eta = np.array([e["eta2"] for e in s.extras[last]])
        s.theory["eta2_hat"] = float(np.mean(eta))
        s.theory["clt_mean"] = float(np.mean(z))
        s.theory["clt_var"] = float(np.var(z))
        _ks_batches(s, z, None, eta, opt["batches"], tol, "N(0, eta2_hat) from empirical_eta2")
    elif exp is Experiment.THM2I:
        mp = s.theory["m_p"]
        rho = ll.second_order_index(a, b, k)
        z = float(n_last) ** (1.0 - 1.0 / rho) * (stat - mp)
        h = hill_tail_index(z, opt["top_fraction"])
        s.hill = {"index": h.index, "se": h.se, "k": h.k, "light_tail": h.light_tail,
                  "top_fraction": opt["top_fraction"]}
        s.theory["stable_index"] = rho
        dev = abs(h.index - rho)
        s.criteria.append(Criterion("hill_index", h.index, f"(k - alpha) beta={rho!r}",
                                    f"|index - ref| < {tol['hill_abs']}", dev < tol["hill_abs"]))
        sk = sample_skewness(z)
        s.criteria.append(Criterion("skewness", sk, "right-skewed limit", "> 0", sk > 0.0))
    elif exp is Experiment.THM1III:
        med = {}
        for key in s.statistics:
            st = np.asarray(s.statistics[key])
            rf = np.asarray(s.references[key])
            med[key] = float(np.median(np.abs(st - rf) / rf))
        s.theory["median_rel_dev_by_n"] = med
        dev = med[last]
        s.criteria.append(Criterion("median_rel_deviation", dev, "int_0^1 |F_u|^p du (coupled)",
                                    f"< {tol['rel_median']}", dev < tol["rel_median"]))
        if len(config.n_ladder) > 1:
            first = str(config.n_ladder[0])
            s.criteria.append(Criterion("ladder_decrease", med[last] - med[first], "first ladder point",
                                        "< 0", med[last] < med[first]))
    elif exp is Experiment.ESTIMATOR:
        H = a + 1.0 / config.levy.beta
        ex = s.extras[last]
        if "ratio" in opt["estimators"]:
            d = float(np.median([abs(e["H_hat"] - H) for e in ex]))
            s.criteria.append(Criterion("median_abs_H", d, f"H={H!r}", f"< {tol['H_abs']}", d < tol["H_abs"]))
        if "scale" in opt["estimators"]:
            da = float(np.median([abs(e["alpha_hat"] - a) for e in ex]))
            db = float(np.median([abs(e["beta_hat"] - config.levy.beta) for e in ex]))
            s.criteria.append(Criterion("median_abs_alpha", da, f"alpha={a!r}", f"< {tol['alpha_abs']}",
                                        da < tol["alpha_abs"]))
            s.criteria.append(Criterion("median_abs_beta", db, f"beta={config.levy.beta!r}",
                                        f"< {tol['beta_abs']}", db < tol["beta_abs"]))
    elif exp is Experiment.RATE:
        slope, se = rate_regression(config.n_ladder, [s.statistics[str(n)] for n in config.n_ladder])
        expected = -s.theory["normalization_exponent"]
        s.rate_slope = {"slope": slope, "se": se, "expected": expected}
        ok = abs(slope - expected) <= tol["slope_se"] * se
        s.criteria.append(Criterion("rate_slope", slope, f"-exponent={expected!r}",
                                    f"within {tol['slope_se']} SE", ok))


def _ks_batches(s, stat, ref, eta, batches, tol, label):
    m = stat.size
    xs = _batches(stat, batches)
    refs = _batches(ref, batches) if ref is not None else None
    etas = _batches(eta, batches) if eta is not None else None
    values, crits = [], []
    for j, x in enumerate(xs):
        if refs is not None:
            values.append(ks_statistic(x, refs[j]))
            crits.append(ks_critical(x.size, refs[j].size, tol["ks_level"]))
        else:
            e2 = float(np.mean(etas[j]))
            values.append(ks_statistic(x, ll.clt_reference(e2)))
            crits.append(ks_critical(x.size, None, tol["ks_level"]))
    passes = [v < c for v, c in zip(values, crits)]
    s.ks = {"values": values, "critical": crits, "passes": passes, "median": float(np.median(values)),
            "batch_size": int(m // batches), "reference": label}
    frac = sum(passes) / len(passes)
    s.criteria.append(Criterion("ks_batches", frac, label,
                                f"pass fraction >= {tol['min_pass_fraction']} at level {tol['ks_level']}",
                                frac >= tol["min_pass_fraction"] - 1e-12))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def persist(summary: ExperimentSummary, path) -> tuple[Path, Path]:
    """Write ``path`` (JSON) and ``path`` with suffix ``.csv`` (one row per
    replication and ladder point)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(summary.to_json() + "\n")
    csv_path = path.with_suffix(".csv")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replication", "n", "statistic", "reference"])
        for key, vals in summary.statistics.items():
            refs = summary.references.get(key, [None] * len(vals))
            for r, (v, rf) in enumerate(zip(vals, refs)):
                w.writerow([r, key, repr(v), "" if rf is None else repr(rf)])
    return path, csv_path


def load(path) -> ExperimentSummary:
    with open(path) as fh:
        return ExperimentSummary.from_dict(json.load(fh))
