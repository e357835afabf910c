"""Replication engine, Anderson-Darling test and summaries."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy.special import log_ndtr

from . import ate_core as core
from ._validation import child_seeds
from .model import model_from_spec, sample_data
from .moments import moment_table, zero_moment_table
from .spectral import spiked_eigs

HIST_EDGES = np.linspace(-6.0, 6.0, 62)
STAT_KINDS = ("eigenvalue", "eigenvector", "self")


# --------------------------------------------------------------------------
# Anderson-Darling, case 0 (fully specified N(0, 1))

@lru_cache(maxsize=1)
def _ad_table():
    raw = json.loads(resources.files("spikeate").joinpath("data/ad_case0.json").read_text())
    return np.asarray(raw["a2"]), np.log(np.asarray(raw["p"]))


def ad_pvalue(a2: float) -> float:
    """Upper-tail p-value from the simulated table, log-linear in A^2."""
    grid, logp = _ad_table()
    if a2 <= grid[0]:
        return 1.0
    if a2 >= grid[-1]:
        # continue the last stretch of the table as an exponential tail
        j = max(0, grid.size - 40)
        slope = (logp[-1] - logp[j]) / (grid[-1] - grid[j])
        return float(math.exp(logp[-1] + slope * (a2 - grid[-1])))
    return float(min(1.0, math.exp(np.interp(a2, grid, logp))))


def ad_test(samples):
    """(A^2, p) for the hypothesis that samples are iid N(0, 1)."""
    x = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    if x.size < 8:
        raise ValueError("the AD test needs at least 8 samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite samples")
    n = x.size
    i = np.arange(1, n + 1)
    s = (2 * i - 1) * (log_ndtr(x) + log_ndtr(-x[::-1]))
    a2 = float(-n - s.sum() / n)
    return a2, ad_pvalue(a2)


# --------------------------------------------------------------------------
# configuration

@dataclass
class ExperimentConfig:
    model: dict
    statistics: list
    replications: int = 100
    seed: int = 0
    name: str = "experiment"
    variance_mode: str = "exact"
    variance_draws: int = 2000
    L: int = 4
    moment_draws: int = 2000
    solver: str = "newton-approx"
    c0: float = 0.5

    def __post_init__(self):
        if int(self.replications) < 1:
            raise ValueError("replications must be at least 1")
        if not self.statistics:
            raise ValueError("no statistics requested")
        for s in self.statistics:
            if s.get("kind") not in STAT_KINDS:
                raise ValueError("statistic kind must be one of %s" % (STAT_KINDS,))
            if int(s.get("k", 0)) < 1:
                raise ValueError("statistic needs a spike index k >= 1")
            if s["kind"] == "eigenvector" and "u" not in s:
                raise ValueError("eigenvector statistics need a direction u")
        if self.variance_mode not in ("exact", "monte-carlo"):
            raise ValueError("variance_mode must be exact or monte-carlo")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError("unknown config keys: %s" % ", ".join(sorted(extra)))
        if "model" not in d or "statistics" not in d:
            raise ValueError("config needs 'model' and 'statistics'")
        return cls(**d)

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


def stat_id(spec: dict) -> str:
    kind, k = spec["kind"], int(spec["k"])
    if kind == "eigenvalue":
        return "lambda_k%d" % k
    if kind == "self":
        return "self_k%d" % k
    u = spec["u"]
    label = u if isinstance(u, str) else spec.get("label", "custom")
    return "u_%s_k%d" % (label, k)


def resolve_direction(u, model, k):
    """Named directions: a1 = (1,..,1,0,..,0)/sqrt(n) over the first half, e1, v (= v_k)."""
    n = model.n
    if isinstance(u, str):
        if u == "a1":
            out = np.zeros(n)
            out[: n // 2] = 1.0 / math.sqrt(n)
            return out
        if u == "e1":
            out = np.zeros(n)
            out[0] = 1.0
            return out
        if u in ("v", "v_k"):
            return model.v(k).copy()
        raise ValueError("unknown direction %r" % u)
    out = np.asarray(u, dtype=float).reshape(-1)
    if out.shape != (n,):
        raise ValueError("direction has length %d, expected %d" % (out.size, n))
    return out


# --------------------------------------------------------------------------
# engine

@dataclass
class ReplicationRecord:
    rep: int
    values: dict
    reasons: dict
    eigenvalues: list = field(default_factory=list)


class _Plan:
    """Sample-independent parts of every requested statistic."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.model, self.noise = model_from_spec(cfg.model)
        self.ids = [stat_id(s) for s in cfg.statistics]
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate statistics in config")
        ks = sorted({int(s["k"]) for s in cfg.statistics})
        if ks[-1] > self.model.K:
            raise ValueError("statistic asks for k=%d but the model has K=%d" % (ks[-1], self.model.K))
        if np.any(self.noise.sigma2) or np.any(self.noise.diag_mean):
            self.moments = moment_table(self.noise, cfg.L, cfg.moment_draws, cfg.seed)
        else:
            self.moments = zero_moment_table(self.model.n, cfg.L)
        self.solutions, self.failures = {}, {}
        for k in ks:
            try:
                self.solutions[k] = core.solve_tk(k, self.model, self.moments, cfg.solver, c0=cfg.c0)
            except ValueError as exc:
                self.failures[k] = str(exc)
        self.preps = {}
        for sid, s in zip(self.ids, cfg.statistics):
            k = int(s["k"])
            if k not in self.solutions:
                continue
            sol = self.solutions[k]
            try:
                self.preps[sid] = self._prepare(s, sol)
            except ValueError as exc:
                self.preps[sid] = exc

    def _prepare(self, s, sol):
        cfg, noise = self.cfg, self.noise
        if s["kind"] == "eigenvalue":
            return None
        if s["kind"] == "self":
            mode = "monte-carlo" if cfg.variance_mode == "monte-carlo" else "exact"
            return core.self_stat_variance(sol, noise, mode, cfg.variance_draws, cfg.seed)
        u = resolve_direction(s["u"], self.model, sol.k)
        return core.prepare_general(u, sol, self.model, self.moments, noise, cfg.variance_mode,
                                    cfg.variance_draws, cfg.seed)

    def run_one(self, rep, seed) -> ReplicationRecord:
        cfg = self.cfg
        values, reasons = {}, {}
        X = sample_data(self.model, self.noise, seed)
        pairs = spiked_eigs(X, self.model.K, reference=self.model)
        for sid, s in zip(self.ids, cfg.statistics):
            k = int(s["k"])
            try:
                if k in self.failures:
                    raise ValueError(self.failures[k])
                prep = self.preps[sid]
                if isinstance(prep, Exception):
                    raise prep
                sol, pair = self.solutions[k], pairs[k - 1]
                if s["kind"] == "eigenvalue":
                    val = core.eigenvalue_stat(pair, sol, self.noise)
                elif s["kind"] == "self":
                    val = core.eigenvector_stat_self(pair, sol, self.model, self.moments, self.noise,
                                                     variance=prep)
                else:
                    val = core.eigenvector_stat_general(prep.u, pair, sol, self.model, self.moments,
                                                        self.noise, prep=prep)
                values[sid] = float(val)
                reasons[sid] = ""
            except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
                values[sid] = float("nan")
                reasons[sid] = str(exc).split(":")[0]
        return ReplicationRecord(rep, values, reasons, [p.lam for p in pairs])


def run_experiment(config, threads: int = 1, return_plan: bool = False):
    """Run config.replications replicates; replicate i uses seed (base, stream 1, i).

    Results are ordered by replicate index, so output does not depend on threads.
    """
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    plan = _Plan(cfg)
    seeds = child_seeds(cfg.seed, int(cfg.replications), tag=1)
    jobs = list(enumerate(seeds))
    if threads <= 1:
        records = [plan.run_one(i, s) for i, s in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda job: plan.run_one(*job), jobs))
    return (records, plan) if return_plan else records


# --------------------------------------------------------------------------
# summaries and writers

def histogram(values) -> dict:
    x = np.asarray(values, dtype=float)
    counts, _ = np.histogram(np.clip(x, HIST_EDGES[0], HIST_EDGES[-1]), bins=HIST_EDGES)
    below = int(np.sum(x < HIST_EDGES[0]))
    above = int(np.sum(x > HIST_EDGES[-1]))
    # clipped outliers sit in the edge bins; move them to the tails
    counts[0] -= below
    counts[-1] -= above
    return {"edges": HIST_EDGES.tolist(), "counts": counts.tolist(), "below": below, "above": above}


def summarize_values(values) -> dict:
    x = np.asarray(values, dtype=float)
    ok = x[np.isfinite(x)]
    out = {"n_valid": int(ok.size), "n_invalid": int(x.size - ok.size)}
    if ok.size == 0:
        out["available"] = False
        return out
    out.update(available=True, mean=float(ok.mean()), sd=float(ok.std(ddof=1)) if ok.size > 1 else 0.0)
    if ok.size >= 8:
        a2, p = ad_test(ok)
        out.update(ad_A2=a2, ad_p=p)
    else:
        out.update(ad_A2=None, ad_p=None)
    out["histogram"] = histogram(ok)
    return out


def summarize(records) -> dict:
    """Per-statistic mean, SD, AD statistic and p-value, histogram and failure reasons."""
    ids = list(records[0].values) if records else []
    summary = {}
    for sid in ids:
        vals = [r.values[sid] for r in records]
        entry = summarize_values(vals)
        reasons = {}
        for r in records:
            if r.reasons.get(sid):
                reasons[r.reasons[sid]] = reasons.get(r.reasons[sid], 0) + 1
        entry["reasons"] = reasons
        summary[sid] = entry
    return summary


def records_csv(records, experiment: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["experiment", "rep", "statistic", "value", "reason"])
    for r in records:
        for sid, val in r.values.items():
            w.writerow([experiment, r.rep, sid, repr(float(val)), r.reasons.get(sid, "")])
    return buf.getvalue()


def histogram_csv(hist: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["left", "right", "count"])
    edges = hist["edges"]
    w.writerow(["-inf", edges[0], hist["below"]])
    for a, b, c in zip(edges[:-1], edges[1:], hist["counts"]):
        w.writerow([repr(a), repr(b), c])
    w.writerow([edges[-1], "inf", hist["above"]])
    return buf.getvalue()


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0
