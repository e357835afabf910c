"""Finite-n margins for the regularity conditions and the CLT conditions.

The theory states its conditions as limits (-> 0, -> infinity). Here each
becomes a number with a pass / marginal / fail annotation:

* quantities that should diverge: pass >= 10, marginal >= 3;
* quantities that should vanish: pass <= 0.1, marginal <= 0.3;
* the spike gap min |d_i / d_j|: pass >= 1.1.

Ratios whose constants are unspecified are reported with the note "info".
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_vector, child_seeds, check_unit
from .model import NoiseProfile, SpikedMeanModel, sample_noise
from .moments import _bilinear_variance, alpha_n, kappa_xy, s2_xy

# thresholds are compared with this relative slack so that exact ties pass
REL_TOL = 1e-9

THRESHOLDS = {
    "diverging": {"pass": 10.0, "marginal": 3.0},
    "vanishing": {"pass": 0.1, "marginal": 0.3},
    "gap": {"pass": 1.1},
}


def _grow(x):
    if not np.isfinite(x):
        return "pass" if x > 0 else "fail"
    t = THRESHOLDS["diverging"]
    x = x * (1 + REL_TOL)
    return "pass" if x >= t["pass"] else "marginal" if x >= t["marginal"] else "fail"


def _shrink(x):
    if not np.isfinite(x):
        return "fail"
    t = THRESHOLDS["vanishing"]
    x = x * (1 - REL_TOL)
    return "pass" if x <= t["pass"] else "marginal" if x <= t["marginal"] else "fail"


def _entry(value, kind):
    value = float(value)
    if kind == "diverging":
        note = _grow(value)
    elif kind == "vanishing":
        note = _shrink(value)
    elif kind == "gap":
        note = "pass" if value * (1 + REL_TOL) >= THRESHOLDS["gap"]["pass"] else "fail"
    else:
        note = "info"
    return {"value": value, "annotation": note}


def _ratio(a, b):
    if b == 0:
        return math.inf if a > 0 else math.nan
    return a / b


@dataclass
class DiagnosticsReport:
    alpha_n: float
    sigma_min: float
    ratios: dict = field(default_factory=dict)
    lyapunov_ratio: dict | None = None
    w2_ratios: dict | None = None
    spectral_norm: dict | None = None

    def to_dict(self) -> dict:
        return {
            "alpha_n": self.alpha_n,
            "sigma_min": self.sigma_min,
            "thresholds": THRESHOLDS,
            "ratios": self.ratios,
            "lyapunov_ratio": self.lyapunov_ratio,
            "w2_ratios": self.w2_ratios,
            "spectral_norm": self.spectral_norm,
        }

    def table(self) -> str:
        rows = [("alpha_n", "%.6g" % self.alpha_n, ""), ("sigma_min", "%.6g" % self.sigma_min, "")]
        for group, items in self.ratios.items():
            for name, e in items.items():
                rows.append(("%s.%s" % (group, name), "%.6g" % e["value"], e["annotation"]))
        for label, block in (("lyapunov", self.lyapunov_ratio), ("w2", self.w2_ratios)):
            if block:
                for name, e in block.items():
                    if isinstance(e, dict):
                        rows.append(("%s.%s" % (label, name), "%.6g" % e["value"], e["annotation"]))
        width = max(len(r[0]) for r in rows)
        return "\n".join("%-*s  %14s  %s" % (width, a, b, c) for a, b, c in rows)


def sigma_min(noise: NoiseProfile) -> float:
    """sqrt(min_{i != j} E w_ij^2)."""
    n = noise.n
    if n < 2:
        return 0.0
    off = noise.sigma2[~np.eye(n, dtype=bool)]
    return float(math.sqrt(off.min()))


def check_conditions(model: SpikedMeanModel, noise: NoiseProfile, x=None, y=None,
                     mc_draws: int = 0, seed=0) -> DiagnosticsReport:
    """Margins for the noise scale, the spike gap and strength, and the dense-model condition.

    If x and y are given the Lyapunov ratio is added, and with ``mc_draws > 0``
    the second-order CLT ratios as well.
    """
    n, D = model.n, np.abs(model.D)
    a = alpha_n(noise)
    smin = sigma_min(noise)
    gaps = [D[i] / D[i + 1] for i in range(model.K - 1) if model.D[i] != -model.D[i + 1]]
    gap = min(gaps) if gaps else math.inf
    dK = D[-1]
    vinf = float(np.abs(model.V).max())
    log_n = math.log(n) if n > 1 else 1.0
    s2max = float(noise.sigma2.max(initial=0.0))
    ratios = {
        "cond1": {"alpha_n": _entry(a, "diverging")},
        "cond2_gap": {"min_ratio": _entry(gap, "gap")},
        "cond2_strength": {
            "dK_over_alpha": _entry(_ratio(dK, a), "diverging"),
            "dK_over_alpha_log_n": _entry(_ratio(dK, a * log_n), "info"),
            "n_maxvar_over_alpha2": _entry(_ratio(n * s2max, a * a), "info"),
        },
        "cond3_fields": {
            "d1_over_dK": _entry(D[0] / dK, "info"),
            "dK_sigma_min_over_alpha": _entry(_ratio(dK * smin, a), "diverging"),
            "vinf2_over_sigma_min": _entry(_ratio(vinf**2, smin), "vanishing"),
            "alpha4_vinf4_over_sqrtn_sigma_min2": _entry(_ratio(a**4 * vinf**4, math.sqrt(n) * smin**2),
                                                         "vanishing"),
            "sigma_min2_n": _entry(smin**2 * n, "diverging"),
        },
    }
    report = DiagnosticsReport(a, smin, ratios)
    if x is not None:
        y = x if y is None else y
        report.lyapunov_ratio = lyapunov_check(x, y, noise)
        if mc_draws > 0:
            report.w2_ratios = w2clt_check(x, y, noise, mc_draws, seed)
    return report


def lyapunov_check(x, y, noise: NoiseProfile) -> dict:
    """||x||_inf ||y||_inf / sd(x^T W y); should vanish."""
    x = check_unit(as_vector(x, noise.n, "x"), "x")
    y = check_unit(as_vector(y, noise.n, "y"), "y")
    s2 = _bilinear_variance(x, y, noise.sigma2)
    if not s2 > 0:
        raise ValueError("zero s_n: var(x^T W y) = 0")
    s = math.sqrt(s2)
    return {"ratio": _entry(np.abs(x).max() * np.abs(y).max() / s, "vanishing"), "s_n": s}


def w2clt_check(x, y, noise: NoiseProfile, mc_draws: int = 500, seed=0) -> dict:
    """kappa^{1/4} / s (should vanish), s (should diverge) and the dense-model triple."""
    x = check_unit(as_vector(x, noise.n, "x"), "x")
    y = check_unit(as_vector(y, noise.n, "y"), "y")
    s2 = s2_xy(x, y, noise)
    if not s2 > 0:
        raise ValueError("zero s_n: the second-order variance vanishes")
    s = math.sqrt(s2)
    kap = kappa_xy(x, y, noise, mc_draws, seed)
    smin = sigma_min(noise)
    a = alpha_n(noise)
    xy = float(np.abs(x).max() * np.abs(y).max())
    n = noise.n
    return {
        "kappa_quarter_over_s": _entry(kap**0.25 / s, "vanishing"),
        "s": _entry(s, "diverging"),
        "sup_product": _entry(xy, "vanishing"),
        "alpha4_sup2_over_sqrtn_sigma_min2": _entry(_ratio(a**4 * xy**2, math.sqrt(n) * smin**2), "vanishing"),
        "sigma_min2_n": _entry(smin**2 * n, "diverging"),
        "kappa": kap,
        "s2": s2,
    }


def spectral_norm_check(noise: NoiseProfile, draws: int = 200, seed=0, C: float = 4.0) -> dict:
    """max over draws of ||W||_2 / (sqrt(log n) alpha_n), compared with C."""
    a = alpha_n(noise)
    n = noise.n
    norms = []
    for ss in child_seeds(seed, draws, tag=17):
        W = sample_noise(noise, ss)
        ev = np.linalg.eigvalsh(W)
        norms.append(max(abs(ev[0]), abs(ev[-1])))
    scale = math.sqrt(math.log(n)) * a
    worst = _ratio(max(norms), scale)
    return {"max_norm": float(max(norms)), "scale": scale, "max_ratio": worst, "C": C,
            "holds": bool(worst <= C)}
