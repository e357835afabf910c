"""Tests on observed networks, with estimated plug-ins in place of t_k and E W^l.

The subgraph and cluster tests replace t_k by lambda_k and the population
moments by those of a constant-p Bernoulli noise at the estimated density.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from ._validation import check_symmetric
from .moments import homogeneous_projections, quadratic_variance_homogeneous
from .spectral import spiked_eigs

ALPHAS = (0.01, 0.05, 0.1)


@dataclass
class TestResult:
    name: str
    statistic: float
    p_value: float
    alternative: str
    decision_at: dict = field(default_factory=dict)
    nuisance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "alternative": self.alternative,
            "decision_at": {str(a): r for a, r in self.decision_at.items()},
            "nuisance": self.nuisance,
        }

    def csv_row(self) -> str:
        return "%s,%r,%r,%s" % (self.name, self.statistic, self.p_value, self.alternative)


def _result(name, stat, alternative, nuisance, alphas=ALPHAS):
    if alternative == "less":
        p = float(norm.cdf(stat))
    else:
        p = float(min(1.0, 2 * norm.sf(abs(stat))))
    return TestResult(name, float(stat), p, alternative, {a: bool(p < a) for a in alphas}, nuisance)


def _matrix(X, self_loops):
    loops = getattr(X, "self_loops", None)
    A = np.asarray(getattr(X, "X", X), dtype=float)
    check_symmetric(A, "X", tol=1e-10 * max(1.0, np.abs(A).max(initial=0.0)))
    if self_loops is None:
        self_loops = loops if loops is not None else bool(np.any(np.diag(A) != 0))
    return A, bool(self_loops)


def edge_density(X, self_loops: bool) -> float:
    """Mean of x_ij over i <= j (self loops) or i < j (no self loops)."""
    n = X.shape[0]
    if self_loops:
        return float(np.triu(X).sum() / (n * (n + 1) / 2))
    return float(np.triu(X, 1).sum() / (n * (n - 1) / 2))


def _homogeneous_self_parts(p, n, t, self_loops):
    """A_v P~^1/2 at t and sd(v^T W^2 v) for v = 1/sqrt(n), constant-p noise."""
    m = homogeneous_projections(p, n, self_loops)
    terms = {l: m[l] for l in m if l != 1}
    A_over_t = -sum(c / t ** (l + 1) for l, c in terms.items())
    deriv = sum((l + 1) * c / t ** (l + 2) for l, c in terms.items())
    p_tilde = 1.0 / (t * t * deriv)
    if not p_tilde > 0:
        raise ValueError("flat objective at the plug-in eigenvalue")
    var = quadratic_variance_homogeneous(p, n, self_loops)
    return t * A_over_t * math.sqrt(p_tilde), var, m[2]


def dense_subgraph_test(X, self_loops: bool | None = None) -> TestResult:
    """Left-tailed test of H0: E X = p 1 1^T against a denser planted block.

    T = 2 lambda_1^2 (1^T vhat_1 / sqrt(n) + A P~^1/2) / sd(v^T W^2 v), with every
    population quantity evaluated at lambda_1 and the estimated density.
    """
    A, loops = _matrix(X, self_loops)
    n = A.shape[0]
    p = edge_density(A, loops)
    if p <= 0 or p >= 1:
        raise ValueError("degenerate graph: estimated density %.3g" % p)
    ones = np.full(n, 1 / math.sqrt(n))
    pair = spiked_eigs(A, 1, reference=ones[:, None])[0]
    ap, var, mean2 = _homogeneous_self_parts(p, n, pair.lam, loops)
    if not var > 0:
        raise ValueError("degenerate denominator")
    stat = 2 * pair.lam**2 * (ones @ pair.vhat + ap) / math.sqrt(var)
    leading = (2 * pair.lam**2 * (ones @ pair.vhat - 1) + mean2) / math.sqrt(var)
    return _result("subgraph", stat, "less", {
        "p_hat": p, "lambda_1": pair.lam, "overlap": float(ones @ pair.vhat),
        "variance": var, "leading_order_statistic": float(leading), "self_loops": loops,
    })


def cluster_power_test(X, K: int, k: int, self_loops: bool | None = None) -> TestResult:
    """Two-sided test of H0: v_k = 1/sqrt(n) with the self-overlap statistic."""
    A, loops = _matrix(X, self_loops)
    n = A.shape[0]
    if not 1 <= k <= K:
        raise ValueError("k must lie in 1..K")
    p = edge_density(A, loops)
    if p <= 0 or p >= 1:
        raise ValueError("degenerate variance: estimated density %.3g" % p)
    ones = np.full(n, 1 / math.sqrt(n))
    pairs = spiked_eigs(A, K)
    pair = pairs[k - 1]
    overlap = abs(ones @ pair.vhat)
    ap, var, _ = _homogeneous_self_parts(p, n, pair.lam, loops)
    if not var > 0:
        raise ValueError("degenerate variance")
    stat = 2 * pair.lam**2 * (overlap + ap) / math.sqrt(var)
    return _result("cluster-power", stat, "two-sided", {
        "p_hat": p, "lambda_k": pair.lam, "overlap": float(overlap), "variance": var, "k": k, "K": K,
    })


def _rank_stat(lam, Q, A, K0):
    fitted_diag = (Q[:, :K0] ** 2) @ lam[:K0]
    w = np.diag(A) - fitted_diag
    ss = float(np.sum(w * w))
    if ss <= 1e-20 * max(1.0, float(np.sum(np.diag(A) ** 2))):
        raise ValueError("zero residual diagonal")
    return float(w.sum() / math.sqrt(ss))


def _eig_by_magnitude(A):
    lam, Q = np.linalg.eigh(A)
    order = np.lexsort((-lam, -np.abs(lam)))
    return lam[order], Q[:, order]


def rank_test(X, K0: int) -> TestResult:
    """Two-sided test of rank K0 from the diagonal residuals of the rank-K0 fit."""
    A, loops = _matrix(X, None)
    n = A.shape[0]
    if not 1 <= K0 < n:
        raise ValueError("K0 must lie in 1..n-1")
    if not loops:
        raise ValueError("the rank test needs data with self loops")
    lam, Q = _eig_by_magnitude(A)
    stat = _rank_stat(lam, Q, A, K0)
    return _result("rank", stat, "two-sided", {"K0": K0, "eigenvalues": lam[:K0].tolist()})


def rank_confidence_set(X, K_max: int, alpha: float = 0.05, quantile: str = "one-sided") -> dict:
    """All K0 in 1..K_max with |T(K0)| <= z.

    ``quantile="one-sided"`` uses z = Phi^-1(1 - alpha), whose two-sided band
    has coverage 1 - 2 alpha under exact normality; ``"two-sided"`` uses
    Phi^-1(1 - alpha/2) for coverage 1 - alpha.
    """
    A, loops = _matrix(X, None)
    n = A.shape[0]
    if not 1 <= K_max < n:
        raise ValueError("K_max must lie in 1..n-1")
    if not loops:
        raise ValueError("the rank test needs data with self loops")
    if quantile == "one-sided":
        z, level = norm.ppf(1 - alpha), 1 - 2 * alpha
    elif quantile == "two-sided":
        z, level = norm.ppf(1 - alpha / 2), 1 - alpha
    else:
        raise ValueError("quantile must be one-sided or two-sided")
    lam, Q = _eig_by_magnitude(A)
    stats = {}
    for K0 in range(1, K_max + 1):
        stats[K0] = _rank_stat(lam, Q, A, K0)
    members = [K0 for K0, s in stats.items() if abs(s) <= z]
    return {"set": members, "statistics": stats, "z": float(z), "nominal_level": level, "quantile": quantile}
