"""Moment matrices E W^l, the noise scale alpha_n and variance functionals.

Everything here is exact for l <= 2. E W^3 and E W^4 are Monte Carlo
averages over independent noise copies, with entrywise standard errors.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import as_vector, check_unit, child_seeds
from .model import NoiseProfile, read_matrix, sample_noise, write_matrix

DEFAULT_L = 4
DEFAULT_DRAWS = 2000


@dataclass(eq=False)
class MomentTable:
    """E W^l for l = 0..L together with alpha_n and how each entry was obtained."""

    L: int
    EW: list
    alpha_n: float
    methods: list
    stderr: dict = field(default_factory=dict)
    draws: int = 0
    seed: int | None = None

    @property
    def n(self) -> int:
        return self.EW[0].shape[0]

    def orders(self):
        """The powers that enter the R function: 0 and 2..L."""
        return [l for l in range(self.L + 1) if l != 1]

    def project(self, M1, M2=None) -> dict:
        """{l: M1^T E W^l M2} for the orders used by the R function."""
        M1 = np.asarray(M1, dtype=float)
        M2 = M1 if M2 is None else np.asarray(M2, dtype=float)
        return {l: M1.T @ (self.EW[l] @ M2) for l in self.orders()}

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for l, E in enumerate(self.EW):
            write_matrix(directory / ("EW%d.bin" % l), E)
        manifest = {
            "L": self.L,
            "alpha_n": self.alpha_n,
            "methods": self.methods,
            "draws": self.draws,
            "seed": self.seed,
            "files": ["EW%d.bin" % l for l in range(self.L + 1)],
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))

    @classmethod
    def load(cls, directory) -> "MomentTable":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        EW = [read_matrix(directory / f) for f in manifest["files"]]
        return cls(manifest["L"], EW, manifest["alpha_n"], manifest["methods"],
                   draws=manifest["draws"], seed=manifest["seed"])


def second_moment_rows(noise: NoiseProfile) -> np.ndarray:
    """Diagonal of E(W - E W)^2, i.e. sum_k sigma^2_ik."""
    return noise.sigma2.sum(axis=1)


def alpha_n(noise: NoiseProfile) -> float:
    """||E(W - E W)^2||^{1/2}; the matrix is diagonal so this is a max row sum."""
    return float(np.sqrt(second_moment_rows(noise).max(initial=0.0)))


def exact_power(noise: NoiseProfile, l: int) -> np.ndarray:
    n = noise.n
    mu = noise.diag_mean
    if l == 0:
        return np.eye(n)
    if l == 1:
        return np.diag(mu)
    if l == 2:
        return np.diag(second_moment_rows(noise) + mu**2)
    raise ValueError("no closed form for l=%d" % l)


def _mc_powers(noise: NoiseProfile, orders, draws: int, seed):
    """Average of W^l over independent copies, with entrywise standard errors."""
    if not noise.can_sample:
        raise ValueError("Monte Carlo moments need a samplable noise family")
    n = noise.n
    top = max(orders)
    total = {l: np.zeros((n, n)) for l in orders}
    total_sq = {l: np.zeros((n, n)) for l in orders}
    for ss in child_seeds(seed, draws, tag=3):
        W = sample_noise(noise, ss)
        W2 = W @ W
        powers = {2: W2}
        if top >= 3:
            powers[3] = W2 @ W
        if top >= 4:
            powers[4] = W2 @ W2
        for l in orders:
            P = powers[l]
            total[l] += P
            total_sq[l] += P * P
    means, errs = {}, {}
    for l in orders:
        m = total[l] / draws
        var = np.maximum(total_sq[l] / draws - m * m, 0.0) * draws / max(draws - 1, 1)
        means[l] = (m + m.T) / 2
        errs[l] = np.sqrt(var / draws)
    return means, errs


def expected_power(noise: NoiseProfile, l: int, mc_draws: int = DEFAULT_DRAWS, seed=0,
                   L: int = DEFAULT_L) -> np.ndarray:
    """E W^l: closed form for l <= 2, Monte Carlo for l = 3, 4."""
    if l > L or l > 4:
        raise ValueError("beyond truncation order: l=%d > L=%d" % (l, min(L, 4)))
    if l < 0:
        raise ValueError("l must be nonnegative")
    if l <= 2:
        return exact_power(noise, l)
    if not np.any(noise.sigma2) and not np.any(noise.diag_mean):
        return np.zeros((noise.n, noise.n))
    means, _ = _mc_powers(noise, [l], mc_draws, seed)
    return means[l]


def moment_table(noise: NoiseProfile, L: int = DEFAULT_L, mc_draws: int = DEFAULT_DRAWS,
                 seed=0) -> MomentTable:
    if not 0 <= L <= 4:
        raise ValueError("beyond truncation order: L must lie in 0..4")
    EW = [exact_power(noise, l) for l in range(min(L, 2) + 1)]
    methods = ["exact"] * len(EW)
    stderr = {}
    mc_orders = list(range(3, L + 1))
    if mc_orders:
        if not np.any(noise.sigma2) and not np.any(noise.diag_mean):
            for _ in mc_orders:
                EW.append(np.zeros((noise.n, noise.n)))
                methods.append("exact")
        else:
            means, errs = _mc_powers(noise, mc_orders, mc_draws, seed)
            for l in mc_orders:
                EW.append(means[l])
                methods.append("monte-carlo")
                stderr[l] = errs[l]
    return MomentTable(L, EW, alpha_n(noise), methods, stderr,
                       draws=mc_draws if mc_orders else 0, seed=seed)


def zero_moment_table(n: int, L: int = DEFAULT_L) -> MomentTable:
    """Table with E W^0 = I and every higher moment zero."""
    EW = [np.eye(n)] + [np.zeros((n, n)) for _ in range(L)]
    return MomentTable(L, EW, 0.0, ["exact"] * (L + 1))


def homogeneous_projections(p: float, n: int, self_loops: bool = True, L: int = DEFAULT_L) -> dict:
    """{l: v^T E W^l v} for constant-p Bernoulli noise and v = 1/sqrt(n).

    Counts closed walks in which every edge is used at least twice. With self
    loops, 1^T E W^3 1 = n^2 gamma and 1^T E W^4 1 = n^2 mu4 + 2n^2(n-1) sigma^4.
    Without self loops the diagonal is the constant -p and the powers follow
    from the binomial expansion of (W0 - pI)^l.
    """
    s2 = p * (1 - p)
    g3 = s2 * (1 - 2 * p)
    mu4 = s2 * (p**3 + (1 - p) ** 3)
    if self_loops:
        walks = {0: 1.0, 1: 0.0, 2: n * s2, 3: n * g3, 4: n * mu4 + 2 * n * (n - 1) * s2**2}
    else:
        base = {
            0: 1.0,
            1: 0.0,
            2: (n - 1) * s2,
            3: (n - 1) * g3,
            4: (n - 1) * mu4 + 2 * (n - 1) * (n - 2) * s2**2,
        }
        walks = {}
        for l in range(5):
            walks[l] = sum(_binom(l, j) * (-p) ** (l - j) * base[j] for j in range(l + 1))
    return {l: walks[l] for l in range(L + 1)}


def _binom(a, b):
    from math import comb

    return comb(a, b)


def _bilinear_variance(x, y, S):
    """var(x^T W y) for independent entries with variance matrix S (diag = var w_ii)."""
    x2, y2, xy = x * x, y * y, x * y
    return float(x2 @ S @ y2 + xy @ S @ xy - np.sum(np.diag(S) * xy * xy))


def bilinear_variance(x, y, noise: NoiseProfile) -> float:
    """Exact var(x^T W y) = sum_{i<j} s_ij (x_i y_j + x_j y_i)^2 + sum_i var(w_ii) x_i^2 y_i^2."""
    x = check_unit(as_vector(x, noise.n, "x"), "x")
    y = check_unit(as_vector(y, noise.n, "y"), "y")
    return _bilinear_variance(x, y, noise.sigma2)


def bilinear_mean(x, y, noise: NoiseProfile) -> float:
    """E x^T W y; only the diagonal can carry a mean."""
    return float(np.sum(noise.diag_mean * x * y))


def quadratic_form_mean(v, noise: NoiseProfile) -> float:
    """v^T E W^2 v."""
    v = as_vector(v, noise.n, "v")
    return float(v @ (np.diag(exact_power(noise, 2)) * v))


def _edge_coefficients(x, y, mu):
    """Per-entry coefficients of x^T W^2 y in the centred noise.

    Returns (c, g): c_e multiplies (w_e^2 - sigma_e^2) and g_e multiplies w_e
    through the deterministic diagonal. Indexed as upper-triangular matrices.
    """
    xy = x * y
    c = xy[:, None] + xy[None, :]
    np.fill_diagonal(c, xy)
    g = (mu[:, None] + mu[None, :]) * (np.outer(x, y) + np.outer(y, x))
    np.fill_diagonal(g, 2 * mu * xy)
    return c, g


def _upper(A):
    return A[np.triu_indices(A.shape[0])]


def quadratic_variance_exact(x, y, noise: NoiseProfile) -> float:
    """Exact var(x^T W^2 y) for independent entries, O(n^2).

    Pairs of distinct entries sharing a node j contribute through the
    other endpoints; single entries contribute through kappa, gamma and
    the deterministic diagonal.
    """
    S, G3, K4 = noise.sigma2, noise.gamma3, noise.kappa4
    c, g = _edge_coefficients(x, y, noise.diag_mean)
    single = _upper(S * g * g + 2 * G3 * c * g + K4 * c * c).sum()
    x2, y2, xy = x * x, y * y, x * y
    Sx2, Sy2, Sxy = S @ x2, S @ y2, S @ xy
    pairs = 0.5 * np.sum(2 * Sx2 * Sy2 + 2 * Sxy**2 - 4 * ((S * S) @ (xy * xy)))
    return float(single + pairs)


def quadratic_variance_homogeneous(p: float, n: int, self_loops: bool = True) -> float:
    """var(v^T W^2 v) for constant-p Bernoulli noise and v = 1/sqrt(n)."""
    s2 = p * (1 - p)
    g3 = s2 * (1 - 2 * p)
    k4 = s2 * (p**3 + (1 - p) ** 3) - s2**2
    if self_loops:
        return 2 * (n - 1) * s2**2 + (2 * n - 1) / n * k4
    return (2 * (n - 1) * (n - 2) / n * s2**2
            + 2 * (n - 1) / n * (4 * p * p * s2 - 4 * p * g3 + k4))


def quadratic_form_variance(v, noise: NoiseProfile, mode: str = "exact",
                            mc_draws: int = 20000, seed=0) -> float:
    """var(v^T W^2 v).

    ``mode``: "exact" (any profile), "homogeneous-exact" (constant-p Bernoulli
    with v = 1/sqrt(n)) or "monte-carlo".
    """
    v = as_vector(v, noise.n, "v")
    if mode == "exact":
        return quadratic_variance_exact(v, v, noise)
    if mode == "homogeneous-exact":
        p = noise.homogeneous_p()
        if p is None:
            raise ValueError("homogeneous-exact needs a constant-p Bernoulli profile")
        if not np.allclose(np.abs(v), 1 / np.sqrt(noise.n), atol=1e-12):
            raise ValueError("homogeneous-exact needs v = 1/sqrt(n)")
        return quadratic_variance_homogeneous(p, noise.n, noise.self_loops)
    if mode == "monte-carlo":
        value, _ = mc_variance(lambda W: _quad(W, v, v), noise, mc_draws, seed)
        return value
    raise ValueError("unknown variance mode %r" % mode)


def _quad(W, x, y):
    return float((W @ x) @ (W @ y))


def mc_variance(functional, noise: NoiseProfile, draws: int, seed, tag: int = 5):
    """Sample variance of functional(W) over independent copies, and its standard error."""
    vals = np.array([functional(sample_noise(noise, ss)) for ss in child_seeds(seed, draws, tag)])
    var = float(np.var(vals, ddof=1))
    m4 = float(np.mean((vals - vals.mean()) ** 4))
    se = float(np.sqrt(max(m4 - var**2, 0.0) / draws))
    return var, se


def _exclusive_cumsum(A):
    """C[r, c] = sum_{l < c} A[r, l]."""
    C = np.cumsum(A, axis=1)
    C = np.roll(C, 1, axis=1)
    C[:, 0] = 0.0
    return C


def conditional_variance(x, y, noise: NoiseProfile, W) -> float:
    """Sum of conditional variances of the martingale differences of x^T W^2 y.

    Entries are revealed column by column of the upper triangle,
    (1,1), (1,2), (2,2), (1,3), ... For the entry e = (k, i), k <= i, the
    difference is c_e (w_e^2 - sigma_e^2) + w_e B_e with B_e built from the
    entries already revealed, so its conditional variance is
    sigma_e^2 B_e^2 + 2 gamma_e c_e B_e + kappa_e c_e^2.
    """
    x = as_vector(x, noise.n, "x")
    y = as_vector(y, noise.n, "y")
    Wt = np.asarray(W, dtype=float) - np.diag(noise.diag_mean)
    if not noise.self_loops:
        np.fill_diagonal(Wt, 0.0)
    c, g = _edge_coefficients(x, y, noise.diag_mean)
    Cx = _exclusive_cumsum(Wt * x[None, :])
    Cy = _exclusive_cumsum(Wt * y[None, :])
    # entries at node i with other endpoint l < k
    T1 = x[:, None] * Cy.T + y[:, None] * Cx.T
    # entries at node k with other endpoint m < i (only when k < i)
    T2 = x[None, :] * Cy + y[None, :] * Cx
    B = g + T1 + np.triu(T2, 1)
    terms = noise.sigma2 * B * B + 2 * noise.gamma3 * c * B + noise.kappa4 * c * c
    return float(_upper(terms).sum())


def s2_xy(x, y, noise: NoiseProfile) -> float:
    """Mean of the conditional-variance sum, from profile moments."""
    x = check_unit(as_vector(x, noise.n, "x"), "x")
    y = check_unit(as_vector(y, noise.n, "y"), "y")
    S = noise.sigma2
    c, g = _edge_coefficients(x, y, noise.diag_mean)
    Sx2 = _exclusive_cumsum(S * (x * x)[None, :])
    Sy2 = _exclusive_cumsum(S * (y * y)[None, :])
    Sxy = _exclusive_cumsum(S * (x * y)[None, :])
    # E B_e^2 - g_e^2, split the same way as in conditional_variance
    V1 = (x * x)[:, None] * Sy2.T + (y * y)[:, None] * Sx2.T + 2 * (x * y)[:, None] * Sxy.T
    V2 = (x * x)[None, :] * Sy2 + (y * y)[None, :] * Sx2 + 2 * (x * y)[None, :] * Sxy
    EB2 = g * g + V1 + np.triu(V2, 1)
    terms = S * EB2 + 2 * noise.gamma3 * c * g + noise.kappa4 * c * c
    return float(_upper(terms).sum())


def kappa_xy(x, y, noise: NoiseProfile, mc_draws: int = DEFAULT_DRAWS, seed=0) -> float:
    """Variance of the conditional-variance sum over independent noise copies."""
    x = check_unit(as_vector(x, noise.n, "x"), "x")
    y = check_unit(as_vector(y, noise.n, "y"), "y")
    if not np.any(noise.sigma2):
        return 0.0
    vals = [conditional_variance(x, y, noise, sample_noise(noise, ss))
            for ss in child_seeds(seed, mc_draws, tag=7)]
    return float(np.var(vals, ddof=1))
