"""Independent reference computations used by the tests.

Nothing here imports the package's moment or ATE code: the enumeration
oracle lists every Bernoulli outcome of a tiny matrix, the walk oracle
evaluates matrix powers term by term, and the AD oracle is Marsaglia's
series for the asymptotic case-0 distribution.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def bernoulli_outcomes(P, self_loops=True):
    """Yield (W, prob) over all upper-triangle outcomes of centred Bernoulli(P).

    Without self loops the diagonal of W is the constant -P_ii, matching
    X = H + W with a zero data diagonal.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    cells = [(i, j) for i in range(n) for j in range(i, n) if self_loops or i != j]
    for bits in itertools.product((0, 1), repeat=len(cells)):
        X = np.zeros((n, n))
        prob = 1.0
        for (i, j), b in zip(cells, bits):
            X[i, j] = X[j, i] = b
            prob *= P[i, j] if b else 1 - P[i, j]
        if prob == 0:
            continue
        W = X - P
        if not self_loops:
            np.fill_diagonal(W, -np.diag(P))
        yield W, prob


def expectation(P, functional, self_loops=True):
    return sum(prob * functional(W) for W, prob in bernoulli_outcomes(P, self_loops))


def variance(P, functional, self_loops=True):
    m = expectation(P, functional, self_loops)
    return expectation(P, lambda W: (functional(W) - m) ** 2, self_loops)


def matrix_power_termwise(W, l):
    """W^l by explicit index sums, no matmul."""
    n = W.shape[0]
    out = np.eye(n)
    for _ in range(l):
        nxt = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                s = 0.0
                for m in range(n):
                    s += out[i, m] * W[m, j]
                nxt[i, j] = s
        out = nxt
    return out


def conditional_variance_enumerated(P, x, y, self_loops=True):
    """E sum_e var(E[F | first e entries] - E[F | first e-1 entries] | past) by brute force.

    F = x^T W^2 y, entries revealed column by column of the upper triangle.
    Each conditional expectation is computed by summing over all outcomes
    of the unrevealed entries.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    cells = [(i, j) for j in range(n) for i in range(j + 1) if self_loops or i != j]
    m = len(cells)

    def build(bits):
        X = np.zeros((n, n))
        for (i, j), b in zip(cells, bits):
            X[i, j] = X[j, i] = b
        W = X - P
        if not self_loops:
            np.fill_diagonal(W, -np.diag(P))
        return W

    def prob(bits, start):
        p = 1.0
        for (i, j), b in zip(cells[start:], bits[start:]):
            p *= P[i, j] if b else 1 - P[i, j]
        return p

    def cond_mean(prefix):
        k = len(prefix)
        total = 0.0
        for rest in itertools.product((0, 1), repeat=m - k):
            bits = tuple(prefix) + rest
            W = build(bits)
            total += prob(bits, k) * float(x @ W @ W @ y)
        return total

    out = 0.0
    for e in range(m):
        for prefix in itertools.product((0, 1), repeat=e):
            pp = 1.0
            for (i, j), b in zip(cells[:e], prefix):
                pp *= P[i, j] if b else 1 - P[i, j]
            base = cond_mean(prefix)
            pe = P[cells[e]]
            v = pe * (cond_mean(prefix + (1,)) - base) ** 2 + (1 - pe) * (cond_mean(prefix + (0,)) - base) ** 2
            out += pp * v
    return out


def ad_asymptotic_cdf(z):
    """P(A^2 <= z) for the case-0 limit distribution (Marsaglia and Marsaglia 2004)."""
    if z <= 0:
        return 0.0
    if z < 2:
        return math.exp(-1.2337141 / z) / math.sqrt(z) * (
            2.00012 + (0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * z) * z) * z) * z) * z
        )
    return math.exp(
        -math.exp(1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z) * z) * z) * z) * z)
    )


def fd(f, t, h):
    return (f(t + h) - f(t - h)) / (2 * h)
