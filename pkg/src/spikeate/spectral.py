"""Spiked eigenpairs of an observed matrix."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._validation import check_symmetric


class AmbiguousSpikeWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class SpikedEigenPair:
    k: int
    lam: float
    vhat: np.ndarray

    @property
    def lambda_(self) -> float:
        return self.lam


def align_sign(vhat, reference=None):
    """Flip vhat so that reference^T vhat >= 0, or its first nonzero entry > 0."""
    vhat = np.asarray(vhat, dtype=float)
    if reference is not None:
        s = float(np.dot(reference, vhat))
        if s < 0:
            return -vhat
        if s > 0:
            return vhat
    nz = np.flatnonzero(np.abs(vhat) > 1e-12 * np.abs(vhat).max(initial=0.0))
    if nz.size and vhat[nz[0]] < 0:
        return -vhat
    return vhat


def spiked_eigs(X, K: int, reference=None) -> list:
    """The K eigenpairs of largest |lambda|, ordered by decreasing magnitude.

    At equal magnitude the algebraically larger eigenvalue comes first.
    ``X`` may be a SampleMatrix or a plain array; ``reference`` is a model
    whose columns V fix the eigenvector signs.
    """
    X = getattr(X, "X", X)
    X = check_symmetric(np.asarray(X, dtype=float), "X", tol=1e-10 * max(1.0, np.abs(X).max()))
    n = X.shape[0]
    if not 1 <= K <= n:
        raise ValueError("K must lie in 1..%d" % n)
    lam, Q = np.linalg.eigh(X)
    order = np.lexsort((-lam, -np.abs(lam)))
    lam, Q = lam[order], Q[:, order]
    if K < n and abs(abs(lam[K - 1]) - abs(lam[K])) <= 1e-12 * max(1.0, abs(lam[K - 1])):
        warnings.warn("ambiguous spike boundary: |lambda_K| = |lambda_K+1|", AmbiguousSpikeWarning,
                      stacklevel=2)
    V = getattr(reference, "V", reference)
    pairs = []
    for j in range(K):
        ref = None if V is None else np.asarray(V)[:, j]
        pairs.append(SpikedEigenPair(j + 1, float(lam[j]), align_sign(Q[:, j], ref)))
    return pairs
