"""Small input checks shared by the public functions."""
from __future__ import annotations

import numpy as np


def check_square(A, name="matrix"):
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("%s must be square, got shape %s" % (name, A.shape))
    if not np.all(np.isfinite(A)):
        raise ValueError("%s has non-finite entries" % name)
    return A


def check_symmetric(A, name="matrix", tol=0.0):
    A = check_square(A, name)
    if np.abs(A - A.T).max(initial=0.0) > tol:
        raise ValueError("%s must be symmetric" % name)
    return A


def check_unit(x, name="vector", tol=1e-8):
    x = np.asarray(x, dtype=float).reshape(-1)
    norm = np.linalg.norm(x)
    if abs(norm - 1.0) > tol:
        raise ValueError("%s must have unit norm (got %.6g)" % (name, norm))
    return x


def as_vector(x, n, name="vector"):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (n,):
        raise ValueError("%s must have length %d" % (name, n))
    return x


def as_seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if seed is None:
        raise ValueError("an explicit seed is required")
    if isinstance(seed, (list, tuple)):
        return np.random.SeedSequence([int(s) for s in seed])
    return np.random.SeedSequence(int(seed))


def child_seeds(seed, count, tag=0):
    """Deterministic per-draw seeds derived from a base seed and a stream tag."""
    base = as_seed_sequence(seed).entropy
    return [np.random.SeedSequence(base, spawn_key=(tag, i)) for i in range(count)]
