"""Spiked mean models, noise profiles and samplers for X = H + W.

H = V diag(D) V^T is a deterministic rank-K mean and W a symmetric matrix of
independent bounded noises. When the data matrix drops its diagonal
(``self_loops=False``) the diagonal of W is the constant -H_ii, so that
X = H + W still holds with diag(X) = 0.
"""
from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import as_seed_sequence, check_square, check_symmetric

FAMILIES = ("bernoulli", "two-point", "moments")


class DegenerateSpikeWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class SpikedMeanModel:
    """Low-rank mean H = V diag(D) V^T with |d_1| >= ... >= |d_K| > 0."""

    V: np.ndarray
    D: np.ndarray
    spec: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.V, dtype=float))
        D = np.atleast_1d(np.asarray(self.D, dtype=float))
        if V.shape[1] != D.shape[0]:
            raise ValueError("V has %d columns but D has %d entries" % (V.shape[1], D.shape[0]))
        if np.any(D == 0):
            raise ValueError("spiked eigenvalues must be nonzero")
        if np.any(np.diff(np.abs(D)) > 1e-12 * np.abs(D).max()):
            raise ValueError("D must be ordered by decreasing magnitude")
        gram = V.T @ V
        if np.abs(gram - np.eye(V.shape[1])).max() > 1e-10:
            raise ValueError("columns of V are not orthonormal")
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "D", D)

    @property
    def n(self) -> int:
        return self.V.shape[0]

    @property
    def K(self) -> int:
        return self.V.shape[1]

    def v(self, k: int) -> np.ndarray:
        """Population eigenvector v_k, with k counted from 1."""
        return self.V[:, _index(k, self.K)]

    def d(self, k: int) -> float:
        return float(self.D[_index(k, self.K)])

    def mean_matrix(self) -> np.ndarray:
        return (self.V * self.D) @ self.V.T


@dataclass(frozen=True, eq=False)
class NoiseProfile:
    """Entrywise moments of W and how to sample it.

    ``sigma2[i, i]`` is var(w_ii); ``gamma3`` holds third central moments and
    ``kappa4`` holds E(w^2 - sigma^2)^2. ``diag_mean`` is E w_ii, which is
    nonzero only for data without self loops.
    """

    sigma2: np.ndarray
    gamma3: np.ndarray
    kappa4: np.ndarray
    diag_mean: np.ndarray
    family: str = "moments"
    params: dict = field(default_factory=dict, repr=False)
    self_loops: bool = True

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError("unknown noise family %r" % self.family)
        arrays = {}
        for name in ("sigma2", "gamma3", "kappa4"):
            a = np.asarray(getattr(self, name), dtype=float)
            check_square(a, name)
            if not np.array_equal(a, a.T):
                raise ValueError("%s must be symmetric" % name)
            arrays[name] = a
        n = arrays["sigma2"].shape[0]
        mu = np.asarray(self.diag_mean, dtype=float).reshape(-1)
        if mu.shape != (n,):
            raise ValueError("diag_mean must have length %d" % n)
        if np.any(arrays["sigma2"] < 0) or np.any(arrays["kappa4"] < -1e-15):
            raise ValueError("variances and fourth central moments must be nonnegative")
        if self.self_loops and np.any(mu != 0):
            raise ValueError("a nonzero diagonal mean requires self_loops=False")
        for name, a in arrays.items():
            object.__setattr__(self, name, a)
        object.__setattr__(self, "diag_mean", mu)

    @property
    def n(self) -> int:
        return self.sigma2.shape[0]

    @property
    def can_sample(self) -> bool:
        return self.family in ("bernoulli", "two-point")

    def homogeneous_p(self) -> float | None:
        """The common edge probability of a constant-p Bernoulli profile, else None."""
        if self.family != "bernoulli":
            return None
        P = self.params["P"]
        off = P[~np.eye(self.n, dtype=bool)]
        p = float(off[0]) if off.size else float(P[0, 0])
        if not np.all(off == p):
            return None
        if self.self_loops and not np.all(np.diag(P) == p):
            return None
        return p


def _index(k: int, K: int) -> int:
    if not 1 <= k <= K:
        raise ValueError("spike index k=%d outside 1..%d" % (k, K))
    return k - 1


def _order_spectrum(d, Q):
    # decreasing magnitude; at equal magnitude the algebraically larger first
    order = np.lexsort((-d, -np.abs(d)))
    d, Q = d[order], Q[:, order]
    for j in range(Q.shape[1]):
        col = Q[:, j]
        big = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())
        if col[big[0]] < 0:
            Q[:, j] = -col
    return d, Q


def _warn_degenerate(d):
    mags = np.abs(d)
    for i in range(len(d) - 1):
        if mags[i] - mags[i + 1] <= 1e-12 * mags[i]:
            warnings.warn(
                "spikes %d and %d have equal magnitude %.6g; the gap condition fails"
                % (i + 1, i + 2, mags[i]),
                DegenerateSpikeWarning,
                stacklevel=3,
            )


def bernoulli_profile(P, self_loops: bool = True) -> NoiseProfile:
    """Centered Bernoulli noise with edge probabilities P (symmetric, in [0, 1])."""
    P = np.asarray(P, dtype=float)
    check_symmetric(P, "P")
    if P.min() < 0 or P.max() > 1:
        raise ValueError("invalid probability: entries must lie in [0, 1]")
    s2 = P * (1 - P)
    g3 = s2 * (1 - 2 * P)
    k4 = s2 * (P**3 + (1 - P) ** 3) - s2**2
    mu = np.zeros(P.shape[0])
    if not self_loops:
        for a in (s2, g3, k4):
            np.fill_diagonal(a, 0.0)
        mu = -np.diag(P).copy()
    return NoiseProfile(s2, g3, np.maximum(k4, 0.0), mu, "bernoulli", {"P": P}, self_loops)


def two_point_profile(A, self_loops: bool = True) -> NoiseProfile:
    """Symmetric noise w_ij = +-A_ij with probability 1/2 each, |A_ij| <= 1."""
    A = np.abs(np.asarray(A, dtype=float))
    check_symmetric(A, "A")
    if A.max(initial=0.0) > 1:
        raise ValueError("two-point amplitudes must not exceed 1")
    s2 = A**2
    zero = np.zeros_like(A)
    if not self_loops:
        s2 = s2.copy()
        np.fill_diagonal(s2, 0.0)
    return NoiseProfile(s2, zero, zero.copy(), np.zeros(A.shape[0]), "two-point", {"A": A}, self_loops)


def zero_profile(n: int, self_loops: bool = True) -> NoiseProfile:
    return two_point_profile(np.zeros((n, n)), self_loops)


def _from_mean(H, K, spec):
    lam, Q = np.linalg.eigh(H)
    lam, Q = _order_spectrum(lam, Q)
    scale = max(np.abs(lam).max(), 1.0)
    if np.abs(lam[K - 1]) <= 1e-10 * scale:
        raise ValueError("rank-deficient connectivity: mean matrix has rank < %d" % K)
    d, V = lam[:K].copy(), Q[:, :K].copy()
    _warn_degenerate(d)
    return SpikedMeanModel(V, d, spec)


def build_sbm(community_sizes, P, self_loops: bool = True):
    """Stochastic block model H = Pi P Pi^T with contiguous communities.

    The eigenstructure comes from the reduced K x K problem
    diag(sqrt(s)) P diag(sqrt(s)), which is exact for block-constant means.
    """
    sizes = np.asarray(community_sizes, dtype=int)
    P = np.asarray(P, dtype=float)
    if sizes.ndim != 1 or np.any(sizes <= 0):
        raise ValueError("community sizes must be positive counts")
    K = sizes.size
    if P.shape != (K, K):
        raise ValueError("P must be %d x %d" % (K, K))
    check_symmetric(P, "P")
    if P.min() < 0 or P.max() > 1:
        raise ValueError("invalid probability: entries of P must lie in [0, 1]")
    root = np.sqrt(sizes.astype(float))
    M = root[:, None] * P * root[None, :]
    lam, Q = np.linalg.eigh(M)
    if np.abs(lam).min() <= 1e-12 * max(np.abs(lam).max(), 1e-300):
        raise ValueError("rank-deficient connectivity")
    labels = np.repeat(np.arange(K), sizes)
    V = Q[labels, :] / root[labels][:, None]
    d, V = _order_spectrum(lam, V)
    _warn_degenerate(d)
    spec = {"type": "sbm", "sizes": sizes.tolist(), "P": P.tolist(), "self_loops": bool(self_loops)}
    model = SpikedMeanModel(V, d, spec)
    Pfull = P[labels][:, labels]
    return model, bernoulli_profile(Pfull, self_loops)


def build_dcmm(Theta, Pi, P, self_loops: bool = True):
    """Degree-corrected mixed membership mean Theta Pi P Pi^T Theta."""
    Theta = np.asarray(Theta, dtype=float).reshape(-1)
    Pi = np.atleast_2d(np.asarray(Pi, dtype=float))
    P = np.asarray(P, dtype=float)
    if np.any(Theta <= 0):
        raise ValueError("degree parameters must be positive")
    if Pi.shape[0] != Theta.size or Pi.shape[1] != P.shape[0]:
        raise ValueError("membership matrix has incompatible shape")
    if np.any(Pi < 0) or np.abs(Pi.sum(axis=1) - 1).max() > 1e-10:
        raise ValueError("membership rows must be nonnegative and sum to 1")
    check_symmetric(P, "P")
    B = Theta[:, None] * Pi
    H = B @ P @ B.T
    H = (H + H.T) / 2
    if H.min() < -1e-12 or H.max() > 1 + 1e-12:
        raise ValueError("invalid probability: mean entries must lie in [0, 1]")
    H = np.clip(H, 0.0, 1.0)
    spec = {
        "type": "dcmm",
        "theta": Theta.tolist(),
        "Pi": Pi.tolist(),
        "P": P.tolist(),
        "self_loops": bool(self_loops),
    }
    model = _from_mean(H, P.shape[0], spec)
    return model, bernoulli_profile(H, self_loops)


def build_custom(V, D, noise: NoiseProfile | None = None, self_loops: bool = True):
    """Explicit eigenstructure; Bernoulli noise around H unless a profile is given."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    D = np.asarray(D, dtype=float).reshape(-1)
    d, Q = _order_spectrum(D.copy(), V.copy())
    _warn_degenerate(d)
    spec = {"type": "custom", "V": V.tolist(), "D": D.tolist(), "self_loops": bool(self_loops)}
    model = SpikedMeanModel(Q, d, spec)
    if noise is None:
        noise = bernoulli_profile(model.mean_matrix(), self_loops)
    if noise.n != model.n:
        raise ValueError("noise profile dimension does not match the model")
    return model, noise


def model_from_spec(spec: dict):
    """Build (model, noise) from a JSON-style dict.

    Accepted shapes::

        {"type": "sbm", "sizes": [...], "P": [[...]], "scale": r, "self_loops": true}
        {"type": "dcmm", "theta": [...], "Pi": [[...]], "P": [[...]]}
        {"type": "custom", "V": [[...]], "D": [...], "noise": {"family": "bernoulli" | "two-point" | "zero", "scale": a}}
    """
    kind = spec.get("type")
    loops = bool(spec.get("self_loops", True))
    if kind == "sbm":
        P = np.asarray(spec["P"], dtype=float) * float(spec.get("scale", 1.0))
        model, noise = build_sbm(spec["sizes"], P, loops)
    elif kind == "dcmm":
        model, noise = build_dcmm(spec["theta"], spec["Pi"], spec["P"], loops)
    elif kind == "custom":
        V = np.asarray(spec["V"], dtype=float)
        nspec = spec.get("noise", {"family": "bernoulli"})
        fam = nspec.get("family", "bernoulli")
        n = V.shape[0]
        if fam == "bernoulli":
            noise = None
        elif fam == "two-point":
            noise = two_point_profile(np.full((n, n), float(nspec.get("scale", 1.0))), loops)
        elif fam == "zero":
            noise = zero_profile(n, loops)
        else:
            raise ValueError("unknown noise family %r" % fam)
        model, noise = build_custom(V, spec["D"], noise, loops)
    else:
        raise ValueError("model type must be one of sbm, dcmm, custom; got %r" % kind)
    if "n" in spec and int(spec["n"]) != model.n:
        raise ValueError("declared n=%s but the model has n=%d" % (spec["n"], model.n))
    if spec.get("zero_noise"):
        noise = zero_profile(model.n, loops)
    return model, noise


def model_to_spec(model: SpikedMeanModel) -> dict:
    if model.spec is not None:
        return dict(model.spec, n=model.n)
    return {"type": "custom", "n": model.n, "V": model.V.tolist(), "D": model.D.tolist()}


def _sample_upper(noise: NoiseProfile, rng: np.random.Generator) -> np.ndarray:
    n = noise.n
    if noise.family == "bernoulli":
        B = (rng.random((n, n)) < noise.params["P"]).astype(float)
        W = B - noise.params["P"]
    elif noise.family == "two-point":
        S = rng.integers(0, 2, size=(n, n)).astype(float) * 2 - 1
        W = S * noise.params["A"]
    else:
        raise ValueError("noise family %r only describes moments and cannot be sampled" % noise.family)
    U = np.triu(W, 1)
    W = U + U.T + np.diag(np.diag(W))
    if not noise.self_loops:
        np.fill_diagonal(W, noise.diag_mean)
    return W


def sample_noise(noise: NoiseProfile, seed) -> np.ndarray:
    """One draw of W. The diagonal follows the self-loop convention."""
    return _sample_upper(noise, np.random.default_rng(as_seed_sequence(seed)))


@dataclass(frozen=True, eq=False)
class SampleMatrix:
    X: np.ndarray
    seed: object = None
    self_loops: bool = True


def sample_data(model: SpikedMeanModel, noise: NoiseProfile, seed) -> SampleMatrix:
    if model.n != noise.n:
        raise ValueError("model has n=%d but noise has n=%d" % (model.n, noise.n))
    H = model.mean_matrix()
    X = H + sample_noise(noise, seed)
    X = (X + X.T) / 2
    if noise.family == "bernoulli" and np.abs(H - noise.params["P"]).max() <= 1e-8:
        # H + W is a 0/1 matrix up to rounding in H; store it exactly
        X = np.rint(X)
    if not noise.self_loops:
        np.fill_diagonal(X, 0.0)
    return SampleMatrix(X, seed, noise.self_loops)


_HEADER = struct.Struct("<q")


def write_matrix(path, X) -> None:
    """Write a square matrix as CSV (``.csv``) or raw float64 with an 8-byte n header."""
    X = np.asarray(X, dtype=float)
    check_square(X, "matrix")
    path = Path(path)
    if path.suffix.lower() == ".csv":
        np.savetxt(path, X, delimiter=",", fmt="%.17g")
    else:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(X.shape[0]))
            fh.write(np.ascontiguousarray(X, dtype="<f8").tobytes())


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        X = np.loadtxt(path, delimiter=",", ndmin=2)
    else:
        raw = path.read_bytes()
        if len(raw) < _HEADER.size:
            raise ValueError("truncated matrix file")
        (n,) = _HEADER.unpack_from(raw)
        body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
        if n <= 0 or body.size != n * n:
            raise ValueError("matrix file holds %d values, header says n=%d" % (body.size, n))
        X = body.reshape(n, n).copy()
    check_square(X, "matrix")
    return X


def save_spec(path, spec: dict) -> None:
    Path(path).write_text(json.dumps(spec, indent=2, sort_keys=True))
