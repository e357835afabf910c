"""Population surrogates t_k, deflation coefficients and normalized statistics.

The kernel R(M1, M2, t) = -sum_{l in {0, 2, ..., L}} t^-(l+1) M1^T E W^l M2
drives everything here. For spike k write v = v_k, V_ = V_{-k} and

    B(t)   = D_{-k}^-1 + R(V_, V_, t)
    A_u(t) = t [R(u, v, t) - R(u, V_, t) B^-1 R(V_, v, t)]
    b_u(t) = u - V_ B^-1 R(u, V_, t)^T
    f_k(z) = 1 + d_k A_v(z) / z

so that P~ = [t^2 (A_v/t)']^-1 = d_k / (t^2 f_k'(t)).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_vector, child_seeds
from .model import NoiseProfile, SpikedMeanModel, sample_noise
from .moments import (
    MomentTable,
    _bilinear_variance,
    mc_variance,
    quadratic_form_variance,
)

COND_LIMIT = 1e12
MAX_NEWTON = 100
MAX_BISECT = 200


# --------------------------------------------------------------------------
# R kernel

def _cols(M, n):
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.shape[0] != n:
        raise ValueError("expected %d rows, got %d" % (n, M.shape[0]))
    return M


def _check_t(t):
    if t == 0 or not np.isfinite(t):
        raise ValueError("t must be a finite nonzero real")


def _kernel(proj, t, deriv=False):
    """-sum t^-(l+1) P_l, or its t-derivative sum (l+1) t^-(l+2) P_l."""
    out = 0.0
    for l, P in proj.items():
        if l == 1:
            continue
        if deriv:
            out = out + (l + 1) * t ** (-(l + 2)) * P
        else:
            out = out - t ** (-(l + 1)) * P
    return out


def _squeeze(M, a, b):
    if np.ndim(a) == 1 and np.ndim(b) == 1:
        return float(np.asarray(M).reshape(()))
    return M


def r_func(M1, M2, t, moments: MomentTable):
    """R(M1, M2, t). Vectors give a scalar, matrices a p x q array."""
    _check_t(t)
    A, B = _cols(M1, moments.n), _cols(M2, moments.n)
    return _squeeze(_kernel(moments.project(A, B), t), M1, M2)


def r_func_deriv(M1, M2, t, moments: MomentTable):
    """dR/dt."""
    _check_t(t)
    A, B = _cols(M1, moments.n), _cols(M2, moments.n)
    return _squeeze(_kernel(moments.project(A, B), t, deriv=True), M1, M2)


class _Deflation:
    """Projections of v_k and V_{-k} onto the moment table, reused across t."""

    def __init__(self, model: SpikedMeanModel, moments: MomentTable, k: int):
        if moments.n != model.n:
            raise ValueError("moment table has n=%d but the model has n=%d" % (moments.n, model.n))
        self.model, self.moments, self.k = model, moments, k
        j = k - 1
        self.v = model.v(k)
        self.d = model.d(k)
        keep = [i for i in range(model.K) if i != j]
        self.Vm = model.V[:, keep]
        self.Dm = model.D[keep]
        proj = moments.project(model.V)
        self.pvv = {l: P[j, j] for l, P in proj.items()}
        self.pvm = {l: P[j, keep] for l, P in proj.items()}
        self.pmm = {l: P[np.ix_(keep, keep)] for l, P in proj.items()}

    @property
    def m(self):
        return self.Dm.size

    def bracket(self, t):
        B = np.diag(1.0 / self.Dm) + _kernel(self.pmm, t)
        B = np.atleast_2d(B)
        if self.m:
            cond = np.linalg.cond(B)
            if not np.isfinite(cond) or cond > COND_LIMIT:
                raise ValueError("resonant deflation: bracket condition number %.3g" % cond)
        return B

    def _solve(self, B, rhs):
        return np.linalg.solve(B, rhs) if self.m else np.zeros(0)

    def f(self, z):
        rvv = _kernel(self.pvv, z)
        if not self.m:
            return 1.0 + self.d * rvv
        rvm = _kernel(self.pvm, z)
        B = self.bracket(z)
        return 1.0 + self.d * (rvv - rvm @ self._solve(B, rvm))

    def fprime(self, z):
        rvv_ = _kernel(self.pvv, z, deriv=True)
        if not self.m:
            return self.d * rvv_
        rvm = _kernel(self.pvm, z)
        rvm_ = _kernel(self.pvm, z, deriv=True)
        rmm_ = np.atleast_2d(_kernel(self.pmm, z, deriv=True))
        B = self.bracket(z)
        s = self._solve(B, rvm)
        return self.d * (rvv_ - 2 * rvm_ @ s + s @ rmm_ @ s)

    def approx(self, z):
        return 1.0 + self.d * _kernel(self.pvv, z)

    def approx_prime(self, z):
        return self.d * _kernel(self.pvv, z, deriv=True)

    def u_parts(self, u, t):
        """R(u, v, t), R(u, V_, t) and B(t)^-1 R(u, V_, t)^T."""
        u = as_vector(u, self.model.n, "u")
        proj = self.moments.project(u[:, None], self.model.V)
        j = self.k - 1
        keep = [i for i in range(self.model.K) if i != j]
        full = np.asarray(_kernel(proj, t)).reshape(-1)
        ruv, rum = float(full[j]), full[keep]
        B = self.bracket(t)
        return ruv, rum, self._solve(B, rum)

    def a_coeff(self, u, t):
        ruv, rum, s = self.u_parts(u, t)
        rmv = np.asarray(_kernel(self.pvm, t)).reshape(-1)
        return t * (ruv - float(s @ rmv)) if self.m else t * ruv

    def b_vec(self, u, t):
        _, _, s = self.u_parts(u, t)
        u = np.asarray(u, dtype=float)
        return u - self.Vm @ s if self.m else u.copy()

    def p_tilde(self, t):
        fp = self.fprime(t)
        denom = t * t * fp / self.d
        if denom == 0 or not np.isfinite(denom):
            raise ValueError("flat objective: derivative of A/t vanishes at t=%g" % t)
        return 1.0 / denom


def a_coeff(u, k, t, model: SpikedMeanModel, moments: MomentTable) -> float:
    """A_{u,k,t}; linear in u."""
    _check_t(t)
    return _Deflation(model, moments, k).a_coeff(u, t)


def b_vec(u, k, t, model: SpikedMeanModel, moments: MomentTable) -> np.ndarray:
    """Deflated weight vector b_{u,k,t}; b^T v_k = u^T v_k."""
    _check_t(t)
    return _Deflation(model, moments, k).b_vec(u, t)


def p_tilde(k, t, model: SpikedMeanModel, moments: MomentTable) -> float:
    _check_t(t)
    return _Deflation(model, moments, k).p_tilde(t)


def f_k(z, k, model: SpikedMeanModel, moments: MomentTable) -> float:
    _check_t(z)
    return float(_Deflation(model, moments, k).f(z))


def f_k_deriv(z, k, model: SpikedMeanModel, moments: MomentTable) -> float:
    _check_t(z)
    return float(_Deflation(model, moments, k).fprime(z))


# --------------------------------------------------------------------------
# root finding

def spike_interval(model: SpikedMeanModel, k: int, c0: float = 0.5):
    """(a_k, b_k) = (d_k / (1 + c0/2), (1 + c0/2) d_k).

    Raises if the interval meets the interval of a neighbouring spike.
    """
    if c0 <= 0:
        raise ValueError("c0 must be positive")
    r = 1 + c0 / 2
    lo = {}
    for j in range(1, model.K + 1):
        d = model.d(j)
        lo[j] = (min(d / r, d * r), max(d / r, d * r))
    mine = lo[k]
    for j, other in lo.items():
        if j != k and max(mine[0], other[0]) <= min(mine[1], other[1]):
            raise ValueError("intervals of spikes %d and %d overlap; use a smaller c0" % (k, j))
    d = model.d(k)
    return d / r, d * r


def _bisect(f, a, b, fa, tol, maxit=MAX_BISECT):
    lo, hi, flo = a, b, fa
    x, fx = lo, flo
    for it in range(1, maxit + 1):
        x = 0.5 * (lo + hi)
        fx = f(x)
        if abs(fx) <= tol or abs(hi - lo) <= 4 * np.finfo(float).eps * abs(x):
            return x, fx, it
        if np.sign(fx) == np.sign(flo):
            lo, flo = x, fx
        else:
            hi = x
    return x, fx, maxit


def _newton(f, fp, a, b, fa, x0, tol, maxit=MAX_NEWTON):
    """Newton with a bisection fallback whenever the step leaves the bracket."""
    lo, hi, flo = a, b, fa
    x = x0
    fx = f(x)
    for it in range(1, maxit + 1):
        if abs(fx) <= tol:
            return x, fx, it - 1
        if np.sign(fx) == np.sign(flo):
            lo, flo = x, fx
        else:
            hi = x
        g = fp(x)
        step = x - fx / g if g != 0 else np.nan
        left, right = min(lo, hi), max(lo, hi)
        if not (left < step < right):
            step = 0.5 * (lo + hi)
        if abs(step - x) <= 4 * np.finfo(float).eps * abs(x):
            x, fx = step, f(step)
            return x, fx, it
        x, fx = step, f(step)
    return x, fx, maxit


def _bracketed(f, a, b):
    fa, fb = f(a), f(b)
    if not (np.isfinite(fa) and np.isfinite(fb)) or fa * fb > 0:
        raise ValueError("no root bracketed (spike too weak?): f(a)=%.3g, f(b)=%.3g" % (fa, fb))
    return fa, fb


@dataclass(eq=False)
class AteSolution:
    k: int
    d_k: float
    t_k: float
    a_k: float
    b_k: float
    c0: float
    A_self: float
    P_tilde: float
    alpha_n: float
    solver: dict
    v: np.ndarray = field(repr=False)

    @property
    def bound_ratios(self) -> dict:
        """|A_self + 1| and |P~ - 1| in units of alpha_n^2 / t_k^2."""
        if self.alpha_n == 0:
            return {"A_self": None, "P_tilde": None}
        u = self.alpha_n**2 / self.t_k**2
        return {"A_self": abs(self.A_self + 1) / u, "P_tilde": abs(self.P_tilde - 1) / u}

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "d_k": self.d_k,
            "t_k": self.t_k,
            "interval": [self.a_k, self.b_k],
            "c0": self.c0,
            "A_self": self.A_self,
            "P_tilde": self.P_tilde,
            "alpha_n": self.alpha_n,
            "bound_ratios": self.bound_ratios,
            "solver": self.solver,
        }


def _noiseless(moments: MomentTable) -> bool:
    return not any(np.any(E) for E in moments.EW[1:])


def solve_tk(k: int, model: SpikedMeanModel, moments: MomentTable, method: str = "newton-approx",
             tol: float = 1e-12, c0: float = 0.5) -> AteSolution:
    """Root of f_k in the spike interval.

    ``newton-approx`` first solves 1 + d_k R(v_k, v_k, z) = 0 and then
    polishes on the full f_k; the two roots and their gap go in the solver
    record. ``newton-full`` works on f_k directly and ``bisection`` is the
    slow reference.
    """
    if method not in ("newton-full", "newton-approx", "bisection"):
        raise ValueError("unknown method %r" % method)
    defl = _Deflation(model, moments, k)
    a, b = spike_interval(model, k, c0)
    fa, _ = _bracketed(defl.f, a, b)
    record = {"method": method}
    if _noiseless(moments):
        # f_k(z) = 1 - d_k / z, so the root is d_k; iterating would only add rounding
        t, ft, it = defl.d, defl.f(defl.d), 0
        record["closed_form"] = True
    elif method == "bisection":
        t, ft, it = _bisect(defl.f, a, b, fa, tol)
    elif method == "newton-full":
        t, ft, it = _newton(defl.f, defl.fprime, a, b, fa, defl.d, tol)
    else:
        ga, _ = _bracketed(defl.approx, a, b)
        t0, _, it0 = _newton(defl.approx, defl.approx_prime, a, b, ga, defl.d, tol)
        t, ft, it1 = _newton(defl.f, defl.fprime, a, b, fa, t0, tol)
        it = it0 + it1
        record.update(approx_root=t0, approx_gap=abs(t - t0), approx_iterations=it0)
    record.update(iterations=it, residual=abs(float(ft)))
    return AteSolution(
        k=k, d_k=defl.d, t_k=float(t), a_k=a, b_k=b, c0=c0,
        A_self=float(defl.a_coeff(defl.v, t)), P_tilde=float(defl.p_tilde(t)),
        alpha_n=moments.alpha_n, solver=record, v=defl.v.copy(),
    )


# --------------------------------------------------------------------------
# normalized statistics

def eigenvalue_stat(pair, sol: AteSolution, noise: NoiseProfile, variance: float | None = None) -> float:
    """(lambda_k - t_k - E v^T W v) / sd(v^T W v)."""
    v = sol.v
    mean = float(np.sum(noise.diag_mean * v * v))
    var = _bilinear_variance(v, v, noise.sigma2) if variance is None else variance
    if not var > 0:
        raise ValueError("degenerate denominator: var(v^T W v) = 0")
    return (pair.lam - sol.t_k - mean) / math.sqrt(var)


@dataclass(eq=False)
class LinearFormPrep:
    """Everything in the u^T vhat_k statistic that does not depend on the sample."""

    u: np.ndarray
    A_u: float
    mean: float
    variance: float


def prepare_general(u, sol: AteSolution, model, moments, noise: NoiseProfile, var_mode: str = "exact",
                    mc_draws: int = 2000, seed=0) -> LinearFormPrep:
    """Centre and scale for u^T vhat_k. u need not be unit; the statistic is scale free."""
    u = as_vector(u, model.n, "u")
    if not np.any(u):
        raise ValueError("u must be nonzero")
    v = sol.v
    cos = abs(u @ v) / np.linalg.norm(u)
    if cos > 0.9:
        warnings.warn("u is close to v_%d (|cos| = %.3f); use the self statistic" % (sol.k, cos),
                      stacklevel=2)
    defl = _Deflation(model, moments, sol.k)
    A_u = defl.a_coeff(u, sol.t_k)
    x = defl.b_vec(u, sol.t_k) - v * (v @ u)
    mean = float(np.sum(noise.diag_mean * x * v))
    if var_mode == "exact":
        var = _bilinear_variance(x, v, noise.sigma2)
    elif var_mode == "monte-carlo":
        var, _ = mc_variance(lambda W: float(x @ W @ v), noise, mc_draws, seed, tag=11)
    else:
        raise ValueError("unknown variance mode %r" % var_mode)
    return LinearFormPrep(u, float(A_u), mean, float(var))


def eigenvector_stat_general(u, pair, sol: AteSolution, model, moments, noise, prep=None,
                             var_mode: str = "exact") -> float:
    """[t(u^T vhat + A_u P~^1/2) - E x^T W v] / sd(x^T W v), x = b_u - v v^T u."""
    if prep is None:
        prep = prepare_general(u, sol, model, moments, noise, var_mode)
    if not prep.variance > 0:
        raise ValueError("degenerate denominator: var(x^T W v_k) = 0")
    num = sol.t_k * (prep.u @ pair.vhat + prep.A_u * math.sqrt(sol.P_tilde)) - prep.mean
    return float(num / math.sqrt(prep.variance))


def self_stat_variance(sol: AteSolution, noise: NoiseProfile, var_mode: str = "exact",
                       mc_draws: int = 2000, seed=0) -> float:
    return quadratic_form_variance(sol.v, noise, var_mode, mc_draws, seed)


def eigenvector_stat_self(pair, sol: AteSolution, model, moments, noise, var_mode: str = "exact",
                          variance: float | None = None) -> float:
    """2 t^2 (v^T vhat + A_v P~^1/2) / sd(v^T W^2 v)."""
    var = self_stat_variance(sol, noise, var_mode) if variance is None else variance
    if not var > 0:
        raise ValueError("degenerate denominator: var(v^T W^2 v) = 0")
    num = 2 * sol.t_k**2 * (sol.v @ pair.vhat + sol.A_self * math.sqrt(sol.P_tilde))
    return float(num / math.sqrt(var))


# --------------------------------------------------------------------------
# bilinear forms x^T vhat vhat^T y

def _bilinear_cov(x, y, u, z, S):
    """cov(x^T W y, u^T W z) for independent entries."""
    return float((x * u) @ S @ (y * z) + (x * z) @ S @ (y * u) - np.sum(np.diag(S) * x * y * u * z))


@dataclass(eq=False)
class BilinearPrediction:
    """x^T vhat vhat^T y ~ a_k + tr(W J) [- tr((W^2 - E W^2) L) + tr(W v v^T) tr(W Q)].

    J, L and Q are v_k c^T for the stored row factors c.
    """

    x: np.ndarray
    y: np.ndarray
    k: int
    order: int
    a_k_value: float
    v: np.ndarray = field(repr=False)
    j_row: np.ndarray = field(repr=False)
    l_row: np.ndarray = field(repr=False)
    q_row: np.ndarray = field(repr=False)
    sigma_k: float
    sigma_tilde_k: float | None
    mean: float

    @property
    def J(self):
        return np.outer(self.v, self.j_row)

    @property
    def L(self):
        return np.outer(self.v, self.l_row)

    @property
    def Q(self):
        return np.outer(self.v, self.q_row)

    def first_order(self, W) -> float:
        return float(self.j_row @ W @ self.v)

    def second_order(self, W, EW2) -> float:
        v = self.v
        return float(self.j_row @ W @ v - self.l_row @ (W @ (W @ v) - EW2 @ v)
                     + (v @ W @ v) * (self.q_row @ W @ v))


def bilinear_predict(x, y, k, order, sol: AteSolution, model, moments: MomentTable, noise: NoiseProfile,
                     mc_draws: int = 2000, seed=0) -> BilinearPrediction:
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    x = as_vector(x, model.n, "x")
    y = as_vector(y, model.n, "y")
    t, P = sol.t_k, sol.P_tilde
    defl = _Deflation(model, moments, k)
    v = defl.v
    Ax, Ay = defl.a_coeff(x, t), defl.a_coeff(y, t)
    bx, by = defl.b_vec(x, t), defl.b_vec(y, t)
    _, rxm, sx = defl.u_parts(x, t)
    _, rym, sy = defl.u_parts(y, t)
    j_row = -P / t * (Ay * bx + Ax * by + 2 * Ax * Ay * P * v)
    defl_row = defl.Vm @ (Ay * sx + Ax * sy) if defl.m else np.zeros(model.n)
    l_row = P / t**2 * (defl_row + Ay * x + Ax * y + 3 * Ax * Ay * v)
    q_row = l_row - P / t**2 * Ax * Ay * v + 2 * P**2 / t**2 * (Ax * bx + Ay * by)
    S, mu = noise.sigma2, noise.diag_mean
    sigma_k = math.sqrt(max(_bilinear_variance(j_row, v, S), 0.0))
    a_val = Ax * Ay * P
    mean = a_val + float(np.sum(mu * j_row * v))
    sigma_tilde = None
    pred = BilinearPrediction(x, y, k, order, a_val, v, j_row, l_row, q_row, sigma_k, None, mean)
    if order == 2:
        EW2 = moments.EW[2]
        mean += _bilinear_cov(v, v, q_row, v, S) + float(np.sum(mu * v * v)) * float(np.sum(mu * q_row * v))
        pred.mean = mean
        if np.any(S):
            vals = [pred.second_order(sample_noise(noise, ss), EW2)
                    for ss in child_seeds(seed, mc_draws, tag=13)]
            sigma_tilde = float(np.std(vals, ddof=1))
        else:
            sigma_tilde = 0.0
        pred.sigma_tilde_k = sigma_tilde
    return pred
