import numpy as np
import pytest

from spikeate import model as M
from spikeate import moments as mo
from spikeate.clt_diagnostics import spectral_norm_check

import oracles as orc


def random_P(n, seed, lo=0.05, hi=0.95):
    rng = np.random.default_rng(seed)
    P = rng.uniform(lo, hi, size=(n, n))
    return np.triu(P) + np.triu(P, 1).T


def unit(n, seed):
    x = np.random.default_rng(seed).normal(size=n)
    return x / np.linalg.norm(x)


CASES = [(3, True, 0), (3, False, 1), (4, True, 2), (4, False, 3)]


@pytest.mark.parametrize("n,loops,seed", CASES)
def test_exact_powers_by_enumeration(n, loops, seed):
    P = random_P(n, seed)
    noise = M.bernoulli_profile(P, loops)
    for l in (0, 1, 2):
        ref = orc.expectation(P, lambda W: orc.matrix_power_termwise(W, l), loops)
        np.testing.assert_allclose(mo.exact_power(noise, l), ref, atol=1e-14)


@pytest.mark.parametrize("n,loops,seed", CASES)
def test_variances_by_enumeration(n, loops, seed):
    P = random_P(n, seed)
    noise = M.bernoulli_profile(P, loops)
    x, y = unit(n, seed + 10), unit(n, seed + 20)
    ref = orc.variance(P, lambda W: x @ W @ y, loops)
    assert mo.bilinear_variance(x, y, noise) == pytest.approx(ref, rel=1e-12, abs=1e-15)
    ref = orc.expectation(P, lambda W: x @ W @ y, loops)
    assert mo.bilinear_mean(x, y, noise) == pytest.approx(ref, abs=1e-14)
    ref = orc.variance(P, lambda W: x @ W @ W @ y, loops)
    assert mo.quadratic_variance_exact(x, y, noise) == pytest.approx(ref, rel=1e-11)
    ref = orc.expectation(P, lambda W: x @ W @ W @ x, loops)
    assert mo.quadratic_form_mean(x, noise) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("n,loops,seed", [(3, True, 4), (3, False, 5)])
def test_s2_matches_martingale_enumeration_and_total_variance(n, loops, seed):
    P = random_P(n, seed)
    noise = M.bernoulli_profile(P, loops)
    x, y = unit(n, seed), unit(n, seed + 1)
    ref = orc.conditional_variance_enumerated(P, x, y, loops)
    assert mo.s2_xy(x, y, noise) == pytest.approx(ref, rel=1e-11)
    # the conditional variances of a martingale add up to the total variance on average
    assert mo.s2_xy(x, y, noise) == pytest.approx(mo.quadratic_variance_exact(x, y, noise), rel=1e-11)


def test_conditional_variance_evaluator_averages_to_s2():
    P = random_P(3, 7)
    noise = M.bernoulli_profile(P)
    x, y = unit(3, 1), unit(3, 2)
    vals, probs = [], []
    for W, pr in orc.bernoulli_outcomes(P):
        vals.append(mo.conditional_variance(x, y, noise, W))
        probs.append(pr)
    assert np.dot(vals, probs) == pytest.approx(mo.s2_xy(x, y, noise), rel=1e-11)


@pytest.mark.parametrize("loops", [True, False])
@pytest.mark.parametrize("p", [0.1, 0.5, 0.8])
def test_homogeneous_closed_forms(loops, p):
    n = 4
    P = np.full((n, n), p)
    v = np.full(n, 0.5)
    proj = mo.homogeneous_projections(p, n, loops)
    for l in range(5):
        ref = orc.expectation(P, lambda W: v @ orc.matrix_power_termwise(W, l) @ v, loops)
        assert proj[l] == pytest.approx(ref, abs=1e-13)
    ref = orc.variance(P, lambda W: v @ W @ W @ v, loops)
    assert mo.quadratic_variance_homogeneous(p, n, loops) == pytest.approx(ref, rel=1e-11)
    noise = M.bernoulli_profile(P, loops)
    assert mo.quadratic_form_variance(v, noise, "homogeneous-exact") == pytest.approx(ref, rel=1e-11)


def test_homogeneous_mode_rejects_other_directions():
    noise = M.bernoulli_profile(np.full((4, 4), 0.3))
    with pytest.raises(ValueError):
        mo.quadratic_form_variance(unit(4, 0), noise, "homogeneous-exact")
    noise = M.bernoulli_profile(random_P(4, 0))
    with pytest.raises(ValueError):
        mo.quadratic_form_variance(np.full(4, 0.5), noise, "homogeneous-exact")


def test_monte_carlo_third_power_within_stderr():
    P = random_P(4, 11)
    noise = M.bernoulli_profile(P)
    ref = orc.expectation(P, lambda W: orc.matrix_power_termwise(W, 3))
    tab = mo.moment_table(noise, 4, mc_draws=4000, seed=3)
    err = tab.stderr[3]
    z = np.abs(tab.EW[3] - ref) / np.maximum(err, 1e-12)
    assert z.max() < 4.5
    ref4 = orc.expectation(P, lambda W: orc.matrix_power_termwise(W, 4))
    assert np.abs(tab.EW[4] - ref4).max() <= 5 * tab.stderr[4].max()
    assert tab.methods == ["exact"] * 3 + ["monte-carlo"] * 2


def test_wigner_second_moment_is_two():
    # Rademacher entries, sigma^2 = 1, var(x^T W^2 x) ~ 2 n sigma^4
    n = 400
    noise = M.two_point_profile(np.ones((n, n)))
    x = unit(n, 2)
    var = mo.quadratic_variance_exact(x, x, noise)
    assert var / n == pytest.approx(2.0, rel=0.02)
    assert mo.alpha_n(noise) == pytest.approx(np.sqrt(n))


def test_s2_order_and_range():
    n, p = 300, 0.3
    s2w = p * (1 - p)
    noise = M.bernoulli_profile(np.full((n, n), p))
    for seed in range(3):
        x, y = unit(n, seed), unit(n, seed + 50)
        s2 = mo.s2_xy(x, y, noise) / (n * s2w**2)
        lower = 1 - np.sum(x * x * y * y)
        assert lower * (1 - 0.05) <= s2 <= 2 * (1 + 0.05)
    x = np.full(n, 1 / np.sqrt(n))
    assert mo.s2_xy(x, x, noise) / (n * s2w**2) == pytest.approx(2.0, rel=0.02)


def test_permutation_invariance():
    P = random_P(6, 3)
    noise = M.bernoulli_profile(P)
    x, y = unit(6, 0), unit(6, 1)
    perm = np.random.default_rng(0).permutation(6)
    noise_p = M.bernoulli_profile(P[np.ix_(perm, perm)])
    assert mo.quadratic_variance_exact(x[perm], y[perm], noise_p) == pytest.approx(
        mo.quadratic_variance_exact(x, y, noise), rel=1e-12)
    assert mo.s2_xy(x[perm], y[perm], noise_p) == pytest.approx(mo.s2_xy(x, y, noise), rel=1e-12)


def test_mc_variance_agrees_with_exact():
    P = random_P(5, 8)
    noise = M.bernoulli_profile(P)
    x = unit(5, 4)
    exact = mo.quadratic_variance_exact(x, x, noise)
    var, se = mo.mc_variance(lambda W: x @ W @ W @ x, noise, 20000, 1)
    assert abs(var - exact) <= 4 * se


def test_truncation_and_zero_tables():
    noise = M.bernoulli_profile(np.full((3, 3), 0.5))
    with pytest.raises(ValueError, match="beyond truncation order"):
        mo.expected_power(noise, 5, L=5)
    with pytest.raises(ValueError, match="beyond truncation order"):
        mo.expected_power(noise, 4, L=3)
    z = mo.zero_moment_table(5)
    assert z.alpha_n == 0 and z.orders() == [0, 2, 3, 4]
    assert not np.any(mo.moment_table(M.zero_profile(5)).EW[4])


def test_moment_table_roundtrip(tmp_path):
    noise = M.bernoulli_profile(random_P(4, 1))
    tab = mo.moment_table(noise, 4, 50, 2)
    tab.save(tmp_path)
    back = mo.MomentTable.load(tmp_path)
    for a, b in zip(tab.EW, back.EW):
        np.testing.assert_array_equal(a, b)
    assert back.alpha_n == tab.alpha_n and back.methods == tab.methods


def test_spectral_norm_bound():
    n = 200
    noise = M.bernoulli_profile(np.full((n, n), 0.3))
    out = spectral_norm_check(noise, draws=20, seed=0)
    assert out["holds"]
    # ||W|| concentrates near 2 alpha_n
    assert out["max_norm"] / mo.alpha_n(noise) == pytest.approx(2.0, rel=0.1)
