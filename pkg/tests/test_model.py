import warnings

import numpy as np
import pytest

from spikeate import model as M

B2 = np.array([[2.0, 1.0], [1.0, 2.0]])


def test_sbm_full_scale_eigenstructure():
    mod, _ = M.build_sbm([1500, 1500], 0.4 * B2)
    assert mod.d(1) == pytest.approx(1800, rel=1e-12)
    assert mod.d(2) == pytest.approx(600, rel=1e-12)
    np.testing.assert_allclose(mod.v(1), np.full(3000, 1 / np.sqrt(3000)), atol=1e-12)
    expect = np.r_[np.ones(1500), -np.ones(1500)] / np.sqrt(3000)
    np.testing.assert_allclose(mod.v(2), expect, atol=1e-12)


@pytest.mark.parametrize("m,r", [(3, 0.02), (10, 0.1), (25, 0.4)])
def test_equal_blocks_closed_form(m, r):
    mod, noise = M.build_sbm([m, m], r * B2)
    assert mod.D == pytest.approx([3 * m * r, m * r], rel=1e-12)
    assert np.abs(mod.mean_matrix() - noise.params["P"]).max() <= 1e-8


def test_degenerate_spikes_warn():
    with pytest.warns(M.DegenerateSpikeWarning):
        mod, _ = M.build_sbm([1, 1], [[0.3, 0], [0, 0.3]])
    assert mod.D == pytest.approx([0.3, 0.3])


def test_singular_connectivity():
    with pytest.raises(ValueError, match="rank-deficient connectivity"):
        M.build_sbm([2, 2], [[0.5, 0.5], [0.5, 0.5]])


def test_dcmm_matches_dense_oracle():
    theta = np.array([1, 1, 0.5, 0.5])
    Pi = np.array([[1, 0], [1, 0], [0, 1], [0, 1]], float)
    P = np.array([[0.8, 0.2], [0.2, 0.8]])
    mod, _ = M.build_dcmm(theta, Pi, P)
    H = np.diag(theta) @ Pi @ P @ Pi.T @ np.diag(theta)
    ev = np.linalg.eigvalsh(H)
    ev = ev[np.argsort(-np.abs(ev))][:2]
    np.testing.assert_allclose(mod.D, ev, rtol=1e-12)
    assert np.abs(mod.mean_matrix() - H).max() <= 1e-8
    assert np.linalg.matrix_rank(H) == mod.K


def test_dcmm_reduces_to_sbm():
    Pi = np.repeat(np.eye(2), 4, axis=0)
    a, _ = M.build_dcmm(np.ones(8), Pi, 0.3 * B2)
    b, _ = M.build_sbm([4, 4], 0.3 * B2)
    np.testing.assert_allclose(a.D, b.D, rtol=1e-12)
    np.testing.assert_allclose(np.abs(a.V.T @ b.V), np.eye(2), atol=1e-10)


def test_dcmm_invalid_probability():
    with pytest.raises(ValueError, match="invalid probability"):
        M.build_dcmm(np.full(4, 2.0), np.repeat(np.eye(2), 2, axis=0), [[0.8, 0.2], [0.2, 0.8]])


def test_bernoulli_profile_moments_by_enumeration():
    # two-outcome enumeration of a single centred Bernoulli entry
    for p in (0.1, 0.37, 0.5, 0.9):
        prof = M.bernoulli_profile(np.full((2, 2), p))
        w = np.array([1 - p, -p])
        pr = np.array([p, 1 - p])
        s2 = pr @ w**2
        assert prof.sigma2[0, 1] == pytest.approx(s2, rel=1e-12)
        assert prof.gamma3[0, 1] == pytest.approx(pr @ w**3, abs=1e-15)
        assert prof.kappa4[0, 1] == pytest.approx(pr @ (w**2 - s2) ** 2, rel=1e-12)


def test_zero_noise_sample_is_mean():
    mod, _ = M.build_sbm([3, 4], 0.3 * B2)
    X = M.sample_data(mod, M.zero_profile(7), 1).X
    np.testing.assert_allclose(X, mod.mean_matrix(), atol=1e-15)
    X = M.sample_data(mod, M.zero_profile(7, self_loops=False), 1).X
    H = mod.mean_matrix()
    np.testing.assert_allclose(X, H - np.diag(np.diag(H)), atol=1e-15)


def test_sample_determinism_and_symmetry():
    mod, noise = M.build_sbm([20, 20], 0.2 * B2, self_loops=False)
    a = M.sample_data(mod, noise, 11)
    b = M.sample_data(mod, noise, 11)
    assert np.array_equal(a.X, b.X)
    assert np.array_equal(a.X, a.X.T)
    assert np.all(np.diag(a.X) == 0)
    assert set(np.unique(a.X)) <= {0.0, 1.0}


def test_sample_noise_lln():
    P = np.array([[0.2, 0.05], [0.05, 0.6]])
    prof = M.bernoulli_profile(P)
    draws = 100_000
    rng = np.random.default_rng(5)
    # vectorised equivalent of many sample_noise calls checked against one call below
    W = (rng.random((draws, 2, 2)) < P).astype(float) - P
    off = W[:, 0, 1]
    assert abs(off.mean()) <= 3 * np.sqrt(prof.sigma2[0, 1] / draws)
    assert off.var() == pytest.approx(prof.sigma2[0, 1], rel=0.05)
    vals = np.array([M.sample_noise(prof, s)[0, 1] for s in range(4000)])
    assert abs(vals.mean()) <= 4 * np.sqrt(prof.sigma2[0, 1] / 4000)


def test_sample_data_mean_lln():
    mod, noise = M.build_sbm([1, 1], [[0.3, 0.1], [0.1, 0.6]])
    X = np.array([M.sample_data(mod, noise, s).X for s in range(20000)])
    H = mod.mean_matrix()
    P = noise.params["P"]
    bound = 3 * np.sqrt(P * (1 - P) / 20000)
    assert np.all(np.abs(X.mean(axis=0) - H) <= bound + 1e-12)


def test_zero_profile_samples_zero():
    assert not np.any(M.sample_noise(M.zero_profile(5), 3))


def test_noise_bounded():
    mod, noise = M.build_sbm([30, 30], 0.4 * B2)
    W = M.sample_noise(noise, 9)
    assert np.abs(W).max() <= 1


def test_matrix_io_roundtrip(tmp_path):
    X = np.random.default_rng(0).normal(size=(5, 5))
    for name in ("a.csv", "a.bin"):
        M.write_matrix(tmp_path / name, X)
        np.testing.assert_array_equal(M.read_matrix(tmp_path / name), X)
    raw = (tmp_path / "a.bin").read_bytes()
    assert int.from_bytes(raw[:8], "little") == 5 and len(raw) == 8 + 25 * 8


def test_read_rejects_non_square(tmp_path):
    (tmp_path / "x.csv").write_text("1,2,3\n4,5,6\n")
    with pytest.raises(ValueError):
        M.read_matrix(tmp_path / "x.csv")


def test_spec_roundtrip():
    spec = {"type": "sbm", "sizes": [5, 5], "P": (0.3 * B2).tolist(), "self_loops": False}
    mod, noise = M.model_from_spec(spec)
    again, noise2 = M.model_from_spec(M.model_to_spec(mod))
    np.testing.assert_array_equal(mod.D, again.D)
    assert not noise2.self_loops
    np.testing.assert_array_equal(noise.diag_mean, -np.diag(noise.params["P"]))


def test_model_invariants_enforced():
    with pytest.raises(ValueError, match="orthonormal"):
        M.SpikedMeanModel(np.ones((3, 1)), [1.0])
    with pytest.raises(ValueError, match="decreasing"):
        M.SpikedMeanModel(np.eye(3)[:, :2], [1.0, 2.0])
    with pytest.raises(ValueError):
        M.SpikedMeanModel(np.eye(3)[:, :1], [0.0])


def test_noise_invariants_enforced():
    z = np.zeros((2, 2))
    with pytest.raises(ValueError, match="self_loops=False"):
        M.NoiseProfile(z, z, z, np.array([0.1, 0]))
    with pytest.raises(ValueError, match="symmetric"):
        M.NoiseProfile(np.array([[0, 1.0], [0, 0]]), z, z, np.zeros(2))
