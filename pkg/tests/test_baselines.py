import numpy as np
import pytest
from scipy import stats

from gfa_incomplete.baselines import cca_fit, cca_permutation_test, gfa_median_pipeline
from gfa_incomplete.dataset import DataError
from gfa_incomplete.model import Hyperparams, fit

from conftest import random_dataset


def _standardize(X):
    X = X - X.mean(axis=1, keepdims=True)
    return X / X.std(axis=1, keepdims=True)


def _als_first_mode(X1, X2, iters=2000):
    """Power iteration on the two regression steps of CCA."""
    A, B = _standardize(X1), _standardize(X2)
    C11, C22, C12 = A @ A.T, B @ B.T, A @ B.T
    v = np.ones(B.shape[0])
    for _ in range(iters):
        u = np.linalg.solve(C11, C12 @ v)
        u /= np.sqrt(u @ C11 @ u)
        v = np.linalg.solve(C22, C12.T @ u)
        v /= np.sqrt(v @ C22 @ v)
    return u, v, float(u @ C12 @ v)


def _all_correlations(X1, X2):
    A, B = _standardize(X1), _standardize(X2)
    C11, C22, C12 = A @ A.T, B @ B.T, A @ B.T
    M = np.linalg.solve(C11, C12) @ np.linalg.solve(C22, C12.T)
    return np.sqrt(np.clip(np.sort(np.linalg.eigvals(M).real)[::-1], 0, None))


def _coupled(rng, N=300, D1=5, D2=4, strength=(2.0, 1.0)):
    Z = rng.standard_normal((len(strength), N))
    X1 = rng.standard_normal((D1, len(strength))) @ (np.array(strength)[:, None] * Z) + rng.standard_normal((D1, N))
    X2 = rng.standard_normal((D2, len(strength))) @ (np.array(strength)[:, None] * Z) + rng.standard_normal((D2, N))
    return X1, X2


def test_cca_matches_iterative_oracle(rng):
    X1, X2 = _coupled(rng)
    res = cca_fit(X1, X2, K=3)
    u, v, r = _als_first_mode(X1, X2)
    assert res.canonical_correlations[0] == pytest.approx(r, abs=1e-6)
    np.testing.assert_allclose(res.canonical_correlations, _all_correlations(X1, X2)[:3], atol=1e-6)
    sign = np.sign(res.U[:, 0] @ u)
    # weights are scaled to unit-norm scores, the oracle to unit-variance covariances
    np.testing.assert_allclose(sign * res.U[:, 0] / np.linalg.norm(res.U[:, 0]), u / np.linalg.norm(u), atol=1e-5)


def test_identical_modalities_have_correlation_one(rng):
    X = rng.standard_normal((3, 50))
    np.testing.assert_allclose(cca_fit(X, X.copy(), K=3).canonical_correlations, 1.0, atol=1e-8)


def test_scores_are_unit_norm_and_uncorrelated(rng):
    X1, X2 = _coupled(rng)
    res = cca_fit(X1, X2, K=3)
    for s in res.scores:
        np.testing.assert_allclose(s @ s.T, np.eye(3), atol=1e-6)
    np.testing.assert_allclose((res.scores[0] * res.scores[1]).sum(axis=1), res.canonical_correlations, atol=1e-12)
    np.testing.assert_allclose(res.averaged_latents, res.scores.mean(axis=0))
    assert (np.diff(res.canonical_correlations) <= 0).all()


def test_correlations_are_affine_invariant(rng):
    X1, X2 = _coupled(rng)
    a = cca_fit(X1, X2, K=2).canonical_correlations
    T = rng.standard_normal((5, 5)) + 5 * np.eye(5)
    b = cca_fit(T @ X1 + 3.0, 0.1 * X2 - 7, K=2).canonical_correlations
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_cca_input_checks(rng):
    with pytest.raises(DataError):
        cca_fit(rng.standard_normal((10, 5)), rng.standard_normal((2, 5)), K=1)
    X = rng.standard_normal((2, 5))
    X[0, 1] = np.nan
    with pytest.raises(DataError):
        cca_fit(X, rng.standard_normal((2, 5)), K=1)
    with pytest.raises(DataError):
        cca_fit(rng.standard_normal((2, 5)), rng.standard_normal((2, 5)), K=3)
    res = cca_fit(rng.standard_normal((10, 8)), rng.standard_normal((3, 8)), K=1, n_components=3)
    assert res.U.shape == (10, 1)


def test_permutation_test_detects_planted_mode(rng):
    X1, X2 = _coupled(rng, N=200, strength=(1.5,))
    t = cca_permutation_test(X1, X2, K=2, n_perms=200, seed=1)
    assert t.p_values[0] == pytest.approx(1 / 201)
    assert t.p_values[1] > 0.05
    assert (np.diff(t.p_values) >= 0).all()


def test_permutation_p_values_are_uniform_under_noise():
    ps = []
    for s in range(60):
        r = np.random.default_rng(s)
        ps.append(cca_permutation_test(r.standard_normal((3, 40)), r.standard_normal((2, 40)), K=1, n_perms=99, seed=s).p_values[0])
    assert stats.kstest(ps, "uniform").pvalue > 0.01


def test_permutation_test_is_deterministic(rng):
    X1, X2 = _coupled(rng, N=60)
    a = cca_permutation_test(X1, X2, K=2, n_perms=50, seed=4)
    b = cca_permutation_test(X1, X2, K=2, n_perms=50, seed=4, jobs=3)
    np.testing.assert_array_equal(a.null_max_correlations, b.null_max_correlations)
    np.testing.assert_array_equal(a.p_values, b.p_values)


def test_median_pipeline_is_plain_fit_on_complete_data(rng):
    data = random_dataset(rng, dims=(5, 3), N=20)
    hp = Hyperparams(K=3, max_iters=200)
    best, runs = gfa_median_pipeline(data, hp, [2])
    plain = fit(data, hp, seed=2)
    assert best.tag == "median-imputation"
    np.testing.assert_array_equal(best.elbo_trace, plain.elbo_trace)
    np.testing.assert_array_equal(best.state.mu_w[0], plain.state.mu_w[0])
