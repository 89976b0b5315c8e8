import itertools

import numpy as np
import pytest

from gfa_incomplete import analysis
from gfa_incomplete.dataset import DataError, GroupedDataset, ModalityMatrix
from gfa_incomplete.model import Hyperparams, VariationalState


def test_mse_and_relative_mse_match_loops(rng):
    truth = rng.standard_normal((3, 7))
    pred = rng.standard_normal((3, 7))
    mask = rng.uniform(size=truth.shape) > 0.3
    total, count = 0.0, 0
    for j in range(3):
        for n in range(7):
            if mask[j, n]:
                total += (truth[j, n] - pred[j, n]) ** 2
                count += 1
    assert analysis.mse(truth, pred, mask) == pytest.approx(total / count, rel=1e-14)
    want = [sum((truth[j] - pred[j]) ** 2) / sum(truth[j] ** 2) for j in range(3)]
    np.testing.assert_allclose(analysis.rmse_per_variable(truth, pred), want, rtol=1e-14)


def test_relative_mse_of_zero_variable_is_an_error():
    with pytest.raises(DataError):
        analysis.rmse_per_variable(np.zeros((1, 3)), np.ones((1, 3)))
    with pytest.raises(DataError):
        analysis.mse(np.zeros((2, 3)), np.zeros((3, 2)))


def test_chance_level_uses_observed_training_means():
    train = GroupedDataset((ModalityMatrix("X1", np.array([[1.0, 3.0, 100.0]]), np.array([[True, True, False]])),))
    test = GroupedDataset((ModalityMatrix("X1", np.array([[0.0, 4.0]])),))
    np.testing.assert_array_equal(analysis.training_means(train, 0), [2.0])
    assert analysis.chance_level(train, test, "X1") == pytest.approx((4 + 4) / 2)


def test_pearson_of_constant_is_zero():
    assert analysis.pearson(np.ones(4), np.arange(4)) == 0.0
    assert analysis.pearson(np.arange(5), 3 * np.arange(5) + 1) == pytest.approx(1.0)


def _state(Ws, taus):
    K = Ws[0].shape[1]
    return VariationalState(
        mu_z=np.zeros((K, 3)),
        sigma_z=np.broadcast_to(np.eye(K), (3, K, K)).copy(),
        logdet_z=np.zeros(3),
        mu_w=Ws,
        sigma_w=[np.zeros((W.shape[0], K, K)) for W in Ws],
        logdet_w=[np.zeros(W.shape[0]) for W in Ws],
        alpha_a=[1.0] * len(Ws),
        alpha_b=[np.ones(K)] * len(Ws),
        tau_a=[np.ones(len(t)) for t in taus],
        tau_b=[1.0 / np.asarray(t) for t in taus],
        hp=Hyperparams(K=K),
    )


def test_factor_report_worked_example():
    # factor 0 shared, factor 1 only in X1, factor 2 only in X2
    W1 = np.array([[1.0, 2.0, 0.0], [1.0, 0.0, 1e-3]])
    W2 = np.array([[1.0, 0.0, 3.0]])
    rep = analysis.factor_report(_state([W1, W2], [np.ones(2), np.ones(1) * 0.5]))
    # X1: norms (2, 4, 1e-6), noise 2
    np.testing.assert_allclose(rep.rvar[0], np.array([2, 4, 1e-6]) / (6 + 1e-6))
    np.testing.assert_allclose(rep.var[0], np.array([2, 4, 1e-6]) / (8 + 1e-6))
    # X2: norms (1, 0, 9), noise 2
    np.testing.assert_allclose(rep.var[1], np.array([1, 0, 9]) / 12)
    assert rep.classification == ["shared", "specific-X1", "specific-X2"]
    assert rep.most_relevant == [0, 1, 2]
    rows = rep.rows(["X1", "X2"])
    assert len(rows) == 6 and rows[0]["class"] == "shared"


def test_classification_thresholds_are_inclusive():
    assert analysis.classify_ratio(1e-3) == "shared"
    assert analysis.classify_ratio(300.0) == "shared"
    assert analysis.classify_ratio(300.0001) == "specific-X2"
    assert analysis.classify_ratio(0.00099) == "specific-X1"


def test_most_relevant_threshold():
    W1 = np.array([[1.0, np.sqrt(0.07 / 0.93)]])
    rep = analysis.factor_report(_state([W1, W1.copy()], [np.ones(1), np.ones(1)]))
    assert rep.most_relevant == [0]


def test_degenerate_report_on_zero_loadings():
    rep = analysis.factor_report(_state([np.zeros((2, 2)), np.ones((1, 2))], [np.ones(2), np.ones(1)]))
    assert rep.degenerate and rep.classification == ["inactive", "inactive"]


def test_true_classification():
    alpha = np.array([[1, 1, 1e6, 1], [1, 1e6, 1, 1]])
    assert analysis.true_classification(alpha) == ["shared", "specific-X1", "specific-X2", "shared"]


def _exhaustive(R, threshold):
    best, best_score = None, -1
    n_t, n_i = R.shape
    for perm in itertools.permutations(range(n_i), min(n_t, n_i)):
        pairs = [(t, i) for t, i in zip(range(n_t), perm) if abs(R[t, i]) > threshold]
        score = sum(abs(R[t, i]) for t, i in pairs)
        if score > best_score:
            best, best_score = set(pairs), score
    return best


def test_greedy_matching_equals_optimal_on_separated_factors(rng):
    true_Z = rng.standard_normal((4, 200))
    inferred = np.vstack([-true_Z[2], true_Z[0] + 0.2 * rng.standard_normal(200), rng.standard_normal(200),
                          true_Z[3] * 2, 0.5 * true_Z[1] + rng.standard_normal(200) * 0.1])
    m = analysis.match_factors(true_Z, inferred)
    R = analysis.correlation_matrix(true_Z, inferred)
    assert {(t, i) for t, i, _ in m.pairs} == _exhaustive(R, 0.7)
    assert m.signs[0] == -1 and m.signs[1] == 1
    assert m.unmatched_inferred == [2]


def test_matching_drops_weak_pairs(rng):
    m = analysis.match_factors(rng.standard_normal((2, 50)), rng.standard_normal((3, 50)))
    assert m.pairs == [] and m.unmatched_true == [0, 1]
    with pytest.raises(DataError):
        analysis.match_factors(np.ones((1, 2)), np.ones((1, 2)))


def test_factor_similarity():
    A = [np.array([[1.0, 2.0], [2.0, 0.0]]), np.array([[3.0, 1.0]])]
    B = [2 * A[0] + 1, 2 * A[1] + 1]
    np.testing.assert_allclose(analysis.factor_similarity(A, B), [1.0, 1.0])
    B[0][:, 1] *= -1
    B[1][:, 1] = -A[1][:, 1] * 2 + 1
    assert analysis.factor_similarity(A, B)[1] < 0


def test_prediction_ignores_target_values(small_fit):
    data, result = small_fit
    a = analysis.predict_modality(result.state, data, 1).values
    scrambled = GroupedDataset((data[0], ModalityMatrix("X2", np.full(data[1].values.shape, 99.0))))
    np.testing.assert_array_equal(a, analysis.predict_modality(result.state, scrambled, "X2").values)


def test_prediction_without_sources_is_zero(small_fit):
    data, result = small_fit
    mask = data[0].mask.copy()
    mask[:, 0] = False
    holed = GroupedDataset((ModalityMatrix("X1", data[0].values, mask), data[1]))
    pred = analysis.predict_modality(result.state, holed, 1)
    assert pred.unsupported[0] and not pred.unsupported[1:].any()
    np.testing.assert_array_equal(pred.values[:, 0], 0.0)


def test_missing_predictions_read_the_reconstruction(small_fit):
    data, result = small_fit
    preds = analysis.predict_missing(result.state, data)
    assert len(preds) == sum((~m.mask).sum() for m in data)
    for m, j, n, v in preds[:10]:
        assert v == pytest.approx(analysis.missing_prediction_matrix(result.state, m)[j, n], rel=1e-12)
