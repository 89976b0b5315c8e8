import numpy as np
import pytest

from gfa_incomplete import dataset
from gfa_incomplete.dataset import DataError, GroupedDataset, ModalityMatrix, SplitIndices


def one(values, mask=None, name="X1"):
    return GroupedDataset((ModalityMatrix(name, np.asarray(values, float), mask),))


def test_mask_defaults_to_finite_entries():
    m = ModalityMatrix("a", np.array([[1.0, np.nan, 3.0]]))
    assert m.mask.tolist() == [[True, False, True]]
    assert not m.complete
    assert m.filled().tolist() == [[1.0, 0.0, 3.0]]


def test_containers_are_read_only():
    m = ModalityMatrix("a", np.ones((2, 3)))
    with pytest.raises(ValueError):
        m.values[0, 0] = 5.0


def test_grouped_dataset_validation():
    a = ModalityMatrix("a", np.ones((2, 3)))
    with pytest.raises(DataError):
        GroupedDataset((a, ModalityMatrix("b", np.ones((2, 4)))))
    with pytest.raises(DataError):
        GroupedDataset((a, ModalityMatrix("a", np.ones((1, 3)))))
    d = GroupedDataset((a, ModalityMatrix("b", np.ones((4, 3)))))
    assert d.dims == [2, 4] and d.n_observations == 3
    assert d["b"] is d[1]


def test_standardize_symmetric_triple():
    out, stats = dataset.standardize(one([[2.0, 4.0, 6.0]]))
    # population convention: std of {2,4,6} is sqrt(8/3)
    np.testing.assert_allclose(out[0].values, [[-np.sqrt(1.5), 0.0, np.sqrt(1.5)]])
    np.testing.assert_allclose(stats.means[0], [4.0])


def test_standardize_uses_observed_entries_only():
    out, stats = dataset.standardize(one([[1.0, 9.0, 3.0]], np.array([[True, False, True]])))
    np.testing.assert_allclose(stats.means[0], [2.0])
    np.testing.assert_allclose(stats.stds[0], [1.0])
    assert out[0].mask.tolist() == [[True, False, True]]
    np.testing.assert_allclose(out[0].values[0, [0, 2]], [-1.0, 1.0])


def test_standardize_constant_row_errors():
    with pytest.raises(DataError, match="variable 1"):
        dataset.standardize(one([[1.0, 2.0, 3.0], [5.0, 5.0, 5.0]]))


def test_standardize_is_idempotent(rng):
    d = one(rng.normal(3, 2, (4, 20)), rng.uniform(size=(4, 20)) > 0.2)
    once, _ = dataset.standardize(d)
    twice, _ = dataset.standardize(once)
    m = once[0].mask
    np.testing.assert_allclose(once[0].values[m], twice[0].values[m], atol=1e-10)


def test_residualize_constant_confound_centres():
    X = np.array([[1.0, 2.0, 6.0], [0.0, 3.0, 3.0]])
    out = dataset.residualize(one(X), np.ones((3, 1)))
    np.testing.assert_allclose(out[0].values, X - X.mean(axis=1, keepdims=True), atol=1e-12)


def test_residualize_exact_linear_relation():
    c = np.array([[0.5], [1.0], [2.0], [-1.0]])
    out = dataset.residualize(one(3.0 * c.T + 1.0), c)
    np.testing.assert_allclose(out[0].values, 0.0, atol=1e-10)


def test_residualize_matches_normal_equations(rng):
    # 8 observations, 6 variables with one masked entry each, 2 confounds
    X = rng.standard_normal((6, 8))
    mask = np.ones((6, 8), bool)
    mask[np.arange(6), rng.integers(0, 8, 6)] = False
    C = rng.standard_normal((8, 2))
    out = dataset.residualize(one(X, mask), C)
    for j in range(6):
        o = mask[j]
        A = np.column_stack([C[o], np.ones(o.sum())])
        beta = np.linalg.solve(A.T @ A, A.T @ X[j, o])
        np.testing.assert_allclose(out[0].values[j, o], X[j, o] - A @ beta, atol=1e-10)
        # orthogonal to each confound over observed entries
        assert abs(out[0].values[j, o] @ C[o, 0]) < 1e-8 * np.linalg.norm(C[o, 0]) * np.linalg.norm(X[j, o])


def test_residualize_rank_deficient_errors():
    c = np.arange(5.0)
    C = np.column_stack([c, 2 * c])
    with pytest.raises(DataError):
        dataset.residualize(one(np.arange(5.0)[None]), C)


def test_split_sizes_and_determinism():
    s = dataset.split(500, 0.8, seed=4)
    assert len(s.train) == 400 and len(s.test) == 100
    assert sorted(np.concatenate([s.train, s.test]).tolist()) == list(range(500))
    s2 = dataset.split(500, 0.8, seed=4)
    assert np.array_equal(s.train, s2.train)
    with pytest.raises(DataError):
        dataset.split(10, 0.999)


def test_split_indices_reject_overlap():
    with pytest.raises(DataError):
        SplitIndices(np.array([0, 1]), np.array([1, 2]))


def test_remove_random_entries_exact_count(rng):
    d = GroupedDataset.from_arrays([rng.standard_normal((50, 500)), rng.standard_normal((30, 500))])
    out = dataset.remove_random_entries(d, 1, 0.2, seed=1)
    assert (~out[1].mask).sum() == 3000
    assert out[0].mask.all()
    other = dataset.remove_random_entries(d, 1, 0.2, seed=2)
    assert (~other[1].mask).sum() == 3000
    assert not np.array_equal(out[1].mask, other[1].mask)
    assert dataset.remove_random_entries(d, 1, 0.0, seed=1)[1].mask.all()


def test_remove_random_rows_masks_whole_observations(rng):
    d = GroupedDataset.from_arrays([rng.standard_normal((5, 500)), rng.standard_normal((3, 500))])
    out = dataset.remove_random_rows(d, 0, 0.2, seed=0)
    gone = ~out[0].mask.any(axis=0)
    assert gone.sum() == 100
    assert (out[0].mask.all(axis=0) | gone).all()
    # every variable loses exactly one count per masked observation
    assert (out[0].mask.sum(axis=1) == 400).all()


def test_remove_ops_never_unmask(rng):
    X = rng.standard_normal((4, 40))
    mask = rng.uniform(size=X.shape) > 0.3
    d = one(X, mask)
    for out in (
        dataset.remove_random_entries(d, 0, 0.25, seed=0),
        dataset.remove_random_rows(d, 0, 0.25, seed=0),
        dataset.remove_tails(d, 0, 1.0),
    ):
        assert not (out[0].mask & ~mask).any()


def test_remove_tails(rng):
    d = one(rng.standard_normal((30, 500)))
    frac = (~dataset.remove_tails(d, 0, 1.0)[0].mask).mean()
    assert 0.28 < frac < 0.36
    assert dataset.remove_tails(d, 0, np.inf)[0].mask.all()
    # only exact-mean entries survive n_sigma=0
    e = dataset.remove_tails(one([[1.0, 2.0, 3.0]]), 0, 0.0)
    assert e[0].mask.tolist() == [[False, True, False]]


def test_median_imputation():
    d = one([[1.0, 2.0, 100.0, 0.0], [1.0, 3.0, 0.0, 0.0]], np.array([[1, 1, 1, 0], [1, 1, 0, 0]], bool))
    out = dataset.impute_median(d, d)
    assert out[0].values[0, 3] == 2.0
    assert out[0].values[1, 2] == 2.0 and out[0].values[1, 3] == 2.0
    assert out[0].mask.all()
    full = one([[1.0, 2.0]])
    assert np.array_equal(dataset.impute_median(full, full)[0].values, full[0].values)
    with pytest.raises(DataError):
        empty = one([[1.0, 2.0]], np.array([[False, False]]))
        dataset.impute_median(empty, empty)


def test_save_load_round_trip(tmp_path, rng):
    X1 = rng.standard_normal((3, 7))
    X2 = rng.standard_normal((2, 7))
    m2 = rng.uniform(size=(2, 7)) > 0.3
    d = GroupedDataset((ModalityMatrix("brain", X1), ModalityMatrix("behav", X2, m2)))
    dataset.save_dataset(d, tmp_path)
    back = dataset.load_dataset(tmp_path)
    assert back.names == ["brain", "behav"]
    assert np.array_equal(back[0].values, X1)
    assert np.array_equal(back[1].mask, m2)
    assert np.array_equal(back[1].values[m2], X2[m2])


def test_load_accepts_nan_tokens_without_mask_file(tmp_path):
    (tmp_path / "a.csv").write_text("1,nan,3\n4,5,nan\n")
    (tmp_path / "dataset.json").write_text('{"modalities": [{"name": "a", "values": "a.csv"}]}')
    d = dataset.load_dataset(tmp_path / "dataset.json")
    assert d[0].mask.tolist() == [[True, False, True], [True, True, False]]
