import numpy as np
import pytest
from scipy import sparse

from weqa.errors import ConfigMismatchError, ModelFormatError
from weqa.forest import ForestConfig, train_forest
from weqa.kernel import (KernelModel, fit_kernel_ridge, forest_gram, forest_kernel, histogram_gram,
                         kernel_model_bytes, kernel_score, leaf_histogram, load_kernel_model,
                         normalized_gram, save_kernel_model, train_kernel_scorer)


@pytest.fixture(scope="module")
def forest():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(3000, 5))
    y = X[:, 0] + 0.5 * X[:, 1]
    return train_forest(X, y, ForestConfig(n_trees=30, seed=2))


def image_sets(n, seed):
    """Pixel sets whose target is their mean first coordinate."""
    rng = np.random.default_rng(seed)
    sets, targets = [], []
    for i in range(n):
        c = rng.uniform(0.1, 0.9)
        P = rng.uniform(size=(200, 5))
        P[:, 0] = np.clip(c + 0.05 * rng.normal(size=200), 0, 1)
        sets.append(P)
        targets.append(c)
    return sets, np.array(targets)


def test_pixel_kernel_basics(forest, rng):
    X = rng.uniform(size=(40, 5))
    assert forest_kernel(forest, X[0], X[0]) == 1.0
    K = forest_gram(forest, X)
    np.testing.assert_array_equal(K, K.T)
    assert np.all(np.diag(K) == 1) and np.all((K >= 0) & (K <= 1))
    assert np.linalg.eigvalsh(K).min() > -1e-10
    assert K[3, 7] == forest_kernel(forest, X[3], X[7])


def test_identity_gram_ridge():
    w, b = fit_kernel_ridge(np.eye(2), [0.0, 1.0], 1.0)
    np.testing.assert_allclose(w, [-0.25, 0.25], atol=1e-15)
    assert b == 0.5


def test_ridge_rejects_bad_lambda():
    for lam in (0.0, -1.0):
        with pytest.raises(ValueError):
            fit_kernel_ridge(np.eye(2), [0, 1], lam)


def test_constant_targets_predict_constant(forest):
    sets, _ = image_sets(8, 1)
    H = [leaf_histogram(forest, P) for P in sets]
    km = train_kernel_scorer(forest, H, np.full(8, 0.42), lam=1e3)
    assert np.all(km.weights == 0)
    np.testing.assert_array_equal(km.predict(sparse.vstack(H)), 0.42)


def test_duplicate_images_solvable(forest):
    sets, y = image_sets(6, 2)
    sets.append(sets[0])
    y = np.append(y, y[0])
    km = train_kernel_scorer(forest, [leaf_histogram(forest, P) for P in sets], y, lam=1e-3)
    assert np.all(np.isfinite(km.weights))


def test_image_kernel_normalised(forest):
    sets, _ = image_sets(6, 3)
    H = sparse.vstack([leaf_histogram(forest, P) for P in sets]).tocsr()
    K, d = normalized_gram(H, 30)
    np.testing.assert_allclose(np.diag(K), 1.0, atol=1e-12)
    assert np.all((K >= 0) & (K <= 1 + 1e-12))
    assert np.linalg.eigvalsh(K).min() > -1e-10
    # the un-normalised kernel is the mean pairwise pixel kernel
    raw = histogram_gram(H[0], H[1], 30)[0, 0]
    assert raw == pytest.approx(forest_gram(forest, sets[0], sets[1]).mean(), rel=1e-12)


def test_histogram_rows_sum_to_trees(forest, rng):
    h = leaf_histogram(forest, rng.uniform(size=(50, 5)))
    assert h.shape == (1, sum(t.n_nodes for t in forest.trees))
    assert h.sum() == pytest.approx(30.0)


def test_training_images_recovered(forest):
    sets, y = image_sets(12, 4)
    km = train_kernel_scorer(forest, [leaf_histogram(forest, P) for P in sets], y, lam=1e-3)
    fit = [kernel_score(km, forest, P) for P in sets]
    np.testing.assert_allclose(fit, y, atol=0.2)


def test_scorer_validation(forest):
    sets, y = image_sets(4, 5)
    H = [leaf_histogram(forest, P) for P in sets]
    with pytest.raises(ValueError):
        train_kernel_scorer(forest, H, y)
    sets, y = image_sets(5, 5)
    with pytest.raises(ValueError):
        train_kernel_scorer(forest, [leaf_histogram(forest, P) for P in sets], y[:4])


def test_forest_id_checked(forest):
    sets, y = image_sets(5, 6)
    km = train_kernel_scorer(forest, [leaf_histogram(forest, P) for P in sets], y, forest_id="a" * 64)
    with pytest.raises(ConfigMismatchError):
        kernel_score(km, forest, sets[0])


def test_score_clamped(forest):
    sets, _ = image_sets(5, 7)
    km = train_kernel_scorer(forest, [leaf_histogram(forest, P) for P in sets], np.full(5, 3.0))
    assert kernel_score(km, forest, sets[0]) == 1.0


def test_save_load_roundtrip(forest, tmp_path):
    sets, y = image_sets(7, 8)
    km = train_kernel_scorer(forest, [leaf_histogram(forest, P) for P in sets], y)
    p = tmp_path / "k.bin"
    digest = save_kernel_model(km, p)
    back = load_kernel_model(p)
    assert isinstance(back, KernelModel) and back.forest_id == km.forest_id
    assert kernel_model_bytes(back) == p.read_bytes()
    assert len(digest) == 64
    for P in sets[:3]:
        assert kernel_score(back, forest, P) == kernel_score(km, forest, P)


def test_load_rejects_damage(forest, tmp_path):
    sets, y = image_sets(5, 9)
    data = kernel_model_bytes(train_kernel_scorer(forest, [leaf_histogram(forest, P) for P in sets], y))
    p = tmp_path / "k.bin"
    for bad in (data[:-1], data[:10], b"XXXXXXXX" + data[8:], data + b"\0"):
        p.write_bytes(bad)
        with pytest.raises(ModelFormatError):
            load_kernel_model(p)
