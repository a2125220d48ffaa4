import numpy as np
import pytest

from mlentropy.core import EntropyConfig, IncompatibleLength
from mlentropy.io import model_bytes, parse_model
from mlentropy.kernel2d import KernelSpec, extract_series
from mlentropy.metrics import r2
from mlentropy.normalize import normalize
from mlentropy.regress import (Dataset, EmptyDataset, FeatureLengthMismatch, GbrtModel,
                               GbrtParams, TooFewRows, build_dataset, fold_indices, gbrt_fit,
                               gbrt_predict, kfold_r2, knn_fit, knn_predict, ml_entropy_map)
from mlentropy.synth import bifurcation_svd_dataset, gen_texture


def _toy(rng, n=400, p=3):
    x = rng.uniform(-1, 1, (n, p))
    return Dataset(x, np.where(x[:, 0] > 0.2, 1.0, 0.0) + 0.3 * x[:, 1])


def test_build_dataset_counts_and_order():
    imgs = [gen_texture(s, "smooth", 12, 10) for s in (1, 2)]
    spec, cfg = KernelSpec(1), EntropyConfig.default("svd")
    data = build_dataset(imgs, spec, cfg, [0.0, 1.0])
    assert len(data) == 2 * 12 * 10 * 2 and data.feature_len == 5
    # second row: first image, pixel (0, 0), en=1
    want = normalize(extract_series(imgs[0], (0, 1), spec), 0.0)
    np.testing.assert_array_equal(data.features[2], want)
    np.testing.assert_array_equal(data.features[1], normalize(extract_series(imgs[0], (0, 0), spec), 1.0))
    assert data.meta["en_values"] == [0.0, 1.0] and data.meta["radius"] == 1


def test_build_dataset_stride():
    g = gen_texture(1, "smooth", 44, 44)
    assert len(build_dataset([g], KernelSpec(2), EntropyConfig.default("svd"), [1.0])) == 1936
    assert len(build_dataset([g], KernelSpec(2), EntropyConfig.default("svd"), [1.0], pixel_stride=4)) == 121


def test_build_dataset_drops_undefined_sampen():
    g = np.zeros((6, 6))
    g[2, 3] = 1.0
    data = build_dataset([g], KernelSpec(1), EntropyConfig.default("samp", r_coef=0.01), [1.0])
    assert data.meta["dropped"] > 0
    assert len(data) + data.meta["dropped"] == 36
    assert np.all(np.isfinite(data.labels))


def test_build_dataset_errors():
    with pytest.raises(EmptyDataset):
        build_dataset([], KernelSpec(1), EntropyConfig.default("svd"), [1.0])
    with pytest.raises(IncompatibleLength):
        build_dataset([np.zeros((9, 9))], KernelSpec(1), EntropyConfig.default("perm"), [1.0])
    with pytest.raises(ValueError):
        build_dataset([np.zeros((9, 9))], KernelSpec(1), EntropyConfig.default("svd"), [])


def test_constant_labels_give_constant_model():
    data = Dataset(np.random.default_rng(0).normal(size=(100, 4)), np.full(100, 0.7))
    model = gbrt_fit(data)
    assert model.trees == [] and model.base_score == pytest.approx(0.7)
    assert gbrt_predict(model, [9, -9, 0, 1]) == pytest.approx(0.7)


def test_single_split_by_hand():
    x = np.linspace(-1, 1, 40)[:, None]
    y = (x[:, 0] >= 0).astype(float)
    model = gbrt_fit(Dataset(x, y), GbrtParams(n_trees=1, max_depth=1, min_samples_leaf=1))
    (tree,) = model.trees
    assert tree.n_nodes == 3 and tree.feature[0] == 0
    # midpoint between the last negative and first non-negative sample
    assert tree.threshold[0] == pytest.approx((x[19, 0] + x[20, 0]) / 2)
    assert model.base_score == 0.5
    assert gbrt_predict(model, [-0.5]) == pytest.approx(0.5 - 0.1 * 0.5)
    assert gbrt_predict(model, [0.5]) == pytest.approx(0.5 + 0.1 * 0.5)


def test_min_samples_leaf_respected(rng):
    data = _toy(rng)
    model = gbrt_fit(data, GbrtParams(n_trees=5, min_samples_leaf=37))
    for tree in model.trees:
        leaves = tree.apply(data.features)
        _, counts = np.unique(leaves, return_counts=True)
        assert counts.min() >= 37
        assert tree.depth() <= 6


def test_too_few_rows(rng):
    with pytest.raises(TooFewRows):
        gbrt_fit(_toy(rng, n=30), GbrtParams(min_samples_leaf=20))
    with pytest.raises(EmptyDataset):
        gbrt_fit(Dataset(np.zeros((0, 2)), np.zeros(0)))


def test_training_loss_non_increasing(rng):
    losses = []
    gbrt_fit(_toy(rng), GbrtParams(n_trees=60), callback=lambda t, mse: losses.append(mse))
    assert len(losses) == 60
    assert all(b <= a + 1e-15 for a, b in zip(losses, losses[1:]))


@pytest.mark.parametrize("subsample", [1.0, 0.6])
def test_deterministic_models(rng, subsample):
    data = _toy(rng)
    params = GbrtParams(n_trees=40, subsample=subsample, seed=7)
    assert model_bytes(gbrt_fit(data, params)) == model_bytes(gbrt_fit(data, params))


def test_subsample_seed_matters(rng):
    data = _toy(rng)
    a = gbrt_fit(data, GbrtParams(n_trees=10, subsample=0.5, seed=1))
    b = gbrt_fit(data, GbrtParams(n_trees=10, subsample=0.5, seed=2))
    assert model_bytes(a) != model_bytes(b)


def test_prediction_total_and_batch_consistent(rng):
    data = _toy(rng)
    model = gbrt_fit(data, GbrtParams(n_trees=50))
    far = np.array([[1e6, -1e6, 3.0], [np.inf, 0, 0]])
    assert np.all(np.isfinite(model.predict(far)))
    batch = model.predict(data.features[:30], chunk=7)
    np.testing.assert_array_equal(batch, [gbrt_predict(model, f) for f in data.features[:30]])
    with pytest.raises(FeatureLengthMismatch):
        gbrt_predict(model, [1.0, 2.0])


def test_serialised_predictions_identical(rng):
    data = _toy(rng)
    model = gbrt_fit(data, GbrtParams(n_trees=50))
    back = parse_model(model_bytes(model))
    assert back.predict(data.features).tobytes() == model.predict(data.features).tobytes()


def test_matches_sklearn_reference(rng):
    ensemble = pytest.importorskip("sklearn.ensemble")
    data = _toy(rng, n=600, p=4)
    params = GbrtParams(n_trees=50, max_depth=3, min_samples_leaf=10)
    ours = gbrt_fit(data, params).predict(data.features)
    ref = ensemble.GradientBoostingRegressor(
        n_estimators=50, max_depth=3, min_samples_leaf=10, learning_rate=0.1,
        criterion="squared_error", random_state=0).fit(data.features, data.labels)
    np.testing.assert_allclose(ours, ref.predict(data.features), rtol=0, atol=1e-9)


def test_planck_model_output_range():
    train = bifurcation_svd_dataset("planck", 5000)
    model = gbrt_fit(train, GbrtParams(n_trees=100))
    pred = model.predict(bifurcation_svd_dataset("logistic", 500).features)
    assert pred.min() >= -0.1 and pred.max() <= 1.1


def test_knn(rng):
    x = rng.normal(size=(5, 2))
    y = np.arange(5.0)
    data = Dataset(x, y)
    assert knn_predict(knn_fit(data, 1), x[3]) == 3.0
    assert knn_predict(knn_fit(data, 5), [100, 100]) == y.mean()
    q = np.array([0.1, -0.2])
    nearest = sorted(range(5), key=lambda i: (np.sum((x[i] - q) ** 2), i))[:3]
    assert knn_predict(knn_fit(data, 3), q) == pytest.approx(y[nearest].mean())
    with pytest.raises(ValueError):
        knn_fit(data, 6)


def test_knn_ties_prefer_lower_rows():
    data = Dataset(np.array([[1.0], [-1.0], [1.0]]), np.array([10.0, 20.0, 30.0]))
    assert knn_predict(knn_fit(data, 1), [0.0]) == 10.0


def test_fold_sizes():
    folds = fold_indices(10, 5, seed=3)
    assert [len(f) for f in folds] == [2] * 5
    assert sorted(np.concatenate(folds).tolist()) == list(range(10))
    sizes = [len(f) for f in fold_indices(103, 5)]
    assert max(sizes) - min(sizes) <= 1 and sum(sizes) == 103
    with pytest.raises(TooFewRows):
        fold_indices(3, 5)


def test_kfold_separable_and_noise(rng):
    x = rng.uniform(-1, 1, (500, 3))
    separable = Dataset(x, (x[:, 2] > 0.1).astype(float))
    mean, scores = kfold_r2(separable, 5, GbrtParams(n_trees=100))
    assert len(scores) == 5 and mean >= 0.99
    noise = Dataset(x, np.random.default_rng(9).normal(size=500))
    mean, _ = kfold_r2(noise, 5, GbrtParams(n_trees=100))
    assert mean <= 0.1


def test_ml_map_pointwise_consistency():
    g = gen_texture(2, "smooth", 20, 18, cell=4)
    spec, cfg = KernelSpec(2), EntropyConfig.default("svd")
    model = gbrt_fit(build_dataset([g], spec, cfg, [1.0]), GbrtParams(n_trees=50))
    m = ml_entropy_map(g, spec, model, 1.0)
    assert m.shape == (20, 18)
    for i, j in [(0, 0), (7, 11), (19, 17)]:
        assert m[i, j] == gbrt_predict(model, normalize(extract_series(g, (i, j), spec), 1.0))
    assert ml_entropy_map(g, spec, model, 1.0, threads=3).tobytes() == m.tobytes()


def test_ml_map_uniform_and_mismatch():
    g = gen_texture(2, "smooth", 16, 16, cell=4)
    spec, cfg = KernelSpec(1), EntropyConfig.default("svd")
    model = gbrt_fit(build_dataset([g], spec, cfg, [1.0]), GbrtParams(n_trees=20))
    m = ml_entropy_map(np.full((8, 8), 3.0), spec, model, 1.0)
    assert np.all(m == gbrt_predict(model, np.zeros(5)))
    with pytest.raises(FeatureLengthMismatch):
        ml_entropy_map(g, KernelSpec(2), model, 1.0)


def test_same_image_r1_quality():
    g = gen_texture(4, "fractal", 64, 64)
    spec, cfg = KernelSpec(1), EntropyConfig.default("svd")
    model = gbrt_fit(build_dataset([g], spec, cfg, [1.0]), GbrtParams())
    exact = build_dataset([g], spec, cfg, [1.0]).labels
    assert r2(exact, ml_entropy_map(g, spec, model, 1.0).ravel()) >= 0.99
