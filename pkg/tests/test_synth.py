import math

import numpy as np
import pytest

from mlentropy.kernel2d import KernelSpec, extract_series
from mlentropy.metrics import ConstantInput, pearson
from mlentropy.regress import GbrtModel, GbrtParams
from mlentropy.synth import (MapConfig, NonFinite, bifurcation_points, bifurcation_svd_dataset,
                             cross_map_experiment, gen_texture, generate_series, iterate_map,
                             r_grid, window_dip)


def test_logistic_fixed_point():
    x = generate_series(MapConfig("logistic", 2.0, 5))
    np.testing.assert_allclose(x, 0.5, atol=1e-9)


def test_logistic_period_two():
    r = 3.2
    lo = (1 + r - math.sqrt((r - 3) * (r + 1))) / (2 * r)
    hi = (1 + r + math.sqrt((r - 3) * (r + 1))) / (2 * r)
    assert (lo, hi) == (pytest.approx(0.51304, abs=1e-5), pytest.approx(0.79946, abs=1e-5))
    x = generate_series(MapConfig("logistic", r, 40))
    np.testing.assert_allclose(np.sort(x[-2:]), [lo, hi], atol=1e-9)
    np.testing.assert_allclose(x[::2], x[0], atol=1e-9)


def test_planck_positive():
    x = generate_series(MapConfig("planck", 5.0, 200))
    assert np.all(x > 0) and np.all(np.isfinite(x))


def test_defaults_and_ranges():
    cfg = MapConfig("planck", 3.0, 10)
    assert (cfg.x0, cfg.transient) == (4.0, 1000)
    assert MapConfig("logistic", 1.0, 3).x0 == 0.1
    with pytest.raises(ValueError):
        MapConfig("logistic", 4.5, 10)
    with pytest.raises(ValueError):
        MapConfig("planck", 2.0, 10)


def test_divergence_is_reported():
    with pytest.raises(NonFinite):
        iterate_map("logistic", [5.0], 10, transient=50)


def test_vectorised_iteration_matches_scalar_loop():
    r = np.array([3.1, 3.7, 4.0])
    got = iterate_map("logistic", r, 6, transient=20)
    for row, rv in zip(got, r):
        x = 0.1
        for _ in range(20):
            x = rv * x * (1 - x)
        want = []
        for _ in range(6):
            x = rv * x * (1 - x)
            want.append(x)
        np.testing.assert_array_equal(row, want)


def test_dataset_sizes():
    assert len(bifurcation_svd_dataset("planck", 100_000)) == 100_000
    data = bifurcation_svd_dataset("logistic", 3000)
    assert len(data) == 3000 and data.feature_len == 29
    assert np.all((data.labels >= 0) & (data.labels <= 1))


def test_fixed_point_regime_has_zero_svd_entropy():
    data = bifurcation_svd_dataset("logistic", 3000)
    r = r_grid("logistic", 3000)
    near = np.abs(r - 2.5) < 0.05
    np.testing.assert_allclose(data.labels[near], 0.0, atol=1e-9)


def test_rows_ascend_in_r():
    r = r_grid("planck", 50)
    assert r[0] == 3.0 and r[-1] == 7.0 and np.all(np.diff(r) > 0)
    r, pts = bifurcation_points("logistic", 20, last=7)
    assert pts.shape == (20, 7)


def test_in_distribution_cross_map():
    res = cross_map_experiment(3000, 1000, GbrtParams(n_trees=200), "logistic", "logistic")
    assert res.pearson >= 0.99


def test_constant_predictions_surface_error():
    test = bifurcation_svd_dataset("logistic", 200)
    mean_model = GbrtModel([], 0.1, float(test.labels.mean()), test.feature_len)
    with pytest.raises(ConstantInput):
        pearson(test.labels, mean_model.predict(test.features))


def test_cross_map_counts_checked():
    with pytest.raises(ValueError):
        cross_map_experiment(50, 3000)


def test_window_dip():
    r = np.linspace(0, 1, 101)
    v = np.abs(r - 0.5)
    at, mean = window_dip(r, v, 0.5)
    assert at == 0.0 and mean > at


@pytest.mark.parametrize("kind", ["smooth", "speckle", "logistic2d", "fractal"])
def test_textures_deterministic(kind):
    a = gen_texture(4, kind, 32, 40)
    assert a.shape == (32, 40)
    assert np.array_equal(a, gen_texture(4, kind, 32, 40))
    assert not np.array_equal(a, gen_texture(5, kind, 32, 40))


def test_smooth_is_smoother_than_speckle():
    rng = np.random.default_rng(0)
    spec = KernelSpec(2)
    smooth = gen_texture(1, "smooth")
    speckle = gen_texture(1, "speckle")
    centres = rng.integers(0, 256, size=(100, 2))

    def local_sigma(g):
        return np.mean([extract_series(g, tuple(c), spec).std() for c in centres])

    assert local_sigma(smooth) < local_sigma(speckle)


def test_logistic2d_fixed_point_rows_constant():
    g = gen_texture(2, "logistic2d", 64, 30)
    r = np.linspace(2.5, 4.0, 64)
    for row in g[r < 2.9]:
        np.testing.assert_allclose(row, row[0], atol=1e-9)


def test_fractal_values_are_integer_levels():
    g = gen_texture(3, "fractal", 40, 40)
    assert np.array_equal(g, np.rint(g)) and g.min() >= 0


def test_texture_too_small():
    with pytest.raises(ValueError):
        gen_texture(0, "smooth", 4, 20)
