import gzip
import struct

import numpy as np
import pytest

from mlentropy.core import LogNNetConfig
from mlentropy.nneten import (BadMagic, CountMismatch, MnistSet, MnistSplit, SeriesTooLong,
                              TruncatedFile, fill_reservoir, lognnet_eval, load_mnist, nneten,
                              write_idx_images, write_idx_labels)
from mlentropy.normalize import normalize
from mlentropy.synth import MapConfig, generate_series

FAST = LogNNetConfig(train_count=2000, test_count=500)


def _pair(tmp_path, n_img=10, n_lab=10, label_magic=2049):
    rng = np.random.default_rng(1)
    img, lab = tmp_path / "img", tmp_path / "lab"
    write_idx_images(img, rng.integers(0, 256, (n_img, 28, 28)))
    lab.write_bytes(struct.pack(">II", label_magic, n_lab) + bytes(rng.integers(0, 10, n_lab).tolist()))
    return img, lab


def test_load_idx_pair(tmp_path):
    img, lab = _pair(tmp_path)
    s = load_mnist(img, lab)
    assert len(s) == 10 and s.images.shape == (10, 784)
    assert s.images.min() >= 0 and s.images.max() <= 1
    assert s.labels.dtype == np.int64


def test_gzip_idx(tmp_path):
    img, lab = _pair(tmp_path)
    gz = tmp_path / "img.gz"
    gz.write_bytes(gzip.compress(img.read_bytes()))
    np.testing.assert_array_equal(load_mnist(gz, lab).images, load_mnist(img, lab).images)


def test_bad_magic(tmp_path):
    img, lab = _pair(tmp_path, label_magic=2051)
    with pytest.raises(BadMagic):
        load_mnist(img, lab)


def test_count_mismatch(tmp_path):
    img, lab = _pair(tmp_path, n_img=100, n_lab=99)
    with pytest.raises(CountMismatch):
        load_mnist(img, lab)


def test_truncated(tmp_path):
    img, lab = _pair(tmp_path)
    img.write_bytes(img.read_bytes()[:-1])
    with pytest.raises(TruncatedFile):
        load_mnist(img, lab)


def test_reservoir_fill():
    x = np.arange(49.0)
    w1 = fill_reservoir(x)
    assert w1.shape == (25, 785)
    flat = w1.ravel()
    assert flat[0] == x[0] and flat[49] == x[0]
    rng = np.random.default_rng(3)
    for n in (1, 5, 113, 19625):
        x = rng.normal(size=n)
        flat = fill_reservoir(x).ravel()
        k = rng.integers(0, flat.size, 50)
        np.testing.assert_array_equal(flat[k], x[k % n])
    np.testing.assert_array_equal(fill_reservoir(x).ravel(), x)
    with pytest.raises(SeriesTooLong):
        fill_reservoir(np.zeros(19626))


def test_perfectly_separable_task_scores_100():
    rng = np.random.default_rng(0)
    protos = np.zeros((10, 784))
    for c in range(10):
        protos[c, c * 78:(c + 1) * 78] = 1.0
    labels = np.repeat(np.arange(10), 30)
    train = MnistSet(protos[labels], labels)
    test = MnistSet(protos, np.arange(10))
    cfg = LogNNetConfig(epochs=20, train_count=300, test_count=10)
    w1 = rng.normal(size=(25, 785))
    assert lognnet_eval(w1, MnistSplit(train, test), cfg) == 100.0


def test_nneten_properties(mnist):
    chaotic = normalize(generate_series(MapConfig("logistic", 4.0, 49)), 1.0)
    constant = np.zeros(49)
    a = nneten(chaotic, mnist, FAST)
    assert a == nneten(chaotic, mnist, FAST)
    b = nneten(constant, mnist, FAST)
    assert 0.0 <= b < a <= 1.0


def test_seed_changes_only_training_order(mnist):
    x = normalize(generate_series(MapConfig("logistic", 3.9, 29)), 0.0)
    cfg1 = LogNNetConfig(train_count=1000, test_count=300, seed=1)
    assert nneten(x, mnist, cfg1) == nneten(x, mnist, cfg1)
