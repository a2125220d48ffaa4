import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mlentropy.nneten import load_mnist_dir, write_idx_images, write_idx_labels  # noqa: E402


def _write_split(directory: Path, images, labels, n_train):
    write_idx_images(directory / "train-images-idx3-ubyte", images[:n_train])
    write_idx_labels(directory / "train-labels-idx1-ubyte", labels[:n_train])
    write_idx_images(directory / "t10k-images-idx3-ubyte", images[n_train:])
    write_idx_labels(directory / "t10k-labels-idx1-ubyte", labels[n_train:])


@pytest.fixture(scope="session")
def mnist_dir(tmp_path_factory):
    """Directory holding MNIST IDX files.

    Uses ``$MNIST_DIR`` when set; otherwise the 5000-digit MNIST sample that
    ships with mlxtend, shuffled and split 4000/1000.
    """
    env = os.environ.get("MNIST_DIR")
    if env:
        return Path(env)
    data = pytest.importorskip("mlxtend.data")
    x, y = data.mnist_data()
    perm = np.random.default_rng(0).permutation(len(y))
    images = x[perm].reshape(-1, 28, 28).astype(np.uint8)
    labels = y[perm].astype(np.uint8)
    out = tmp_path_factory.mktemp("mnist")
    _write_split(out, images, labels, 4000)
    return out


@pytest.fixture(scope="session")
def mnist(mnist_dir):
    return load_mnist_dir(mnist_dir, 10_000, 1_000)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, detail = results[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
