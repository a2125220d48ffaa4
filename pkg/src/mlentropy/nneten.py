"""Neural network entropy (NNetEn).

The series fills a fixed reservoir matrix W1 row by row (copied cyclically).
Each MNIST image, flattened with a trailing bias pixel, is projected through
W1; the projections are min-max scaled per component over the training set
and a softmax output layer is trained with plain SGD. The test accuracy,
divided by 100, is the entropy.
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .core import EntropyError, LogNNetConfig

IMAGES_MAGIC = 2051
LABELS_MAGIC = 2049


class BadMagic(EntropyError, ValueError):
    pass


class CountMismatch(EntropyError, ValueError):
    pass


class TruncatedFile(EntropyError, ValueError):
    pass


class SeriesTooLong(EntropyError, ValueError):
    def __init__(self, n, capacity):
        self.n = n
        self.capacity = capacity
        super().__init__(f"series of length {n} exceeds reservoir capacity {capacity}")


@dataclass(frozen=True)
class MnistSet:
    """Flattened images scaled to [0, 1] (shape ``(count, rows*cols)``) and labels."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise CountMismatch(
                f"{len(self.images)} images but {len(self.labels)} labels"
            )

    def __len__(self):
        return len(self.labels)

    def head(self, count: int) -> "MnistSet":
        return MnistSet(self.images[:count], self.labels[:count])


@dataclass(frozen=True)
class MnistSplit:
    train: MnistSet
    test: MnistSet

    def subset(self, train_count: int, test_count: int) -> "MnistSplit":
        return MnistSplit(self.train.head(train_count), self.test.head(test_count))


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse_idx(raw: bytes, magic: int, ndims: int, name: str):
    header = 4 + 4 * ndims
    if len(raw) < header:
        raise TruncatedFile(f"{name}: header truncated")
    got = struct.unpack(">I", raw[:4])[0]
    if got != magic:
        raise BadMagic(f"{name}: magic {got}, expected {magic}")
    dims = struct.unpack(">" + "I" * ndims, raw[4:header])
    size = int(np.prod(dims))
    if len(raw) < header + size:
        raise TruncatedFile(f"{name}: expected {size} payload bytes, got {len(raw) - header}")
    data = np.frombuffer(raw, dtype=np.uint8, count=size, offset=header)
    return data.reshape(dims)


def load_mnist(images_path, labels_path) -> MnistSet:
    """Read an IDX image/label file pair (optionally gzip-compressed)."""
    images = _parse_idx(_read_bytes(images_path), IMAGES_MAGIC, 3, str(images_path))
    labels = _parse_idx(_read_bytes(labels_path), LABELS_MAGIC, 1, str(labels_path))
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(
            f"{images.shape[0]} images but {labels.shape[0]} labels"
        )
    flat = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return MnistSet(flat, labels.astype(np.int64))


def write_idx_images(path, images: np.ndarray) -> None:
    """Write ``(count, rows, cols)`` uint8 images as an IDX file."""
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGES_MAGIC, count, rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


_STANDARD_NAMES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _find(directory: Path, stem: str) -> Path:
    for candidate in (stem, stem + ".gz", stem.replace("-idx", ".idx"),
                      stem.replace("-idx", ".idx") + ".gz"):
        p = directory / candidate
        if p.exists():
            return p
    raise FileNotFoundError(f"no {stem} file in {directory}")


def load_mnist_dir(directory, train_count=None, test_count=None) -> MnistSplit:
    """Load the four standard MNIST IDX files from ``directory``."""
    directory = Path(directory)
    parts = {}
    for part, (img, lab) in _STANDARD_NAMES.items():
        parts[part] = load_mnist(_find(directory, img), _find(directory, lab))
    split = MnistSplit(parts["train"], parts["test"])
    if train_count is not None or test_count is not None:
        split = split.subset(train_count or len(split.train), test_count or len(split.test))
    return split


def fill_reservoir(x, cfg: LogNNetConfig = LogNNetConfig()) -> np.ndarray:
    """Reservoir matrix filled row-major with the series, copied cyclically."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise ValueError("series must be a non-empty 1D sequence")
    if x.size > cfg.capacity:
        raise SeriesTooLong(x.size, cfg.capacity)
    return np.resize(x, cfg.capacity).reshape(cfg.reservoir_rows, cfg.input_dim)


@numba.njit(cache=True, nogil=True)
def _project(w1, images):
    # fixed summation order keeps results independent of BLAS threading
    n, npix = images.shape
    rows = w1.shape[0]
    out = np.empty((n, rows))
    for i in range(n):
        for p in range(rows):
            acc = 0.0
            for q in range(npix):
                acc += w1[p, q] * images[i, q]
            acc += w1[p, npix]  # bias input of 1
            out[i, p] = acc
    return out


@numba.njit(cache=True, nogil=True)
def _train_softmax(feats, labels, order, lr, n_classes):
    n, k = feats.shape
    w = np.zeros((n_classes, k))
    logits = np.empty(n_classes)
    for step in range(order.shape[0]):
        i = order[step]
        top = -np.inf
        for c in range(n_classes):
            acc = 0.0
            for j in range(k):
                acc += w[c, j] * feats[i, j]
            logits[c] = acc
            if acc > top:
                top = acc
        total = 0.0
        for c in range(n_classes):
            logits[c] = np.exp(logits[c] - top)
            total += logits[c]
        for c in range(n_classes):
            g = logits[c] / total
            if c == labels[i]:
                g -= 1.0
            for j in range(k):
                w[c, j] -= lr * g * feats[i, j]
    return w


@numba.njit(cache=True, nogil=True)
def _count_correct(w, feats, labels):
    n, k = feats.shape
    n_classes = w.shape[0]
    correct = 0
    for i in range(n):
        best = 0
        best_val = -np.inf
        for c in range(n_classes):
            acc = 0.0
            for j in range(k):
                acc += w[c, j] * feats[i, j]
            if acc > best_val:
                best_val = acc
                best = c
        if best == labels[i]:
            correct += 1
    return correct


def _hidden_features(sh, lo, hi):
    span = hi - lo
    flat = span == 0.0
    scaled = (sh - lo) / np.where(flat, 1.0, span) - 0.5
    scaled[:, flat] = 0.0
    return np.hstack([scaled, np.ones((sh.shape[0], 1))])


def lognnet_eval(w1: np.ndarray, mnist: MnistSplit, cfg: LogNNetConfig = LogNNetConfig()) -> float:
    """Train the output layer on ``mnist.train``; return test accuracy in percent."""
    mnist = mnist.subset(cfg.train_count, cfg.test_count)
    if len(mnist.train) == 0 or len(mnist.test) == 0:
        raise ValueError("train and test sets must be non-empty")
    npix = mnist.train.images.shape[1]
    if w1.shape != (cfg.reservoir_rows, npix + 1):
        raise ValueError(
            f"reservoir shape {w1.shape} does not match {npix} pixels plus bias"
        )
    w1 = np.ascontiguousarray(w1, dtype=np.float64)
    sh_train = _project(w1, np.ascontiguousarray(mnist.train.images))
    sh_test = _project(w1, np.ascontiguousarray(mnist.test.images))
    lo = sh_train.min(axis=0)
    hi = sh_train.max(axis=0)
    f_train = _hidden_features(sh_train, lo, hi)
    f_test = _hidden_features(sh_test, lo, hi)

    rng = np.random.default_rng(cfg.seed)
    n = len(mnist.train)
    order = np.concatenate([rng.permutation(n) for _ in range(cfg.epochs)])
    w2 = _train_softmax(f_train, mnist.train.labels, order, cfg.learning_rate, 10)
    correct = _count_correct(w2, f_test, mnist.test.labels)
    return 100.0 * correct / len(mnist.test)


def nneten(x, mnist: MnistSplit, cfg: LogNNetConfig = LogNNetConfig()) -> float:
    """NNetEn of one normalised series, in [0, 1]."""
    return lognnet_eval(fill_reservoir(x, cfg), mnist, cfg) / 100.0


def nneten_batch(x: np.ndarray, mnist: MnistSplit, cfg: LogNNetConfig = LogNNetConfig()) -> np.ndarray:
    x = np.atleast_2d(x)
    return np.array([nneten(row, mnist, cfg) for row in x])
