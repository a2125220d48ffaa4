"""Binary file formats for grids, datasets and models, plus raster ingestion.

All multi-byte fields are little-endian except PGM, which is big-endian by
its own definition.

EGRD  magic, u32 version=1, u32 rows, u32 cols, rows*cols f32 (NaN = undefined)
EDST  magic, u32 version=1, u32 feature_len, u64 row_count, u32 meta length,
      UTF-8 JSON meta, then row_count rows of (feature_len + 1) f64
EGBM  magic, u32 version=1, u32 feature_len, f64 base_score, f64 learning_rate,
      u32 tree count, then per tree u32 node count and the nodes
      (u32 feature, f64 threshold, u32 left, u32 right, u8 leaf, f64 value)
EKNN  magic, u32 version=1, u32 k, then an embedded EDST dataset
"""
from __future__ import annotations

import csv
import json
import re
import struct
from pathlib import Path

import numpy as np

from .core import EntropyError
from .regress import Dataset, GbrtModel, KnnModel, Tree

VERSION = 1
_NODE = struct.Struct("<IdIIBd")


class UnsupportedFormat(EntropyError, ValueError):
    pass


class Truncated(EntropyError, ValueError):
    pass


class HeaderMismatch(EntropyError, ValueError):
    pass


class _Reader:
    def __init__(self, raw: bytes, name: str):
        self.raw = raw
        self.pos = 0
        self.name = name

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.raw):
            raise Truncated(f"{self.name}: unexpected end of file")
        vals = struct.unpack_from(fmt, self.raw, self.pos)
        self.pos += size
        return vals if len(vals) > 1 else vals[0]

    def array(self, dtype, count: int) -> np.ndarray:
        dtype = np.dtype(dtype)
        size = dtype.itemsize * count
        if self.pos + size > len(self.raw):
            raise Truncated(f"{self.name}: payload truncated")
        out = np.frombuffer(self.raw, dtype=dtype, count=count, offset=self.pos).copy()
        self.pos += size
        return out

    def magic(self, expected: bytes):
        if self.raw[:4] != expected:
            raise UnsupportedFormat(f"{self.name}: not an {expected.decode()} file")
        self.pos = 4
        version = self.take("<I")
        if version != VERSION:
            raise UnsupportedFormat(f"{self.name}: unsupported version {version}")


# --- grids -----------------------------------------------------------------

def grid_bytes(grid) -> bytes:
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise ValueError("grid must be 2D")
    rows, cols = grid.shape
    head = b"EGRD" + struct.pack("<III", VERSION, rows, cols)
    return head + np.ascontiguousarray(grid, dtype="<f4").tobytes()


def write_grid(grid, path) -> None:
    Path(path).write_bytes(grid_bytes(grid))


def parse_grid(raw: bytes, name: str = "<bytes>") -> np.ndarray:
    rd = _Reader(raw, name)
    rd.magic(b"EGRD")
    rows, cols = rd.take("<II")
    data = rd.array("<f4", rows * cols)
    return data.astype(np.float64).reshape(rows, cols)


def read_grid(path) -> np.ndarray:
    return parse_grid(Path(path).read_bytes(), str(path))


def _parse_pgm(raw: bytes, name: str) -> np.ndarray:
    # header: P5 <ws> width <ws> height <ws> maxval <single ws> data; '#' comments
    tokens = []
    pos = 2
    token_re = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\d+)")
    for _ in range(3):
        m = token_re.match(raw, pos)
        if not m:
            raise UnsupportedFormat(f"{name}: malformed PGM header")
        tokens.append(int(m.group(1)))
        pos = m.end()
    pos += 1
    width, height, maxval = tokens
    if not 0 < maxval < 65536:
        raise UnsupportedFormat(f"{name}: bad maxval {maxval}")
    dtype = ">u1" if maxval < 256 else ">u2"
    count = width * height
    need = count * np.dtype(dtype).itemsize
    if len(raw) - pos < need:
        raise Truncated(f"{name}: expected {need} pixel bytes, got {len(raw) - pos}")
    pix = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
    return pix.astype(np.float64).reshape(height, width)


def read_raster(path) -> np.ndarray:
    """Load a binary PGM (8 or 16 bit) or EGRD file as a float64 grid."""
    raw = Path(path).read_bytes()
    if raw[:4] == b"EGRD":
        return parse_grid(raw, str(path))
    if raw[:2] == b"P5":
        return _parse_pgm(raw, str(path))
    raise UnsupportedFormat(f"{path}: expected a P5 PGM or EGRD file")


def write_pgm(grid, path, maxval: int | None = None) -> None:
    """Write non-negative integer pixel values as binary PGM."""
    g = np.asarray(grid)
    if maxval is None:
        maxval = max(int(g.max()), 1)
    if not 0 < maxval < 65536:
        raise ValueError("maxval must lie in 1..65535")
    dtype = ">u1" if maxval < 256 else ">u2"
    rows, cols = g.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n{maxval}\n".encode())
        fh.write(np.clip(np.rint(g), 0, maxval).astype(dtype).tobytes())


def write_heatmap_pgm(grid, path) -> dict:
    """8-bit min-max rendering; NaN cells become 0.

    The scale bounds and undefined-cell count go to ``<path>.txt``.
    """
    g = np.asarray(grid, dtype=np.float64)
    finite = np.isfinite(g)
    undefined = int((~finite).sum())
    lo = float(g[finite].min()) if finite.any() else 0.0
    hi = float(g[finite].max()) if finite.any() else 0.0
    span = hi - lo
    scaled = np.zeros_like(g)
    if span > 0:
        scaled[finite] = (g[finite] - lo) / span * 255.0
    scaled[~finite] = 0.0
    write_pgm(scaled, path, maxval=255)
    info = {"min": lo, "max": hi, "undefined": undefined}
    Path(str(path) + ".txt").write_text(
        "".join(f"{k}={v}\n" for k, v in info.items())
    )
    return info


# --- datasets --------------------------------------------------------------

def dataset_bytes(data: Dataset) -> bytes:
    meta = json.dumps(data.meta, sort_keys=True).encode("utf-8")
    head = b"EDST" + struct.pack("<IIQI", VERSION, data.feature_len, len(data), len(meta))
    body = np.hstack([data.features, data.labels[:, None]]).astype("<f8")
    return head + meta + body.tobytes()


def parse_dataset(raw: bytes, name: str = "<bytes>", feature_len: int | None = None) -> Dataset:
    rd = _Reader(raw, name)
    rd.magic(b"EDST")
    n_feat, n_rows, meta_len = rd.take("<IQI")
    if feature_len is not None and n_feat != feature_len:
        raise HeaderMismatch(f"{name}: feature_len {n_feat}, expected {feature_len}")
    if rd.pos + meta_len > len(raw):
        raise Truncated(f"{name}: meta block truncated")
    meta = json.loads(raw[rd.pos:rd.pos + meta_len].decode("utf-8"))
    rd.pos += meta_len
    body = rd.array("<f8", n_rows * (n_feat + 1)).reshape(n_rows, n_feat + 1)
    if rd.pos != len(raw):
        raise HeaderMismatch(f"{name}: {len(raw) - rd.pos} trailing bytes")
    return Dataset(body[:, :n_feat], body[:, n_feat], meta)


def write_dataset(data: Dataset, path) -> None:
    Path(path).write_bytes(dataset_bytes(data))


def read_dataset(path, feature_len: int | None = None) -> Dataset:
    return parse_dataset(Path(path).read_bytes(), str(path), feature_len)


def write_dataset_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{i + 1}" for i in range(data.feature_len)] + ["label"])
        for row, label in zip(data.features, data.labels):
            w.writerow([repr(float(v)) for v in row] + [repr(float(label))])


# --- models ----------------------------------------------------------------

def model_bytes(model: GbrtModel) -> bytes:
    parts = [b"EGBM", struct.pack("<IIddI", VERSION, model.feature_len, model.base_score,
                                  model.learning_rate, len(model.trees))]
    for t in model.trees:
        parts.append(struct.pack("<I", t.n_nodes))
        for i in range(t.n_nodes):
            parts.append(_NODE.pack(int(t.feature[i]), float(t.threshold[i]), int(t.left[i]),
                                    int(t.right[i]), int(bool(t.is_leaf[i])), float(t.value[i])))
    return b"".join(parts)


def parse_model(raw: bytes, name: str = "<bytes>") -> GbrtModel:
    rd = _Reader(raw, name)
    rd.magic(b"EGBM")
    feature_len, base, lr, n_trees = rd.take("<IddI")
    trees = []
    for _ in range(n_trees):
        n_nodes = rd.take("<I")
        if rd.pos + n_nodes * _NODE.size > len(raw):
            raise Truncated(f"{name}: tree truncated")
        nodes = list(_NODE.iter_unpack(raw[rd.pos:rd.pos + n_nodes * _NODE.size]))
        rd.pos += n_nodes * _NODE.size
        cols = list(zip(*nodes))
        tree = Tree(
            feature=np.array(cols[0], dtype=np.int64),
            threshold=np.array(cols[1], dtype=np.float64),
            left=np.array(cols[2], dtype=np.int64),
            right=np.array(cols[3], dtype=np.int64),
            is_leaf=np.array(cols[4], dtype=bool),
            value=np.array(cols[5], dtype=np.float64),
        )
        internal = ~tree.is_leaf
        if np.any(tree.feature[internal] >= feature_len):
            raise HeaderMismatch(f"{name}: split feature index out of range")
        if np.any(tree.left[internal] >= n_nodes) or np.any(tree.right[internal] >= n_nodes):
            raise HeaderMismatch(f"{name}: child index out of range")
        trees.append(tree)
    if rd.pos != len(raw):
        raise HeaderMismatch(f"{name}: {len(raw) - rd.pos} trailing bytes")
    return GbrtModel(trees, lr, base, feature_len)


def knn_bytes(model: KnnModel) -> bytes:
    data = Dataset(model.features, model.labels, model.meta)
    return b"EKNN" + struct.pack("<II", VERSION, model.k) + dataset_bytes(data)


def parse_knn(raw: bytes, name: str = "<bytes>") -> KnnModel:
    rd = _Reader(raw, name)
    rd.magic(b"EKNN")
    k = rd.take("<I")
    data = parse_dataset(raw[rd.pos:], name)
    return KnnModel(data.features, data.labels, k, data.meta)


def write_model(model, path) -> None:
    raw = knn_bytes(model) if isinstance(model, KnnModel) else model_bytes(model)
    Path(path).write_bytes(raw)


def read_model(path):
    """Load an EGBM or EKNN model file."""
    raw = Path(path).read_bytes()
    if raw[:4] == b"EGBM":
        return parse_model(raw, str(path))
    if raw[:4] == b"EKNN":
        return parse_knn(raw, str(path))
    raise UnsupportedFormat(f"{path}: not a model file")
