"""Entropy approximation by regression.

Datasets pair normalised kernel series with their exact entropy. The main
model is a gradient-boosted ensemble of regression trees grown with exact
greedy splits on squared error; a brute-force KNN regressor serves as a
baseline.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import EntropyConfig, EntropyError, as_grid, validate_config
from .entropy1d import entropy_batch
from .kernel2d import KernelSpec, extract_block, map_cells
from .metrics import r2
from .normalize import normalize_batch

log = logging.getLogger(__name__)


class EmptyDataset(EntropyError, ValueError):
    pass


class FeatureLengthMismatch(EntropyError, ValueError):
    pass


class TooFewRows(EntropyError, ValueError):
    pass


@dataclass
class Dataset:
    """Feature rows (normalised series) with their entropy labels."""

    features: np.ndarray
    labels: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.float64).ravel()
        if self.features.ndim != 2:
            raise ValueError("features must be a 2D array")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels differ in row count")
        if not np.all(np.isfinite(self.labels)):
            raise ValueError("labels must be finite")

    @property
    def feature_len(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.labels.shape[0]

    def take(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], dict(self.meta))


def build_dataset(images, spec: KernelSpec, cfg: EntropyConfig, en_values,
                  pixel_stride: int = 1, mnist=None) -> Dataset:
    """One row per (image, lattice pixel, en value), in that nesting order.

    Rows whose entropy is undefined (SampEn without matches) are dropped.
    """
    en_values = [float(e) for e in en_values]
    if not en_values:
        raise ValueError("en_values must not be empty")
    if pixel_stride < 1:
        raise ValueError("pixel_stride must be >= 1")
    validate_config(cfg, spec.size)
    feats, labels = [], []
    for grid in images:
        grid = as_grid(grid)
        rows = np.arange(spec.offset, grid.shape[0], pixel_stride)
        cols = np.arange(spec.offset, grid.shape[1], pixel_stride)
        series = extract_block(grid, rows, cols, spec)
        per_en = [normalize_batch(series, en) for en in en_values]
        lab = [entropy_batch(x, cfg, mnist) for x in per_en]
        feats.append(np.stack(per_en, axis=1).reshape(-1, spec.size))
        labels.append(np.stack(lab, axis=1).ravel())
    if not feats:
        raise EmptyDataset("no images given")
    x = np.concatenate(feats)
    y = np.concatenate(labels)
    keep = np.isfinite(y)
    dropped = int((~keep).sum())
    if dropped:
        log.info("dropped %d rows with undefined entropy", dropped)
    if not keep.any():
        raise EmptyDataset("every row has an undefined entropy")
    meta = cfg.to_meta()
    meta.update(en_values=en_values, radius=spec.radius, pixel_stride=pixel_stride,
                images=len(feats), dropped=dropped)
    return Dataset(x[keep], y[keep], meta)


@dataclass(frozen=True)
class GbrtParams:
    n_trees: int = 400
    max_depth: int = 6
    learning_rate: float = 0.1
    min_samples_leaf: int = 20
    subsample: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ValueError("n_trees, max_depth and min_samples_leaf must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError("subsample must lie in (0, 1]")


@dataclass
class Tree:
    """Flat node arrays; node 0 is the root. ``x[feature] <= threshold`` goes left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    is_leaf: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.value.shape[0]

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if not self.is_leaf[i]:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(x.shape[0], dtype=np.int64)
        rows = np.arange(x.shape[0])
        for _ in range(self.depth()):
            go_left = x[rows, self.feature[node]] <= self.threshold[node]
            nxt = np.where(go_left, self.left[node], self.right[node])
            node = np.where(self.is_leaf[node], node, nxt)
        return self.value[node]


@dataclass
class GbrtModel:
    trees: list
    learning_rate: float
    base_score: float
    feature_len: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._packed = None

    def _pack(self):
        if self._packed is None:
            sizes = [t.n_nodes for t in self.trees]
            roots = np.cumsum([0] + sizes[:-1]).astype(np.int64)
            cat = lambda name: np.concatenate([getattr(t, name) for t in self.trees]) \
                if self.trees else np.zeros(0)
            shift = np.repeat(roots, sizes)
            self._packed = dict(
                roots=roots,
                feature=cat("feature").astype(np.int64),
                threshold=cat("threshold").astype(np.float64),
                left=cat("left").astype(np.int64) + shift,
                right=cat("right").astype(np.int64) + shift,
                is_leaf=cat("is_leaf").astype(bool),
                value=cat("value").astype(np.float64),
                depth=max([t.depth() for t in self.trees], default=0),
            )
        return self._packed

    def predict(self, x, chunk: int = 4096) -> np.ndarray:
        """Base score plus learning rate times the sum of leaf values (tree order)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.feature_len:
            raise FeatureLengthMismatch(
                f"model expects {self.feature_len} features, got shape {x.shape}"
            )
        out = np.empty(x.shape[0])
        if not self.trees:
            out[:] = self.base_score
            return out
        p = self._pack()
        for start in range(0, x.shape[0], chunk):
            xb = x[start:start + chunk]
            rows = np.arange(xb.shape[0])[:, None]
            node = np.broadcast_to(p["roots"], (xb.shape[0], p["roots"].size)).copy()
            for _ in range(p["depth"]):
                go_left = xb[rows, p["feature"][node]] <= p["threshold"][node]
                nxt = np.where(go_left, p["left"][node], p["right"][node])
                node = np.where(p["is_leaf"][node], node, nxt)
            leaves = p["value"][node]
            acc = np.zeros(xb.shape[0])
            for t in range(leaves.shape[1]):
                acc += leaves[:, t]
            out[start:start + chunk] = self.base_score + self.learning_rate * acc
        return out

    def predict_one(self, features) -> float:
        return float(self.predict(np.asarray(features, dtype=np.float64)[None, :])[0])


def _grow_tree(xt, order, g, min_leaf, max_depth):
    """Grow one squared-error tree on the rows listed in ``order``.

    ``xt`` is the transposed feature matrix ``(F, n)``; ``order`` holds, per
    feature, the participating row indices sorted by that feature's value.
    """
    n_feat, m = order.shape
    feature, threshold, left, right, is_leaf, value = [], [], [], [], [], []

    def new_node():
        for lst, v in ((feature, 0), (threshold, 0.0), (left, 0), (right, 0),
                       (is_leaf, True), (value, 0.0)):
            lst.append(v)
        return len(value) - 1

    tol = 1e-12 * float(np.dot(g[order[0]], g[order[0]]))
    active = [(new_node(), 0, m)]  # (node id, segment start, segment length)
    cur = order
    for level in range(max_depth + 1):
        if not active:
            break
        gs = g[cur]
        vals = np.take_along_axis(xt, cur, axis=1)
        cs = np.cumsum(gs, axis=1)
        seg_start = np.repeat([s for _, s, _ in active], [c for _, _, c in active])
        seg_len = np.repeat([c for _, _, c in active], [c for _, _, c in active])
        base = np.where(seg_start > 0, cs[:, np.maximum(seg_start - 1, 0)], 0.0)
        seg_total = cs[:, seg_start + seg_len - 1] - base
        pos = np.arange(cur.shape[1])
        n_left = pos - seg_start + 1
        n_right = seg_len - n_left
        next_key = []
        children = []
        for node, s, c in active:
            total = seg_total[0, s]
            value[node] = total / c
            if level == max_depth or c < 2 * min_leaf:
                continue
            lo, hi = s + min_leaf - 1, s + c - min_leaf  # split after lo..hi-1
            if hi <= lo:
                continue
            sl = cs[:, lo:hi] - base[:, lo:hi]
            nl = n_left[lo:hi]
            nr = n_right[lo:hi]
            gain = sl * sl / nl + (total - sl) ** 2 / nr - total * total / c
            distinct = vals[:, lo:hi] < vals[:, lo + 1:hi + 1]
            gain = np.where(distinct, gain, -np.inf)
            best = int(np.argmax(gain))
            f, p = divmod(best, hi - lo)
            if not gain[f, p] > tol:
                continue
            v_lo, v_hi = vals[f, lo + p], vals[f, lo + p + 1]
            thr = 0.5 * (v_lo + v_hi)
            if not v_lo <= thr < v_hi:
                thr = v_lo
            lch, rch = new_node(), new_node()
            feature[node], threshold[node] = f, thr
            left[node], right[node], is_leaf[node] = lch, rch, False
            children.append((node, f, thr, lch, rch, s, c))
        if not children:
            break
        # regroup the sorted orders by child node, keeping value order within a child
        key = np.full(xt.shape[1], 2 * len(children) + 1, dtype=np.int32)
        nxt_active = []
        offset = 0
        for rank, (node, f, thr, lch, rch, s, c) in enumerate(children):
            rows = cur[0, s:s + c]
            go_left = xt[f, rows] <= thr
            key[rows[go_left]] = 2 * rank
            key[rows[~go_left]] = 2 * rank + 1
            n_l = int(go_left.sum())
            nxt_active.append((lch, offset, n_l))
            nxt_active.append((rch, offset + n_l, c - n_l))
            offset += c
        keys = key[cur].astype(np.int16 if len(children) < 16000 else np.int32)
        perm = np.argsort(keys, axis=1, kind="stable")
        cur = np.take_along_axis(cur, perm, axis=1)[:, :offset]
        active = nxt_active
    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        is_leaf=np.asarray(is_leaf, dtype=bool),
        value=np.asarray(value, dtype=np.float64),
    )


def gbrt_fit(data: Dataset, params: GbrtParams = GbrtParams(), callback=None) -> GbrtModel:
    """Fit a squared-error boosted tree ensemble.

    Boosting stops early once a tree cannot split, which happens immediately
    for constant labels. ``callback(tree_index, train_mse)`` is called after
    each tree.
    """
    n = len(data)
    if n == 0:
        raise EmptyDataset("cannot fit an empty dataset")
    if n < 2 * params.min_samples_leaf:
        raise TooFewRows(
            f"{n} rows, need at least {2 * params.min_samples_leaf} for min_samples_leaf"
            f"={params.min_samples_leaf}"
        )
    x = data.features
    y = data.labels
    xt = np.ascontiguousarray(x.T)
    full_order = np.argsort(xt, axis=1, kind="stable")
    base = float(y.mean())
    pred = np.full(n, base)
    rng = np.random.default_rng(params.seed)
    trees = []
    for t in range(params.n_trees):
        g = y - pred
        if params.subsample < 1.0:
            size = max(2 * params.min_samples_leaf, int(round(params.subsample * n)))
            chosen = np.zeros(n, dtype=bool)
            chosen[rng.choice(n, size=min(size, n), replace=False)] = True
            mask = chosen[full_order]
            order = full_order[mask].reshape(full_order.shape[0], -1)
        else:
            order = full_order
        tree = _grow_tree(xt, order, g, params.min_samples_leaf, params.max_depth)
        if tree.n_nodes == 1:
            break
        trees.append(tree)
        pred = pred + params.learning_rate * tree.apply(x)
        if callback is not None:
            callback(t, float(np.mean((y - pred) ** 2)))
    return GbrtModel(trees, params.learning_rate, base, data.feature_len, dict(data.meta))


def gbrt_predict(model: GbrtModel, features) -> float:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 1 or features.size != model.feature_len:
        raise FeatureLengthMismatch(
            f"model expects {model.feature_len} features, got {features.size}"
        )
    return model.predict_one(features)


@dataclass
class KnnModel:
    features: np.ndarray
    labels: np.ndarray
    k: int
    meta: dict = field(default_factory=dict)

    @property
    def feature_len(self) -> int:
        return self.features.shape[1]

    def predict(self, x, chunk: int = 512) -> np.ndarray:
        """Mean label of the k nearest rows (Euclidean); ties go to the lower row index."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.feature_len:
            raise FeatureLengthMismatch(
                f"model expects {self.feature_len} features, got shape {x.shape}"
            )
        out = np.empty(x.shape[0])
        sq = np.einsum("ij,ij->i", self.features, self.features)
        for start in range(0, x.shape[0], chunk):
            xb = x[start:start + chunk]
            d2 = ((xb[:, None, :] - self.features[None, :, :]) ** 2).sum(axis=2) \
                if self.features.shape[0] * xb.shape[0] <= 4_000_000 else \
                np.einsum("ij,ij->i", xb, xb)[:, None] - 2 * xb @ self.features.T + sq[None, :]
            nearest = np.argsort(d2, axis=1, kind="stable")[:, :self.k]
            out[start:start + chunk] = self.labels[nearest].mean(axis=1)
        return out


def knn_fit(data: Dataset, k: int) -> KnnModel:
    if k < 1 or k > len(data):
        raise ValueError(f"k must lie in [1, {len(data)}], got {k}")
    return KnnModel(data.features.copy(), data.labels.copy(), k, dict(data.meta))


def knn_predict(model: KnnModel, features) -> float:
    return float(model.predict(np.asarray(features, dtype=np.float64)[None, :])[0])


def fold_indices(n: int, k: int, seed: int = 0) -> list[np.ndarray]:
    """Seeded shuffle split into ``k`` contiguous folds whose sizes differ by at most one."""
    if k < 2:
        raise ValueError("K must be >= 2")
    if n < k:
        raise TooFewRows(f"{n} rows cannot form {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, k)


def kfold_r2(data: Dataset, k: int = 5, params: GbrtParams = GbrtParams()):
    """Mean and per-fold validation R^2 of GBRT under K-fold cross-validation."""
    folds = fold_indices(len(data), k, params.seed)
    scores = []
    for i, val in enumerate(folds):
        train = np.sort(np.concatenate([f for j, f in enumerate(folds) if j != i]))
        model = gbrt_fit(data.take(train), params)
        scores.append(r2(data.labels[val], model.predict(data.features[val])))
    return float(np.mean(scores)), scores


def ml_entropy_map(grid, spec: KernelSpec, model, en: float, threads: int = 1) -> np.ndarray:
    """Entropy map where each cell is the model's prediction on the normalised kernel series."""
    if model.feature_len != spec.size:
        raise FeatureLengthMismatch(
            f"model expects {model.feature_len} features, kernel of radius "
            f"{spec.radius} yields {spec.size}"
        )
    return map_cells(grid, spec, en, model.predict, threads)
