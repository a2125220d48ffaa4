"""Chaotic map series, bifurcation datasets, the cross-map experiment and test textures."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import EntropyError
from .entropy1d import svd_entropy_batch
from .metrics import pearson
from .normalize import normalize_batch
from .regress import Dataset, GbrtModel, GbrtParams, gbrt_fit


class NonFinite(EntropyError, ArithmeticError):
    pass


class MapKind(str, enum.Enum):
    PLANCK = "planck"
    LOGISTIC = "logistic"


R_RANGE = {MapKind.PLANCK: (3.0, 7.0), MapKind.LOGISTIC: (1.0, 4.0)}
X0 = {MapKind.PLANCK: 4.0, MapKind.LOGISTIC: 0.1}


@dataclass(frozen=True)
class MapConfig:
    kind: MapKind
    r: float
    length: int
    x0: float | None = None
    transient: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "kind", MapKind(self.kind))
        if self.x0 is None:
            object.__setattr__(self, "x0", X0[self.kind])
        lo, hi = R_RANGE[self.kind]
        if not lo <= self.r <= hi:
            raise ValueError(f"r={self.r} outside [{lo}, {hi}] for the {self.kind.value} map")
        if self.transient < 0 or self.length < 1:
            raise ValueError("transient must be >= 0 and length >= 1")


def _step(kind: MapKind, x, r):
    if kind is MapKind.PLANCK:
        return r * x ** 3 / (1.0 + np.exp(x))
    return r * x * (1.0 - x)


def iterate_map(kind, r, length: int, transient: int = 1000, x0=None) -> np.ndarray:
    """Iterates for each control value in ``r``; returns shape ``(len(r), length)``.

    The first ``transient`` iterates after ``x0`` are discarded.
    """
    kind = MapKind(kind)
    r = np.atleast_1d(np.asarray(r, dtype=np.float64))
    x = np.full(r.shape, X0[kind] if x0 is None else float(x0))
    out = np.empty((r.size, length))
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(transient):
            x = _step(kind, x, r)
        for i in range(length):
            x = _step(kind, x, r)
            out[:, i] = x
    if not np.all(np.isfinite(out)):
        raise NonFinite(f"{kind.value} map diverged")
    return out


def generate_series(cfg: MapConfig) -> np.ndarray:
    return iterate_map(cfg.kind, [cfg.r], cfg.length, cfg.transient, cfg.x0)[0]


def r_grid(kind, count: int) -> np.ndarray:
    """Evenly spaced control values covering the map's whole range."""
    lo, hi = R_RANGE[MapKind(kind)]
    return np.linspace(lo, hi, count)


def svd_series_dataset(kind, r_values, series_len: int = 29, d: int = 20, delay: int = 1,
                       en: float = 0.0) -> Dataset:
    kind = MapKind(kind)
    raw = iterate_map(kind, r_values, series_len)
    x = normalize_batch(raw, en)
    y = svd_entropy_batch(x, d, delay)
    meta = dict(kind="svd", d=d, delay=delay, en=en, source=f"{kind.value} map",
                r_min=float(np.min(r_values)), r_max=float(np.max(r_values)), rows=len(y))
    return Dataset(x, y, meta)


def bifurcation_svd_dataset(kind, r_count: int, series_len: int = 29, d: int = 20,
                            delay: int = 1, en: float = 0.0) -> Dataset:
    """SvdEn-labelled map series over an even r grid, rows in ascending r."""
    if r_count < 2:
        raise ValueError("r_count must be >= 2")
    return svd_series_dataset(kind, r_grid(kind, r_count), series_len, d, delay, en)


def bifurcation_points(kind, r_count: int, last: int = 100, transient: int = 1000):
    """Control values and the last ``last`` iterates for each, for diagrams."""
    r = r_grid(kind, r_count)
    return r, iterate_map(kind, r, last, transient)


@dataclass
class CrossMapResult:
    pearson: float
    r: np.ndarray
    svden: np.ndarray
    ml_svden: np.ndarray
    model: GbrtModel


def cross_map_experiment(train_count: int = 20_000, test_count: int = 3_000,
                         params: GbrtParams = GbrtParams(), train_kind="planck",
                         test_kind="logistic") -> CrossMapResult:
    """Train on one map's SvdEn series, score the other map's series."""
    if train_count < 100 or test_count < 100:
        raise ValueError("train and test counts must be >= 100")
    train = bifurcation_svd_dataset(train_kind, train_count)
    test = bifurcation_svd_dataset(test_kind, test_count)
    model = gbrt_fit(train, params)
    pred = model.predict(test.features)
    return CrossMapResult(pearson(test.labels, pred), r_grid(test_kind, test_count),
                          test.labels, pred, model)


def window_dip(r_values, values, centre: float, half_width: float = 0.05):
    """Value at ``centre`` (nearest sample) and the mean over ``centre +- half_width``."""
    r_values = np.asarray(r_values)
    values = np.asarray(values)
    near = np.abs(r_values - centre) <= half_width
    at = values[np.argmin(np.abs(r_values - centre))]
    return float(at), float(values[near].mean())


# --- procedural textures ---------------------------------------------------

class TextureKind(str, enum.Enum):
    SMOOTH = "smooth"
    SPECKLE = "speckle"
    LOGISTIC2D = "logistic2d"
    FRACTAL = "fractal"


FRACTAL_OCTAVES = 6
FRACTAL_LEVELS = 1000


def _bilinear(coarse: np.ndarray, rows: int, cols: int) -> np.ndarray:
    cr, cc = coarse.shape
    yi = np.linspace(0, cr - 1, rows)
    xi = np.linspace(0, cc - 1, cols)
    y0 = np.minimum(np.floor(yi).astype(int), cr - 2)
    x0 = np.minimum(np.floor(xi).astype(int), cc - 2)
    fy = (yi - y0)[:, None]
    fx = (xi - x0)[None, :]
    a = coarse[y0][:, x0]
    b = coarse[y0][:, x0 + 1]
    c = coarse[y0 + 1][:, x0]
    d = coarse[y0 + 1][:, x0 + 1]
    return (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy


def gen_texture(seed: int, kind, rows: int = 256, cols: int = 256, cell: int = 16) -> np.ndarray:
    """Deterministic procedural raster.

    ``smooth`` is value noise (a coarse random lattice, one node every
    ``cell`` pixels, bilinearly upsampled); ``speckle`` is i.i.d. uniform
    noise; ``logistic2d`` stacks logistic-map series whose r grows down the
    rows from 2.5 to 4. ``fractal`` sums value-noise octaves (lattice spacing
    ``2 * cell`` halving each octave, amplitude halving too) and quantises to
    integer levels like a sensor's digital numbers; its values are not
    confined to [0, 1].
    """
    kind = TextureKind(kind)
    if rows < 8 or cols < 8:
        raise ValueError("texture dimensions must be >= 8")
    rng = np.random.default_rng(seed)
    if kind is TextureKind.SMOOTH:
        coarse = rng.random((rows // cell + 2, cols // cell + 2))
        return _bilinear(coarse, rows, cols)
    if kind is TextureKind.SPECKLE:
        return rng.random((rows, cols))
    if kind is TextureKind.FRACTAL:
        total = np.zeros((rows, cols))
        for k in range(FRACTAL_OCTAVES):
            step = max(1, (2 * cell) >> k)
            coarse = rng.random((rows // step + 2, cols // step + 2))
            total += 0.5 ** k * _bilinear(coarse, rows, cols)
        return np.rint(total * FRACTAL_LEVELS)
    r = np.linspace(2.5, 4.0, rows)
    x0 = 0.1 + 0.8 * rng.random()
    return iterate_map(MapKind.LOGISTIC, r, cols, 1000, x0)
