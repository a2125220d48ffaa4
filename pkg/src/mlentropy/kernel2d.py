"""Circular-kernel serialisation of image neighbourhoods and entropy maps."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import EntropyConfig, EntropyError, as_grid, validate_config
from .entropy1d import entropy_batch
from .normalize import normalize_batch

# pixel counts of the circular kernels for radius 1..6
KERNEL_SIZES = {1: 5, 2: 13, 3: 29, 4: 49, 5: 81, 6: 113}

# output rows handed to one worker; fixed so results never depend on thread count
ROW_BLOCK = 8


class UnsupportedRadius(EntropyError, ValueError):
    pass


def kernel_offsets(radius: int) -> list[tuple[int, int]]:
    """Pixel offsets of a circular kernel, centre first.

    Members are the integer ``(di, dj)`` with ``di**2 + dj**2 <= R**2``,
    ordered by distance from the centre, then by the angle
    ``atan2(dj, di)`` taken in ``[0, 2*pi)``, then by ``di``.
    """
    if radius < 1:
        raise UnsupportedRadius(f"radius must be >= 1, got {radius}")
    pts = [
        (di, dj)
        for di in range(-radius, radius + 1)
        for dj in range(-radius, radius + 1)
        if di * di + dj * dj <= radius * radius
    ]
    expected = KERNEL_SIZES.get(radius)
    if expected is not None and len(pts) != expected:
        raise UnsupportedRadius(f"radius {radius}: {len(pts)} pixels, expected {expected}")

    def key(p):
        di, dj = p
        return (di * di + dj * dj, math.atan2(dj, di) % (2 * math.pi), di)

    return sorted(pts, key=key)


def kernel_size(radius: int) -> int:
    return len(kernel_offsets(radius))


def radius_for_length(n: int) -> int:
    for r, size in KERNEL_SIZES.items():
        if size == n:
            return r
    raise UnsupportedRadius(f"no kernel radius has {n} pixels")


@dataclass(frozen=True)
class KernelSpec:
    radius: int
    step: int = 1
    offset: int = 0
    offsets: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.step < 1:
            raise ValueError("step must be >= 1")
        if self.offset < 0:
            raise ValueError("offset must be >= 0")
        object.__setattr__(self, "offsets", tuple(kernel_offsets(self.radius)))

    @property
    def size(self) -> int:
        return len(self.offsets)

    def output_shape(self, shape) -> tuple[int, int]:
        rows, cols = shape
        out = tuple(
            max(0, -(-(n - self.offset) // self.step)) for n in (rows, cols)
        )
        if 0 in out:
            raise ValueError(f"offset {self.offset} leaves no cells in a {rows}x{cols} grid")
        return out

    def centres(self, n: int) -> np.ndarray:
        return np.arange(self.offset, n, self.step)


def mirror_index(i, length: int):
    """Half-sample symmetric reflection of index ``i`` into ``[0, length)``.

    ``-1 -> 0``, ``-2 -> 1``, ``length -> length - 1``; works on arrays too.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    i = np.mod(i, 2 * length)
    out = np.where(i >= length, 2 * length - 1 - i, i)
    return int(out) if np.ndim(out) == 0 else out


def extract_series(grid, centre, spec: KernelSpec) -> np.ndarray:
    """Kernel pixels around ``centre`` as a 1D series (centre pixel first)."""
    grid = as_grid(grid)
    i, j = centre
    rows, cols = grid.shape
    if not (0 <= i < rows and 0 <= j < cols):
        raise IndexError(f"centre {centre} outside {rows}x{cols} grid")
    off = np.asarray(spec.offsets)
    return grid[mirror_index(i + off[:, 0], rows), mirror_index(j + off[:, 1], cols)]


def extract_block(grid: np.ndarray, row_centres, col_centres, spec: KernelSpec) -> np.ndarray:
    """Series for every (row, col) centre pair, shape ``(len(rows)*len(cols), N)``."""
    rows, cols = grid.shape
    off = np.asarray(spec.offsets)
    ri = mirror_index(np.asarray(row_centres)[:, None] + off[None, :, 0], rows)
    cj = mirror_index(np.asarray(col_centres)[:, None] + off[None, :, 1], cols)
    block = grid[ri[:, None, :], cj[None, :, :]]
    return block.reshape(-1, spec.size)


def map_cells(grid, spec: KernelSpec, en: float,
              fn: Callable[[np.ndarray], np.ndarray], threads: int = 1) -> np.ndarray:
    """Apply ``fn`` to the normalised kernel series of every output cell.

    Work is split into fixed blocks of output rows, so the result is
    identical for any ``threads``.
    """
    grid = as_grid(grid)
    out_rows, out_cols = spec.output_shape(grid.shape)
    row_c = spec.centres(grid.shape[0])
    col_c = spec.centres(grid.shape[1])
    out = np.empty((out_rows, out_cols))

    def work(start):
        stop = min(start + ROW_BLOCK, out_rows)
        series = extract_block(grid, row_c[start:stop], col_c, spec)
        values = fn(normalize_batch(series, en))
        out[start:stop] = values.reshape(stop - start, out_cols)

    starts = range(0, out_rows, ROW_BLOCK)
    if threads <= 1:
        for s in starts:
            work(s)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    return out


def entropy_map(grid, spec: KernelSpec, cfg: EntropyConfig, en: float | None = None,
                threads: int = 1, mnist=None) -> np.ndarray:
    """Exact entropy of every kernel series; undefined cells are NaN."""
    en = cfg.en if en is None else en
    validate_config(cfg, spec.size)
    return map_cells(grid, spec, en, lambda x: entropy_batch(x, cfg, mnist), threads)
