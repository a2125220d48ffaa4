"""EN-parameterised normalisation of short series into [-1, 1].

``en = 0`` stretches the series onto the full [-1, 1] range (the constant
component is removed); ``en = 1`` divides by the largest magnitude so the
constant component survives. Intermediate values blend the two.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np


class Thresholds(NamedTuple):
    t_low: float
    t_upp: float


def _check_en(en):
    if not 0.0 <= en <= 1.0:
        raise ValueError(f"en must lie in [0, 1], got {en}")


def thresholds(z, en: float) -> Thresholds:
    """Lower and upper normalisation thresholds of one series."""
    _check_en(en)
    z = np.asarray(z, dtype=np.float64)
    lo, hi = batch_thresholds(z[None, :], en)
    return Thresholds(float(lo[0]), float(hi[0]))


def batch_thresholds(z: np.ndarray, en: float):
    """Row-wise thresholds for a ``(batch, n)`` array."""
    zmin = z.min(axis=-1)
    zmax = z.max(axis=-1)
    amin = np.abs(zmin)
    amax = np.abs(zmax)
    # branch order matters: equal extremes first, then the >= tie rule
    first = amin >= amax
    t_low = np.where(first, -amin, zmin - en * (amax + zmin))
    t_upp = np.where(first, zmax + en * (amin - zmax), amax)
    flat = zmin == zmax
    t_low = np.where(flat, 0.0, t_low)
    t_upp = np.where(flat, 0.0, t_upp)
    return t_low, t_upp


def normalize_batch(z: np.ndarray, en: float) -> np.ndarray:
    """Normalise every row of ``z`` (shape ``(batch, n)``)."""
    _check_en(en)
    z = np.asarray(z, dtype=np.float64)
    t_low, t_upp = batch_thresholds(z, en)
    span = (t_upp - t_low)[:, None]
    zero = span == 0.0
    safe = np.where(zero, 1.0, span)
    x = (z - t_low[:, None]) / safe * 2.0 - 1.0
    return np.where(zero, 0.0, x)


def normalize(z, en: float) -> np.ndarray:
    """Normalise a single series; see :func:`normalize_batch`."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise ValueError("normalize expects a 1D series")
    return normalize_batch(z[None, :], en)[0]
