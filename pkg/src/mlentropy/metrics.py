"""Approximation quality metrics: R^2, Pearson correlation, per-image summaries."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EntropyError


class ConstantTruth(EntropyError, ValueError):
    pass


class ConstantInput(EntropyError, ValueError):
    pass


class EmptyInput(EntropyError, ValueError):
    pass


def _pair(y, y_ml):
    y = np.asarray(y, dtype=np.float64).ravel()
    y_ml = np.asarray(y_ml, dtype=np.float64).ravel()
    if y.shape != y_ml.shape:
        raise ValueError(f"length mismatch: {y.size} vs {y_ml.size}")
    if y.size < 2:
        raise ValueError("need at least two values")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(y_ml))):
        raise ValueError("values must be finite")
    return y, y_ml


def r2(y, y_ml) -> float:
    """Coefficient of determination of ``y_ml`` against the exact ``y``."""
    y, y_ml = _pair(y, y_ml)
    ss_res = np.sum((y - y_ml) ** 2)
    ss_tot = np.sum((y - y.mean()) ** 2)
    # test constancy directly: the mean of equal values can be an ulp off
    if y.min() == y.max() or ss_tot == 0:
        raise ConstantTruth("R^2 is undefined for a constant reference series")
    return float(1.0 - ss_res / ss_tot)


def pearson(y, y_ml) -> float:
    y, y_ml = _pair(y, y_ml)
    dy = y - y.mean()
    dm = y_ml - y_ml.mean()
    sy = np.sqrt(np.sum(dy * dy))
    sm = np.sqrt(np.sum(dm * dm))
    if y.min() == y.max() or y_ml.min() == y_ml.max() or sy == 0 or sm == 0:
        raise ConstantInput("Pearson correlation is undefined for a constant input")
    return float(np.clip(np.sum(dy * dm) / (sy * sm), -1.0, 1.0))


def masked_pair(exact, approx):
    """Flatten two maps and drop cells undefined in either one."""
    exact = np.asarray(exact, dtype=np.float64).ravel()
    approx = np.asarray(approx, dtype=np.float64).ravel()
    if exact.shape != approx.shape:
        raise ValueError("maps differ in size")
    ok = np.isfinite(exact) & np.isfinite(approx)
    return exact[ok], approx[ok]


@dataclass(frozen=True)
class R2Summary:
    mean: float
    std: float
    min: float
    max: float
    count: int

    def row(self) -> str:
        return f"{self.mean:.4f}\t{self.std:.4f}\t{self.min:.5f}\t{self.max:.5f}\t{self.count}"

    HEADER = "R2_mean\tsigma\tminimum\tmaximum\tcount"


def summarize(scores) -> R2Summary:
    """Mean, population standard deviation, min and max of per-image R^2."""
    s = np.asarray(list(scores), dtype=np.float64)
    if s.size == 0:
        raise EmptyInput("no scores to summarise")
    mean = float(s.mean())
    # the mean can land an ulp outside [min, max] for near-identical scores
    mean = min(max(mean, float(s.min())), float(s.max()))
    return R2Summary(mean, float(s.std()), float(s.min()), float(s.max()), int(s.size))
