"""Exact SvdEn, PermEn and SampEn on normalised series.

Each measure has a batched form operating on a ``(batch, n)`` array and a
single-series wrapper that routes through it, so map and pointwise results
agree bit for bit.
"""
from __future__ import annotations

import math

import numpy as np

from .core import EntropyConfig, EntropyKind, IncompatibleLength, validate_config


def _n_windows(n, d, delay, kind):
    rows = n - (d - 1) * delay
    if rows < 1:
        raise IncompatibleLength(kind, n, (d - 1) * delay + 1)
    return rows


def embed(x, d: int, delay: int) -> np.ndarray:
    """Delay-embedding matrix: row ``i`` is ``x[i], x[i+delay], ...``."""
    x = np.asarray(x, dtype=np.float64)
    rows = _n_windows(x.shape[-1], d, delay, "embedding")
    cols = np.arange(rows)[:, None] + delay * np.arange(d)[None, :]
    return x[..., cols]


def singular_spectrum(x, d: int, delay: int):
    """Singular values of the embedding matrix and their normalised weights.

    Values below the usual numerical-rank cutoff are treated as zero.
    """
    a = embed(x, d, delay)
    s = np.linalg.svd(a, compute_uv=False)
    s = _clip_rank(s, max(a.shape[-2:]))
    total = s.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        weights = np.where(total > 0, s / np.where(total > 0, total, 1.0), 0.0)
    return s, weights


def _clip_rank(s, dim):
    cutoff = s[..., :1] * dim * np.finfo(np.float64).eps
    return np.where(s > cutoff, s, 0.0)


def svd_entropy_batch(x: np.ndarray, d: int = 3, delay: int = 1) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    _, w = singular_spectrum(x, d, delay)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(w > 0, -w * np.log2(np.where(w > 0, w, 1.0)), 0.0)
    return terms.sum(axis=-1) / math.log2(d)


def svd_entropy(x, d: int = 3, delay: int = 1) -> float:
    """Normalised SVD entropy in [0, 1]; an all-zero embedding gives 0."""
    return float(svd_entropy_batch(np.asarray(x, dtype=np.float64)[None, :], d, delay)[0])


def ordinal_codes(x: np.ndarray, d: int, delay: int) -> np.ndarray:
    """Integer code of the ordinal pattern of each embedding window.

    Ties are ranked by position (stable sort).
    """
    windows = embed(x, d, delay)
    perm = np.argsort(windows, axis=-1, kind="stable")
    weights = d ** np.arange(d - 1, -1, -1, dtype=np.int64)
    return perm.astype(np.int64) @ weights


def _row_entropy_from_codes(codes: np.ndarray) -> np.ndarray:
    """Base-2 Shannon entropy of the code distribution in each row."""
    b, w = codes.shape
    s = np.sort(codes, axis=1)
    new_run = np.ones_like(s, dtype=bool)
    new_run[:, 1:] = s[:, 1:] != s[:, :-1]
    flat = new_run.ravel()
    starts = np.flatnonzero(flat)
    counts = np.diff(np.append(starts, flat.size))
    run_row = starts // w
    p = counts / w
    return np.bincount(run_row, weights=-p * np.log2(p), minlength=b)


def perm_entropy_batch(x: np.ndarray, d: int = 5, delay: int = 5) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    codes = ordinal_codes(x, d, delay)
    h = _row_entropy_from_codes(codes)
    return h / math.log2(math.factorial(d))


def perm_entropy(x, d: int = 5, delay: int = 5) -> float:
    """Normalised permutation entropy in [0, 1]."""
    return float(perm_entropy_batch(np.asarray(x, dtype=np.float64)[None, :], d, delay)[0])


def match_counts(x: np.ndarray, m: int, r: np.ndarray):
    """Ordered template-pair match counts for lengths ``m`` and ``m + 1``.

    Both lengths use the same ``n - m`` template start positions and skip
    self-matches. ``x`` is ``(batch, n)``; ``r`` is one tolerance per row.
    """
    b, n = x.shape
    count = n - m
    c_m = np.zeros(b, dtype=np.int64)
    c_m1 = np.zeros(b, dtype=np.int64)
    r = r[:, None]
    for lag in range(1, count):
        diff = np.abs(x[:, lag:] - x[:, :-lag])
        # chebyshev distance of templates starting at i and i + lag
        span = count - lag
        dist = diff[:, :span]
        for j in range(1, m):
            dist = np.maximum(dist, diff[:, j:j + span])
        hit_m = dist <= r
        hit_m1 = hit_m & (diff[:, m:m + span] <= r)
        c_m += hit_m.sum(axis=1)
        c_m1 += hit_m1.sum(axis=1)
    return 2 * c_m, 2 * c_m1


def sample_entropy_batch(x: np.ndarray, m: int = 2, r_coef: float = 0.2) -> np.ndarray:
    """Row-wise sample entropy; NaN where either match count is zero."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[1]
    if n < m + 2:
        raise IncompatibleLength("samp", n, m + 2)
    r = r_coef * x.std(axis=1)
    c_m, c_m1 = match_counts(x, m, r)
    out = np.full(x.shape[0], np.nan)
    ok = (c_m > 0) & (c_m1 > 0)
    out[ok] = -np.log(c_m1[ok] / c_m[ok])
    return out


def sample_entropy(x, m: int = 2, r_coef: float = 0.2) -> float:
    """Sample entropy with tolerance ``r_coef * std(x)`` (population std).

    Returns NaN when no template pairs match, where the measure is undefined.
    """
    return float(sample_entropy_batch(np.asarray(x, dtype=np.float64)[None, :], m, r_coef)[0])


def entropy_batch(x: np.ndarray, cfg: EntropyConfig, mnist=None) -> np.ndarray:
    """Dispatch on ``cfg.kind`` for a batch of already normalised series."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    validate_config(cfg, x.shape[1])
    if cfg.kind is EntropyKind.SVD:
        return svd_entropy_batch(x, cfg.d, cfg.delay)
    if cfg.kind is EntropyKind.PERM:
        return perm_entropy_batch(x, cfg.d, cfg.delay)
    if cfg.kind is EntropyKind.SAMP:
        return sample_entropy_batch(x, cfg.m, cfg.r_coef)
    from .nneten import nneten_batch

    if mnist is None:
        raise ValueError("NNetEn needs an MNIST train/test split")
    return nneten_batch(x, mnist, cfg.lognnet)


def entropy(x, cfg: EntropyConfig, mnist=None) -> float:
    return float(entropy_batch(np.asarray(x, dtype=np.float64)[None, :], cfg, mnist)[0])
