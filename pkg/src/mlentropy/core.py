"""Shared configuration types and errors.

Series and grids are plain numpy arrays (1D float64 for series, 2D float64
for rasters and entropy maps). Undefined map cells are NaN.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

UNDEFINED = float("nan")


class EntropyError(Exception):
    """Base class for all package errors."""


class IncompatibleLength(EntropyError, ValueError):
    def __init__(self, kind, n, required):
        self.kind = kind
        self.n = n
        self.required = required
        super().__init__(
            f"{kind} entropy needs a series of length >= {required}, got {n}"
        )


class EntropyKind(str, enum.Enum):
    SVD = "svd"
    PERM = "perm"
    SAMP = "samp"
    NNET = "nnet"


@dataclass(frozen=True)
class LogNNetConfig:
    """Settings of the reservoir classifier behind NNetEn."""

    reservoir_rows: int = 25
    input_dim: int = 785
    epochs: int = 4
    train_count: int = 10_000
    test_count: int = 1_000
    learning_rate: float = 0.1
    seed: int = 0

    @property
    def capacity(self) -> int:
        return self.reservoir_rows * self.input_dim

    def __post_init__(self):
        if self.reservoir_rows < 1 or self.input_dim < 1:
            raise ValueError("reservoir dimensions must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.train_count < 1 or self.test_count < 1:
            raise ValueError("train_count and test_count must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


_DEFAULTS = {
    EntropyKind.SVD: dict(d=3, delay=1),
    EntropyKind.PERM: dict(d=5, delay=5),
    EntropyKind.SAMP: dict(m=2, r_coef=0.2),
    EntropyKind.NNET: dict(),
}


@dataclass(frozen=True)
class EntropyConfig:
    """Entropy kind plus the parameters that kind uses.

    Parameters not used by ``kind`` are carried along but ignored, so one
    config type serves the whole dataset/regression pipeline.
    """

    kind: EntropyKind
    d: int = 3
    delay: int = 1
    m: int = 2
    r_coef: float = 0.2
    en: float = 1.0
    lognnet: Optional[LogNNetConfig] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", EntropyKind(self.kind))
        if self.kind in (EntropyKind.SVD, EntropyKind.PERM) and self.d < 2:
            raise ValueError("embedding dimension d must be >= 2")
        if self.delay < 1:
            raise ValueError("delay must be >= 1")
        if self.m < 1:
            raise ValueError("template length m must be >= 1")
        if not self.r_coef > 0:
            raise ValueError("r_coef must be positive")
        if not 0.0 <= self.en <= 1.0:
            raise ValueError("en must lie in [0, 1]")
        if self.kind is EntropyKind.NNET and self.lognnet is None:
            object.__setattr__(self, "lognnet", LogNNetConfig())

    @classmethod
    def default(cls, kind, **overrides) -> "EntropyConfig":
        """Config with the per-kind defaults used for image processing."""
        kind = EntropyKind(kind)
        params = dict(_DEFAULTS[kind])
        params.update({k: v for k, v in overrides.items() if v is not None})
        return cls(kind=kind, **params)

    def with_en(self, en: float) -> "EntropyConfig":
        return replace(self, en=en)

    def to_meta(self) -> dict:
        meta = {"kind": self.kind.value, "en": self.en}
        if self.kind in (EntropyKind.SVD, EntropyKind.PERM):
            meta.update(d=self.d, delay=self.delay)
        elif self.kind is EntropyKind.SAMP:
            meta.update(m=self.m, r_coef=self.r_coef)
        else:
            lc = self.lognnet
            meta.update(
                epochs=lc.epochs,
                train_count=lc.train_count,
                test_count=lc.test_count,
                seed=lc.seed,
            )
        return meta


def required_length(cfg: EntropyConfig) -> int:
    """Smallest series length on which ``cfg`` is computable."""
    if cfg.kind in (EntropyKind.SVD, EntropyKind.PERM):
        return (cfg.d - 1) * cfg.delay + 1
    if cfg.kind is EntropyKind.SAMP:
        return cfg.m + 2
    return 1


def validate_config(cfg: EntropyConfig, n: int) -> None:
    """Raise :class:`IncompatibleLength` unless ``cfg`` works on length ``n``."""
    need = required_length(cfg)
    if n < need:
        raise IncompatibleLength(cfg.kind.value, n, need)
    if cfg.kind is EntropyKind.NNET and n > cfg.lognnet.capacity:
        # imported lazily to keep core free of the nneten dependency chain
        from .nneten import SeriesTooLong

        raise SeriesTooLong(n, cfg.lognnet.capacity)


def as_series(values) -> np.ndarray:
    """Validate and convert to a 1D float64 series."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise ValueError("series must be a non-empty 1D sequence")
    if not np.all(np.isfinite(x)):
        raise ValueError("series values must be finite")
    return x


def as_grid(values) -> np.ndarray:
    g = np.asarray(values, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
        raise ValueError("grid must be a non-empty 2D array")
    return g
