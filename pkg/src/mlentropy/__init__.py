"""Entropy measures for series and rasters, with boosted-tree approximations."""
from .core import EntropyConfig, EntropyError, EntropyKind, IncompatibleLength, LogNNetConfig
from .entropy1d import entropy, perm_entropy, sample_entropy, svd_entropy
from .kernel2d import KernelSpec, entropy_map, extract_series, kernel_offsets
from .metrics import pearson, r2, summarize
from .normalize import normalize
from .synth import MapConfig, gen_texture, generate_series

__version__ = "0.1.0"

__all__ = [
    "EntropyConfig", "EntropyError", "EntropyKind", "IncompatibleLength", "LogNNetConfig",
    "entropy", "perm_entropy", "sample_entropy", "svd_entropy",
    "KernelSpec", "entropy_map", "extract_series", "kernel_offsets",
    "pearson", "r2", "summarize", "normalize",
    "MapConfig", "gen_texture", "generate_series",
]
