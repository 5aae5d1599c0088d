"""Python bindings for the compression-aware continual learning core."""

import json as _json

from ._cacl import (
    ConfigError,
    DataError,
    FormatError,
    IoError,
    ShapeError,
    SharedSpace,
    TrainingError,
    compress,
    compute_metrics,
    energy_topk,
    expansion_rank,
    l_orth,
    l_sparse,
    random_orthonormal,
    rank_k_approx,
    svd,
)
from ._cacl import run as _run


def run(config):
    """Run a task stream. `config` is a dict or a JSON string of flat config keys."""
    if not isinstance(config, str):
        config = _json.dumps(config)
    return _run(config)


__all__ = [
    "ConfigError",
    "DataError",
    "FormatError",
    "IoError",
    "ShapeError",
    "SharedSpace",
    "TrainingError",
    "compress",
    "compute_metrics",
    "energy_topk",
    "expansion_rank",
    "l_orth",
    "l_sparse",
    "random_orthonormal",
    "rank_k_approx",
    "run",
    "svd",
]
