"""Sparse Tobit regression by iterative hard thresholding, centralized and distributed."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DataError,
    DivergenceError,
    GammaUnidentifiableError,
    InvalidArgumentError,
    TobitError,
)
from .model import CensoredDataset, ModelParams, Theta  # noqa: E402
from .solver_dist import DistConfig, Shard, fit_distributed  # noqa: E402
from .solver_local import IhtConfig, fit  # noqa: E402

__all__ = [
    "CensoredDataset",
    "DataError",
    "DistConfig",
    "DivergenceError",
    "GammaUnidentifiableError",
    "IhtConfig",
    "InvalidArgumentError",
    "ModelParams",
    "Shard",
    "Theta",
    "TobitError",
    "fit",
    "fit_distributed",
]
