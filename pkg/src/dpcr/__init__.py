"""Mortality forecasting by static and dynamic principal component regression."""

__version__ = "0.1.0"

from .data import (  # noqa: E402
    ImprovementSeries,
    MortalityDataset,
    back_transform,
    improvement_transform,
    load_bundled,
    load_hmd_table,
)
from .kernels import BACKEND  # noqa: E402

__all__ = [
    "BACKEND",
    "ImprovementSeries",
    "MortalityDataset",
    "__version__",
    "back_transform",
    "improvement_transform",
    "load_bundled",
    "load_hmd_table",
]
