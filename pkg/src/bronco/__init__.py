"""Bronchovascular bundle modeling from chest CT volumes.

Pipeline: lung/trachea preparation, Gaussian-mixture quantization of lung
intensities, knee-cut bundle extraction, skeletonization and graph
building, direction-aware branch labeling with a parent-child hierarchy,
graph-guided fast-marching bronchi segmentation with leak repair, and a
regression-based volume sanity check.
"""
from ._kernels import BACKEND as KERNEL_BACKEND
from .errors import (
    BroncoError,
    DegenerateDataError,
    FormatError,
    ParameterError,
    PipelineError,
    UnrepairableLeakError,
)
from .grid import BinaryMask, LabelMap, ScalarVolume, StructuringElement

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "BroncoError",
    "DegenerateDataError",
    "FormatError",
    "ParameterError",
    "PipelineError",
    "UnrepairableLeakError",
    "BinaryMask",
    "LabelMap",
    "ScalarVolume",
    "StructuringElement",
    "__version__",
]
