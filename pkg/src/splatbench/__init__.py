"""splatbench: corruption-robustness benchmarks, Gaussian-splat rendering,
and affordance heatmap evaluation for labeled 3D point clouds."""

from .core import (CorruptionKind, LabeledCloud, SampleManifest, SeverityLevel,
                   validate_cloud)
from .rng import RngStream, derive_stream

__version__ = "0.1.0"

__all__ = [
    "CorruptionKind",
    "LabeledCloud",
    "RngStream",
    "SampleManifest",
    "SeverityLevel",
    "derive_stream",
    "validate_cloud",
    "__version__",
]
