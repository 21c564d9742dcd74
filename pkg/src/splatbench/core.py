"""Core domain types: labeled clouds, corruption taxonomy, manifests.

Internal math is float64; float32 appears only at the I/O boundary.
"""

from __future__ import annotations

import csv
import enum
import warnings
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .rng import RngStream, derive_stream  # noqa: F401  (re-exported)

CANONICAL_N = 2048


class CorruptionKind(enum.Enum):
    JITTER = "jitter"
    SCALE = "scale"
    ROTATE = "rotate"
    DROP_GLOBAL = "drop_global"
    DROP_LOCAL = "drop_local"
    ADD_GLOBAL = "add_global"
    ADD_LOCAL = "add_local"

    @classmethod
    def from_name(cls, name: str) -> "CorruptionKind":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown corruption kind: {name!r}") from None


SEVERITY_LEVELS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class SeverityLevel:
    level: int

    def __post_init__(self) -> None:
        if self.level not in SEVERITY_LEVELS:
            raise ValueError(f"severity must be in 1..5, got {self.level}")

    @property
    def index(self) -> int:
        return self.level - 1


@dataclass(frozen=True)
class LabeledCloud:
    """N points with a per-point affordance score in [0, 1]."""

    points: np.ndarray  # (N, 3) float64
    labels: np.ndarray  # (N,) float64

    def __post_init__(self) -> None:
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        lab = np.ascontiguousarray(np.asarray(self.labels, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be (N, 3), got {pts.shape}")
        if lab.ndim != 1:
            raise ValueError(f"labels must be 1-D, got {lab.shape}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab)
        pts.setflags(write=False)
        lab.setflags(write=False)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def replaced(self, points: np.ndarray | None = None,
                 labels: np.ndarray | None = None) -> "LabeledCloud":
        return LabeledCloud(
            self.points if points is None else points,
            self.labels if labels is None else labels,
        )


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_cloud(cloud: LabeledCloud, warn_noncanonical: bool = False) -> ValidationReport:
    """Check cloud invariants; returns a report rather than raising."""
    report = ValidationReport()
    if cloud.labels.shape[0] != cloud.points.shape[0]:
        report.violations.append(
            f"length mismatch: {cloud.points.shape[0]} points vs "
            f"{cloud.labels.shape[0]} labels")
    bad_coord = np.where(~np.isfinite(cloud.points).all(axis=1))[0]
    for i in bad_coord[:16]:
        report.violations.append(f"non-finite coordinate at index {i}")
    bad_label = np.where(~((cloud.labels >= 0.0) & (cloud.labels <= 1.0)))[0]
    for i in bad_label[:16]:
        report.violations.append(f"label out of range at index {i}")
    if warn_noncanonical and cloud.n_points != CANONICAL_N:
        warnings.warn(
            f"cloud has {cloud.n_points} points; canonical dataset size is "
            f"{CANONICAL_N}", stacklevel=2)
    return report


def _load_vocab(name: str) -> frozenset[str]:
    text = (resources.files("splatbench") / "data").joinpath(name).read_text()
    return frozenset(line.strip() for line in text.splitlines() if line.strip())


OBJECT_CATEGORIES = _load_vocab("categories.txt")
AFFORDANCE_TYPES = _load_vocab("affordances.txt")


def normalize_affordance(name: str) -> str:
    # the source tables spell wrap_grasp both ways
    return name.strip().replace("-", "_")


def pairing_counts(dataset: str) -> dict[str, int]:
    """Per-category object-affordance pairing counts for piad_c / laso_c."""
    fname = {"piad_c": "piad_c_pairings.csv", "laso_c": "laso_c_pairings.csv"}
    if dataset not in fname:
        raise ValueError(f"unknown dataset {dataset!r}")
    text = (resources.files("splatbench") / "data").joinpath(fname[dataset]).read_text()
    return {row["category"]: int(row["pairings"])
            for row in csv.DictReader(text.splitlines())}


class UnknownCategory(ValueError):
    pass


@dataclass(frozen=True)
class SampleManifest:
    sample_id: int
    object_category: str
    affordance_type: str
    cloud_path: str
    prediction_path: str | None = None

    def __post_init__(self) -> None:
        if self.object_category not in OBJECT_CATEGORIES:
            raise UnknownCategory(f"unknown object category: {self.object_category!r}")
        aff = normalize_affordance(self.affordance_type)
        object.__setattr__(self, "affordance_type", aff)
        if aff not in AFFORDANCE_TYPES:
            raise UnknownCategory(f"unknown affordance type: {aff!r}")
