"""Affordance heatmap evaluation: AUC, aIoU, SIM, MAE, and the cross-modal
feature consistency MSE, plus grouped aggregation of per-sample reports.

All metrics operate on per-point heatmaps.  Ground truth is binarized at > 0
where a positive set is needed (AUC, aIoU); AUC uses the rank (Mann-Whitney U)
formulation with average ranks for ties.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

DEFAULT_AIOU_THRESHOLDS = tuple(np.round(np.arange(0.05, 0.951, 0.05), 2))


class UndefinedMetric(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class EvalPair:
    prediction: np.ndarray
    ground_truth: np.ndarray
    category: str = ""
    affordance: str = ""

    def __post_init__(self) -> None:
        pred = np.asarray(self.prediction, dtype=np.float64).ravel()
        gt = np.asarray(self.ground_truth, dtype=np.float64).ravel()
        if pred.shape != gt.shape:
            raise DimensionMismatch(
                f"prediction has {pred.shape[0]} values, ground truth {gt.shape[0]}")
        for name, arr in (("prediction", pred), ("ground_truth", gt)):
            if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
                raise ValueError(f"{name} values must lie in [0, 1]")
        object.__setattr__(self, "prediction", pred)
        object.__setattr__(self, "ground_truth", gt)


@dataclass
class MetricReport:
    auc: float | None = None
    aiou: float | None = None
    sim: float | None = None
    mae: float | None = None
    flags: list[str] = field(default_factory=list)

    def value(self, metric: str) -> float | None:
        return getattr(self, metric)


def auc(pair: EvalPair) -> float:
    """Area under the ROC curve of prediction scores against gt > 0.

    Rank formulation: U = sum of positive ranks - n_pos(n_pos+1)/2, with
    average ranks assigned to tied scores (half credit for ties).
    """
    positive = pair.ground_truth > 0.0
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("AUC needs at least one positive and one negative")
    ranks = rankdata(pair.prediction, method="average")
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def aiou(pair: EvalPair,
         thresholds: tuple[float, ...] = DEFAULT_AIOU_THRESHOLDS) -> float:
    """Mean over thresholds of IoU(prediction > tau, gt > 0) = TP/(TP+FP+FN)."""
    gt = pair.ground_truth > 0.0
    if not gt.any():
        raise UndefinedMetric("aIoU needs at least one positive ground-truth point")
    total = 0.0
    for tau in thresholds:
        pred = pair.prediction > tau
        union = int(np.logical_or(pred, gt).sum())
        inter = int(np.logical_and(pred, gt).sum())
        total += inter / union if union else 0.0
    return total / len(thresholds)


def sim(pair: EvalPair) -> float:
    """Histogram intersection after normalizing both maps to unit mass."""
    p_sum = pair.prediction.sum()
    q_sum = pair.ground_truth.sum()
    if p_sum <= 0.0 or q_sum <= 0.0:
        raise UndefinedMetric("SIM needs both maps to have positive sum")
    return float(np.minimum(pair.prediction / p_sum,
                            pair.ground_truth / q_sum).sum())


def mae(pair: EvalPair) -> float:
    return float(np.abs(pair.prediction - pair.ground_truth).mean())


def consistency_mse(feat_a: np.ndarray, feat_b: np.ndarray,
                    valid_mask: np.ndarray | None = None) -> float:
    """Mean squared difference between two aligned (V, D, H, W) feature
    stacks, restricted to valid pixels when a (V, H, W) mask is given."""
    a = np.asarray(feat_a, dtype=np.float64)
    b = np.asarray(feat_b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape mismatch: {a.shape} vs {b.shape}")
    diff2 = (a - b) ** 2
    if valid_mask is None:
        return float(diff2.mean())
    mask = np.asarray(valid_mask, dtype=bool)
    if mask.shape != (a.shape[0],) + a.shape[2:]:
        raise DimensionMismatch(
            f"mask shape {mask.shape} does not match views/pixels of {a.shape}")
    if not mask.any():
        raise UndefinedMetric("valid mask selects no pixels")
    selected = np.concatenate([diff2[v][:, mask[v]].ravel()
                               for v in range(a.shape[0])])
    return float(selected.mean())


def evaluate_pair(pair: EvalPair,
                  metrics: tuple[str, ...] = ("auc", "aiou", "sim", "mae"),
                  aiou_thresholds: tuple[float, ...] = DEFAULT_AIOU_THRESHOLDS,
                  ) -> MetricReport:
    """All requested metrics on one pair; degenerate cases become flags,
    never silent zeros."""
    report = MetricReport()
    funcs = {
        "auc": lambda: auc(pair),
        "aiou": lambda: aiou(pair, aiou_thresholds),
        "sim": lambda: sim(pair),
        "mae": lambda: mae(pair),
    }
    for name in metrics:
        try:
            setattr(report, name, funcs[name]())
        except UndefinedMetric as exc:
            report.flags.append(f"{name}: {exc}")
    return report


@dataclass(frozen=True)
class SampleResult:
    sample_id: int
    report: MetricReport
    category: str = ""
    affordance: str = ""
    corruption: str = ""
    severity: int = 0


def aggregate(results: list[SampleResult],
              group_by: tuple[str, ...] = ("corruption", "severity"),
              metrics: tuple[str, ...] = ("auc", "aiou", "sim", "mae")) -> list[dict]:
    """Unweighted group means over any subset of {category, affordance,
    corruption, severity}.  Samples with a flagged (degenerate) metric are
    excluded from that metric's mean; exclusion counts are reported."""
    allowed = {"category", "affordance", "corruption", "severity"}
    bad = set(group_by) - allowed
    if bad:
        raise ValueError(f"cannot group by {sorted(bad)}")
    groups: dict[tuple, list[SampleResult]] = {}
    for res in sorted(results, key=lambda r: r.sample_id):
        key = tuple(getattr(res, g) for g in group_by)
        groups.setdefault(key, []).append(res)
    rows = []
    for key in sorted(groups, key=lambda k: tuple(str(x) for x in k)):
        row: dict = dict(zip(group_by, key))
        row["n_samples"] = len(groups[key])
        for metric in metrics:
            vals = [r.report.value(metric) for r in groups[key]]
            present = [v for v in vals if v is not None]
            row[metric] = sum(present) / len(present) if present else None
            row[f"{metric}_excluded"] = len(vals) - len(present)
        rows.append(row)
    return rows
