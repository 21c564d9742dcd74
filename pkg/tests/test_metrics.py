import numpy as np
import pytest

from splatbench.metrics import (DEFAULT_AIOU_THRESHOLDS, DimensionMismatch,
                                EvalPair, MetricReport, SampleResult,
                                UndefinedMetric, aggregate, aiou, auc,
                                consistency_mse, evaluate_pair, mae, sim)


def random_pair(n, seed):
    rng = np.random.default_rng(seed)
    pred = rng.random(n)
    gt = np.where(rng.random(n) < 0.4, rng.random(n), 0.0)
    if not (gt > 0).any():
        gt[0] = 0.5
    if not (gt == 0).any():
        gt[1] = 0.0
    return EvalPair(pred, gt)


# oracles ------------------------------------------------------------------

def auc_pairwise_oracle(pair):
    pos = pair.prediction[pair.ground_truth > 0]
    neg = pair.prediction[pair.ground_truth == 0]
    wins = np.sum(pos[:, None] > neg[None, :])
    ties = np.sum(pos[:, None] == neg[None, :])
    return (wins + 0.5 * ties) / (pos.size * neg.size)


def aiou_set_oracle(pair, thresholds):
    gt = set(np.where(pair.ground_truth > 0)[0].tolist())
    vals = []
    for tau in thresholds:
        pred = set(np.where(pair.prediction > tau)[0].tolist())
        union = pred | gt
        vals.append(len(pred & gt) / len(union) if union else 0.0)
    return sum(vals) / len(vals)


# AUC ----------------------------------------------------------------------

def test_auc_perfect_ranking():
    gt = np.array([1.0, 1.0, 0.0, 0.0])
    pred = np.array([0.9, 0.8, 0.2, 0.1])
    assert auc(EvalPair(pred, gt)) == 1.0


def test_auc_constant_prediction_is_chance():
    gt = np.array([1.0, 0.0, 1.0, 0.0, 0.0])
    pred = np.full(5, 0.3)
    assert auc(EvalPair(pred, gt)) == pytest.approx(0.5, abs=1e-15)


def test_auc_matches_pairwise_oracle():
    for seed in range(50):
        pair = random_pair(512, seed)
        assert abs(auc(pair) - auc_pairwise_oracle(pair)) < 1e-9


def test_auc_undefined_without_both_classes():
    with pytest.raises(UndefinedMetric):
        auc(EvalPair(np.array([0.5, 0.6]), np.array([1.0, 1.0])))
    with pytest.raises(UndefinedMetric):
        auc(EvalPair(np.array([0.5, 0.6]), np.array([0.0, 0.0])))


def test_auc_invariant_under_monotone_transform():
    pair = random_pair(256, 3)
    warped = EvalPair(np.sqrt(pair.prediction), pair.ground_truth)
    assert auc(pair) == pytest.approx(auc(warped), abs=1e-12)


# aIoU ---------------------------------------------------------------------

def test_aiou_identical_binary_maps():
    gt = np.array([1.0, 0.0, 1.0, 0.0])
    assert aiou(EvalPair(gt, gt)) == 1.0


def test_aiou_disjoint_supports():
    pred = np.array([1.0, 1.0, 0.0, 0.0])
    gt = np.array([0.0, 0.0, 1.0, 1.0])
    assert aiou(EvalPair(pred, gt)) == 0.0


def test_aiou_matches_set_oracle_exactly():
    for seed in range(50):
        pair = random_pair(256, seed + 100)
        assert aiou(pair) == aiou_set_oracle(pair, DEFAULT_AIOU_THRESHOLDS)


def test_aiou_threshold_grid_default():
    assert len(DEFAULT_AIOU_THRESHOLDS) == 19
    assert DEFAULT_AIOU_THRESHOLDS[0] == 0.05
    assert DEFAULT_AIOU_THRESHOLDS[-1] == 0.95


def test_aiou_adding_true_positive_never_hurts():
    rng = np.random.default_rng(8)
    pred = rng.random(128) * 0.8
    gt = np.where(rng.random(128) < 0.5, 1.0, 0.0)
    gt[0] = 1.0
    pair = EvalPair(pred, gt)
    for tau in (0.2, 0.5):
        base_pred = pred > tau
        missed = np.where(gt > 0)[0]
        missed = [i for i in missed if not base_pred[i]]
        if not missed:
            continue
        boosted = pred.copy()
        boosted[missed[0]] = 1.0
        def iou(p, g):
            return np.logical_and(p, g).sum() / np.logical_or(p, g).sum()
        assert iou(boosted > tau, gt > 0) >= iou(base_pred, gt > 0)


# SIM ----------------------------------------------------------------------

def test_sim_identical_maps():
    p = np.array([0.2, 0.5, 0.3, 0.0])
    assert sim(EvalPair(p, p)) == pytest.approx(1.0, abs=1e-12)


def test_sim_disjoint_supports():
    assert sim(EvalPair(np.array([1.0, 0.0]), np.array([0.0, 1.0]))) == 0.0


def test_sim_uniform_vs_point_mass():
    n = 64
    uniform = np.full(n, 0.5)
    point = np.zeros(n)
    point[10] = 1.0
    assert sim(EvalPair(uniform, point)) == pytest.approx(1.0 / n, abs=1e-12)


def test_sim_symmetric():
    for seed in range(20):
        pair = random_pair(128, seed + 300)
        if pair.prediction.sum() == 0 or pair.ground_truth.sum() == 0:
            continue
        fwd = sim(pair)
        rev = sim(EvalPair(pair.ground_truth, pair.prediction))
        assert abs(fwd - rev) < 1e-12


def test_sim_undefined_on_zero_map():
    with pytest.raises(UndefinedMetric):
        sim(EvalPair(np.zeros(4), np.array([0.5, 0.0, 0.0, 0.0])))


# MAE ----------------------------------------------------------------------

def test_mae_zero_on_identical():
    p = np.array([0.1, 0.9, 0.4])
    assert mae(EvalPair(p, p)) == 0.0


def test_mae_constant_shift():
    gt = np.array([0.1, 0.2, 0.3, 0.4])
    assert mae(EvalPair(gt + 0.1, gt)) == pytest.approx(0.1, abs=1e-15)


def test_mae_matches_loop_oracle():
    for seed in range(20):
        pair = random_pair(256, seed + 500)
        expected = sum(abs(p - g) for p, g in
                       zip(pair.prediction, pair.ground_truth)) / 256
        assert abs(mae(pair) - expected) < 1e-12


# consistency MSE ----------------------------------------------------------

def test_consistency_mse_identical_is_zero():
    a = np.random.default_rng(0).random((2, 3, 8, 8))
    assert consistency_mse(a, a) == 0.0


def test_consistency_mse_unit_offset():
    a = np.random.default_rng(1).random((2, 3, 8, 8))
    assert consistency_mse(a, a + 1.0) == pytest.approx(1.0, abs=1e-12)


def test_consistency_mse_matches_loop_oracle():
    rng = np.random.default_rng(2)
    a = rng.random((2, 3, 6, 5))
    b = rng.random((2, 3, 6, 5))
    total = 0.0
    count = 0
    for v in range(2):
        for d in range(3):
            for y in range(6):
                for x in range(5):
                    total += (a[v, d, y, x] - b[v, d, y, x]) ** 2
                    count += 1
    assert abs(consistency_mse(a, b) - total / count) < 1e-12


def test_consistency_mse_masked():
    rng = np.random.default_rng(3)
    a = rng.random((1, 2, 4, 4))
    b = a.copy()
    b[0, :, 0, 0] += 10.0  # excluded by the mask
    mask = np.ones((1, 4, 4), dtype=bool)
    mask[0, 0, 0] = False
    assert consistency_mse(a, b, mask) == 0.0
    with pytest.raises(UndefinedMetric):
        consistency_mse(a, b, np.zeros((1, 4, 4), dtype=bool))


def test_consistency_mse_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        consistency_mse(np.zeros((1, 2, 4, 4)), np.zeros((1, 2, 4, 5)))


# aggregation --------------------------------------------------------------

def _result(sid, value, corruption="jitter", severity=1):
    return SampleResult(sid, MetricReport(mae=value), "Chair", "sit",
                        corruption, severity)


def test_aggregate_single_sample_group():
    rows = aggregate([_result(0, 0.25)], group_by=("corruption",),
                     metrics=("mae",))
    assert rows[0]["mae"] == 0.25
    assert rows[0]["n_samples"] == 1


def test_aggregate_mean_of_two():
    rows = aggregate([_result(0, 0.2), _result(1, 0.4)],
                     group_by=("corruption",), metrics=("mae",))
    assert rows[0]["mae"] == pytest.approx(0.3)


def test_aggregate_full_grid_row_count():
    results = []
    sid = 0
    for kind in ("jitter", "scale", "rotate", "drop_global", "drop_local",
                 "add_global", "add_local"):
        for sev in range(1, 6):
            results.append(_result(sid, 0.1, kind, sev))
            sid += 1
    rows = aggregate(results, group_by=("corruption", "severity"),
                     metrics=("mae",))
    assert len(rows) == 35


def test_aggregate_excludes_degenerate_with_count():
    flagged = SampleResult(2, MetricReport(mae=None, flags=["mae: degenerate"]),
                           "Chair", "sit", "jitter", 1)
    rows = aggregate([_result(0, 0.2), _result(1, 0.4), flagged],
                     group_by=("corruption",), metrics=("mae",))
    assert rows[0]["mae"] == pytest.approx(0.3)
    assert rows[0]["mae_excluded"] == 1


def test_aggregate_rejects_unknown_field():
    with pytest.raises(ValueError):
        aggregate([], group_by=("model",))


def test_evaluate_pair_flags_degenerate():
    pair = EvalPair(np.array([0.4, 0.6]), np.array([0.2, 0.8]))  # no negatives
    report = evaluate_pair(pair)
    assert report.auc is None
    assert any(f.startswith("auc") for f in report.flags)
    assert report.mae is not None


def test_eval_pair_length_mismatch():
    with pytest.raises(DimensionMismatch):
        EvalPair(np.zeros(3), np.zeros(4))
