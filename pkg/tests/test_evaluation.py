import numpy as np
import pytest

from deepskel import evaluation
from deepskel.errors import ShapeMismatch
from deepskel.evaluation import (MatchConfig, PRCurve, cross_eval, match_maps,
                                 match_maps_optimal, max_f, pr_curve)

ABS2 = MatchConfig(tolerance=2.0, relative=False)


def random_pair(seed, size=16, max_points=12):
    rng = np.random.default_rng(seed)
    a = np.zeros((size, size), bool)
    b = np.zeros((size, size), bool)
    na, nb = rng.integers(0, max_points + 1), rng.integers(0, max_points + 1)
    a[rng.integers(0, size, na), rng.integers(0, size, na)] = True
    b[rng.integers(0, size, nb), rng.integers(0, size, nb)] = True
    return a, b


class TestMatchMaps:
    def test_identical_maps(self):
        gt = np.zeros((10, 10), bool)
        gt[3, 3] = gt[5, 7] = gt[8, 1] = True
        assert match_maps(gt, gt, ABS2) == (3, 0, 0)

    def test_far_apart(self):
        pred = np.zeros((10, 10), bool)
        gt = np.zeros((10, 10), bool)
        pred[0, 0] = True
        gt[9, 9] = True
        assert match_maps(pred, gt, ABS2) == (0, 1, 1)

    def test_one_to_one(self):
        pred = np.zeros((10, 10), bool)
        gt = np.zeros((10, 10), bool)
        pred[5, 4] = pred[5, 6] = True
        gt[5, 5] = True
        assert match_maps(pred, gt, ABS2) == (1, 1, 0)

    def test_counts_partition(self):
        for seed in range(30):
            pred, gt = random_pair(seed)
            tp, fp, fn = match_maps(pred, gt, ABS2)
            assert tp + fp == np.count_nonzero(pred)
            assert tp + fn == np.count_nonzero(gt)

    def test_lower_tolerance_never_gains(self):
        for seed in range(20):
            pred, gt = random_pair(seed + 100)
            tp2, _, _ = match_maps(pred, gt, ABS2)
            tp1, _, _ = match_maps(pred, gt,
                                   MatchConfig(tolerance=1.0, relative=False))
            assert tp1 <= tp2

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            match_maps(np.zeros((4, 4), bool), np.zeros((5, 5), bool))

    def test_relative_tolerance_radius(self):
        cfg = MatchConfig(tolerance=0.0075)
        assert np.isclose(cfg.radius((128, 128)), 0.0075 * np.hypot(128, 128))


class TestOptimalOracle:
    def test_agrees_on_disambiguation_example(self):
        pred = np.zeros((10, 10), bool)
        gt = np.zeros((10, 10), bool)
        pred[5, 4] = pred[5, 6] = True
        gt[5, 5] = True
        assert match_maps_optimal(pred, gt, ABS2) == (1, 1, 0)

    def test_greedy_equals_optimal_at_unit_tolerance(self):
        cfg = MatchConfig(tolerance=1.0, relative=False)
        for seed in range(100):
            pred, gt = random_pair(seed)
            assert match_maps(pred, gt, cfg) == match_maps_optimal(pred, gt, cfg)


class TestPRCurve:
    def test_perfect_detector(self):
        gt = np.zeros((12, 12), bool)
        gt[6, 2:10] = True
        response = gt.astype(float)
        curve = pr_curve(response, gt, thresholds=[0.5], cfg=ABS2)
        assert curve.precision == (1.0,)
        assert curve.recall == (1.0,)
        assert max_f(curve)[0] == 1.0

    def test_f_is_harmonic_mean(self):
        curve = PRCurve(thresholds=(0.5,), precision=(0.5,), recall=(0.5,))
        assert np.isclose(curve.f_measures()[0], 0.5)

    def test_matches_per_threshold_recount(self):
        rng = np.random.default_rng(0)
        response = rng.random((16, 16))
        gt = np.zeros((16, 16), bool)
        gt[rng.integers(0, 16, 10), rng.integers(0, 16, 10)] = True
        thresholds = [0.2, 0.5, 0.8]
        curve = pr_curve(response, gt, thresholds, ABS2)
        for idx, t in enumerate(thresholds):
            tp, fp, fn = match_maps(response > t, gt, ABS2)
            p = tp / (tp + fp) if tp + fp else 1.0
            r = tp / (tp + fn) if tp + fn else 1.0
            assert np.isclose(curve.precision[idx], p)
            assert np.isclose(curve.recall[idx], r)

    def test_no_prediction_convention(self):
        gt = np.zeros((8, 8), bool)
        gt[4, 4] = True
        curve = pr_curve(np.zeros((8, 8)), gt, [0.5], ABS2)
        assert curve.precision == (1.0,)
        assert curve.recall == (0.0,)

    def test_no_groundtruth_convention(self):
        resp = np.zeros((8, 8))
        resp[2, 2] = 1.0
        curve = pr_curve(resp, np.zeros((8, 8), bool), [0.5], ABS2)
        assert curve.recall == (1.0,)

    def test_thresholds_strictly_increasing(self):
        with pytest.raises(ValueError):
            PRCurve(thresholds=(0.5, 0.5), precision=(1, 1), recall=(1, 1))


class TestMaxF:
    def test_single_point(self):
        curve = PRCurve(thresholds=(0.3,), precision=(0.5,), recall=(0.5,))
        assert max_f(curve) == (0.5, 0.3)

    def test_picks_better_point(self):
        curve = PRCurve(thresholds=(0.2, 0.6),
                        precision=(1.0, 0.6), recall=(0.2, 0.6))
        f, t = max_f(curve)
        assert np.isclose(f, 0.6)
        assert t == 0.6

    def test_zero_recall(self):
        curve = PRCurve(thresholds=(0.5,), precision=(1.0,), recall=(0.0,))
        assert max_f(curve)[0] == 0.0

    def test_tie_takes_lowest_threshold(self):
        curve = PRCurve(thresholds=(0.2, 0.8),
                        precision=(0.5, 0.5), recall=(0.5, 0.5))
        assert max_f(curve)[1] == 0.2


class TestCrossEval:
    def test_report_shape(self):
        table = {("a", "a"): 0.9, ("a", "b"): 0.5,
                 ("b", "a"): 0.4, ("b", "b"): 0.8}
        report = cross_eval(lambda tr, te: table[(tr, te)], ["a", "b"], ["a", "b"])
        assert len(report["rows"]) == 4
        row = next(r for r in report["rows"]
                   if r["train"] == "a" and r["test"] == "b")
        assert row["max_f"] == 0.5

    def test_same_dataset_row(self):
        report = cross_eval(lambda tr, te: 0.7 if tr == te else 0.2,
                            ["x"], ["x"])
        assert report["rows"] == [{"train": "x", "test": "x", "max_f": 0.7}]
