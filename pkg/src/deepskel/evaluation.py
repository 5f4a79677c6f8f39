"""Matching-based precision/recall evaluation of thinned skeleton maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .errors import DataFormat, ShapeMismatch


@dataclass(frozen=True)
class MatchConfig:
    """Localization tolerance for matching predictions to groundtruth.

    `tolerance` is in pixels when `relative` is False, otherwise a fraction
    of the image diagonal (default 0.0075, the usual boundary-benchmark
    convention).
    """

    tolerance: float = 0.0075
    relative: bool = True

    def __post_init__(self):
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")

    def radius(self, shape) -> float:
        if not self.relative:
            return self.tolerance
        h, w = shape
        return self.tolerance * float(np.hypot(h, w))


def _positives(mask: np.ndarray) -> np.ndarray:
    return np.argwhere(np.asarray(mask, bool))


def match_maps(pred: np.ndarray, gt: np.ndarray,
               cfg: MatchConfig = MatchConfig()) -> tuple[int, int, int]:
    """Greedy one-to-one nearest matching of positive pixels.

    Candidate pairs within tolerance are consumed closest-first, each pixel
    at most once. Returns (TP, FP, FN): matched predictions, unmatched
    predictions, unmatched groundtruth.
    """
    pred = np.asarray(pred, bool)
    gt = np.asarray(gt, bool)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs groundtruth {gt.shape}")
    p = _positives(pred)
    g = _positives(gt)
    if len(p) == 0 or len(g) == 0:
        return 0, len(p), len(g)
    radius = cfg.radius(pred.shape)
    tree = cKDTree(g)
    pairs = []
    for pi, point in enumerate(p):
        for gi in tree.query_ball_point(point, radius):
            d = float(np.hypot(*(point - g[gi])))
            pairs.append((d, pi, gi))
    pairs.sort()
    used_p = np.zeros(len(p), bool)
    used_g = np.zeros(len(g), bool)
    tp = 0
    for _, pi, gi in pairs:
        if not used_p[pi] and not used_g[gi]:
            used_p[pi] = used_g[gi] = True
            tp += 1
    return tp, len(p) - tp, len(g) - tp


def match_maps_optimal(pred: np.ndarray, gt: np.ndarray,
                       cfg: MatchConfig = MatchConfig()) -> tuple[int, int, int]:
    """Brute-force optimal-assignment matcher (oracle for small maps).

    Maximizes the number of within-tolerance one-to-one matches via a full
    assignment solve; intended as an independent check of `match_maps`.
    """
    pred = np.asarray(pred, bool)
    gt = np.asarray(gt, bool)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs groundtruth {gt.shape}")
    p = _positives(pred)
    g = _positives(gt)
    if len(p) == 0 or len(g) == 0:
        return 0, len(p), len(g)
    radius = cfg.radius(pred.shape)
    dist = np.linalg.norm(p[:, None, :] - g[None, :, :], axis=-1)
    feasible = dist <= radius
    # Infeasible pairs get a cost larger than any chain of feasible ones,
    # so the assignment never trades a feasible match away.
    cost = np.where(feasible, dist, 1e6)
    rows, cols = linear_sum_assignment(cost)
    tp = int(feasible[rows, cols].sum())
    return tp, len(p) - tp, len(g) - tp


@dataclass(frozen=True)
class PRCurve:
    """Precision/recall over an increasing threshold sweep."""

    thresholds: tuple[float, ...]
    precision: tuple[float, ...]
    recall: tuple[float, ...]

    def __post_init__(self):
        t = self.thresholds
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("thresholds must be strictly increasing")

    def f_measures(self) -> np.ndarray:
        p = np.asarray(self.precision)
        r = np.asarray(self.recall)
        denom = p + r
        return np.where(denom > 0, 2 * p * r / np.maximum(denom, 1e-300), 0.0)


def default_thresholds(n: int = 100) -> np.ndarray:
    """n evenly spaced thresholds strictly inside (0, 1)."""
    return (np.arange(n) + 0.5) / n


def pr_curve(responses, gts, thresholds=None,
             cfg: MatchConfig = MatchConfig()) -> PRCurve:
    """Precision/recall of thresholded (already thinned) responses.

    `responses`/`gts` may be single maps or equal-length sequences; counts
    are pooled over the collection per threshold. Conventions: precision 1
    with no predictions, recall 1 with no groundtruth.
    """
    if isinstance(responses, np.ndarray) and responses.ndim == 2:
        responses, gts = [responses], [gts]
    responses = list(responses)
    gts = list(gts)
    if len(responses) != len(gts):
        raise DataFormat("response/groundtruth counts differ")
    if thresholds is None:
        thresholds = default_thresholds()
    thresholds = np.asarray(thresholds, np.float64)
    if thresholds.size == 0:
        raise DataFormat("no thresholds")
    precision, recall = [], []
    for t in thresholds:
        tp = fp = fn = 0
        for resp, gt in zip(responses, gts):
            a, b, c = match_maps(np.asarray(resp) > t, gt, cfg)
            tp, fp, fn = tp + a, fp + b, fn + c
        precision.append(tp / (tp + fp) if tp + fp else 1.0)
        recall.append(tp / (tp + fn) if tp + fn else 1.0)
    return PRCurve(thresholds=tuple(thresholds.tolist()),
                   precision=tuple(precision), recall=tuple(recall))


def max_f(curve: PRCurve) -> tuple[float, float]:
    """Maximum F-measure over the curve and its threshold (ties -> lowest)."""
    f = curve.f_measures()
    idx = int(np.argmax(f))  # argmax returns the first (lowest) threshold on ties
    return float(f[idx]), float(curve.thresholds[idx])


def cross_eval(evaluate, train_tags, test_tags) -> dict:
    """Train-tag x test-tag table of max F-measures.

    `evaluate(train_tag, test_tag)` returns the max F of the model trained
    on `train_tag` evaluated on `test_tag`. Returns a JSON-ready report.
    """
    rows = []
    for tr in train_tags:
        for te in test_tags:
            f = evaluate(tr, te)
            rows.append({"train": tr, "test": te, "max_f": float(f)})
    return {"rows": rows}
