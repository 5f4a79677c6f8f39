"""Part segmentation from predicted scales and objectness rescoring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ShapeMismatch
from .evaluation import PRCurve


@dataclass
class SkeletonSegment:
    """One junction-free skeleton branch.

    `pixels` is an ordered (N, 2) array of (row, col) coordinates,
    8-connected in sequence; `scales` holds the predicted disk diameter and
    `probs` the skeleton probability at each pixel.
    """

    pixels: np.ndarray
    scales: np.ndarray
    probs: np.ndarray


@dataclass
class PartMask:
    """Union-of-disks reconstruction of a segment with its confidence."""

    mask: np.ndarray
    confidence: float


_NEIGHBORS = [(-1, -1), (-1, 0), (-1, 1), (0, -1),
              (0, 1), (1, -1), (1, 0), (1, 1)]


def _order_component(pixels: set[tuple[int, int]]) -> list[tuple[int, int]]:
    """Order a junction-free component as a traversal from a degree-1 end."""
    def neighbors(p):
        return [(p[0] + dy, p[1] + dx) for dy, dx in _NEIGHBORS
                if (p[0] + dy, p[1] + dx) in pixels]

    start = min(pixels)
    for p in sorted(pixels):
        if len(neighbors(p)) <= 1:
            start = p
            break
    order = []
    seen = set()
    stack = [start]
    while stack:
        p = stack.pop()
        if p in seen:
            continue
        seen.add(p)
        order.append(p)
        for q in sorted(neighbors(p), reverse=True):
            if q not in seen:
                stack.append(q)
    return order


def extract_segments(skeleton: np.ndarray, scale_map: np.ndarray,
                     response: np.ndarray) -> list[SkeletonSegment]:
    """Split a thinned binary skeleton into junction-free branches.

    Pixels with >= 3 skeleton neighbors (8-connectivity) are junctions;
    removing them leaves the branches, each returned as one ordered
    segment carrying its scales and probabilities.
    """
    skeleton = np.asarray(skeleton, bool)
    if skeleton.shape != np.asarray(scale_map).shape:
        raise ShapeMismatch("skeleton and scale map sizes differ")
    if not skeleton.any():
        return []
    kernel = np.ones((3, 3), int)
    kernel[1, 1] = 0
    degree = ndimage.convolve(skeleton.astype(int), kernel, mode="constant")
    branches = skeleton & (degree < 3)
    labels, n = ndimage.label(branches, structure=np.ones((3, 3), int))
    segments = []
    for lab in range(1, n + 1):
        coords = {tuple(p) for p in np.argwhere(labels == lab)}
        order = _order_component(coords)
        pix = np.array(order, int)
        segments.append(SkeletonSegment(
            pixels=pix,
            scales=np.asarray(scale_map)[pix[:, 0], pix[:, 1]].astype(np.float64),
            probs=np.asarray(response)[pix[:, 0], pix[:, 1]].astype(np.float64)))
    return segments


def reconstruct_part_mask(seg: SkeletonSegment, shape) -> PartMask:
    """Union of closed disks: pixel p is in the mask iff some segment pixel
    x_j satisfies ||p - x_j|| <= scale_j / 2 (distances between centers)."""
    h, w = shape
    mask = np.zeros((h, w), bool)
    for (y, x), s in zip(seg.pixels, seg.scales):
        r = s / 2.0
        ri = int(np.floor(r))
        y0, y1 = max(0, y - ri), min(h, y + ri + 1)
        x0, x1 = max(0, x - ri), min(w, x + ri + 1)
        if y0 >= y1 or x0 >= x1:
            continue
        yy, xx = np.mgrid[y0:y1, x0:x1]
        mask[y0:y1, x0:x1] |= (yy - y) ** 2 + (xx - x) ** 2 <= r * r
    return PartMask(mask=mask, confidence=mask_confidence(seg))


def mask_confidence(seg: SkeletonSegment) -> float:
    """Mean skeleton probability over the segment's pixels."""
    if len(seg.probs) == 0:
        raise ValueError("empty segment")
    return float(np.mean(seg.probs))


def iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = np.count_nonzero(a & b)
    union = np.count_nonzero(a | b)
    return inter / union if union else 0.0


def part_seg_eval(masks: list[PartMask], gt_masks: list[np.ndarray],
                  iou_threshold: float = 0.4, thresholds=None) -> PRCurve:
    """Precision/recall of part masks over a confidence-threshold sweep.

    A predicted mask is a hit if its IoU with some groundtruth mask exceeds
    `iou_threshold`; groundtruth masks are consumed once each, highest
    confidence first.
    """
    ordered = sorted(masks, key=lambda m: -m.confidence)
    hits = []
    consumed = [False] * len(gt_masks)
    for m in ordered:
        hit = False
        for gi, gt in enumerate(gt_masks):
            if not consumed[gi] and iou(m.mask, np.asarray(gt, bool)) > iou_threshold:
                consumed[gi] = True
                hit = True
                break
        hits.append((m.confidence, hit))
    if thresholds is None:
        thresholds = (np.arange(100) + 0.5) / 100
    precision, recall = [], []
    n_gt = len(gt_masks)
    for t in thresholds:
        kept = [h for c, h in hits if c > t]
        tp = sum(kept)
        precision.append(tp / len(kept) if kept else 1.0)
        recall.append(tp / n_gt if n_gt else 1.0)
    return PRCurve(thresholds=tuple(float(t) for t in thresholds),
                   precision=tuple(precision), recall=tuple(recall))


def objectness_rescore(boxes: list[dict], masks: list[PartMask] | list[np.ndarray],
                       epsilon: float = 1e-6) -> list[dict]:
    """Rescale external box scores by skeleton-part coverage.

    For each box B with external score h, the new score is
    h * sum(|M & B|) / (sum(|M|) + epsilon) over the part masks M that
    intersect B; boxes touched by no mask score 0. Boxes are dicts with
    keys x, y, w, h, score; the result adds a "rescored" key.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    arrays = [m.mask if isinstance(m, PartMask) else np.asarray(m, bool)
              for m in masks]
    out = []
    for box in boxes:
        x, y, w, h = (int(box[k]) for k in ("x", "y", "w", "h"))
        inter_total = 0
        area_total = 0
        for m in arrays:
            inter = np.count_nonzero(m[y:y + h, x:x + w])
            if inter:
                inter_total += inter
                area_total += np.count_nonzero(m)
        score = float(box["score"]) * inter_total / (area_total + epsilon) \
            if inter_total else 0.0
        rescored = dict(box)
        rescored["rescored"] = score
        out.append(rescored)
    return out
