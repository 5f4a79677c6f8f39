"""Weighted multi-class softmax losses over side and fused outputs.

Score stacks are (K+1, H, W) arrays: channel k holds the per-pixel score
for quantized-scale class k (class 0 = background). Groundtruth maps are
integer (H, W) arrays. Losses are normalized by the pixel count of the
image, and the class-balancing weights are computed per image from its own
groundtruth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ClassOutOfRange


def class_weights(gt: np.ndarray, num_classes: int | None = None) -> np.ndarray:
    """Inverse-frequency class weights, normalized to sum to 1.

    Classes absent from `gt` get weight 0 (rather than an epsilon-inverse),
    which keeps the weights of the present classes summing to exactly 1.
    """
    gt = np.asarray(gt)
    if num_classes is None:
        num_classes = int(gt.max()) + 1 if gt.size else 1
    counts = np.bincount(gt.ravel(), minlength=num_classes).astype(np.float64)
    inv = np.zeros(num_classes)
    present = counts > 0
    inv[present] = 1.0 / counts[present]
    total = inv.sum()
    return inv / total if total > 0 else inv


def softmax(activations: np.ndarray, axis: int = 0) -> np.ndarray:
    """Numerically stable softmax (max-subtracted) along `axis`."""
    shifted = activations - activations.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _check_classes(gt: np.ndarray, channels: int) -> None:
    if gt.size and gt.max() >= channels:
        raise ClassOutOfRange(
            f"groundtruth class {int(gt.max())} >= {channels} channels")


def side_loss(probs: np.ndarray, gt: np.ndarray, beta: np.ndarray) -> float:
    """Class-weighted negative log-likelihood, averaged over all pixels."""
    k, h, w = probs.shape
    _check_classes(gt, k)
    p_true = np.take_along_axis(probs, gt[None].astype(np.intp), axis=0)[0]
    weights = beta[gt]
    # clamp at the dtype's tiny so saturated 32-bit probabilities stay finite
    floor = np.finfo(p_true.dtype).tiny if p_true.dtype.kind == "f" else 1e-300
    return float(-(weights * np.log(np.maximum(p_true, floor))).sum() / (h * w))


def side_loss_gradient(probs: np.ndarray, gt: np.ndarray,
                       beta: np.ndarray) -> np.ndarray:
    """Analytic gradient of side_loss w.r.t. the pre-softmax activations.

    Per pixel j with true class z and weight b = beta[z]:
    d/da_l = -(b*1(z=l) - b*Pr_l) / |X|.
    """
    k, h, w = probs.shape
    _check_classes(gt, k)
    weights = beta[gt]
    grad = weights * probs
    rows = gt[None].astype(np.intp)
    grad_true = np.take_along_axis(grad, rows, axis=0)
    np.put_along_axis(grad, rows, grad_true - weights[None], axis=0)
    return grad / (h * w)


def softmax_vjp(probs: np.ndarray, grad_probs: np.ndarray) -> np.ndarray:
    """Backpropagate a gradient w.r.t. softmax outputs onto its inputs."""
    dot = (grad_probs * probs).sum(axis=0, keepdims=True)
    return probs * (grad_probs - dot)


def fusion_loss(fused_activations: np.ndarray, gt: np.ndarray,
                beta: np.ndarray) -> tuple[float, np.ndarray]:
    """Weighted softmax loss on the fused score stack.

    The stack holds pre-softmax fused scores over all M+1 classes; returns
    (loss, gradient w.r.t. the fused scores).
    """
    probs = softmax(fused_activations, axis=0)
    loss = side_loss(probs, gt, beta)
    grad = side_loss_gradient(probs, gt, beta)
    return loss, grad


@dataclass(frozen=True)
class LossValue:
    """Total objective with its per-term breakdown."""

    side: tuple[float, ...]
    fusion: float
    side_weight: float = 1.0

    @property
    def total(self) -> float:
        return self.side_weight * sum(self.side) + self.fusion


def total_objective(side_losses, fusion, side_weight: float = 1.0) -> LossValue:
    """Combine per-stage side losses and the fusion loss."""
    return LossValue(side=tuple(float(v) for v in side_losses),
                     fusion=float(fusion), side_weight=side_weight)
