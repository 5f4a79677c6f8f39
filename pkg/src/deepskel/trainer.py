"""Momentum SGD training over the side + fusion objective.

A dataset is a sequence of (image, quantized_map) pairs; per-stage
groundtruth and class weights are derived per sample. Gradients within a
mini-batch are averaged, so loss magnitudes do not depend on batch size.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import net
from .errors import DataFormat, ShapeMismatch
from .fileio import save_checkpoint
from .geometry import make_scale_associated_gt
from .losses import (LossValue, class_weights, fusion_loss, side_loss,
                     side_loss_gradient, total_objective)


@dataclass
class TrainConfig:
    """Optimization hyperparameters.

    Defaults follow the reference setup: batch 10, base learning rate 1e-6,
    momentum 0.9, weight decay 2e-4, a 5x learning-rate multiplier on the
    fusion layers (i.e. 5e-6) and at most 20000 iterations. Desk-scale runs
    on randomly initialized backbones typically need a much larger base
    rate; all values are free config.
    """

    batch_size: int = 10
    learning_rate: float = 1e-6
    momentum: float = 0.9
    weight_decay: float = 2e-4
    max_iterations: int = 20000
    seed: int = 0
    checkpoint_every: int = 0  # 0 = only the final checkpoint
    side_loss_weight: float = 1.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        for name in ("learning_rate", "momentum", "weight_decay"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class OptimizerState:
    """Per-parameter velocity buffers plus the iteration counter."""

    velocity: dict[str, np.ndarray] = field(default_factory=dict)
    iteration: int = 0


def sgd_step(params, grads, state: OptimizerState, config: TrainConfig) -> None:
    """One momentum update: v <- mu*v - lr_layer*(g + wd*p); p <- p + v.

    Weight decay applies only to kernel weights of layers with decay
    enabled, never to biases.
    """
    for name, layer in params.items():
        if name not in grads:
            continue
        gw, gb = grads[name]
        if gw.shape != layer.kernels.shape:
            raise ShapeMismatch(f"{name}: gradient shape {gw.shape} != "
                                f"parameter shape {layer.kernels.shape}")
        lr = config.learning_rate * layer.lr_mult
        g = gw + config.weight_decay * layer.kernels if layer.decay else gw
        key = f"{name}.w"
        v = state.velocity.setdefault(key, np.zeros_like(layer.kernels))
        v *= config.momentum
        v -= lr * g
        layer.kernels += v
        if layer.biases is not None and gb is not None:
            key = f"{name}.b"
            v = state.velocity.setdefault(key, np.zeros_like(layer.biases))
            v *= config.momentum
            v -= lr * gb
            layer.biases += v
    state.iteration += 1


def sample_gts(config: net.NetworkConfig, z: np.ndarray):
    """Per-side truncated groundtruth and the fused groundtruth for one map."""
    if config.head_mode == "binary":
        y = (z > 0).astype(np.int8)
        return [y] * config.num_sides, y
    return ([make_scale_associated_gt(z, i) for i in range(1, config.num_sides + 1)],
            z)


def sample_loss_and_grads(model: net.Model, image: np.ndarray, z: np.ndarray,
                          side_weight: float = 1.0):
    """Forward + loss + full backward for one training sample."""
    config = model.config
    z = np.asarray(z)
    if z.shape != image.shape[-2:]:
        raise DataFormat(f"groundtruth shape {z.shape} does not match image "
                         f"{image.shape[-2:]}")
    result = net.forward(model, image, need_cache=True)
    side_gts, fused_gt = sample_gts(config, z)

    side_losses = []
    grad_side_acts = []
    for i, gt in enumerate(side_gts):
        probs = result.stage_probs[i]
        beta = class_weights(gt, probs.shape[0])
        side_losses.append(side_loss(probs, gt, beta))
        grad_side_acts.append(side_weight * side_loss_gradient(probs, gt, beta))

    beta_f = class_weights(fused_gt, config.num_classes)
    f_loss, grad_f = fusion_loss(result.fused_scores, fused_gt, beta_f)

    grads = net.backward(model, result, grad_side_acts, grad_f)
    loss = total_objective(side_losses, f_loss, side_weight)
    return loss, grads


def objective_value(model: net.Model, image: np.ndarray, z: np.ndarray,
                    side_weight: float = 1.0) -> LossValue:
    """Loss only (no gradients); used by finite-difference checks."""
    config = model.config
    result = net.forward(model, image)
    side_gts, fused_gt = sample_gts(config, np.asarray(z))
    side_losses = []
    for i, gt in enumerate(side_gts):
        probs = result.stage_probs[i]
        beta = class_weights(gt, probs.shape[0])
        side_losses.append(side_loss(probs, gt, beta))
    beta_f = class_weights(fused_gt, config.num_classes)
    f_loss, _ = fusion_loss(result.fused_scores, fused_gt, beta_f)
    return total_objective(side_losses, f_loss, side_weight)


def _accumulate(total: dict | None, grads: dict, weight: float) -> dict:
    if total is None:
        return {name: (gw * weight, None if gb is None else gb * weight)
                for name, (gw, gb) in grads.items()}
    for name, (gw, gb) in grads.items():
        tw, tb = total[name]
        tw += weight * gw
        if tb is not None:
            tb += weight * gb
    return total


def train(model: net.Model, dataset, config: TrainConfig,
          log_path=None, checkpoint_dir=None, progress=None) -> list[dict]:
    """Run momentum SGD for `config.max_iterations` steps.

    `dataset` is an indexable sequence of (image, quantized_map) pairs.
    Batches are drawn with a generator seeded by `config.seed`, so two runs
    with the same seed and precision produce identical checkpoints.
    Returns the training log (one dict per iteration), also written as
    JSON lines when `log_path` is given.
    """
    if len(dataset) == 0:
        raise DataFormat("empty dataset")
    rng = np.random.default_rng(config.seed)
    state = OptimizerState()
    log: list[dict] = []
    log_file = open(log_path, "w") if log_path else None
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir else None
    if ckpt_dir:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    try:
        for it in range(config.max_iterations):
            idx = rng.integers(0, len(dataset), size=config.batch_size)
            total = None
            side_sum = None
            fusion_sum = 0.0
            for i in idx:
                image, z = dataset[int(i)]
                loss, grads = sample_loss_and_grads(
                    model, image, z, config.side_loss_weight)
                total = _accumulate(total, grads, 1.0 / config.batch_size)
                side_sum = (np.array(loss.side) if side_sum is None
                            else side_sum + np.array(loss.side))
                fusion_sum += loss.fusion
            sgd_step(model.params, total, state, config)
            entry = {
                "iteration": it,
                "side_losses": (side_sum / config.batch_size).tolist(),
                "fusion_loss": fusion_sum / config.batch_size,
                "total": float(config.side_loss_weight * side_sum.sum()
                               + fusion_sum) / config.batch_size,
            }
            log.append(entry)
            if log_file:
                log_file.write(json.dumps(entry) + "\n")
            if progress and (it + 1) % progress == 0:
                print(f"iter {it + 1}/{config.max_iterations} "
                      f"total {entry['total']:.5f}", flush=True)
            if ckpt_dir and config.checkpoint_every and \
                    (it + 1) % config.checkpoint_every == 0:
                save_checkpoint(ckpt_dir / f"iter{it + 1:06d}.ckpt",
                                model.state_arrays(), model.config.precision)
        if ckpt_dir:
            save_checkpoint(ckpt_dir / "final.ckpt", model.state_arrays(),
                            model.config.precision)
    finally:
        if log_file:
            log_file.close()
    return log
