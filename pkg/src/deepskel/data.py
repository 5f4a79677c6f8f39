"""Bridging disk datasets to training samples (image, quantized map)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataFormat
from .fileio import read_f32map, read_mask, read_pgm
from .geometry import (AugmentSpec, ReceptiveFieldSchedule, _orient,
                       _resize_image, _resize_scale_map, compute_scale_map,
                       quantize_map)


def _variants(spec: AugmentSpec):
    return [(r, f, z) for r in spec.rotations for f in spec.flips
            for z in spec.factors]


class SkeletonDataset:
    """Indexable (image, quantized map) pairs with optional augmentation.

    Base samples are (image[H,W] in [0,1], scale map) pairs; augmentation
    multiplies the length by the variant-grid size, applying the variant
    lazily per access. Quantization of augmented maps is lenient (clamped),
    since resizing can push a scale past the largest receptive field.
    """

    def __init__(self, samples, sched: ReceptiveFieldSchedule,
                 augment: AugmentSpec | None = None):
        self.samples = list(samples)
        self.sched = sched
        self.augment = augment
        self.variants = _variants(augment) if augment else None

    def __len__(self):
        n = len(self.samples)
        return n * len(self.variants) if self.variants else n

    def __getitem__(self, idx):
        if self.variants:
            base, vidx = divmod(idx, len(self.variants))
            image, scale_map = self.samples[base]
            rot, flip, factor = self.variants[vidx]
            image = _orient(image, rot, flip)
            scale_map = _orient(scale_map, rot, flip)
            if factor != 1.0:
                image = _resize_image(image, factor)
                scale_map = _resize_scale_map(scale_map, factor)
            strict = False
        else:
            image, scale_map = self.samples[idx]
            strict = False
        z = quantize_map(scale_map, self.sched, strict=strict)
        return np.asarray(image, np.float32)[None], z


def load_split(manifest: dict, split: str, sched: ReceptiveFieldSchedule,
               augment: AugmentSpec | None = None,
               use_analytic_scales: bool = True) -> SkeletonDataset:
    """Load one split of a dataset manifest.

    Scale maps come from the stored analytic rasters when present (and
    `use_analytic_scales`), otherwise they are computed from the masks.
    """
    root = Path(manifest.get("root", "."))
    samples = []
    for entry in manifest["entries"]:
        if entry.get("split") != split:
            continue
        image = read_pgm(root / entry["image"]).astype(np.float32) / 255.0
        if use_analytic_scales and entry.get("scale_map"):
            scale_map = read_f32map(root / entry["scale_map"]).astype(np.float64)
        elif entry.get("mask"):
            scale_map = compute_scale_map(read_mask(root / entry["mask"]))
        else:
            raise DataFormat(f"entry has neither scale map nor mask: {entry}")
        if scale_map.shape != image.shape:
            raise DataFormat(f"scale map and image sizes differ for {entry}")
        samples.append((image, scale_map))
    if not samples:
        raise DataFormat(f"no entries in split {split!r}")
    return SkeletonDataset(samples, sched, augment)


def groundtruth_skeletons(dataset: SkeletonDataset) -> list[np.ndarray]:
    """Binary groundtruth skeleton per (unaugmented) base sample."""
    return [scale_map > 0 for _, scale_map in dataset.samples]
