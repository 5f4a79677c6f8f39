"""Skeleton/scale groundtruth from binary masks, quantization, augmentation.

Scale is always a maximal-disk *diameter* in pixels: positive on skeleton
pixels, zero elsewhere, so the binary skeleton is recoverable as
``scale_map > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from skimage.morphology import medial_axis

from .errors import ScaleOverflow


@dataclass(frozen=True)
class ReceptiveFieldSchedule:
    """Stage receptive fields and the safety margin used for quantization.

    `r` must be strictly increasing; `margin` (> 1) inflates a scale before
    comparing it against receptive fields, so a stage is only credited with
    scales it can see comfortably.
    """

    r: tuple[int, ...]
    margin: float = 1.2

    def __post_init__(self):
        r = tuple(int(v) for v in self.r)
        object.__setattr__(self, "r", r)
        if not r or any(v <= 0 for v in r):
            raise ValueError("receptive fields must be positive")
        if any(b <= a for a, b in zip(r, r[1:])):
            raise ValueError("receptive fields must be strictly increasing")
        if not self.margin > 1.0:
            raise ValueError("margin must exceed 1")

    @property
    def num_stages(self) -> int:
        return len(self.r)

    @property
    def max_scale(self) -> float:
        """Largest scale quantizable without overflow (exclusive bound)."""
        return self.r[-1] / self.margin


# Default schedule of the reference 4-stage architecture.
DEFAULT_SCHEDULE = ReceptiveFieldSchedule(r=(14, 40, 92, 196), margin=1.2)


def compute_scale_map(mask: np.ndarray) -> np.ndarray:
    """Skeletonize a binary mask and attach maximal-disk diameters.

    Uses the Euclidean distance transform with ridge detection and thinning
    (a 1-px connected medial-axis approximation); on skeleton pixels the
    value is 2x the distance transform, elsewhere 0.
    """
    mask = np.asarray(mask, bool)
    if not mask.any():
        return np.zeros(mask.shape, np.float64)
    skel, dist = medial_axis(mask, return_distance=True)
    return np.where(skel, 2.0 * dist, 0.0)


def quantize_scale(s: float, sched: ReceptiveFieldSchedule, strict: bool = True) -> int:
    """Map a scale to the index of the first stage able to detect it.

    Returns 0 for scale 0 (non-skeleton), else the smallest i (1-based)
    with r_i > margin * s. In strict mode a scale no stage can cover raises
    ScaleOverflow; lenient mode clamps to the last stage.
    """
    if s < 0:
        raise ValueError("scale must be non-negative")
    if s == 0:
        return 0
    inflated = sched.margin * s
    for i, r in enumerate(sched.r, start=1):
        if r > inflated:
            return i
    if strict:
        raise ScaleOverflow(
            f"scale {s} exceeds the largest receptive field "
            f"({sched.margin} * {s} >= {sched.r[-1]})")
    return sched.num_stages


def quantize_map(scale_map: np.ndarray, sched: ReceptiveFieldSchedule,
                 strict: bool = True) -> np.ndarray:
    """Quantize a scale map pixel-wise into classes {0..M} (int8 array).

    Lenient mode clamps overflowing scales to class M; the number of clamped
    pixels is available via `count_overflow`.
    """
    s = np.asarray(scale_map, np.float64)
    if strict and count_overflow(s, sched):
        raise ScaleOverflow(
            f"{count_overflow(s, sched)} pixel(s) exceed the largest receptive field")
    inflated = sched.margin * s[..., None]
    z = np.argmax(np.asarray(sched.r) > inflated, axis=-1) + 1
    z[np.asarray(sched.r).max() <= inflated[..., -1]] = sched.num_stages
    z[s == 0] = 0
    return z.astype(np.int8)


def count_overflow(scale_map: np.ndarray, sched: ReceptiveFieldSchedule) -> int:
    """Number of pixels whose positive scale cannot be quantized."""
    s = np.asarray(scale_map, np.float64)
    return int(np.count_nonzero((s > 0) & (sched.margin * s >= sched.r[-1])))


def make_scale_associated_gt(z: np.ndarray, stage: int) -> np.ndarray:
    """Truncate a quantized map for supervision of one stage.

    Classes above `stage` become background (0); classes <= stage pass
    through, so the result takes values in {0..stage}.
    """
    z = np.asarray(z)
    if stage < 1:
        raise ValueError("stage must be >= 1")
    return np.where(z <= stage, z, 0).astype(z.dtype)


@dataclass(frozen=True)
class AugmentSpec:
    """Deterministic augmentation grid: rotations x flips x resize factors."""

    rotations: tuple[int, ...] = (0, 90, 180, 270)
    flips: tuple[str, ...] = ("none", "ud", "lr")
    factors: tuple[float, ...] = (0.8, 1.0, 1.2)

    def __post_init__(self):
        if any(r % 90 for r in self.rotations):
            raise ValueError("rotations must be multiples of 90 degrees")
        if any(f not in ("none", "ud", "lr") for f in self.flips):
            raise ValueError("flips must be 'none', 'ud' or 'lr'")
        if any(f <= 0 for f in self.factors):
            raise ValueError("resize factors must be positive")


def _resize_image(image: np.ndarray, factor: float) -> np.ndarray:
    h, w = image.shape[:2]
    nh, nw = max(1, round(h * factor)), max(1, round(w * factor))
    zoom = [nh / h, nw / w] + [1] * (image.ndim - 2)
    return ndimage.zoom(np.asarray(image, np.float64), zoom, order=1)


def _resize_scale_map(scale_map: np.ndarray, factor: float) -> np.ndarray:
    # Nearest-neighbor resampling keeps the skeleton thin; values are then
    # multiplied by the factor since diameters live in pixel units.
    h, w = scale_map.shape
    nh, nw = max(1, round(h * factor)), max(1, round(w * factor))
    rows = np.clip(np.round(np.arange(nh) / factor).astype(int), 0, h - 1)
    cols = np.clip(np.round(np.arange(nw) / factor).astype(int), 0, w - 1)
    return scale_map[np.ix_(rows, cols)] * factor


def _orient(arr: np.ndarray, rotation: int, flip: str) -> np.ndarray:
    out = np.rot90(arr, rotation // 90, axes=(0, 1))
    if flip == "ud":
        out = np.flip(out, axis=0)
    elif flip == "lr":
        out = np.flip(out, axis=1)
    return out


def augment(image: np.ndarray, scale_map: np.ndarray,
            spec: AugmentSpec = AugmentSpec()) -> list[tuple[np.ndarray, np.ndarray]]:
    """Enumerate all (image, scale map) augmentation variants.

    Rotations/flips permute pixels without touching scale values; resizing
    scales both axes and multiplies every scale value by the factor. The
    default grid yields 36 variants.
    """
    image = np.asarray(image, np.float64)
    scale_map = np.asarray(scale_map, np.float64)
    out = []
    for rotation in spec.rotations:
        for flip in spec.flips:
            img_o = _orient(image, rotation, flip)
            map_o = _orient(scale_map, rotation, flip)
            for factor in spec.factors:
                if factor == 1.0:
                    out.append((img_o.copy(), map_o.copy()))
                else:
                    out.append((_resize_image(img_o, factor),
                                _resize_scale_map(map_o, factor)))
    return out
