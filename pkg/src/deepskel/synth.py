"""Synthetic shapes with analytically known skeletons and scales.

Shapes are rasterized with a strict inequality (distance to the axis <
half-width), which makes the analytic scale of 2 x half-width agree with
the distance-transform skeletonizer to within a pixel on interior axis
pixels. Emitted scale maps are analytic and bypass the skeletonizer, so
the two construction paths cross-validate each other.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormat
from .fileio import write_f32map, write_mask, write_pgm

FAMILIES = ("capsule", "rectangle", "tjunction", "composite")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one generated dataset."""

    image_size: int = 128
    families: tuple[str, ...] = ("capsule", "composite")
    num_images: int = 200
    shapes_per_image: int = 2
    half_width_range: tuple[float, float] = (2.0, 35.0)
    half_width_sampling: str = "uniform"  # "uniform" | "log"
    seed: int = 0

    def __post_init__(self):
        bad = set(self.families) - set(FAMILIES)
        if bad:
            raise DataFormat(f"unknown shape families: {sorted(bad)}")
        lo, hi = self.half_width_range
        if not 1.0 < lo <= hi:
            raise DataFormat("half-width range must satisfy 1 < lo <= hi")
        if self.half_width_sampling not in ("uniform", "log"):
            raise DataFormat(
                f"unknown half-width sampling {self.half_width_sampling!r}")


def _segment_pixels(p0, p1) -> np.ndarray:
    """Dense 8-connected rasterization of the segment p0-p1 (rows, cols)."""
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    n = int(np.ceil(np.abs(p1 - p0).max())) + 1
    pts = np.round(np.linspace(p0, p1, max(n, 2))).astype(int)
    keep = np.ones(len(pts), bool)
    keep[1:] = np.any(pts[1:] != pts[:-1], axis=1)
    return pts[keep]


def draw_capsule(size: int, p0, p1, half_width: float):
    """Capsule mask plus its analytic axis pixels and scales."""
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    a = np.asarray(p0, float)
    d = np.asarray(p1, float) - a
    length2 = float(d @ d)
    if length2 == 0:
        t = np.zeros((size, size))
    else:
        t = np.clip(((yy - a[0]) * d[0] + (xx - a[1]) * d[1]) / length2, 0, 1)
    dist2 = (yy - (a[0] + t * d[0])) ** 2 + (xx - (a[1] + t * d[1])) ** 2
    mask = dist2 < half_width ** 2
    pixels = _segment_pixels(p0, p1)
    scales = np.full(len(pixels), 2.0 * half_width)
    return mask, pixels, scales


def draw_rectangle(size: int, center, half_len: float, half_height: float):
    """Axis-aligned rectangle with its full medial axis.

    The axis is the central horizontal segment (scale = full height) plus
    four 45-degree corner branches whose scale shrinks linearly to 0.
    """
    cy, cx = center
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    mask = (np.abs(yy - cy) < half_height) & (np.abs(xx - cx) < half_len)
    ex = half_len - half_height  # central segment half-extent
    pixels = [_segment_pixels((cy, cx - ex), (cy, cx + ex))]
    scales = [np.full(len(pixels[0]), 2.0 * half_height)]
    for sx in (-1, 1):
        for sy in (-1, 1):
            end = (cy, cx + sx * ex)
            corner = (cy + sy * (half_height - 1), cx + sx * (half_len - 1))
            branch = _segment_pixels(end, corner)[1:]
            pixels.append(branch)
            # Scale = twice the distance to the nearest edge along the branch.
            scales.append(2.0 * (half_height - np.abs(branch[:, 0] - cy)))
    return mask, np.concatenate(pixels), np.concatenate(scales)


def draw_tjunction(size: int, center, arm: float, half_width: float):
    """Two capsules in a T; the skeleton contains a 3-branch junction."""
    cy, cx = center
    m1, p1, s1 = draw_capsule(size, (cy, cx - arm), (cy, cx + arm), half_width)
    m2, p2, s2 = draw_capsule(size, (cy, cx), (cy + arm, cx), half_width)
    return m1 | m2, np.concatenate([p1, p2[1:]]), np.concatenate([s1, s2[1:]])


def _paint(scale_map: np.ndarray, pixels: np.ndarray, scales: np.ndarray) -> None:
    size = scale_map.shape[0]
    ok = (pixels[:, 0] >= 0) & (pixels[:, 0] < size) & \
         (pixels[:, 1] >= 0) & (pixels[:, 1] < size)
    p, s = pixels[ok], scales[ok]
    current = scale_map[p[:, 0], p[:, 1]]
    scale_map[p[:, 0], p[:, 1]] = np.maximum(current, s)


def _random_shape(family: str, size: int, rng, hw_range, sampling="uniform"):
    # Clamp so the shape (plus a 2px margin) always fits the canvas; this
    # keeps small debug-sized images usable with the default width range.
    hw_hi = min(hw_range[1], size / 2.0 - 3.0)
    hw_lo = min(hw_range[0], hw_hi)
    if sampling == "log":
        # Log-uniform half-widths balance thin/medium/thick shape counts,
        # which uniform sampling skews heavily toward the thickest band.
        hw = float(np.exp(rng.uniform(np.log(hw_lo), np.log(hw_hi))))
    else:
        hw = rng.uniform(hw_lo, hw_hi)
    margin = hw + 2
    lo, hi = margin, size - margin

    def point():
        return rng.uniform(lo, hi, size=2)

    if family == "capsule":
        p0 = point()
        min_len = 3 * hw
        for _ in range(20):
            p1 = point()
            if np.hypot(*(p1 - p0)) >= min_len:
                break
        return draw_capsule(size, p0, p1, hw)
    if family == "rectangle":
        half_len = min(rng.uniform(2.5 * hw, max(2.5 * hw, size / 3)),
                       size / 2.0 - 2.0)
        cx = rng.uniform(half_len + 1, size - half_len - 1)
        cy = rng.uniform(hw + 1, size - hw - 1)
        return draw_rectangle(size, (cy, cx), half_len, hw)
    if family == "tjunction":
        arm = min(rng.uniform(min(3 * hw, size / 3), size / 3),
                  (size - 2 * margin) / 2)
        clo = margin + arm
        chi = max(clo, size - margin - arm)  # guard rounding at the boundary
        cy = rng.uniform(clo, chi)
        cx = rng.uniform(clo, chi)
        return draw_tjunction(size, (cy, cx), arm, hw)
    raise DataFormat(f"unknown family {family!r}")


def make_scene(spec: SyntheticSpec, rng) -> tuple[np.ndarray, np.ndarray]:
    """One composed (mask, analytic scale map) pair."""
    size = spec.image_size
    mask = np.zeros((size, size), bool)
    scale_map = np.zeros((size, size), np.float64)
    for _ in range(spec.shapes_per_image):
        family = spec.families[rng.integers(len(spec.families))]
        if family == "composite":
            # A composite is a union of 2-3 primitive shapes.
            for _ in range(int(rng.integers(2, 4))):
                sub = FAMILIES[rng.integers(3)]
                m, p, s = _random_shape(sub, size, rng, spec.half_width_range,
                                        spec.half_width_sampling)
                mask |= m
                _paint(scale_map, p, s)
        else:
            m, p, s = _random_shape(family, size, rng, spec.half_width_range,
                                    spec.half_width_sampling)
            mask |= m
            _paint(scale_map, p, s)
    scale_map[~mask] = 0.0
    return mask, scale_map


def render_image(mask: np.ndarray, rng) -> np.ndarray:
    """Noisy grayscale rendition of a mask in [0, 1]."""
    img = np.where(mask, 0.75, 0.2) + rng.normal(0, 0.05, mask.shape)
    return np.clip(img, 0.0, 1.0)


def gen_samples(spec: SyntheticSpec):
    """In-memory dataset: list of (image, mask, analytic scale map)."""
    rng = np.random.default_rng(spec.seed)
    out = []
    for _ in range(spec.num_images):
        mask, scale_map = make_scene(spec, rng)
        out.append((render_image(mask, rng), mask, scale_map))
    return out


def gen_synthetic(spec: SyntheticSpec, out_dir, train_fraction: float = 0.8) -> dict:
    """Write a dataset to disk and return its manifest.

    Layout: images/NNNN.pgm, masks/NNNN.pgm, scales/NNNN.f32map plus
    manifest.json with per-entry paths and train/test split tags. The
    split assigns the first `train_fraction` of images to train.
    """
    out_dir = Path(out_dir)
    for sub in ("images", "masks", "scales"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    entries = []
    n_train = int(round(spec.num_images * train_fraction))
    for idx, (image, mask, scale_map) in enumerate(gen_samples(spec)):
        name = f"{idx:04d}"
        write_pgm(out_dir / "images" / f"{name}.pgm",
                  np.round(image * 255).astype(np.uint8))
        write_mask(out_dir / "masks" / f"{name}.pgm", mask)
        write_f32map(out_dir / "scales" / f"{name}.f32map", scale_map)
        entries.append({
            "image": f"images/{name}.pgm",
            "mask": f"masks/{name}.pgm",
            "scale_map": f"scales/{name}.f32map",
            "split": "train" if idx < n_train else "test",
        })
    manifest = {"spec": {
        "image_size": spec.image_size,
        "families": list(spec.families),
        "num_images": spec.num_images,
        "shapes_per_image": spec.shapes_per_image,
        "half_width_range": list(spec.half_width_range),
        "half_width_sampling": spec.half_width_sampling,
        "seed": spec.seed,
    }, "entries": entries}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def load_manifest(path) -> dict:
    path = Path(path)
    root = path if path.is_dir() else path.parent
    mpath = root / "manifest.json" if path.is_dir() else path
    try:
        manifest = json.loads(mpath.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise DataFormat(f"cannot load manifest {mpath}: {e}") from e
    manifest["root"] = str(root)
    return manifest
