"""Skeleton response maps, predicted scales, thinning and binarization."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from . import net
from .geometry import ReceptiveFieldSchedule


def predict_skeleton_map(model: net.Model, image: np.ndarray) -> np.ndarray:
    """Per-pixel skeleton probability: 1 - Pr(background) of the fused stack."""
    result = net.forward(model, image)
    return 1.0 - result.fused_probs[0]


def predict_scale_map(model: net.Model, image: np.ndarray,
                      sched: ReceptiveFieldSchedule | None = None) -> np.ndarray:
    """Expected receptive-field size under the fused scale distribution.

    s_hat = sum_i Pr(class i) * r_i over the non-background classes, so the
    prediction is bounded by the largest receptive field.
    """
    if model.config.head_mode != "scale":
        raise ValueError("scale prediction requires a scale-mode model")
    if sched is None:
        sched = model.schedule
    result = net.forward(model, image)
    r = np.asarray(sched.r, result.fused_probs.dtype)
    return np.tensordot(r, result.fused_probs[1:], axes=(0, 0))


def predict(model: net.Model, image: np.ndarray):
    """One forward pass returning (skeleton response, scale map or None)."""
    result = net.forward(model, image)
    response = 1.0 - result.fused_probs[0]
    if model.config.head_mode == "scale":
        r = np.asarray(model.schedule.r, result.fused_probs.dtype)
        scale = np.tensordot(r, result.fused_probs[1:], axes=(0, 0))
    else:
        scale = None
    return response, scale


def _ridge_normals(response: np.ndarray, sigma: float = 1.0) -> np.ndarray:
    """Unit normal (across-ridge direction) per pixel.

    The dominant eigenvector of the 3x3-averaged second-moment matrix of
    the smoothed response points across a ridge, where intensity varies
    the fastest.
    """
    smoothed = ndimage.gaussian_filter(response.astype(np.float64), sigma)
    gy, gx = np.gradient(smoothed)
    jxx = ndimage.uniform_filter(gx * gx, 3)
    jxy = ndimage.uniform_filter(gx * gy, 3)
    jyy = ndimage.uniform_filter(gy * gy, 3)
    # Closed-form dominant eigenvector of [[jxx, jxy], [jxy, jyy]].
    theta = 0.5 * np.arctan2(2 * jxy, jxx - jyy)
    return np.stack([np.sin(theta), np.cos(theta)], axis=0)  # (dy, dx)


def _suppress_once(response: np.ndarray, sigma: float) -> np.ndarray:
    h, w = response.shape
    normals = _ridge_normals(response, sigma)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    def sample(dy, dx):
        coords = np.stack([np.clip(yy + dy, 0, h - 1),
                           np.clip(xx + dx, 0, w - 1)])
        return ndimage.map_coordinates(response, coords, order=1, mode="nearest")

    ahead = sample(normals[0], normals[1])
    behind = sample(-normals[0], -normals[1])
    keep = (response >= ahead) & (response >= behind)
    return np.where(keep, response, 0.0)


def nms_thin(response: np.ndarray, sigma: float = 1.0) -> np.ndarray:
    """Suppress non-maximal pixels across the local ridge orientation.

    A pixel survives (value unchanged) iff its response is >= the bilinear
    samples one pixel away on both sides along the ridge normal. The
    suppression is iterated to a fixed point (the support only shrinks, and
    convergence typically takes 2-3 passes), which makes the whole
    operation idempotent.
    """
    response = np.asarray(response, np.float64)
    if not response.any():
        return np.zeros_like(response)
    current = _suppress_once(response, sigma)
    while True:
        nxt = _suppress_once(current, sigma)
        if np.array_equal(nxt, current):
            return current
        current = nxt


def smooth_and_thin(response: np.ndarray, smooth: float = 1.5,
                    sigma: float = 1.0) -> np.ndarray:
    """Gaussian-smooth a response map, then thin it with nms_thin.

    Raw fused responses are assembled from upsampled coarse-stride maps and
    carry flat plateaus whose raw-value ties survive suppression en masse;
    smoothing first makes ridges unimodal across their normal so the
    suppression keeps a clean crest. Survivor values are those of the
    smoothed map, so downstream thresholds see a slightly compressed range.
    """
    if smooth < 0:
        raise ValueError("smooth must be >= 0")
    smoothed = ndimage.gaussian_filter(
        np.asarray(response, np.float64), smooth) if smooth > 0 else response
    return nms_thin(smoothed, sigma)


def threshold(response: np.ndarray, t: float) -> np.ndarray:
    """Binary map of pixels with response strictly above t."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    return np.asarray(response) > t
