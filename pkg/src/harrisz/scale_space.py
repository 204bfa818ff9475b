"""Per-scale derivatives, gradient magnitude and the smoothed edge mask."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .image import as_plane, as_rgb, correlate_cols, correlate_rows, gaussian_blur, to_luminance, to_value

# central difference, applied as a correlation: ramp x -> +2
DIFF_KERNEL = np.array([-1.0, 0.0, 1.0])


class GradientPair(NamedTuple):
    ix: np.ndarray
    iy: np.ndarray


@dataclass(frozen=True)
class EdgeMask:
    mask: np.ndarray
    sigma: float


def gradient(img) -> GradientPair:
    img = as_plane(img)
    if img.shape[0] < 3 or img.shape[1] < 3:
        raise ValueError(f"gradient needs at least a 3x3 plane, got {img.shape}")
    return GradientPair(correlate_rows(img, DIFF_KERNEL), correlate_cols(img, DIFF_KERNEL))


def fuse_gradients(gl: GradientPair, gv: GradientPair) -> GradientPair:
    """Pick, per pixel and per axis, the luminance or value derivative with
    the larger magnitude. Ties go to the value derivative."""
    ix = np.where(np.abs(gl.ix) > np.abs(gv.ix), gl.ix, gv.ix)
    iy = np.where(np.abs(gl.iy) > np.abs(gv.iy), gl.iy, gv.iy)
    return GradientPair(ix, iy)


def fused_gradient(rgb) -> GradientPair:
    rgb = as_rgb(rgb)
    return fuse_gradients(gradient(to_luminance(rgb)), gradient(to_value(rgb)))


def scale_derivatives(g: GradientPair, sigma: float) -> GradientPair:
    return GradientPair(gaussian_blur(g.ix, sigma), gaussian_blur(g.iy, sigma))


def gradient_magnitude(g: GradientPair) -> np.ndarray:
    return np.hypot(g.ix, g.iy)


def edge_mask(magnitude, sigma: float) -> EdgeMask:
    """Smoothed indicator of pixels whose magnitude is strictly above the
    global mean."""
    magnitude = as_plane(magnitude)
    indicator = (magnitude > magnitude.mean()).astype(np.float64)
    # non-negative unit-sum kernel keeps the result in [0, 1] up to rounding
    mask = np.clip(gaussian_blur(indicator, sigma), 0.0, 1.0)
    return EdgeMask(mask, sigma)


def enhance(g: GradientPair, mask: EdgeMask) -> GradientPair:
    m = mask.mask
    if g.ix.shape != m.shape or g.iy.shape != m.shape:
        raise ValueError(f"mask shape {m.shape} does not match derivatives {g.ix.shape}")
    return GradientPair(g.ix * m, g.iy * m)
