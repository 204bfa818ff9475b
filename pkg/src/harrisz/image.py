"""Raster primitives: color conversion, Gaussian kernels, separable
convolution and Lanczos doubling.

Planes are 2-D float64 arrays indexed ``[row, col]``; RGB images are
``(rows, cols, 3)`` float64 arrays with values in [0, 1]. Pixel centers sit
on integer coordinates, ``x`` is the column and ``y`` the row.
"""
from __future__ import annotations

import math

import cv2
import numpy as np

# ITU-R BT.601
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

LANCZOS_A = 3

_IDENTITY = np.ones(1)


def as_plane(img) -> np.ndarray:
    plane = np.asarray(img, dtype=np.float64)
    if plane.ndim != 2:
        raise ValueError(f"expected a 2-D plane, got shape {plane.shape}")
    return plane


def as_rgb(img) -> np.ndarray:
    rgb = np.asarray(img, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected an (rows, cols, 3) image, got shape {rgb.shape}")
    return rgb


def gray_to_rgb(plane) -> np.ndarray:
    plane = as_plane(plane)
    return np.repeat(plane[:, :, None], 3, axis=2)


def to_luminance(rgb) -> np.ndarray:
    rgb = as_rgb(rgb)
    wr, wg, wb = LUMA_WEIGHTS
    lum = wr * rgb[:, :, 0] + wg * rgb[:, :, 1] + wb * rgb[:, :, 2]
    # weights sum to 1 only up to rounding
    return np.clip(lum, rgb.min(axis=2), rgb.max(axis=2))


def to_value(rgb) -> np.ndarray:
    """HSV value channel, i.e. the per-pixel maximum over R, G and B."""
    return as_rgb(rgb).max(axis=2)


def is_gray(rgb) -> bool:
    rgb = as_rgb(rgb)
    return bool(np.array_equal(rgb[:, :, 0], rgb[:, :, 1]) and np.array_equal(rgb[:, :, 1], rgb[:, :, 2]))


def gaussian_radius(sigma: float) -> int:
    return int(math.ceil(3.0 * sigma))


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled zero-mean Gaussian on [-ceil(3 sigma), ceil(3 sigma)], unit sum."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    r = gaussian_radius(sigma)
    offsets = np.arange(1, r + 1, dtype=np.float64)
    half = np.exp(-0.5 * (offsets / sigma) ** 2)
    taps = np.concatenate([half[::-1], [1.0], half])
    return taps / taps.sum()


def _check_kernel(k, name: str) -> np.ndarray:
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 1 or k.size % 2 == 0:
        raise ValueError(f"{name} must be a 1-D kernel of odd length, got shape {k.shape}")
    return k


def _check_fits(img: np.ndarray, rh: int, rv: int) -> None:
    rows, cols = img.shape
    if rh >= cols or rv >= rows:
        raise ValueError(f"kernel radii ({rh}, {rv}) do not fit a {cols}x{rows} image")


def convolve_separable(img, kh, kv) -> np.ndarray:
    """Apply ``kh`` along rows and ``kv`` along columns.

    Uses the correlation convention (no kernel flip) with mirror reflection
    at the borders, edge pixel not repeated. Symmetric kernels make the
    convention moot.
    """
    img = as_plane(img)
    kh = _check_kernel(kh, "kh")
    kv = _check_kernel(kv, "kv")
    _check_fits(img, kh.size // 2, kv.size // 2)
    return cv2.sepFilter2D(img, cv2.CV_64F, kh, kv, borderType=cv2.BORDER_REFLECT_101)


def correlate_rows(img, k) -> np.ndarray:
    return convolve_separable(img, k, _IDENTITY)


def correlate_cols(img, k) -> np.ndarray:
    return convolve_separable(img, _IDENTITY, k)


def gaussian_blur(img, sigma: float) -> np.ndarray:
    g = gaussian_kernel(sigma)
    return convolve_separable(img, g, g)


def lanczos(x, a: int = LANCZOS_A) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.sinc(x) * np.sinc(x / a)
    return np.where(np.abs(x) < a, out, 0.0)


def _double_axis0(img: np.ndarray) -> np.ndarray:
    # output row u samples input coordinate (u + 0.5) / 2 - 0.5, i.e.
    # k - 0.25 for u = 2k and k + 0.25 for u = 2k + 1
    a = LANCZOS_A
    rows = img.shape[0]
    pad = ((a, a),) + ((0, 0),) * (img.ndim - 1)
    padded = np.pad(img, pad, mode="reflect")
    out = np.empty((2 * rows,) + img.shape[1:], dtype=np.float64)
    for parity, frac in ((0, -0.25), (1, 0.25)):
        offsets = np.arange(-a + 1, a + 1) if frac > 0 else np.arange(-a, a)
        w = lanczos(frac - offsets)
        w /= w.sum()
        acc = np.zeros((rows,) + img.shape[1:], dtype=np.float64)
        for o, wo in zip(offsets, w):
            acc += wo * padded[a + o:a + o + rows]
        out[parity::2] = acc
    return out


def upsample_double_lanczos(img, clamp: bool = True) -> np.ndarray:
    """Double both dimensions with separable Lanczos-3 resampling.

    Works on planes and on (rows, cols, channels) stacks. With ``clamp`` the
    result is clipped to the input value range, which removes ringing
    overshoot on intensity images.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim not in (2, 3):
        raise ValueError(f"expected a plane or channel stack, got shape {img.shape}")
    out = _double_axis0(img)
    out = np.swapaxes(_double_axis0(np.swapaxes(out, 0, 1)), 0, 1)
    if clamp:
        out = np.clip(out, img.min(), img.max())
    return np.ascontiguousarray(out)


def double_coords(x):
    """Map original-frame coordinates to the doubled frame."""
    return 2.0 * (np.asarray(x, dtype=np.float64) + 0.5) - 0.5


def halve_coords(x):
    """Map doubled-frame coordinates back to the original frame."""
    return (np.asarray(x, dtype=np.float64) + 0.5) / 2.0 - 0.5
