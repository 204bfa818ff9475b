"""Second-moment maps, the z-scored corner response and per-keypoint shape."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .image import as_plane, gaussian_blur
from .scale_space import EdgeMask, GradientPair

INTEGRATION_FACTOR = math.sqrt(2.0)
MASK_THRESHOLD = 0.31
HARRIS_K = 0.04
# std at or below this marks a featureless plane
DEGENERATE_STD = 1e-12


class DegeneratePlaneError(ValueError):
    """A plane is (numerically) constant, so its z-score is undefined."""


@dataclass(frozen=True)
class SecondMomentMaps:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    sigma_i: float


@dataclass(frozen=True)
class ResponseMaps:
    d: np.ndarray
    t: np.ndarray
    h: np.ndarray


def second_moment_maps(e: GradientPair, sigma: float, s: float = INTEGRATION_FACTOR) -> SecondMomentMaps:
    """Entries of the autocorrelation matrix integrated at scale ``s * sigma``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    si = s * sigma
    return SecondMomentMaps(
        gaussian_blur(e.ix * e.ix, si),
        gaussian_blur(e.ix * e.iy, si),
        gaussian_blur(e.iy * e.iy, si),
        si,
    )


def det_trace(mu: SecondMomentMaps) -> tuple[np.ndarray, np.ndarray]:
    return mu.a * mu.c - mu.b * mu.b, mu.a + mu.c


def zscore(q) -> np.ndarray:
    q = as_plane(q)
    mean = q.mean()
    std = q.std()
    if not std > DEGENERATE_STD:
        raise DegeneratePlaneError(f"plane standard deviation {std:.3g} is degenerate")
    return (q - mean) / std


def harrisz_response(d, t) -> np.ndarray:
    """Z(D) - Z(T^2): positive on corners, negative on edges, ~0 on flat areas."""
    t = as_plane(t)
    return zscore(d) - zscore(t * t)


def classic_response(d, t, c: float = HARRIS_K) -> np.ndarray:
    t = as_plane(t)
    return as_plane(d) - c * t * t


def response_maps(mu: SecondMomentMaps) -> ResponseMaps:
    d, t = det_trace(mu)
    return ResponseMaps(d, t, harrisz_response(d, t))


def candidate_mask(h, m: EdgeMask, threshold: float = MASK_THRESHOLD) -> np.ndarray:
    h = as_plane(h)
    if h.shape != m.mask.shape:
        raise ValueError(f"response shape {h.shape} does not match mask {m.mask.shape}")
    return (h > 0) & (m.mask > threshold)


def eigenvalues(a, b, c):
    """Closed-form (largest, smallest) eigenvalues of [[a, b], [b, c]]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    half_t = 0.5 * (a + c)
    # sqrt(t^2/4 - d) written in a cancellation-free form
    root = np.hypot(0.5 * (a - c), b)
    return half_t + root, half_t - root


def eigen_ratio(a, b, c):
    """lambda_min / lambda_max in [0, 1]; 0 for a vanishing matrix.

    Broadcasts over arrays.
    """
    lmax, lmin = eigenvalues(a, b, c)
    ok = lmax > DEGENERATE_STD
    ratio = np.where(ok, np.clip(lmin, 0.0, None) / np.where(ok, lmax, 1.0), 0.0)
    ratio = np.clip(ratio, 0.0, 1.0)
    return float(ratio) if ratio.ndim == 0 else ratio


@dataclass(frozen=True)
class Ellipse:
    major: float
    minor: float
    # radians, direction of the major axis measured from +x towards +y
    angle: float


def affine_shape(a: float, b: float, c: float, sigma_final: float) -> Ellipse:
    """Ellipse with semi-axes proportional to lambda^-1/2 of the second-moment
    matrix, scaled so their geometric mean is 3 * sigma_final."""
    radius = 3.0 * sigma_final
    lmax, lmin = (float(v) for v in eigenvalues(a, b, c))
    if not lmax > DEGENERATE_STD or not lmin > DEGENERATE_STD * lmax:
        return Ellipse(radius, radius, 0.0)
    # semi-axes r/sqrt(l); sqrt(r_major * r_minor) = radius
    major = radius * (lmax / lmin) ** 0.25
    minor = radius * (lmin / lmax) ** 0.25
    # eigenvector of lmin: (b, lmin - a) or (lmin - c, b)
    if abs(a - lmin) > abs(c - lmin):
        vx, vy = b, lmin - a
    else:
        vx, vy = lmin - c, b
    if vx == 0.0 and vy == 0.0:
        return Ellipse(radius, radius, 0.0)
    angle = math.atan2(vy, vx) % math.pi
    return Ellipse(major, minor, angle)
