"""Keypoint candidates, greedy distance suppression, subpixel refinement
and ranking.

Keypoint collections are numpy structured arrays of ``KEYPOINT_DTYPE``; one
row per keypoint. ``col``/``row`` keep the integer detection pixel on the
working image, which may be the doubled one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .response import SecondMomentMaps, eigen_ratio

RATIO_THRESHOLD = 0.75

KEYPOINT_DTYPE = np.dtype([
    ("x", "f8"),
    ("y", "f8"),
    ("sigma_final", "f8"),
    ("response", "f8"),
    ("scale_index", "i4"),
    ("mu_a", "f8"),
    ("mu_b", "f8"),
    ("mu_c", "f8"),
    ("ratio", "f8"),
    ("sigma_d", "f8"),
    ("col", "i4"),
    ("row", "i4"),
])


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    sigma_final: float
    response: float
    scale_index: int
    mu_a: float
    mu_b: float
    mu_c: float
    ratio: float
    sigma_d: float = 0.0

    @classmethod
    def from_record(cls, rec) -> "Keypoint":
        return cls(*(rec[name].item() for name in cls.__dataclass_fields__))


def empty_keypoints(n: int = 0) -> np.ndarray:
    return np.zeros(n, dtype=KEYPOINT_DTYPE)


def make_keypoints(**fields) -> np.ndarray:
    """Build a keypoint array from equal-length columns; missing ones are 0."""
    n = len(next(iter(fields.values()))) if fields else 0
    kps = empty_keypoints(n)
    for name, values in fields.items():
        kps[name] = values
    return kps


def as_records(kps) -> list[Keypoint]:
    return [Keypoint.from_record(r) for r in kps]


def extract_candidates(h, c_mask, mu: SecondMomentMaps, scale_index: int) -> np.ndarray:
    """One keypoint per set pixel of ``c_mask``, in row-major order."""
    rows, cols = np.nonzero(c_mask)
    kps = empty_keypoints(rows.size)
    kps["x"] = cols
    kps["y"] = rows
    kps["col"] = cols
    kps["row"] = rows
    kps["scale_index"] = scale_index
    kps["response"] = h[rows, cols]
    kps["mu_a"] = mu.a[rows, cols]
    kps["mu_b"] = mu.b[rows, cols]
    kps["mu_c"] = mu.c[rows, cols]
    kps["ratio"] = eigen_ratio(kps["mu_a"], kps["mu_b"], kps["mu_c"])
    return kps


@numba.njit(cache=True)
def _greedy_keep(xs, ys, order, min_dist):
    # Grid of cell size min_dist: a conflicting kept point can only sit in
    # the 3x3 cell neighbourhood. Each cell holds a linked list of kept points.
    n = order.size
    keep = np.zeros(n, dtype=np.bool_)
    if n == 0:
        return keep
    x0 = xs.min()
    y0 = ys.min()
    ncx = int((xs.max() - x0) / min_dist) + 1
    ncy = int((ys.max() - y0) / min_dist) + 1
    head = np.full(ncx * ncy, -1, dtype=np.int64)
    nxt = np.full(xs.size, -1, dtype=np.int64)
    d2 = min_dist * min_dist
    for k in range(n):
        i = order[k]
        cx = int((xs[i] - x0) / min_dist)
        cy = int((ys[i] - y0) / min_dist)
        ok = True
        for gy in range(max(cy - 1, 0), min(cy + 2, ncy)):
            for gx in range(max(cx - 1, 0), min(cx + 2, ncx)):
                j = head[gy * ncx + gx]
                while j >= 0:
                    dx = xs[j] - xs[i]
                    dy = ys[j] - ys[i]
                    if dx * dx + dy * dy < d2:
                        ok = False
                        break
                    j = nxt[j]
                if not ok:
                    break
            if not ok:
                break
        if ok:
            keep[k] = True
            c = cy * ncx + cx
            nxt[i] = head[c]
            head[c] = i
    return keep


def response_order(kps) -> np.ndarray:
    """Indices by decreasing response; ties in ascending (y, x)."""
    return np.lexsort((kps["x"], kps["y"], -kps["response"]))


def greedy_pass(kps, min_dist: float) -> tuple[np.ndarray, np.ndarray]:
    """Visit ``kps`` in the given order and split into (kept, discarded).

    A point is kept iff its distance to every already kept point is at
    least ``min_dist``. Both outputs preserve the visit order.
    """
    if not min_dist > 0:
        raise ValueError(f"min_dist must be > 0, got {min_dist}")
    if kps.size == 0:
        return kps[:0], kps[:0]
    keep = _greedy_keep(
        np.ascontiguousarray(kps["x"]),
        np.ascontiguousarray(kps["y"]),
        np.arange(kps.size, dtype=np.int64),
        float(min_dist),
    )
    return kps[keep], kps[~keep]


def greedy_nms(kps, min_dist: float) -> np.ndarray:
    """Greedy suppression in decreasing response order."""
    if not min_dist > 0:
        raise ValueError(f"min_dist must be > 0, got {min_dist}")
    if kps.size == 0:
        return kps[:0]
    order = response_order(kps)
    keep = _greedy_keep(
        np.ascontiguousarray(kps["x"]), np.ascontiguousarray(kps["y"]), order.astype(np.int64), float(min_dist)
    )
    return kps[order[keep]]


def select_maxima(h, c_mask, mu: SecondMomentMaps, scale_index: int, min_dist: float) -> tuple[np.ndarray, int]:
    """``greedy_nms(extract_candidates(...), min_dist)`` without materializing
    a record per candidate. Returns the survivors and the candidate count."""
    rows, cols = np.nonzero(c_mask)
    resp = h[rows, cols]
    # candidates come out row-major, so a stable sort keeps the (y, x) tie-break
    order = np.argsort(-resp, kind="stable")
    keep = _greedy_keep(cols.astype(np.float64), rows.astype(np.float64), order, float(min_dist))
    idx = order[keep]
    r, c = rows[idx], cols[idx]
    kps = empty_keypoints(idx.size)
    kps["x"] = c
    kps["y"] = r
    kps["col"] = c
    kps["row"] = r
    kps["scale_index"] = scale_index
    kps["response"] = resp[idx]
    kps["mu_a"] = mu.a[r, c]
    kps["mu_b"] = mu.b[r, c]
    kps["mu_c"] = mu.c[r, c]
    kps["ratio"] = eigen_ratio(kps["mu_a"], kps["mu_b"], kps["mu_c"])
    return kps, rows.size


def parabola_offset(hm, h0, hp):
    """Vertex offset of the parabola through (-1, hm), (0, h0), (1, hp).

    Zero where the samples are not strictly concave or the vertex falls
    more than half a pixel away. Broadcasts over arrays.
    """
    hm = np.asarray(hm, dtype=np.float64)
    h0 = np.asarray(h0, dtype=np.float64)
    hp = np.asarray(hp, dtype=np.float64)
    curv = hm - 2.0 * h0 + hp
    concave = curv < 0
    delta = np.where(concave, (hm - hp) / (2.0 * np.where(concave, curv, -1.0)), 0.0)
    return np.where(np.abs(delta) > 0.5, 0.0, delta)


def subpixel_offsets(h, cols, rows) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis parabolic offsets at integer pixels; zero on the border ring."""
    cols = np.asarray(cols, dtype=np.intp)
    rows = np.asarray(rows, dtype=np.intp)
    m, n = h.shape
    inner = (cols >= 1) & (cols <= n - 2) & (rows >= 1) & (rows <= m - 2)
    dx = np.zeros(cols.shape)
    dy = np.zeros(cols.shape)
    c, r = cols[inner], rows[inner]
    dx[inner] = parabola_offset(h[r, c - 1], h[r, c], h[r, c + 1])
    dy[inner] = parabola_offset(h[r - 1, c], h[r, c], h[r + 1, c])
    return dx, dy


def subpixel_refine(h, p) -> tuple[float, float]:
    """(dx, dy) offset of the response peak around integer pixel ``p = (x, y)``."""
    dx, dy = subpixel_offsets(h, [p[0]], [p[1]])
    return float(dx[0]), float(dy[0])


def refine_keypoints(kps, h) -> np.ndarray:
    out = kps.copy()
    dx, dy = subpixel_offsets(h, kps["col"], kps["row"])
    out["x"] = kps["col"] + dx
    out["y"] = kps["row"] + dy
    return out


def ratio_filter(kps, threshold: float = RATIO_THRESHOLD) -> np.ndarray:
    return kps[kps["ratio"] > threshold]


def dedup_finest_scales(kps0, kps1, min_dist: float = 1.0) -> np.ndarray:
    return greedy_nms(np.concatenate([kps0, kps1]), min_dist)


def legacy_rank(kps, k: int | None = None) -> np.ndarray:
    """Scale index descending, then response descending; stable."""
    order = np.lexsort((-kps["response"], -kps["scale_index"].astype(np.int64)))
    ranked = kps[order]
    return ranked if k is None else ranked[:k]


def response_rank(kps) -> np.ndarray:
    """Response descending, then scale index descending; stable."""
    order = np.lexsort((-kps["scale_index"].astype(np.int64), -kps["response"]))
    return kps[order]


def uniform_distance(m: float, n: float, k: float) -> float:
    """Diameter of a circle of area m*n / (k/2)."""
    if not (m > 0 and n > 0 and k > 0):
        raise ValueError("m, n and k must be positive")
    return 2.0 * math.sqrt(2.0 * m * n / (math.pi * k))


def uniform_select(kps, k: int, m: int, n: int, return_passes: bool = False):
    """Spread a response-ranked list over the image under a budget ``k``.

    Repeated greedy passes at distance q: each pass runs on what the
    previous ones discarded, in the same order, and its survivors are
    appended until ``k`` keypoints are collected or nothing is left.
    With ``return_passes`` the pass number of every output keypoint is
    returned too.
    """
    if k <= 0 or kps.size == 0:
        out = kps[:0]
        return (out, np.zeros(0, dtype=np.int64)) if return_passes else out
    q = uniform_distance(m, n, k)
    chunks, passes = [], []
    remaining = kps
    total = 0
    p = 0
    while total < k and remaining.size:
        kept, remaining = greedy_pass(remaining, q)
        chunks.append(kept)
        passes.append(np.full(kept.size, p, dtype=np.int64))
        total += kept.size
        p += 1
    out = np.concatenate(chunks)[:k]
    if return_passes:
        return out, np.concatenate(passes)[:k]
    return out
