"""Synthetic scenes with exact junctions, homography warps and detector
repeatability / localization scoring."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .image import gray_to_rgb

SCENE_KINDS = ("checkerboard", "random_squares", "polygons")


# ---------------------------------------------------------------- scenes

def _coverage_1d(lo: float, hi: float, size: int) -> np.ndarray:
    # overlap of [lo, hi] with each pixel footprint [c - 0.5, c + 0.5]
    c = np.arange(size, dtype=np.float64)
    return np.clip(np.minimum(c + 0.5, hi) - np.maximum(c - 0.5, lo), 0.0, 1.0)


def checkerboard(width: int, height: int, cells: int = 8, seed: int = 0,
                 origin: tuple[float, float] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Anti-aliased checkerboard of square cells, ``cells`` across the width.

    The grid origin sits at a subpixel offset (drawn from ``seed`` unless
    given) so junctions are in generic position with respect to the pixel
    grid. Returns the gray plane and the interior junctions as (x, y) rows.
    """
    size = width / cells
    if origin is None:
        origin = tuple(np.random.default_rng(seed).uniform(0.0, 1.0, 2))
    ox, oy = origin
    lo, hi = 0.15, 0.85

    def parity_coverage(n: int, o: float) -> np.ndarray:
        # fraction of each pixel footprint lying in even-indexed cells
        edges = o - 0.5 + size * np.arange(-1, int(n / size) + 3)
        cov = np.zeros(n)
        for k in range(0, edges.size - 1, 2):
            cov += _coverage_1d(edges[k], edges[k + 1], n)
        return cov

    ex = parity_coverage(width, ox)[None, :]
    ey = parity_coverage(height, oy)[:, None]
    # a pixel is bright where exactly one axis is in an even cell
    bright = ex * (1 - ey) + (1 - ex) * ey
    plane = lo + (hi - lo) * bright
    xs = ox - 0.5 + size * np.arange(1, cells)
    ys = oy - 0.5 + size * np.arange(1, int(height / size) + 1)
    ys = ys[ys < height - 1]
    gx, gy = np.meshgrid(xs, ys)
    return plane, np.column_stack([gx.ravel(), gy.ravel()])


def random_squares(width: int, height: int, seed: int, count: int | None = None,
                   min_side: float = 12.0, max_side: float = 40.0, gap: float = 10.0,
                   margin: float = 12.0) -> tuple[np.ndarray, np.ndarray]:
    """Non-overlapping axis-aligned squares at subpixel positions.

    Squares are kept ``gap`` px apart (and ``margin`` px from the border)
    so every corner is an isolated junction. Each square gets its own
    intensity, contrasted against a uniform background.
    """
    rng = np.random.default_rng(seed)
    if count is None:
        count = int(width * height / 2000)
    background = 0.5
    plane = np.full((height, width), background)
    # largest square that still fits inside the margins
    max_side = min(max_side, min(width, height) - 1 - 2 * margin)
    min_side = min(min_side, max_side)
    placed: list[tuple[float, float, float, float]] = []
    attempts = 0
    while len(placed) < count and attempts < 200 * count:
        attempts += 1
        side = rng.uniform(min_side, max_side)
        x0 = rng.uniform(margin, width - 1 - margin - side)
        y0 = rng.uniform(margin, height - 1 - margin - side)
        box = (x0, y0, x0 + side, y0 + side)
        if any(box[0] < b[2] + gap and b[0] < box[2] + gap and box[1] < b[3] + gap and b[1] < box[3] + gap
               for b in placed):
            continue
        placed.append(box)
        level = rng.choice([rng.uniform(0.0, 0.3), rng.uniform(0.7, 1.0)])
        cov = np.outer(_coverage_1d(box[1], box[3], height), _coverage_1d(box[0], box[2], width))
        plane = plane * (1.0 - cov) + level * cov
    junctions = np.array([(x, y) for b in placed for x in (b[0], b[2]) for y in (b[1], b[3])]).reshape(-1, 2)
    return plane, junctions


def _convex_polygon_coverage(verts: np.ndarray, width: int, height: int, ss: int = 8) -> np.ndarray:
    # supersampled inside test against the polygon's edge half-planes
    x0 = max(int(math.floor(verts[:, 0].min())) - 1, 0)
    x1 = min(int(math.ceil(verts[:, 0].max())) + 2, width)
    y0 = max(int(math.floor(verts[:, 1].min())) - 1, 0)
    y1 = min(int(math.ceil(verts[:, 1].max())) + 2, height)
    cov = np.zeros((height, width))
    if x1 <= x0 or y1 <= y0:
        return cov
    sub = (np.arange(ss) + 0.5) / ss - 0.5
    xs = (np.arange(x0, x1)[:, None] + sub[None, :]).ravel()
    ys = (np.arange(y0, y1)[:, None] + sub[None, :]).ravel()
    px, py = np.meshgrid(xs, ys)
    inside = np.ones(px.shape, dtype=bool)
    area2 = 0.0
    for k in range(len(verts)):
        ax, ay = verts[k]
        bx, by = verts[(k + 1) % len(verts)]
        area2 += ax * by - bx * ay
    sign = 1.0 if area2 > 0 else -1.0
    for k in range(len(verts)):
        ax, ay = verts[k]
        bx, by = verts[(k + 1) % len(verts)]
        inside &= sign * ((bx - ax) * (py - ay) - (by - ay) * (px - ax)) >= 0
    block = inside.reshape(y1 - y0, ss, x1 - x0, ss).mean(axis=(1, 3))
    cov[y0:y1, x0:x1] = block
    return cov


def random_polygons(width: int, height: int, seed: int, count: int | None = None,
                    gap: float = 10.0, margin: float = 12.0) -> tuple[np.ndarray, np.ndarray]:
    """Non-overlapping random quadrilaterals (convex, corners 60-120 degrees)."""
    rng = np.random.default_rng(seed)
    if count is None:
        count = int(width * height / 3000)
    plane = np.full((height, width), 0.5)
    placed_boxes: list[tuple[float, float, float, float]] = []
    junctions: list[np.ndarray] = []
    r_max = min(28.0, (min(width, height) - 1 - 2 * margin) / 2)
    attempts = 0
    while len(placed_boxes) < count and attempts < 200 * count:
        attempts += 1
        r = rng.uniform(min(10.0, r_max), r_max)
        cx = rng.uniform(margin + r, width - 1 - margin - r)
        cy = rng.uniform(margin + r, height - 1 - margin - r)
        # four vertices on a circle, angles jittered around a square
        base = rng.uniform(0, math.pi / 2)
        ang = base + np.arange(4) * math.pi / 2 + rng.uniform(-0.25, 0.25, 4)
        verts = np.column_stack([cx + r * np.cos(ang), cy + r * np.sin(ang)])
        box = (verts[:, 0].min(), verts[:, 1].min(), verts[:, 0].max(), verts[:, 1].max())
        if any(box[0] < b[2] + gap and b[0] < box[2] + gap and box[1] < b[3] + gap and b[1] < box[3] + gap
               for b in placed_boxes):
            continue
        placed_boxes.append(box)
        level = rng.choice([rng.uniform(0.0, 0.3), rng.uniform(0.7, 1.0)])
        cov = _convex_polygon_coverage(verts, width, height)
        plane = plane * (1.0 - cov) + level * cov
        junctions.append(verts)
    pts = np.concatenate(junctions) if junctions else np.zeros((0, 2))
    return plane, pts


def synth_scene(kind: str, width: int, height: int, seed: int = 0, **kwargs) -> tuple[np.ndarray, np.ndarray]:
    """Render a synthetic RGB scene and return it with its (x, y) junctions.

    The RGB channels are identical; a gray plane can be taken from any one.
    """
    if width < 64 or height < 64:
        raise ValueError("synthetic scenes need at least 64x64 pixels")
    if kind == "checkerboard":
        plane, junctions = checkerboard(width, height, seed=seed, **kwargs)
    elif kind == "random_squares":
        plane, junctions = random_squares(width, height, seed, **kwargs)
    elif kind == "polygons":
        plane, junctions = random_polygons(width, height, seed, **kwargs)
    else:
        raise ValueError(f"unknown scene kind {kind!r}; expected one of {SCENE_KINDS}")
    return gray_to_rgb(plane), junctions


# ---------------------------------------------------------------- homographies

def normalize_homography(h) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64).reshape(3, 3)
    if abs(h[2, 2]) < 1e-12:
        raise ValueError("homography has a vanishing bottom-right entry")
    h = h / h[2, 2]
    if abs(np.linalg.det(h[:2, :2])) < 1e-9:
        raise ValueError("homography is singular")
    return h


def homography_condition(h) -> float:
    return float(np.linalg.cond(normalize_homography(h)))


def project(h, pts) -> np.ndarray:
    """Apply a homography to (N, 2) points."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    hom = np.column_stack([pts, np.ones(len(pts))]) @ np.asarray(h, dtype=np.float64).T
    return hom[:, :2] / hom[:, 2:3]


def random_homography(rng: np.random.Generator, width: int, height: int,
                      max_rotation: float = 30.0, scale_range: tuple[float, float] = (0.8, 1.25),
                      max_perspective: float = 1e-4) -> np.ndarray:
    """Moderate random warp about the image center: rotation, anisotropic
    scale and a small perspective term."""
    theta = math.radians(rng.uniform(-max_rotation, max_rotation))
    sx, sy = np.exp(rng.uniform(np.log(scale_range[0]), np.log(scale_range[1]), 2))
    px, py = rng.uniform(-max_perspective, max_perspective, 2)
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    c, s = math.cos(theta), math.sin(theta)
    to_center = np.array([[1, 0, -cx], [0, 1, -cy], [0, 0, 1.0]])
    back = np.array([[1, 0, cx], [0, 1, cy], [0, 0, 1.0]])
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
    scale = np.diag([sx, sy, 1.0])
    persp = np.array([[1, 0, 0], [0, 1, 0], [px, py, 1.0]])
    return normalize_homography(back @ persp @ rot @ scale @ to_center)


def rotation90_homography(width: int, height: int) -> np.ndarray:
    """Counter-clockwise quarter turn matching ``np.rot90``: (x, y) -> (y, W - 1 - x)."""
    return np.array([[0, 1, 0], [-1, 0, width - 1], [0, 0, 1.0]])


def warp_image(img, h, out_shape: tuple[int, int] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Warp a plane or RGB image by ``h`` with inverse-mapped bilinear sampling.

    Returns the warped image and the validity mask of pixels whose preimage
    lies inside the source. Invalid pixels are filled with the mean of the
    valid ones.
    """
    h = normalize_homography(h)
    img = np.asarray(img, dtype=np.float64)
    rows, cols = img.shape[:2]
    out_rows, out_cols = out_shape or (rows, cols)
    hinv = np.linalg.inv(h)
    yy, xx = np.mgrid[0:out_rows, 0:out_cols]
    src = project(hinv, np.column_stack([xx.ravel(), yy.ravel()]))
    sx = src[:, 0].reshape(out_rows, out_cols)
    sy = src[:, 1].reshape(out_rows, out_cols)
    eps = 1e-9
    valid = (sx >= -eps) & (sx <= cols - 1 + eps) & (sy >= -eps) & (sy <= rows - 1 + eps)
    coords = [np.clip(sy, 0, rows - 1), np.clip(sx, 0, cols - 1)]
    if img.ndim == 2:
        out = ndimage.map_coordinates(img, coords, order=1, mode="nearest")
    else:
        out = np.stack([ndimage.map_coordinates(img[..., k], coords, order=1, mode="nearest")
                        for k in range(img.shape[2])], axis=-1)
    if valid.any() and not valid.all():
        out[~valid] = out[valid].mean(axis=0)
    return out, valid


def interior(valid, margin: int) -> np.ndarray:
    """Valid pixels farther than ``margin`` px from any invalid pixel or the
    image border."""
    padded = np.pad(valid, 1, constant_values=False)
    dist = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
    return dist > margin


# ---------------------------------------------------------------- scoring

@dataclass
class WarpScore:
    count_ref: int
    count_warp: int
    correspondences: int
    score: float
    pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64), repr=False)


@dataclass
class RepeatabilityReport:
    warps: list[WarpScore] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean([w.score for w in self.warps])) if self.warps else 0.0

    @property
    def min(self) -> float:
        return float(np.min([w.score for w in self.warps])) if self.warps else 0.0


def _xy(kps) -> np.ndarray:
    if isinstance(kps, np.ndarray) and kps.dtype.names:
        return np.column_stack([kps["x"], kps["y"]]).astype(np.float64)
    return np.asarray(kps, dtype=np.float64).reshape(-1, 2)


def _on_mask(pts: np.ndarray, mask) -> np.ndarray:
    if mask is None:
        return np.ones(len(pts), dtype=bool)
    rows, cols = mask.shape
    ix = np.round(pts[:, 0]).astype(np.int64)
    iy = np.round(pts[:, 1]).astype(np.int64)
    ok = (ix >= 0) & (ix < cols) & (iy >= 0) & (iy < rows)
    ok[ok] = mask[iy[ok], ix[ok]]
    return ok


def repeatability(kps_a, kps_b, h, eps: float, valid_a=None, valid_b=None) -> WarpScore:
    """Center-distance repeatability of ``kps_b`` (in the warped frame)
    against ``kps_a`` under ``h``.

    Only keypoints seen by both images count: ``a`` when it lies on
    ``valid_a`` and ``h(a)`` on ``valid_b``, ``b`` symmetrically. Pairs are
    assigned one-to-one, closest first.
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    h = normalize_homography(h)
    a = _xy(kps_a)
    b = _xy(kps_b)
    pa = project(h, a) if len(a) else a
    pb = project(np.linalg.inv(h), b) if len(b) else b
    in_a = _on_mask(a, valid_a) & _on_mask(pa, valid_b)
    in_b = _on_mask(b, valid_b) & _on_mask(pb, valid_a)
    ia = np.flatnonzero(in_a)
    ib = np.flatnonzero(in_b)
    n_ref, n_warp = ia.size, ib.size
    pairs = np.zeros((0, 2), dtype=np.int64)
    if n_ref and n_warp:
        tree = cKDTree(b[ib])
        cand = tree.query_ball_point(pa[ia], eps)
        ii, jj, dd = [], [], []
        for k, js in enumerate(cand):
            for j in js:
                ii.append(ia[k])
                jj.append(ib[j])
                dd.append(np.hypot(*(pa[ia[k]] - b[ib[j]])))
        if dd:
            # closest first; index tie-break keeps the result deterministic
            order = np.lexsort((jj, ii, dd))
            used_a, used_b, chosen = set(), set(), []
            for o in order:
                if ii[o] in used_a or jj[o] in used_b:
                    continue
                used_a.add(ii[o])
                used_b.add(jj[o])
                chosen.append((ii[o], jj[o]))
            pairs = np.array(chosen, dtype=np.int64)
    denom = min(n_ref, n_warp)
    score = len(pairs) / denom if denom else 0.0
    return WarpScore(n_ref, n_warp, len(pairs), score, pairs)


@dataclass
class LocalizationSummary:
    errors: np.ndarray
    misses: int
    total: int

    @property
    def hit_rate(self) -> float:
        return (self.total - self.misses) / self.total if self.total else 0.0

    @property
    def median(self) -> float:
        return float(np.median(self.errors)) if self.errors.size else math.inf

    @property
    def p95(self) -> float:
        return float(np.percentile(self.errors, 95)) if self.errors.size else math.inf


def localization_error(kps, junctions, radius: float) -> LocalizationSummary:
    """Distance from every ground-truth junction to its nearest keypoint;
    junctions without a keypoint within ``radius`` are misses."""
    if not radius > 0:
        raise ValueError("radius must be > 0")
    j = np.asarray(junctions, dtype=np.float64).reshape(-1, 2)
    p = _xy(kps)
    if not len(p):
        return LocalizationSummary(np.zeros(0), len(j), len(j))
    d, _ = cKDTree(p).query(j)
    hit = d <= radius
    return LocalizationSummary(d[hit], int((~hit).sum()), len(j))


# ---------------------------------------------------------------- harness

def evaluate_repeatability(img, detect_fn, warps, eps: float, margin: int = 8,
                           threads: int = 1) -> RepeatabilityReport:
    """Detect on ``img`` and on each warped copy, then score every warp.

    ``detect_fn`` maps an image to a keypoint array. Keypoints closer than
    ``margin`` px to an invalid region or the border are not counted, which
    discards detections on the artificial edges that warping creates.
    Warps run on up to ``threads`` workers; scores keep the warp order.
    """
    img = np.asarray(img, dtype=np.float64)
    rows, cols = img.shape[:2]
    ref = detect_fn(img)
    valid_ref = interior(np.ones((rows, cols), dtype=bool), margin)

    def score(h):
        warped, valid = warp_image(img, h)
        return repeatability(ref, detect_fn(warped), h, eps, valid_ref, interior(valid, margin))

    if threads > 1 and len(warps) > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(warps))) as pool:
            scores = list(pool.map(score, warps))
    else:
        scores = [score(h) for h in warps]
    return RepeatabilityReport(scores)


def write_report(report: RepeatabilityReport, path, warps=None, meta: dict | None = None) -> None:
    lines = ["# harrisz repeatability report v1"]
    for key, value in (meta or {}).items():
        lines.append(f"# {key}: {value}")
    for i, w in enumerate(report.warps):
        lines.append(f"[warp {i}]")
        if warps is not None:
            lines.append("homography = " + " ".join(f"{v:.9g}" for v in np.asarray(warps[i]).ravel()))
        lines.append(f"count_ref = {w.count_ref}")
        lines.append(f"count_warp = {w.count_warp}")
        lines.append(f"correspondences = {w.correspondences}")
        lines.append(f"score = {w.score:.6f}")
    lines.append("[aggregate]")
    lines.append(f"warps = {len(report.warps)}")
    lines.append(f"mean = {report.mean:.6f}")
    lines.append(f"min = {report.min:.6f}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
