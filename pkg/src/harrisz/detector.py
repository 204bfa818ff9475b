"""HarrisZ / HarrisZ+ detection pipeline."""
from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import image, response, scale_space, selection
from .response import DegeneratePlaneError

log = logging.getLogger(__name__)

MIN_SIZE = 32
# scale indices processed on the doubled image in plus mode
DOUBLED_INDICES = (0, 1)
DEDUP_DISTANCE = 1.0
# reference budgets of the 2K and 8K setups
BUDGETS = (2048, 8000)


def scale_sigma(i: int) -> float:
    return 2.0 ** (i / 2.0)


@dataclass(frozen=True)
class DetectorConfig:
    mode: str = "plus"
    scale_indices: tuple[int, ...] = (0, 1, 2, 3, 4)
    integration_factor: float = response.INTEGRATION_FACTOR
    mask_threshold: float = response.MASK_THRESHOLD
    ratio_threshold: float = selection.RATIO_THRESHOLD
    max_keypoints: int | None = None
    double_fine_scales: bool = True
    elevate_i0_scale: bool = True
    fused_mask: bool = True
    ranking: str = "uniform"

    def __post_init__(self):
        if self.mode not in ("classic", "plus"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.ranking not in ("legacy", "uniform"):
            raise ValueError(f"unknown ranking {self.ranking!r}")
        idx = tuple(int(i) for i in self.scale_indices)
        if not idx or list(idx) != sorted(set(idx)):
            raise ValueError(f"scale_indices must be non-empty and strictly ascending, got {idx}")
        object.__setattr__(self, "scale_indices", idx)
        if self.max_keypoints is not None and self.max_keypoints < 0:
            raise ValueError("max_keypoints must be >= 0")

    @property
    def sigmas(self) -> tuple[float, ...]:
        return tuple(scale_sigma(i) for i in self.scale_indices)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scale_indices"] = list(self.scale_indices)
        return d


def default_config(mode: str = "plus", **overrides) -> DetectorConfig:
    if mode == "classic":
        cfg = DetectorConfig(
            mode="classic",
            scale_indices=tuple(range(3, 9)),
            double_fine_scales=False,
            elevate_i0_scale=False,
            fused_mask=False,
            ranking="legacy",
        )
    elif mode == "plus":
        cfg = DetectorConfig()
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return replace(cfg, **overrides) if overrides else cfg


@dataclass
class ScaleStats:
    scale_index: int
    candidates: int = 0
    after_nms: int = 0
    after_ratio: int = 0
    skipped: str | None = None


@dataclass
class DetectionResult:
    keypoints: np.ndarray
    per_scale_counts: list[ScaleStats] = field(default_factory=list)
    timing: dict[str, float] = field(default_factory=dict)
    # per-scale NMS survivors before ratio filtering, dedup and ranking;
    # filled only when detect() is called with keep_scales=True
    per_scale_keypoints: dict[int, np.ndarray] | None = None

    def __len__(self):
        return self.keypoints.size


def thread_count() -> int:
    """Worker count from HARRISZ_THREADS; 0 or unset means one per CPU."""
    raw = os.environ.get("HARRISZ_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError("HARRISZ_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


class _Source:
    """Base gradients of the input on the original and the doubled frame.

    Scales only read from here; everything is computed before the per-scale
    workers start.
    """

    def __init__(self, img, cfg: DetectorConfig):
        arr = np.asarray(img, dtype=np.float64)
        if arr.ndim == 3 and image.is_gray(arr):
            arr = arr[:, :, 0]
        self.color = arr.ndim == 3
        self.rgb = image.as_rgb(arr) if self.color else None
        self.lum = image.to_luminance(arr) if self.color else image.as_plane(arr)
        self.use_fused = cfg.mode == "plus" and cfg.fused_mask and self.color
        self._frames: dict[bool, tuple] = {}

    @property
    def shape(self):
        return self.lum.shape

    def prepare(self, doubled: bool) -> None:
        if doubled in self._frames:
            return
        if doubled:
            if self.color:
                rgb = image.upsample_double_lanczos(self.rgb)
                lum = image.to_luminance(rgb)
            else:
                rgb = None
                lum = image.upsample_double_lanczos(self.lum)
        else:
            rgb, lum = self.rgb, self.lum
        g = scale_space.gradient(lum)
        gm = scale_space.fuse_gradients(g, scale_space.gradient(image.to_value(rgb))) if self.use_fused else None
        self._frames[doubled] = (g, gm)

    def gradients(self, doubled: bool):
        """(luminance gradient, fused gradient or None)."""
        return self._frames[doubled]


def _process_scale(src: _Source, i: int, cfg: DetectorConfig, doubled: bool):
    stats = ScaleStats(i)
    t0 = time.perf_counter()
    sigma = scale_sigma(i)
    work_sigma = 2.0 * sigma if doubled else sigma
    g, g_fused = src.gradients(doubled)
    rows, cols = g.ix.shape
    si = cfg.integration_factor * work_sigma
    if image.gaussian_radius(si) >= min(rows, cols):
        stats.skipped = "kernel larger than image"
        return stats, selection.empty_keypoints(), selection.empty_keypoints(), time.perf_counter() - t0

    gs = scale_space.scale_derivatives(g, work_sigma)
    # the mask may come from fused gradients; the response never does
    gm = gs if g_fused is None else scale_space.scale_derivatives(g_fused, work_sigma)
    mask = scale_space.edge_mask(scale_space.gradient_magnitude(gm), work_sigma)
    e = scale_space.enhance(gs, mask)
    mu = response.second_moment_maps(e, work_sigma, cfg.integration_factor)
    try:
        maps = response.response_maps(mu)
    except DegeneratePlaneError as exc:
        stats.skipped = str(exc)
        log.info("scale %d skipped: %s", i, exc)
        return stats, selection.empty_keypoints(), selection.empty_keypoints(), time.perf_counter() - t0

    cmask = response.candidate_mask(maps.h, mask, cfg.mask_threshold)
    kept, stats.candidates = selection.select_maxima(maps.h, cmask, mu, i, math.ceil(3.0 * work_sigma))
    stats.after_nms = kept.size
    kept = selection.refine_keypoints(kept, maps.h)
    nms_kept = kept
    kept = selection.ratio_filter(kept, cfg.ratio_threshold)
    stats.after_ratio = kept.size

    kept = kept.copy()
    if doubled:
        kept["x"] = image.halve_coords(kept["x"])
        kept["y"] = image.halve_coords(kept["y"])
    # frame clamp for border detections, at most 0.25 px after halving
    kept["x"] = np.clip(kept["x"], 0.0, cols / (2 if doubled else 1) - 1)
    kept["y"] = np.clip(kept["y"], 0.0, rows / (2 if doubled else 1) - 1)
    kept["sigma_d"] = sigma
    kept["sigma_final"] = sigma
    if cfg.mode == "plus" and cfg.elevate_i0_scale and i == 0:
        kept["sigma_final"] = scale_sigma(1)
    return stats, kept, nms_kept, time.perf_counter() - t0


def detect(img, cfg: DetectorConfig | None = None, threads: int | None = None,
           keep_scales: bool = False) -> DetectionResult:
    """Detect corners on a gray plane ``(rows, cols)`` or RGB ``(rows, cols, 3)``
    image with values in [0, 1].

    Scales are processed independently (in parallel when ``threads`` > 1)
    and joined in scale order, so the output does not depend on the thread
    count.
    """
    cfg = cfg or default_config("plus")
    t_start = time.perf_counter()
    src = _Source(img, cfg)
    rows, cols = src.shape
    if rows < MIN_SIZE or cols < MIN_SIZE:
        raise ValueError(f"image must be at least {MIN_SIZE}x{MIN_SIZE}, got {cols}x{rows}")

    plus = cfg.mode == "plus"
    jobs = [(i, plus and cfg.double_fine_scales and i in DOUBLED_INDICES) for i in cfg.scale_indices]
    for doubled in sorted({d for _, d in jobs}):
        src.prepare(doubled)
    timing = {"prepare": time.perf_counter() - t_start}

    threads = thread_count() if threads is None else max(1, threads)
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
            outputs = list(pool.map(lambda job: _process_scale(src, job[0], cfg, job[1]), jobs))
    else:
        outputs = [_process_scale(src, i, cfg, d) for i, d in jobs]

    stats = [o[0] for o in outputs]
    per_scale = {s.scale_index: o[1] for s, o in zip(stats, outputs)}
    for s, o in zip(stats, outputs):
        timing[f"scale_{s.scale_index}"] = o[3]

    t0 = time.perf_counter()
    if plus and cfg.elevate_i0_scale and 0 in per_scale and 1 in per_scale:
        fine = selection.dedup_finest_scales(per_scale.pop(0), per_scale.pop(1), DEDUP_DISTANCE)
        parts = [fine] + [per_scale[i] for i in sorted(per_scale)]
    else:
        parts = [per_scale[i] for i in sorted(per_scale)]
    kps = np.concatenate(parts) if parts else selection.empty_keypoints()

    k = cfg.max_keypoints
    if cfg.ranking == "legacy":
        kps = selection.legacy_rank(kps, k)
    else:
        kps = selection.response_rank(kps)
        if k is not None:
            kps = selection.uniform_select(kps, k, rows, cols)
    timing["assemble"] = time.perf_counter() - t0
    timing["total"] = time.perf_counter() - t_start

    result = DetectionResult(kps, stats, timing)
    if keep_scales:
        result.per_scale_keypoints = {s.scale_index: o[2] for s, o in zip(stats, outputs)}
    return result
