"""Image loading, keypoint files and ellipse overlays."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, UnidentifiedImageError

from .response import affine_shape
from .selection import empty_keypoints

TEXT_HEADER = "# harrisz keypoints v1"
FIELDS = ("x", "y", "sigma_final", "response", "scale_index", "mu_a", "mu_b", "mu_c", "ratio")
SUPPORTED_FORMATS = {"PNG", "PPM"}  # Pillow reports PGM/PBM files as PPM


class ImageReadError(OSError):
    """The image file cannot be opened or read."""


class ImageFormatError(ValueError):
    """The file is not a supported image or its content is corrupt."""


class KeypointFileError(ValueError):
    """A keypoint file does not follow the text or JSON layout."""


def _normalize(arr: np.ndarray, mode: str) -> np.ndarray:
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    if arr.dtype == np.uint16 or mode.startswith("I;16"):
        return arr.astype(np.float64) / 65535.0
    if arr.dtype == bool:
        return arr.astype(np.float64)
    if np.issubdtype(arr.dtype, np.integer):
        # 16-bit PNG decoded as 32-bit "I"
        return arr.astype(np.float64) / 65535.0
    return np.clip(arr.astype(np.float64), 0.0, 1.0)


def load_image(path) -> np.ndarray:
    """Read a PNG or PNM file as an (rows, cols, 3) array in [0, 1].

    Gray files are replicated to three channels; alpha is dropped.
    """
    path = Path(path)
    try:
        f = open(path, "rb")
    except OSError as exc:
        raise ImageReadError(f"cannot read {path}: {exc}") from exc
    with f:
        try:
            im = Image.open(f)
            fmt = im.format
            if fmt not in SUPPORTED_FORMATS:
                raise ImageFormatError(f"{path}: unsupported format {fmt} (PNG and PNM only)")
            im.load()
        except ImageFormatError:
            raise
        except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
            raise ImageFormatError(f"{path}: not a readable PNG/PNM image ({exc})") from exc
    if im.mode in ("LA", "La"):
        im = im.convert("L")
    elif im.mode not in ("1", "L", "RGB", "I", "I;16", "I;16B", "F"):
        im = im.convert("RGB")
    mode = im.mode
    arr = _normalize(np.asarray(im), mode)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    return np.ascontiguousarray(arr[:, :, :3])


def save_image(img, path) -> None:
    arr = np.asarray(img, dtype=np.float64)
    Image.fromarray(np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)).save(path)


def _rows(kps):
    for rec in kps:
        yield (float(rec["x"]), float(rec["y"]), float(rec["sigma_final"]), float(rec["response"]),
               int(rec["scale_index"]), float(rec["mu_a"]), float(rec["mu_b"]), float(rec["mu_c"]),
               float(rec["ratio"]))


def format_keypoints_text(kps) -> str:
    lines = [f"{TEXT_HEADER} count={kps.size}"]
    for x, y, sf, resp, idx, a, b, c, ratio in _rows(kps):
        lines.append(f"{x:.6f} {y:.6f} {sf:.6f} {resp:.6f} {idx:d} {a:.6f} {b:.6f} {c:.6f} {ratio:.6f}")
    return "\n".join(lines) + "\n"


def write_keypoints(kps, path, fmt: str = "text", config: dict | None = None) -> None:
    """Write keypoints in ranking order, as text or JSON."""
    if fmt == "text":
        payload = format_keypoints_text(kps)
    elif fmt == "json":
        payload = json.dumps({
            "format": "harrisz keypoints v1",
            "count": int(kps.size),
            "config": config or {},
            "fields": list(FIELDS),
            "keypoints": [dict(zip(FIELDS, row)) for row in _rows(kps)],
        }, indent=1) + "\n"
    else:
        raise ValueError(f"unknown keypoint format {fmt!r}")
    with open(path, "w") as f:
        f.write(payload)


def _from_rows(rows) -> np.ndarray:
    kps = empty_keypoints(len(rows))
    for name, col in zip(FIELDS, zip(*rows)) if rows else ():
        kps[name] = col
    kps["col"] = np.round(kps["x"])
    kps["row"] = np.round(kps["y"])
    return kps


def parse_keypoints_text(text: str) -> np.ndarray:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(TEXT_HEADER):
        raise KeypointFileError("missing '# harrisz keypoints v1' header")
    try:
        count = int(lines[0].split("count=")[1])
    except (IndexError, ValueError) as exc:
        raise KeypointFileError("header lacks a count") from exc
    rows = []
    for ln in lines[1:]:
        if not ln.strip() or ln.startswith("#"):
            continue
        parts = ln.split()
        if len(parts) != len(FIELDS):
            raise KeypointFileError(f"expected {len(FIELDS)} fields, got {len(parts)}: {ln!r}")
        vals = [float(p) for p in parts]
        vals[4] = int(parts[4])
        rows.append(vals)
    if len(rows) != count:
        raise KeypointFileError(f"header says count={count} but {len(rows)} keypoints follow")
    return _from_rows(rows)


def read_keypoints(path) -> np.ndarray:
    """Read a keypoint file written by :func:`write_keypoints` (either format)."""
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError as exc:
        raise KeypointFileError(f"{path}: not a text keypoint file") from exc
    if text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
            rows = [[kp[name] for name in FIELDS] for kp in doc["keypoints"]]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise KeypointFileError(f"{path}: malformed JSON keypoint file") from exc
        return _from_rows(rows)
    return parse_keypoints_text(text)


def ellipse_points(x: float, y: float, major: float, minor: float, angle: float) -> list[tuple[float, float]]:
    # chord length of about one pixel along the outline
    n = max(16, int(math.ceil(2 * math.pi * max(major, minor))))
    t = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    ca, sa = math.cos(angle), math.sin(angle)
    ex = major * np.cos(t)
    ey = minor * np.sin(t)
    return list(zip(x + ca * ex - sa * ey, y + sa * ex + ca * ey))


def render_overlay(img, kps, path, color=(0, 255, 0)) -> None:
    """Save ``img`` with every keypoint's second-moment ellipse drawn in green."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    canvas = Image.fromarray(np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8))
    draw = ImageDraw.Draw(canvas)
    for rec in kps:
        x, y = float(rec["x"]), float(rec["y"])
        e = affine_shape(float(rec["mu_a"]), float(rec["mu_b"]), float(rec["mu_c"]), float(rec["sigma_final"]))
        pts = ellipse_points(x, y, e.major, e.minor, e.angle)
        # PIL puts pixel centers at integer coordinates, same as keypoints
        draw.line(pts + pts[:1], fill=color, width=1)
        draw.point((round(x), round(y)), fill=color)
    canvas.save(path)
