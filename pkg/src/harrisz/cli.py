"""Command-line interface: ``harrisz detect | eval | render``."""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import detector, evaluation, io

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_IO = 3  # unreadable input or unwritable output
EXIT_FORMAT = 4
EXIT_INVALID_INPUT = 5

log = logging.getLogger("harrisz")


class UsageError(Exception):
    pass


def parse_scales(text: str) -> tuple[int, ...]:
    """``"lo..hi"`` (inclusive) or a single index."""
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split("..", 1))
        else:
            lo = hi = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad scale range {text!r}, expected lo..hi") from exc
    if lo < 0 or hi < lo:
        raise argparse.ArgumentTypeError(f"bad scale range {text!r}")
    return tuple(range(lo, hi + 1))


def _add_detector_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=("classic", "plus"), default="plus")
    p.add_argument("--max-keypoints", type=int, default=detector.BUDGETS[1],
                   help="keypoint budget; 0 keeps everything (default %(default)s)")
    p.add_argument("--scales", type=parse_scales, default=None, help="scale index range lo..hi")
    p.add_argument("--no-double", action="store_true", help="run the finest scales on the original image")
    p.add_argument("--no-fused-mask", action="store_true", help="edge mask from luminance only")
    p.add_argument("--no-elevate", action="store_true", help="keep the finest scale's own sigma")
    p.add_argument("--ranking", choices=("legacy", "uniform"), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="harrisz", description="HarrisZ / HarrisZ+ corner detection")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect keypoints in an image")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--overlay", default=None, help="also write an ellipse overlay image")
    _add_detector_args(p)

    p = sub.add_parser("eval", help="repeatability under seeded random homographies")
    p.add_argument("--input", required=True)
    p.add_argument("--warps", type=int, default=10)
    p.add_argument("--eps", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", required=True)
    _add_detector_args(p)

    p = sub.add_parser("render", help="draw keypoint ellipses over an image")
    p.add_argument("--input", required=True)
    p.add_argument("--keypoints", required=True)
    p.add_argument("--output", required=True)
    return parser


def config_from_args(args) -> detector.DetectorConfig:
    overrides = {}
    if args.scales is not None:
        overrides["scale_indices"] = args.scales
    if args.ranking is not None:
        overrides["ranking"] = args.ranking
    if args.mode == "plus":
        overrides["double_fine_scales"] = not args.no_double
        overrides["fused_mask"] = not args.no_fused_mask
        overrides["elevate_i0_scale"] = not args.no_elevate
    budget = args.max_keypoints
    if budget < 0:
        raise UsageError("--max-keypoints must be >= 0")
    overrides["max_keypoints"] = budget or None
    try:
        return detector.default_config(args.mode, **overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _threads() -> int:
    try:
        n = detector.thread_count()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    try:
        import cv2
        cv2.setNumThreads(n)
    except ImportError:
        pass
    return n


def cmd_detect(args) -> int:
    cfg = config_from_args(args)
    threads = _threads()
    img = io.load_image(args.input)
    result = detector.detect(img, cfg, threads=threads)
    io.write_keypoints(result.keypoints, args.output, args.format, config=cfg.to_dict())
    if args.overlay:
        io.render_overlay(img, result.keypoints, args.overlay)
    log.info("%d keypoints in %.2f s", len(result), result.timing["total"])
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.warps < 1 or not args.eps > 0:
        raise UsageError("--warps must be >= 1 and --eps > 0")
    if args.seed < 0:
        raise UsageError("--seed must be >= 0")
    cfg = config_from_args(args)
    threads = _threads()
    img = io.load_image(args.input)
    rows, cols = img.shape[:2]
    rng = np.random.default_rng(args.seed)
    warps = [evaluation.random_homography(rng, cols, rows) for _ in range(args.warps)]
    # warps run in parallel, so each detection stays single-threaded
    report = evaluation.evaluate_repeatability(
        img, lambda im: detector.detect(im, cfg, threads=1).keypoints, warps, args.eps, threads=threads)
    meta = {"input": args.input, "mode": cfg.mode, "eps": args.eps, "seed": args.seed}
    evaluation.write_report(report, args.report, warps, meta)
    log.info("mean repeatability %.3f over %d warps", report.mean, len(warps))
    return EXIT_OK


def cmd_render(args) -> int:
    img = io.load_image(args.input)
    try:
        kps = io.read_keypoints(args.keypoints)
    except OSError as exc:
        raise io.ImageReadError(str(exc)) from exc
    except io.KeypointFileError as exc:
        raise io.ImageFormatError(str(exc)) from exc
    io.render_overlay(img, kps, args.output)
    return EXIT_OK


COMMANDS = {"detect": cmd_detect, "eval": cmd_eval, "render": cmd_render}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except io.ImageReadError as exc:
        print(f"harrisz: {exc}", file=sys.stderr)
        return EXIT_IO
    except io.ImageFormatError as exc:
        print(f"harrisz: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ValueError as exc:
        # e.g. an image below the minimum size
        print(f"harrisz: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID_INPUT
    except OSError as exc:
        print(f"harrisz: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # pragma: no cover - last resort
        log.exception("internal error")
        print(f"harrisz: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
