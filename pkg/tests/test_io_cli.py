import json
import math

import numpy as np
import pytest
from PIL import Image

from harrisz import cli, detect, default_config, evaluation, io
from harrisz.selection import make_keypoints


@pytest.fixture
def scene_png(tmp_path):
    img, _ = evaluation.synth_scene("checkerboard", 128, 96, seed=1)
    path = tmp_path / "scene.png"
    io.save_image(img, path)
    return path


class TestLoad:
    def test_pgm_levels(self, tmp_path):
        p = tmp_path / "g.pgm"
        Image.fromarray(np.array([[0, 255], [128, 64]], np.uint8)).save(p)
        img = io.load_image(p)
        assert img.shape == (2, 2, 3)
        assert img[0, 1].tolist() == [1.0, 1.0, 1.0] and img[0, 0].tolist() == [0.0, 0.0, 0.0]
        assert img[1, 0, 0] == pytest.approx(128 / 255)

    def test_ppm_and_png_rgb(self, tmp_path, rng):
        arr = rng.integers(0, 256, (5, 7, 3), dtype=np.uint8)
        for name in ("c.ppm", "c.png"):
            Image.fromarray(arr).save(tmp_path / name)
            assert np.array_equal(io.load_image(tmp_path / name), arr / 255.0)

    def test_16bit_png(self, tmp_path):
        arr = np.array([[0, 65535], [1000, 30000]], dtype=np.uint16)
        Image.fromarray(arr).save(tmp_path / "d.png")
        img = io.load_image(tmp_path / "d.png")
        assert img[..., 0] == pytest.approx(arr / 65535.0)

    def test_alpha_dropped(self, tmp_path):
        Image.new("RGBA", (4, 4), (10, 20, 30, 0)).save(tmp_path / "a.png")
        assert io.load_image(tmp_path / "a.png")[0, 0].tolist() == pytest.approx([10 / 255, 20 / 255, 30 / 255])

    def test_truncated(self, tmp_path, scene_png):
        data = scene_png.read_bytes()
        (tmp_path / "t.png").write_bytes(data[: len(data) // 2])
        with pytest.raises(io.ImageFormatError):
            io.load_image(tmp_path / "t.png")

    def test_unsupported(self, tmp_path):
        Image.new("RGB", (4, 4)).save(tmp_path / "x.jpg")
        with pytest.raises(io.ImageFormatError):
            io.load_image(tmp_path / "x.jpg")
        (tmp_path / "junk.png").write_text("not an image")
        with pytest.raises(io.ImageFormatError):
            io.load_image(tmp_path / "junk.png")

    def test_missing(self, tmp_path):
        with pytest.raises(io.ImageReadError):
            io.load_image(tmp_path / "nope.png")


def sample_kps(n=5, seed=0):
    r = np.random.default_rng(seed)
    return make_keypoints(x=r.random(n) * 100, y=r.random(n) * 80, sigma_final=r.random(n) * 3,
                          response=r.standard_normal(n) * 10, scale_index=r.integers(0, 8, n),
                          mu_a=r.random(n), mu_b=r.random(n) - 0.5, mu_c=r.random(n), ratio=r.random(n))


class TestKeypointFiles:
    def test_empty(self, tmp_path):
        io.write_keypoints(make_keypoints(x=np.zeros(0)), tmp_path / "e.txt")
        assert (tmp_path / "e.txt").read_text() == "# harrisz keypoints v1 count=0\n"

    def test_line_format(self, tmp_path):
        kps = make_keypoints(x=np.array([10.5]), y=np.array([20.25]), sigma_final=np.array([1.414214]))
        io.write_keypoints(kps, tmp_path / "k.txt")
        line = (tmp_path / "k.txt").read_text().splitlines()[1]
        assert line.startswith("10.500000 20.250000 1.414214")
        assert len(line.split()) == 9

    @pytest.mark.parametrize("fmt", ["text", "json"])
    def test_roundtrip(self, tmp_path, fmt):
        kps = sample_kps(40)
        path = tmp_path / f"k.{fmt}"
        io.write_keypoints(kps, path, fmt, config={"mode": "plus"})
        back = io.read_keypoints(path)
        assert back.size == kps.size
        for name in io.FIELDS:
            assert np.max(np.abs(back[name] - kps[name])) <= 1e-6 + 1e-12
        if fmt == "json":
            doc = json.loads(path.read_text())
            assert doc["config"] == {"mode": "plus"} and doc["count"] == 40

    def test_bad_count(self):
        with pytest.raises(io.KeypointFileError):
            io.parse_keypoints_text("# harrisz keypoints v1 count=2\n" + " ".join(["1"] * 9) + "\n")
        with pytest.raises(io.KeypointFileError):
            io.parse_keypoints_text("x y\n")


class TestOverlay:
    def test_no_keypoints_is_identity(self, tmp_path, scene_png):
        img = io.load_image(scene_png)
        io.render_overlay(img, make_keypoints(x=np.zeros(0)), tmp_path / "o.png")
        assert np.array_equal(io.load_image(tmp_path / "o.png"), io.load_image(scene_png))

    def test_isotropic_circle(self, tmp_path):
        img = np.zeros((64, 64, 3))
        kp = make_keypoints(x=np.array([32.0]), y=np.array([30.0]), sigma_final=np.array([2.0]),
                            mu_a=np.array([1.0]), mu_c=np.array([1.0]))
        io.render_overlay(img, kp, tmp_path / "c.png")
        out = np.asarray(Image.open(tmp_path / "c.png"))
        ys, xs = np.nonzero(out[..., 1] == 255)
        assert np.all(out[ys, xs, 0] == 0) and np.all(out[ys, xs, 2] == 0)
        r = np.hypot(xs - 32, ys - 30)
        ring = r > 1
        # rasterized outline: within a pixel diagonal of radius 3 * sigma_final
        assert np.all(np.abs(r[ring] - 6.0) <= math.sqrt(2))
        ang = np.arctan2(ys[ring] - 30, xs[ring] - 32)
        assert np.histogram(ang, bins=12, range=(-math.pi, math.pi))[0].min() > 0
        assert out[30, 32, 1] == 255  # centre mark

    def test_clipped_at_border(self, tmp_path):
        kp = make_keypoints(x=np.array([0.0, 63.0]), y=np.array([0.0, 63.0]), sigma_final=np.array([10.0, 10.0]),
                            mu_a=np.array([4.0, 1.0]), mu_b=np.array([1.0, 0.0]), mu_c=np.array([1.0, 1.0]))
        io.render_overlay(np.zeros((64, 64)), kp, tmp_path / "b.png")
        assert Image.open(tmp_path / "b.png").size == (64, 64)


class TestCli:
    def test_detect_text_matches_library(self, tmp_path, scene_png):
        out = tmp_path / "k.txt"
        assert cli.main(["detect", "--input", str(scene_png), "--output", str(out), "--max-keypoints", "100",
                         "--overlay", str(tmp_path / "o.png")]) == 0
        kps = io.read_keypoints(out)
        ref = detect(io.load_image(scene_png), default_config("plus", max_keypoints=100)).keypoints
        assert kps.size == ref.size > 0
        assert np.max(np.abs(kps["x"] - ref["x"])) <= 1e-6
        assert (tmp_path / "o.png").exists()

    def test_detect_flags(self, tmp_path, scene_png):
        out = tmp_path / "k.json"
        args = ["detect", "--input", str(scene_png), "--output", str(out), "--format", "json", "--mode", "plus",
                "--scales", "1..3", "--no-double", "--no-fused-mask", "--ranking", "legacy"]
        assert cli.main(args) == 0
        cfg = json.loads(out.read_text())["config"]
        assert cfg["scale_indices"] == [1, 2, 3] and cfg["ranking"] == "legacy"
        assert not cfg["double_fine_scales"] and not cfg["fused_mask"]
        assert cfg["max_keypoints"] == 8000

    def test_render(self, tmp_path, scene_png):
        kfile = tmp_path / "k.txt"
        cli.main(["detect", "--input", str(scene_png), "--output", str(kfile)])
        assert cli.main(["render", "--input", str(scene_png), "--keypoints", str(kfile),
                         "--output", str(tmp_path / "r.png")]) == 0
        assert cli.main(["render", "--input", str(scene_png), "--keypoints", str(scene_png),
                         "--output", str(tmp_path / "r.png")]) == cli.EXIT_FORMAT

    def test_eval(self, tmp_path, scene_png):
        rep = tmp_path / "rep.txt"
        assert cli.main(["eval", "--input", str(scene_png), "--warps", "2", "--eps", "2", "--seed", "3",
                         "--report", str(rep)]) == 0
        text = rep.read_text()
        assert text.count("[warp ") == 2 and "[aggregate]" in text

    def test_exit_codes(self, tmp_path, scene_png, capsys):
        out = str(tmp_path / "k.txt")
        assert cli.main(["detect", "--input", str(tmp_path / "missing.png"), "--output", out]) == cli.EXIT_IO
        (tmp_path / "bad.png").write_bytes(b"\x89PNG\r\n\x1a\nbroken")
        assert cli.main(["detect", "--input", str(tmp_path / "bad.png"), "--output", out]) == cli.EXIT_FORMAT
        io.save_image(np.zeros((16, 16)), tmp_path / "tiny.png")
        assert cli.main(["detect", "--input", str(tmp_path / "tiny.png"), "--output", out]) == cli.EXIT_INVALID_INPUT
        for argv in (["detect"], ["detect", "--input", str(scene_png), "--output", out, "--scales", "4..1"],
                     ["detect", "--input", str(scene_png), "--output", out, "--max-keypoints", "-3"],
                     ["frobnicate"]):
            with pytest.raises(SystemExit) as exc:
                cli.main(argv)
            assert exc.value.code == cli.EXIT_USAGE
        codes = {cli.EXIT_OK, cli.EXIT_INTERNAL, cli.EXIT_USAGE, cli.EXIT_IO, cli.EXIT_FORMAT, cli.EXIT_INVALID_INPUT}
        assert len(codes) == 6

    def test_internal_error(self, tmp_path, scene_png, monkeypatch):
        def boom(*a, **k):
            raise RuntimeError("boom")

        monkeypatch.setattr(cli.detector, "detect", boom)
        assert cli.main(["detect", "--input", str(scene_png), "--output", str(tmp_path / "k")]) == cli.EXIT_INTERNAL

    def test_scale_parse(self):
        assert cli.parse_scales("0..4") == (0, 1, 2, 3, 4)
        assert cli.parse_scales("3") == (3,)
