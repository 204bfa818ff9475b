import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import signal

from harrisz import image


def brute_conv2d(img, kernel):
    """Direct 2-D correlation with mirror borders, one output pixel at a time."""
    r = kernel.shape[0] // 2
    padded = np.pad(img, r, mode="reflect")
    out = np.empty_like(img)
    for y in range(img.shape[0]):
        for x in range(img.shape[1]):
            out[y, x] = np.sum(padded[y:y + 2 * r + 1, x:x + 2 * r + 1] * kernel)
    return out


class TestColor:
    def test_luminance_examples(self):
        px = np.array([[[1, 1, 1], [0.3, 0.3, 0.3], [1, 0, 0]]], dtype=float)
        lum = image.to_luminance(px)
        assert lum[0, 0] == pytest.approx(1.0)
        assert lum[0, 1] == 0.3
        assert lum[0, 2] == pytest.approx(0.299)

    def test_gray_stays_exact(self, rng):
        g = rng.random((20, 30))
        assert np.array_equal(image.to_luminance(image.gray_to_rgb(g)), g)

    def test_value_examples(self):
        px = np.array([[[0.2, 0.5, 0.1], [1, 1, 1], [0, 0, 0]]])
        assert image.to_value(px).tolist() == [[0.5, 1.0, 0.0]]

    def test_value_dominates_channels(self, rng):
        rgb = rng.random((16, 16, 3))
        v = image.to_value(rgb)
        assert np.all(v[:, :, None] >= rgb)
        assert v.shape == rgb.shape[:2]
        assert image.to_luminance(rgb).shape == rgb.shape[:2]


class TestGaussianKernel:
    def test_sigma_one(self):
        k = image.gaussian_kernel(1.0)
        assert k.size == 7
        assert np.array_equal(k, k[::-1])
        assert abs(k.sum() - 1) < 1e-12

    @given(st.floats(0.2, 20.0))
    def test_shape_properties(self, sigma):
        k = image.gaussian_kernel(sigma)
        r = math.ceil(3 * sigma)
        assert k.size == 2 * r + 1
        assert np.array_equal(k, k[::-1])
        assert abs(k.sum() - 1) < 1e-12
        assert k.argmax() == r

    def test_concentration(self):
        assert image.gaussian_kernel(0.5).max() > image.gaussian_kernel(1.0).max()

    def test_matches_scipy_window(self):
        sigma = 2.3
        r = math.ceil(3 * sigma)
        ref = signal.windows.gaussian(2 * r + 1, sigma)
        assert np.allclose(image.gaussian_kernel(sigma), ref / ref.sum(), atol=1e-15)

    @pytest.mark.parametrize("sigma", [0.0, -1.0])
    def test_rejects_non_positive(self, sigma):
        with pytest.raises(ValueError):
            image.gaussian_kernel(sigma)


class TestConvolution:
    def test_identity(self, rng):
        img = rng.random((10, 12))
        assert np.array_equal(image.convolve_separable(img, [1.0], [1.0]), img)

    def test_constant(self):
        img = np.full((40, 40), 0.37)
        out = image.gaussian_blur(img, 2.5)
        assert np.max(np.abs(out - 0.37)) < 1e-12

    @pytest.mark.parametrize("sigma", [1.4, 0.7, 3.1])
    def test_brute_force_oracle(self, rng, sigma):
        img = rng.random((64, 64))
        k = image.gaussian_kernel(sigma)
        assert np.max(np.abs(image.gaussian_blur(img, sigma) - brute_conv2d(img, np.outer(k, k)))) < 1e-6

    def test_asymmetric_kernel_is_correlation(self):
        ramp = np.tile(np.arange(9.0), (5, 1))
        out = image.correlate_rows(ramp, [-1.0, 0.0, 1.0])
        assert np.all(out[:, 1:-1] == 2.0)
        # mirror border without edge repeat: left neighbour of column 0 is column 1
        assert np.all(out[:, 0] == 0.0)

    def test_anisotropic_against_oracle(self, rng):
        img = rng.random((30, 41))
        kh = rng.random(5)
        kv = rng.random(7)
        assert np.allclose(image.convolve_separable(img, kh, kv), brute_conv2d_rect(img, kh, kv), atol=1e-12)

    def test_semigroup(self, rng):
        a, b = 1.0, 1.5
        for _ in range(5):
            img = rng.random((64, 64))
            twice = image.gaussian_blur(image.gaussian_blur(img, a), b)
            once = image.gaussian_blur(img, math.hypot(a, b))
            assert np.sqrt(np.mean((twice - once) ** 2)) < 2e-3

    def test_kernel_too_large(self):
        with pytest.raises(ValueError):
            image.gaussian_blur(np.zeros((8, 8)), 3.0)

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError):
            image.convolve_separable(np.zeros((8, 8)), [0.5, 0.5], [1.0])


def brute_conv2d_rect(img, kh, kv):
    rh, rv = len(kh) // 2, len(kv) // 2
    padded = np.pad(img, ((rv, rv), (rh, rh)), mode="reflect")
    k2 = np.outer(kv, kh)
    out = np.empty_like(img)
    for y in range(img.shape[0]):
        for x in range(img.shape[1]):
            out[y, x] = np.sum(padded[y:y + 2 * rv + 1, x:x + 2 * rh + 1] * k2)
    return out


class TestLanczos:
    def test_dimensions(self):
        assert image.upsample_double_lanczos(np.zeros((4, 4))).shape == (8, 8)
        assert image.upsample_double_lanczos(np.zeros((5, 7, 3))).shape == (10, 14, 3)

    def test_constant(self):
        out = image.upsample_double_lanczos(np.full((12, 9), 0.6))
        assert np.max(np.abs(out - 0.6)) < 1e-6

    def test_roundtrip_smooth(self):
        yy, xx = np.mgrid[0:64, 0:64]
        img = 0.5 + 0.4 * np.sin(2 * np.pi * xx / 23.0) * np.cos(2 * np.pi * yy / 31.0)
        up = image.upsample_double_lanczos(img)
        down = up.reshape(64, 2, 64, 2).mean(axis=(1, 3))
        assert np.sqrt(np.mean((down - img) ** 2)) < 0.02

    def test_clamped_to_input_range(self, rng):
        img = (rng.random((20, 20)) > 0.5).astype(float)
        up = image.upsample_double_lanczos(img)
        assert up.min() >= 0.0 and up.max() <= 1.0

    def test_kernel_values(self):
        assert image.lanczos(np.array([0.0]))[0] == 1.0
        assert np.allclose(image.lanczos(np.array([1.0, 2.0, 3.0, 3.5])), 0.0, atol=1e-15)

    def test_matches_direct_sinc_sum(self, rng):
        # columns constant in x, so each output row is a 1-D windowed-sinc sum
        col = rng.random(24)
        img = np.tile(col[:, None], (1, 8))
        up = image.upsample_double_lanczos(img, clamp=False)
        for u in (13, 20, 26):
            s = (u + 0.5) / 2 - 0.5
            taps = np.arange(math.floor(s) - 2, math.floor(s) + 4)
            w = np.sinc(s - taps) * np.sinc((s - taps) / 3)
            expected = np.sum(w * col[taps]) / w.sum()
            assert np.allclose(up[u], expected, atol=1e-12)

    @given(st.floats(-50, 50))
    def test_coordinate_roundtrip(self, x):
        assert image.halve_coords(image.double_coords(x)) == pytest.approx(x, abs=1e-12)
