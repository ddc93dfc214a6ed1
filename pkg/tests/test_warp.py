import math

import numpy as np
import pytest

from vidunc import _kernels_numpy
from vidunc.backend import active_backend
from vidunc.tensors import FlowField, ImageFrame, ProbMap
from vidunc.warp import (
    BorderMode,
    WarpConfig,
    WarpMode,
    reconstruction_error,
    warp_image,
    warp_prob,
    warp_values,
)

ZERO_CFG = WarpConfig(border=BorderMode.ZERO)


def naive_backward_bilinear(src, flow, border):
    """Independent per-pixel 4-neighbor interpolation oracle (pure python)."""
    h, w, c = src.shape
    out = np.empty_like(src)
    for y in range(h):
        for x in range(w):
            sxc = min(max(x - flow[y, x, 0], -1.0), float(w))
            syc = min(max(y - flow[y, x, 1], -1.0), float(h))
            x0 = math.floor(sxc)
            y0 = math.floor(syc)
            fx = sxc - x0
            fy = syc - y0
            x1, y1 = x0 + 1, y0 + 1
            for k in range(c):
                if border is BorderMode.CLAMP:
                    p00 = src[min(max(y0, 0), h - 1), min(max(x0, 0), w - 1), k]
                    p01 = src[min(max(y0, 0), h - 1), min(max(x1, 0), w - 1), k]
                    p10 = src[min(max(y1, 0), h - 1), min(max(x0, 0), w - 1), k]
                    p11 = src[min(max(y1, 0), h - 1), min(max(x1, 0), w - 1), k]
                else:
                    p00 = src[y0, x0, k] if 0 <= y0 < h and 0 <= x0 < w else 0.0
                    p01 = src[y0, x1, k] if 0 <= y0 < h and 0 <= x1 < w else 0.0
                    p10 = src[y1, x0, k] if 0 <= y1 < h and 0 <= x0 < w else 0.0
                    p11 = src[y1, x1, k] if 0 <= y1 < h and 0 <= x1 < w else 0.0
                top = p00 * (1.0 - fx) + p01 * fx
                bot = p10 * (1.0 - fx) + p11 * fx
                out[y, x, k] = top * (1.0 - fy) + bot * fy
    return out


def shifted_by_loops(arr, dx, dy):
    """Integer-shift oracle with explicit loops and edge clamping."""
    h, w = arr.shape[:2]
    out = np.empty_like(arr)
    for y in range(h):
        for x in range(w):
            sy = min(max(y - dy, 0), h - 1)
            sx = min(max(x - dx, 0), w - 1)
            out[y, x] = arr[sy, sx]
    return out


def random_prob(rng, h, w, c):
    raw = rng.random((h, w, c)) + 1e-6
    return ProbMap(raw / raw.sum(axis=2, keepdims=True))


class TestBackwardBilinear:
    def test_zero_flow_identity_prob(self):
        rng = np.random.default_rng(0)
        p = random_prob(rng, 6, 7, 3)
        out = warp_prob(p, FlowField.zero(6, 7))
        np.testing.assert_allclose(out.data, p.data, atol=1e-6)

    def test_zero_flow_identity_image(self):
        rng = np.random.default_rng(1)
        img = ImageFrame(rng.random((5, 5)) * 255)
        out = warp_image(img, FlowField.zero(5, 5))
        np.testing.assert_allclose(out.data, img.data, atol=1e-6)

    def test_integer_shift_matches_loop_oracle(self):
        rng = np.random.default_rng(2)
        arr = rng.random((8, 9, 2))
        flow = np.zeros((8, 9, 2))
        flow[..., 0] = 1.0  # dx=1: each pixel pulls from its left neighbor
        out = warp_values(arr, FlowField(flow))
        np.testing.assert_array_equal(out, shifted_by_loops(arr, 1, 0))

    def test_half_pixel_average(self):
        p = ProbMap(np.array([[[1.0, 0.0], [0.0, 1.0]]]))  # 1x2, C=2
        flow = np.zeros((1, 2, 2))
        flow[..., 0] = 0.5
        out = warp_prob(p, FlowField(flow))
        # interior pixel (x=1) samples halfway between the two inputs
        np.testing.assert_allclose(out.data[0, 1], [0.5, 0.5], atol=1e-12)

    def test_matches_naive_oracle_exactly(self):
        """100 fuzzed (map, flow) pairs, both border modes, bit-exact."""
        rng = np.random.default_rng(3)
        for _ in range(100):
            h, w, c = rng.integers(1, 8, size=3)
            c = max(int(c), 2)
            src = rng.random((int(h), int(w), c))
            flow = rng.normal(0, 2.5, size=(int(h), int(w), 2))
            if rng.random() < 0.3:
                flow = np.round(flow)
            if rng.random() < 0.1:
                flow *= 1e6
            field = FlowField(flow)
            for border in BorderMode:
                got = warp_values(src, field, WarpConfig(border=border))
                want = naive_backward_bilinear(src, flow, border)
                np.testing.assert_array_equal(got, want)

    def test_numpy_and_numba_lanes_agree_bitwise(self):
        from vidunc import _kernels_numba

        rng = np.random.default_rng(4)
        for _ in range(25):
            src = rng.random((6, 6, 3))
            flow = rng.normal(0, 3, size=(6, 6, 2))
            for border in (0, 1):
                a = _kernels_numpy.backward_bilinear(src, flow, border)
                b = _kernels_numba.backward_bilinear(src, flow, border)
                np.testing.assert_array_equal(a, b)

    def test_warp_prob_invariants_under_arbitrary_flows(self):
        rng = np.random.default_rng(5)
        for _ in range(60):
            p = random_prob(rng, 5, 5, 4)
            flow = rng.normal(0, rng.choice([0.5, 3.0, 50.0]), size=(5, 5, 2))
            for cfg in (WarpConfig(), ZERO_CFG):
                out = warp_prob(p, FlowField(flow), cfg)
                assert out.data.min() >= -1e-6
                np.testing.assert_allclose(out.data.sum(axis=2), 1.0, atol=1e-5)

    def test_dimension_mismatch(self):
        p = random_prob(np.random.default_rng(6), 4, 4, 2)
        with pytest.raises(ValueError, match="match"):
            warp_prob(p, FlowField.zero(5, 4))


class TestForwardSplat:
    def test_zero_flow_identity(self):
        rng = np.random.default_rng(7)
        p = random_prob(rng, 5, 5, 3)
        cfg = WarpConfig(mode=WarpMode.FORWARD_SPLAT)
        out = warp_prob(p, FlowField.zero(5, 5), cfg)
        np.testing.assert_allclose(out.data, p.data, atol=1e-9)

    def test_integer_shift_moves_mass(self):
        p = ProbMap(np.array([[[1.0, 0.0], [0.5, 0.5]]]))
        flow = np.zeros((1, 2, 2))
        flow[0, 0, 0] = 1.0  # pixel 0 lands on pixel 1
        cfg = WarpConfig(mode=WarpMode.FORWARD_SPLAT, border=BorderMode.ZERO)
        out = warp_prob(p, FlowField(flow), cfg)
        # hole at x=0 becomes uniform; x=1 averages both contributors
        np.testing.assert_allclose(out.data[0, 0], [0.5, 0.5])
        np.testing.assert_allclose(out.data[0, 1], [0.75, 0.25])

    def test_lanes_agree_closely(self):
        from vidunc import _kernels_numba

        rng = np.random.default_rng(8)
        src = rng.random((7, 7, 2))
        flow = rng.normal(0, 2, size=(7, 7, 2))
        for border in (0, 1):
            acc_a, w_a = _kernels_numpy.forward_splat(src, flow, border)
            acc_b, w_b = _kernels_numba.forward_splat(src, flow, border)
            np.testing.assert_allclose(acc_a, acc_b, atol=1e-12)
            np.testing.assert_allclose(w_a, w_b, atol=1e-12)


class TestWarpImage:
    def test_uniform_frame_invariant(self):
        rng = np.random.default_rng(9)
        img = ImageFrame(np.full((6, 6), 77.0))
        flow = rng.normal(0, 2, size=(6, 6, 2))
        out = warp_image(img, FlowField(flow))
        np.testing.assert_allclose(out.data, 77.0, atol=1e-9)

    def test_integer_shift_matches_oracle(self):
        rng = np.random.default_rng(10)
        img = ImageFrame(rng.random((6, 8)) * 255)
        flow = np.zeros((6, 8, 2))
        flow[..., 1] = 2.0  # dy=2
        out = warp_image(img, FlowField(flow))
        np.testing.assert_array_equal(
            out.data, shifted_by_loops(np.asarray(img.data), 0, 2)
        )

    def test_output_clamped_to_intensity_range(self):
        img = ImageFrame(np.full((3, 3), 255.0))
        flow = np.full((3, 3, 2), 0.3)
        out = warp_image(img, FlowField(flow))
        assert out.data.max() <= 255.0


class TestReconstructionError:
    def test_identical_frames_zero_flow(self):
        rng = np.random.default_rng(11)
        img = ImageFrame(rng.random((5, 5)) * 255)
        err = reconstruction_error(img, img, FlowField.zero(5, 5))
        np.testing.assert_allclose(err.data, 0.0, atol=1e-9)

    def test_single_channel_difference(self):
        a = ImageFrame(np.full((1, 1), 100.0))
        b = ImageFrame(np.full((1, 1), 90.0))
        err = reconstruction_error(a, b, FlowField.zero(1, 1))
        np.testing.assert_allclose(err.data, 10.0)

    def test_three_channel_mean(self):
        a = ImageFrame(np.zeros((1, 1, 3)))
        b = ImageFrame(np.array([[[10.0, 20.0, 30.0]]]))
        err = reconstruction_error(a, b, FlowField.zero(1, 1))
        np.testing.assert_allclose(err.data, 20.0)

    def test_range_stays_in_intensity_bounds(self):
        rng = np.random.default_rng(12)
        a = ImageFrame(rng.random((6, 6)) * 255)
        b = ImageFrame(rng.random((6, 6)) * 255)
        flow = rng.normal(0, 4, size=(6, 6, 2))
        err = reconstruction_error(a, b, FlowField(flow))
        assert err.data.min() >= 0.0 and err.data.max() <= 255.0

    def test_channel_mismatch(self):
        a = ImageFrame(np.zeros((2, 2, 3)))
        b = ImageFrame(np.zeros((2, 2)))
        with pytest.raises(ValueError, match="differ"):
            reconstruction_error(a, b, FlowField.zero(2, 2))


def test_backend_reports_a_lane():
    assert active_backend() in ("numba", "numpy")
