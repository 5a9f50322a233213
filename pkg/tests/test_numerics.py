"""Kernel-layer tests with direct-summation and closed-form oracles."""

import math

import numpy as np
import pytest

from geomatch.numerics import bilinear_sample, conv2d, matmul, softmax


class TestSoftmax:
    def test_uniform_on_equal_logits(self):
        out = softmax(np.zeros(3, dtype=np.float32), axis=0)
        assert np.allclose(out, [1 / 3, 1 / 3, 1 / 3], atol=1e-7)

    def test_closed_form_ln2(self):
        out = softmax(np.array([math.log(2), 0.0]), axis=0)
        assert np.allclose(out, [2 / 3, 1 / 3], atol=1e-7)

    def test_large_logits_no_overflow(self):
        out = softmax(np.array([1000.0, 999.0]), axis=0)
        e = math.e
        assert np.all(np.isfinite(out))
        assert abs(out[0] - e / (e + 1)) < 1e-6
        assert abs(out[1] - 1 / (e + 1)) < 1e-6

    def test_axis_out_of_range(self):
        with pytest.raises(ValueError):
            softmax(np.zeros((2, 3)), axis=2)

    def test_probability_distribution_property(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            x = rng.normal(scale=50, size=(5, 7, 3)).astype(np.float32)
            for axis in range(3):
                s = softmax(x, axis=axis)
                assert np.all(s >= 0)
                assert np.allclose(s.sum(axis=axis), 1.0, atol=1e-6)

    def test_monotone_in_input(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=8)
        s0 = softmax(x, axis=0)
        x2 = x.copy()
        x2[3] += 0.5
        s1 = softmax(x2, axis=0)
        assert s1[3] > s0[3]


class TestConv2d:
    def test_identity_kernel(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(5, 6, 3)).astype(np.float32)
        k = np.zeros((1, 1, 3, 3), dtype=np.float32)
        for c in range(3):
            k[0, 0, c, c] = 1.0
        assert np.allclose(conv2d(x, k), x, atol=1e-6)

    def test_box_kernel_on_constant_map(self):
        # direct-summation oracle with explicit loops
        c = 2.5
        h, w = 6, 7
        x = np.full((h, w, 1), c, dtype=np.float32)
        k = np.ones((3, 3, 1, 1), dtype=np.float32)
        out = conv2d(x, k)
        expect = np.zeros((h, w))
        for i in range(h):
            for j in range(w):
                acc = 0.0
                for di in (-1, 0, 1):
                    for dj in (-1, 0, 1):
                        if 0 <= i + di < h and 0 <= j + dj < w:
                            acc += c
                expect[i, j] = acc
        assert np.allclose(out[:, :, 0], expect, atol=1e-5)
        assert np.allclose(out[1:-1, 1:-1, 0], 9 * c, atol=1e-5)
        assert out[0, 0, 0] < 9 * c  # zero padding shrinks the border sum

    def test_impulse_response_prints_kernel(self):
        rng = np.random.default_rng(3)
        k = rng.normal(size=(3, 3, 1, 1)).astype(np.float32)
        x = np.zeros((7, 7, 1), dtype=np.float32)
        x[3, 4, 0] = 1.0
        out = conv2d(x, k)
        # cross-correlation: output[i,j] = sum_k x[i+di-1, j+dj-1]*k[di,dj]
        imprint = out[2:5, 3:6, 0]
        assert np.allclose(imprint, k[::-1, ::-1, 0, 0], atol=1e-6)

    def test_zero_input_gives_bias(self):
        k = np.ones((3, 3, 2, 4), dtype=np.float32)
        bias = np.array([1.0, -2.0, 0.5, 0.0], dtype=np.float32)
        out = conv2d(np.zeros((4, 4, 2), dtype=np.float32), k, bias)
        assert np.allclose(out, np.broadcast_to(bias, (4, 4, 4)), atol=1e-7)

    def test_linearity(self):
        rng = np.random.default_rng(4)
        a = rng.normal(size=(5, 5, 2)).astype(np.float32)
        b = rng.normal(size=(5, 5, 2)).astype(np.float32)
        k = rng.normal(size=(3, 3, 2, 3)).astype(np.float32)
        assert np.allclose(conv2d(a + b, k), conv2d(a, k) + conv2d(b, k), atol=1e-5)

    def test_channel_mismatch(self):
        with pytest.raises(ValueError, match="channel"):
            conv2d(np.zeros((4, 4, 2), dtype=np.float32),
                   np.zeros((3, 3, 5, 1), dtype=np.float32))

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            conv2d(np.zeros((4, 4, 1), dtype=np.float32),
                   np.zeros((2, 2, 1, 1), dtype=np.float32))


class TestBilinearSample:
    def test_integer_points_exact(self):
        rng = np.random.default_rng(5)
        g = rng.normal(size=(4, 6, 3)).astype(np.float32)
        pts = [(x, y) for y in range(4) for x in range(6)]
        out = bilinear_sample(g, pts)
        assert np.array_equal(out.reshape(4, 6, 3), g)

    def test_midpoint(self):
        g = np.array([[[0.0], [1.0]]], dtype=np.float32)  # 1x2 map
        out = bilinear_sample(g, [(0.5, 0.0)])
        assert abs(out[0, 0] - 0.5) < 1e-7

    def test_quarter_point_on_ramp(self):
        g = np.array([[[0.0], [4.0]]], dtype=np.float32)
        out = bilinear_sample(g, [(0.25, 0.0)])
        assert abs(out[0, 0] - 1.0) < 1e-7

    def test_out_of_bounds_reports_indices(self):
        g = np.zeros((3, 3, 1), dtype=np.float32)
        with pytest.raises(ValueError, match=r"\[1\]"):
            bilinear_sample(g, [(1.0, 1.0), (3.5, 0.0)])


def test_matmul_float64_accumulation():
    # float32 summation of many equal terms drifts; float64 stays exact here
    n = 200000
    a = np.full((1, n), 1e-3, dtype=np.float32)
    b = np.full((n, 1), 1.0, dtype=np.float32)
    out = matmul(a, b)
    assert abs(out[0, 0] - 200.0) < 1e-3
