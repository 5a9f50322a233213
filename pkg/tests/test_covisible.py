"""Co-visibility head and mask thresholding."""

import numpy as np
import pytest

from geomatch.covisible import (
    CoVisibleMap,
    CovisibleWeights,
    covisible_head,
    save_mask_pgm,
    spatial_gate,
    threshold_mask,
)


class TestHead:
    def test_zero_features_zero_weights_gives_half(self):
        d = 8
        out = covisible_head(np.zeros((3, 3, d), dtype=np.float32),
                             np.zeros(d), CovisibleWeights.zeros(d))
        assert np.allclose(out, 0.5, atol=1e-7)

    def test_hand_checked_small_case(self):
        # d=2, 2x2 grid, 3x3 convs with a single center tap; evaluated by an
        # independent scalar reimplementation below
        d = 2
        feat = np.array([[[1.0, 0.0], [0.0, 1.0]],
                         [[0.5, 0.5], [-1.0, 2.0]]], dtype=np.float32)
        query = np.array([1.0, -1.0])
        w = CovisibleWeights.zeros(d)
        w.conv1[1, 1] = np.array([[2.0], [1.0]], dtype=np.float32)  # d -> d/2=1
        w.bias1 = np.array([0.1], dtype=np.float32)
        w.conv2[1, 1] = np.array([[3.0]], dtype=np.float32)
        w.bias2 = np.array([-0.2], dtype=np.float32)
        out = covisible_head(feat, query, w)

        def sigmoid(x):
            return 1.0 / (1.0 + np.exp(-x))

        for y in range(2):
            for x in range(2):
                f = feat[y, x].astype(np.float64)
                gate = sigmoid(f @ query)
                enh = gate * f + f
                h1 = max(enh @ [2.0, 1.0] + 0.1, 0.0)
                expect = sigmoid(3.0 * h1 - 0.2)
                assert abs(out[y, x] - expect) < 1e-6

    def test_gate_saturates_with_aligned_query(self):
        rng = np.random.default_rng(0)
        feat = np.abs(rng.normal(size=(4, 4, 8))) + 0.1
        g = spatial_gate(feat, np.full(8, 1e4))
        assert np.allclose(g, 1.0, atol=1e-12)

    def test_output_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(1)
        d = 8
        feat = rng.normal(size=(5, 5, d)).astype(np.float32)
        w = CovisibleWeights.init(seed=2, d=d)
        out = covisible_head(feat, rng.normal(size=d), w)
        assert np.all(out > 0) and np.all(out < 1)

    def test_monotone_in_final_bias(self):
        rng = np.random.default_rng(3)
        d = 8
        feat = rng.normal(size=(4, 4, d)).astype(np.float32)
        q = rng.normal(size=d)
        w = CovisibleWeights.init(seed=4, d=d)
        lo = covisible_head(feat, q, w)
        w.bias2 = w.bias2 + 1.0
        hi = covisible_head(feat, q, w)
        assert np.all(hi > lo)

    def test_shape_validation(self):
        with pytest.raises(ValueError, match="query"):
            covisible_head(np.zeros((2, 2, 8), dtype=np.float32), np.zeros(4),
                           CovisibleWeights.zeros(8))


class TestThresholdMask:
    def test_zero_threshold_all_true(self):
        assert threshold_mask(np.array([0.0, 0.5, 1.0]), 0.0).all()

    def test_threshold_above_one_rejected(self):
        with pytest.raises(ValueError, match="0, 1"):
            threshold_mask(np.array([0.5]), 1.0 + 1e-9)

    def test_elementwise_comparison(self):
        out = threshold_mask(np.array([0.1, 0.2, 0.3]), 0.2)
        assert out.tolist() == [False, True, True]

    def test_probability_range_enforced(self):
        with pytest.raises(ValueError, match="probabilities"):
            threshold_mask(np.array([1.5]), 0.5)

    def test_mask_area_non_increasing(self):
        rng = np.random.default_rng(5)
        prob = rng.uniform(0, 1, size=(16, 16))
        areas = [threshold_mask(prob, t).sum() for t in np.linspace(0, 1, 11)]
        assert all(a >= b for a, b in zip(areas, areas[1:]))


def test_covisible_map_construction():
    m = CoVisibleMap.from_probs(np.full((2, 2), 0.3, dtype=np.float32),
                                np.full((2, 2), 0.1, dtype=np.float32), threshold=0.2)
    assert m.mask_a.all() and not m.mask_b.any()
    gt = CoVisibleMap.from_masks(np.eye(3, dtype=bool), ~np.eye(3, dtype=bool))
    assert np.array_equal(gt.mask_a, np.eye(3, dtype=bool))


def test_pgm_export(tmp_path):
    mask = np.zeros((3, 4), dtype=bool)
    mask[1, 2] = True
    p = tmp_path / "m.pgm"
    save_mask_pgm(mask, p)
    data = p.read_bytes()
    assert data.startswith(b"P5\n4 3\n255\n")
    pixels = data.split(b"255\n", 1)[1]
    assert len(pixels) == 12
    assert pixels[1 * 4 + 2] == 255 and pixels[0] == 0
