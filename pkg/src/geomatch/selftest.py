"""Built-in invariant checks, runnable offline via `geomatch selftest`.

Each check prints exactly one deterministic `selftest <name> PASS|FAIL`
line; two invocations produce byte-identical output.
"""

from __future__ import annotations

import math

import numpy as np

from . import assignment, cfi, covisible, geometry, losses, metrics, numerics
from .labels import generate_labels
from .pipeline import ModelWeights, PipelineConfig, matches_to_csv, run_pair
from .synthscene import make_planar_pair


def _checks():
    yield "softmax-prob-sum", _softmax_prob_sum
    yield "softmax-large-logits", _softmax_large
    yield "conv2d-identity", _conv_identity
    yield "conv2d-linearity", _conv_linearity
    yield "bilinear-grid-exact", _bilinear_exact
    yield "homography-roundtrip", _homography_roundtrip
    yield "epipolar-zero-on-truth", _epipolar_zero
    yield "attention-convexity", _attention_convexity
    yield "cfi-zero-weights-identity", _cfi_identity
    yield "cfi-swap-symmetry", _cfi_symmetry
    yield "covisible-mask-monotone", _covisible_monotone
    yield "scale-ratio-fixture", _scale_fixture
    yield "filter-subset", _filter_subset
    yield "focal-loss-closed-form", _focal_closed_form
    yield "total-loss-weights", _total_loss
    yield "pose-auc-step-fixture", _pose_auc
    yield "identity-pair-labels", _identity_labels
    yield "pipeline-determinism", _pipeline_determinism


def run(emit=print) -> bool:
    all_ok = True
    for name, fn in _checks():
        try:
            ok = bool(fn())
        except Exception:
            ok = False
        all_ok &= ok
        emit(f"selftest {name} {'PASS' if ok else 'FAIL'}")
    return all_ok


def _softmax_prob_sum():
    rng = np.random.Generator(np.random.PCG64(1))
    x = rng.normal(size=(17, 9)).astype(np.float32) * 10
    s = numerics.softmax(x, axis=1)
    return bool(np.all(np.abs(s.sum(axis=1) - 1) < 1e-6) and np.all(s >= 0))


def _softmax_large():
    s = numerics.softmax(np.array([1000.0, 999.0]), axis=0)
    e = math.e
    return abs(s[0] - e / (e + 1)) < 1e-6 and np.all(np.isfinite(s))


def _conv_identity():
    rng = np.random.Generator(np.random.PCG64(2))
    x = rng.normal(size=(6, 7, 3)).astype(np.float32)
    k = np.zeros((1, 1, 3, 3), dtype=np.float32)
    for c in range(3):
        k[0, 0, c, c] = 1
    return bool(np.allclose(numerics.conv2d(x, k), x, atol=1e-6))


def _conv_linearity():
    rng = np.random.Generator(np.random.PCG64(3))
    a = rng.normal(size=(5, 5, 2)).astype(np.float32)
    b = rng.normal(size=(5, 5, 2)).astype(np.float32)
    k = rng.normal(size=(3, 3, 2, 4)).astype(np.float32)
    lhs = numerics.conv2d(a + b, k)
    rhs = numerics.conv2d(a, k) + numerics.conv2d(b, k)
    return bool(np.allclose(lhs, rhs, atol=1e-5))


def _bilinear_exact():
    rng = np.random.Generator(np.random.PCG64(4))
    g = rng.normal(size=(4, 5, 2)).astype(np.float32)
    pts = [(x, y) for y in range(4) for x in range(5)]
    out = numerics.bilinear_sample(g, pts)
    return bool(np.allclose(out.reshape(4, 5, 2), g, atol=0))


def _homography_roundtrip():
    H = geometry.Homography(np.array([[1.2, 0.1, 3.0], [-0.05, 0.9, -2.0], [1e-4, 2e-4, 1.0]]))
    p = (11.0, 23.0)
    q = geometry.homography_apply(H, p)
    back = geometry.homography_apply(H.inverse(), q)
    return abs(back[0] - p[0]) < 1e-6 and abs(back[1] - p[1]) < 1e-6


def _epipolar_zero():
    R = geometry.skew([0, 0, 1]) * math.sin(0.1) + np.eye(3) * math.cos(0.1)
    R[2, 2] = 1.0
    t = np.array([0.5, 0.1, 0.02])
    E = geometry.essential_from_pose(R, t)
    rng = np.random.Generator(np.random.PCG64(5))
    X = rng.uniform(-1, 1, size=(20, 3)) + [0, 0, 5]
    xa = X[:, :2] / X[:, 2:]
    Xb = X @ R.T + t
    xb = Xb[:, :2] / Xb[:, 2:]
    err = geometry.epipolar_error_many(E, xa, xb)
    return bool(np.all(err < 1e-10))


def _attention_convexity():
    rng = np.random.Generator(np.random.PCG64(6))
    q = rng.normal(size=(4, 8))
    k = rng.normal(size=(6, 8))
    v = np.tile(rng.normal(size=(1, 8)), (6, 1))
    ok = True
    for kind in cfi.ATTENTION_KINDS:
        out = cfi.attention(q, k, v, kind)
        ok &= bool(np.allclose(out, v[0], atol=1e-9))
    return ok


def _cfi_identity():
    w = cfi.CfiWeights.zeros(d=16)
    rng = np.random.Generator(np.random.PCG64(7))
    a = rng.normal(size=(4, 4, 16)).astype(np.float32)
    b = rng.normal(size=(4, 4, 16)).astype(np.float32)
    out = cfi.cfi_forward(a, b, w)
    return bool(np.array_equal(out.feat_a3, a) and np.array_equal(out.feat_b3, b))


def _cfi_symmetry():
    w = cfi.CfiWeights.init(seed=8, d=16)
    rng = np.random.Generator(np.random.PCG64(8))
    a = rng.normal(size=(4, 4, 16)).astype(np.float32)
    b = rng.normal(size=(4, 4, 16)).astype(np.float32)
    o1 = cfi.cfi_forward(a, b, w)
    o2 = cfi.cfi_forward(b, a, w)
    return bool(np.array_equal(o1.feat_a3, o2.feat_b3)
                and np.array_equal(o1.query_a, o2.query_b))


def _covisible_monotone():
    rng = np.random.Generator(np.random.PCG64(9))
    prob = rng.uniform(0, 1, size=(8, 8)).astype(np.float32)
    areas = [covisible.threshold_mask(prob, t).sum() for t in (0.0, 0.25, 0.5, 0.75, 1.0)]
    return bool(all(areas[k] >= areas[k + 1] for k in range(len(areas) - 1))
                and areas[0] == prob.size)


def _scale_fixture():
    m0 = assignment.MatchSet(i=[0, 1, 2, 3], j=[0, 0, 1, 1], confidence=[1, 1, 1, 1])
    m1 = assignment.MatchSet(i=[0, 2], j=[0, 1], confidence=[1, 1], direction=1)
    sc = assignment.estimate_scale(m0, m1)
    return sc.s0 == 2.0 and sc.s1 == 1.0 and sc.s == 2.0 and sc.index == 0


def _filter_subset():
    rng = np.random.Generator(np.random.PCG64(10))
    ok = True
    for _ in range(20):
        n = 16
        m = assignment.MatchSet(i=rng.integers(0, n, 10), j=rng.integers(0, n, 10),
                                confidence=np.ones(10))
        cov = covisible.CoVisibleMap.from_masks(rng.random((4, 4)) > 0.5,
                                                rng.random((4, 4)) > 0.5)
        f = assignment.filter_covisible(m, cov)
        pairs = set(map(tuple, m.pairs()))
        ok &= all(tuple(p) in pairs for p in f.pairs())
    return ok


def _focal_closed_form():
    val = losses.focal_loss(np.array([0.5]), np.array([True]))
    return abs(val - 0.25 * 0.25 * math.log(2)) < 1e-9


def _total_loss():
    return losses.total_loss(2.0, 1.0, 1.0) == 3.0


def _pose_auc():
    auc = metrics.pose_auc([5.0], (10.0,))
    return abs(auc[10.0] - 0.5) < 1e-12


def _identity_labels():
    pair = make_planar_pair(seed=11, scale_ratio=1.0)
    lab = generate_labels(pair)
    return bool(np.array_equal(lab.positives, np.eye(64, dtype=bool))
                and lab.cov_a.all() and lab.cov_b.all())


def _pipeline_determinism():
    pair = make_planar_pair(seed=12, scale_ratio=2.0, noise_sigma=0.02)
    weights = ModelWeights.init(13, d=256, c=128)
    cfg = PipelineConfig()
    csv1 = matches_to_csv(run_pair(pair, weights, cfg), pair.coarse_stride)
    csv2 = matches_to_csv(run_pair(pair, weights, cfg), pair.coarse_stride)
    return csv1 == csv2 and len(csv1.splitlines()) > 1
