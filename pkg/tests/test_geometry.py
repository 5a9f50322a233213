"""Projection, homography and epipolar oracles."""

import math

import numpy as np
import pytest

from geomatch.geometry import (
    CameraFrame,
    DegeneracyError,
    Homography,
    epipolar_error,
    epipolar_error_many,
    essential_from_pose,
    homography_apply,
    homography_apply_many,
    normalized_coords,
    project,
    project_many,
    projected_distance,
    relative_pose,
)


def _flat_frame(size=32, depth=4.0, f=None):
    f = f or float(size)
    c = (size - 1) / 2
    K = np.array([[f, 0, c], [0, f, c], [0, 0, 1.0]])
    return CameraFrame(K=K, R=np.eye(3), t=np.zeros(3),
                       depth=np.full((size, size), depth, dtype=np.float32))


class TestCameraFrame:
    def test_rejects_non_rotation(self):
        with pytest.raises(ValueError, match="rotation"):
            CameraFrame(K=np.eye(3), R=np.eye(3) * 2, t=np.zeros(3),
                        depth=np.ones((4, 4)))

    def test_rejects_lower_triangular_k(self):
        K = np.array([[5, 0, 0], [1, 5, 0], [0, 0, 1.0]])
        with pytest.raises(ValueError, match="triangular"):
            CameraFrame(K=K, R=np.eye(3), t=np.zeros(3), depth=np.ones((4, 4)))

    def test_rejects_negative_depth(self):
        with pytest.raises(ValueError, match="negative"):
            CameraFrame(K=np.eye(3) * [4, 4, 1], R=np.eye(3), t=np.zeros(3),
                        depth=np.full((4, 4), -1.0))


class TestProject:
    def test_identity_frames_fixed_point(self):
        fr = _flat_frame()
        res = project(fr, fr, (10.0, 12.0))
        assert res.valid
        assert abs(res.point[0] - 10.0) < 1e-9
        assert abs(res.point[1] - 12.0) < 1e-9

    def test_focal_zoom_doubles_offsets(self):
        # pinhole algebra oracle: doubling the focal length doubles the
        # offset of the projection from the principal point
        src = _flat_frame(size=32)
        K2 = src.K.copy()
        K2[0, 0] *= 2
        K2[1, 1] *= 2
        dst = CameraFrame(K=K2, R=np.eye(3), t=np.zeros(3), depth=src.depth)
        p = (18.0, 20.0)
        res = project(src, dst, p)
        assert res.valid
        c = (32 - 1) / 2
        assert abs((res.point[0] - c) - 2 * (p[0] - c)) < 1e-9
        assert abs((res.point[1] - c) - 2 * (p[1] - c)) < 1e-9

    def test_zero_depth_invalid(self):
        fr = _flat_frame()
        hole = CameraFrame(K=fr.K, R=fr.R, t=fr.t,
                           depth=np.zeros((32, 32), dtype=np.float32))
        assert not project(hole, fr, (10.0, 10.0)).valid

    def test_out_of_bounds_projection_invalid(self):
        src = _flat_frame()
        # destination camera shifted far to the side
        t = np.array([10.0, 0.0, 0.0])
        dst = CameraFrame(K=src.K, R=np.eye(3), t=t, depth=src.depth)
        res = project(src, dst, (30.0, 15.0))
        assert not res.valid

    def test_occlusion_depth_mismatch_invalid(self):
        src = _flat_frame(depth=4.0)
        # destination thinks the surface is much closer: inconsistent
        dst = CameraFrame(K=src.K, R=np.eye(3), t=np.zeros(3),
                          depth=np.full((32, 32), 2.0, dtype=np.float32))
        assert not project(src, dst, (10.0, 10.0)).valid

    def test_inverse_consistency(self):
        src = _flat_frame(size=48, depth=5.0)
        R = _rot_z(math.radians(3.0))
        t = np.array([0.2, -0.1, 0.3])
        # destination depth from exact geometry of the same plane
        dst0 = CameraFrame(K=src.K, R=R, t=t, depth=np.ones((48, 48)))
        pts = np.stack(np.meshgrid(np.arange(10, 38, 4.0), np.arange(10, 38, 4.0)),
                       axis=-1).reshape(-1, 2)
        depth_b = _plane_depth_from(dst0, 5.0, 48)
        dst = CameraFrame(K=src.K, R=R, t=t, depth=depth_b)
        fwd, v1 = project_many(src, dst, pts)
        back, v2 = project_many(dst, src, fwd[v1])
        ok = v2
        assert ok.sum() > 10
        err = np.linalg.norm(back[ok] - pts[v1][ok], axis=1)
        assert np.all(err < 0.5)


def _rot_z(a):
    return np.array([[math.cos(a), -math.sin(a), 0],
                     [math.sin(a), math.cos(a), 0], [0, 0, 1.0]])


def _plane_depth_from(frame, z_plane, size):
    ys, xs = np.mgrid[0:size, 0:size]
    pix = np.stack([xs.ravel(), ys.ravel(), np.ones(size * size)], axis=1)
    rays = (pix @ np.linalg.inv(frame.K).T) @ frame.R  # world directions
    center = -frame.R.T @ frame.t
    lam = (z_plane - center[2]) / rays[:, 2]
    pts = center + lam[:, None] * rays
    depth = (pts @ frame.R.T + frame.t)[:, 2]
    depth[lam <= 0] = 0
    return depth.reshape(size, size).astype(np.float32)


class TestProjectedDistance:
    def test_exact_correspondence_zero(self):
        fr = _flat_frame()
        assert projected_distance(fr, fr, (9.0, 9.0), (9.0, 9.0)) == 0.0

    def test_3_4_5_triangle(self):
        fr = _flat_frame()
        assert abs(projected_distance(fr, fr, (10.0, 10.0), (13.0, 14.0)) - 5.0) < 1e-9

    def test_invalid_depth_infinite(self):
        fr = _flat_frame()
        hole = CameraFrame(K=fr.K, R=fr.R, t=fr.t,
                           depth=np.zeros((32, 32), dtype=np.float32))
        assert math.isinf(projected_distance(hole, fr, (5.0, 5.0), (5.0, 5.0)))


class TestHomography:
    def test_identity(self):
        H = Homography(np.eye(3))
        assert homography_apply(H, (3.5, 7.25)) == (3.5, 7.25)

    def test_pure_translation(self):
        H = Homography([[1, 0, 5], [0, 1, 0], [0, 0, 1]])
        assert homography_apply(H, (0.0, 0.0)) == (5.0, 0.0)

    def test_diagonal_scaling(self):
        H = Homography(np.diag([2.0, 2.0, 1.0]))
        assert homography_apply(H, (3.0, 4.0)) == (6.0, 8.0)

    def test_singular_rejected(self):
        with pytest.raises(ValueError, match="singular"):
            Homography(np.zeros((3, 3)))

    def test_degenerate_denominator(self):
        H = Homography([[1, 0, 0], [0, 1, 0], [-1, 0, 1]])
        with pytest.raises(DegeneracyError):
            homography_apply(H, (1.0, 0.0))

    def test_inverse_roundtrip(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            M = np.eye(3) + 0.2 * rng.normal(size=(3, 3))
            if abs(np.linalg.det(M)) < 1e-3:
                continue
            H = Homography(M)
            pts = rng.uniform(0, 32, size=(5, 2))
            out = homography_apply_many(H.inverse(), homography_apply_many(H, pts))
            assert np.allclose(out, pts, atol=1e-6)


class TestEpipolar:
    def _setup(self, seed=0):
        rng = np.random.default_rng(seed)
        R = _rot_z(0.05) @ np.array([[math.cos(0.1), 0, math.sin(0.1)],
                                     [0, 1, 0], [-math.sin(0.1), 0, math.cos(0.1)]])
        t = np.array([0.4, 0.1, 0.05])
        E = essential_from_pose(R, t)
        X = rng.uniform(-1, 1, size=(30, 3)) + [0, 0, 4]
        xa = X[:, :2] / X[:, 2:]
        Xb = X @ R.T + t
        xb = Xb[:, :2] / Xb[:, 2:]
        return E, xa, xb

    def test_ground_truth_near_zero(self):
        E, xa, xb = self._setup()
        assert np.all(epipolar_error_many(E, xa, xb) < 1e-10)

    def test_random_points_large(self):
        E, xa, _ = self._setup()
        rng = np.random.default_rng(1)
        xb_rand = rng.uniform(-0.5, 0.5, size=xa.shape)
        assert np.median(epipolar_error_many(E, xa, xb_rand)) > 1e-4

    def test_monotone_in_perpendicular_offset(self):
        # numeric sweep oracle: displacing pB along the epipolar line's
        # normal must increase the error monotonically
        E, xa, xb = self._setup()
        En = E / np.linalg.norm(E)
        line = En @ np.array([xa[0, 0], xa[0, 1], 1.0])
        n = line[:2] / np.hypot(line[0], line[1])
        prev = -1.0
        for delta in (0.001, 0.003, 0.01, 0.03, 0.1):
            err = epipolar_error(E, xa[0], xb[0] + delta * n)
            assert err > prev
            prev = err

    def test_scale_normalization_equality(self):
        E, xa, xb = self._setup()
        rng = np.random.default_rng(2)
        xb_noisy = xb + rng.normal(0, 0.01, size=xb.shape)
        e1 = epipolar_error_many(E, xa, xb_noisy)
        e2 = epipolar_error_many(5.0 * E, xa, xb_noisy)
        assert np.allclose(e1, e2, rtol=1e-12, atol=0)

    def test_zero_matrix_rejected(self):
        with pytest.raises(ValueError):
            epipolar_error(np.zeros((3, 3)), (0, 0), (0, 0))


def test_relative_pose_composition():
    rng = np.random.default_rng(3)
    Ra = _rot_z(0.2)
    Rb = _rot_z(-0.1)
    ta, tb = rng.normal(size=3), rng.normal(size=3)
    depth = np.ones((4, 4), dtype=np.float32)
    K = np.diag([4.0, 4.0, 1.0])
    fa = CameraFrame(K=K, R=Ra, t=ta, depth=depth)
    fb = CameraFrame(K=K, R=Rb, t=tb, depth=depth)
    R, t = relative_pose(fa, fb)
    X = rng.normal(size=3)
    lhs = Rb @ X + tb
    rhs = R @ (Ra @ X + ta) + t
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_normalized_coords_inverse_of_k():
    K = np.array([[100, 0, 50], [0, 80, 40], [0, 0, 1.0]])
    pts = np.array([[50, 40], [150, 120]], dtype=np.float64)
    out = normalized_coords(K, pts)
    assert np.allclose(out[0], [0, 0], atol=1e-12)
    assert np.allclose(out[1], [1.0, 1.0], atol=1e-12)
