"""Camera and projective geometry.

Two-view projection with depth maps (the ground-truth warp used by label
generation and evaluation), homography transforms, and symmetric epipolar
distances in normalized camera coordinates.

Conventions:
    * pixel (x, y): x = column, y = row, origin at the top-left pixel center
    * world-to-camera: X_cam = R @ X_world + t
    * depth maps store the camera-frame z per pixel; 0 marks invalid
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import bilinear_sample

# Relative tolerance for the two-view depth consistency (occlusion) test.
DEPTH_CONSISTENCY_RTOL = 0.05


class DegeneracyError(ValueError):
    """Raised when a projective transform is evaluated at a degenerate point."""


@dataclass(frozen=True)
class CameraFrame:
    """Intrinsics, pose and depth map for one view."""

    K: np.ndarray
    R: np.ndarray
    t: np.ndarray
    depth: np.ndarray

    def __post_init__(self):
        K = np.asarray(self.K, dtype=np.float64).reshape(3, 3)
        R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        depth = np.asarray(self.depth, dtype=np.float32)
        if depth.ndim != 2:
            raise ValueError(f"depth must be HxW, got shape {depth.shape}")
        if np.any(depth < 0):
            raise ValueError("depth map has negative entries")
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6) or abs(np.linalg.det(R) - 1) > 1e-6:
            raise ValueError("R is not a rotation matrix")
        if abs(K[1, 0]) > 1e-9 or abs(K[2, 0]) > 1e-9 or abs(K[2, 1]) > 1e-9:
            raise ValueError("K must be upper triangular")
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            raise ValueError("K focal entries must be positive")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "depth", depth)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]


@dataclass(frozen=True)
class Homography:
    """3x3 projective transform, normalized so H[2,2] == 1 when nonzero."""

    H: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=np.float64).reshape(3, 3).copy()
        if abs(np.linalg.det(H)) < 1e-12:
            raise ValueError("homography is singular")
        if abs(H[2, 2]) > 1e-12:
            H = H / H[2, 2]
        object.__setattr__(self, "H", H)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.H))


@dataclass(frozen=True)
class ProjectionResult:
    point: tuple
    valid: bool


def depth_at(frame: CameraFrame, p) -> float:
    """Bilinear depth lookup; NaN when out of bounds or when any of the
    four neighbors is invalid (0)."""
    x, y = float(p[0]), float(p[1])
    if not (0 <= x <= frame.width - 1 and 0 <= y <= frame.height - 1):
        return math.nan
    d = frame.depth
    x0 = min(int(math.floor(x)), frame.width - 2) if frame.width > 1 else 0
    y0 = min(int(math.floor(y)), frame.height - 2) if frame.height > 1 else 0
    x1 = min(x0 + 1, frame.width - 1)
    y1 = min(y0 + 1, frame.height - 1)
    corners = (d[y0, x0], d[y0, x1], d[y1, x0], d[y1, x1])
    if any(c <= 0 for c in corners):
        return math.nan
    val = bilinear_sample(d[:, :, None], [(x, y)])[0, 0]
    return float(val)


def project(src: CameraFrame, dst: CameraFrame, p) -> ProjectionResult:
    """Warp pixel `p` from `src` into `dst` using depth and poses.

    Invalid (not an error) when the source depth is missing, the point
    leaves the destination image, the depth sign flips, or the projected
    depth disagrees with the destination depth map by more than
    DEPTH_CONSISTENCY_RTOL (occlusion).
    """
    pts, valid = project_many(src, dst, np.asarray([p], dtype=np.float64))
    return ProjectionResult((float(pts[0, 0]), float(pts[0, 1])), bool(valid[0]))


def project_many(src: CameraFrame, dst: CameraFrame, points) -> tuple:
    """Vectorized `project` over an (N, 2) array. Returns (points, valid)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = pts.shape[0]
    out = np.full((n, 2), np.nan)
    valid = np.zeros(n, dtype=bool)
    if n == 0:
        return out, valid

    d_src = np.array([depth_at(src, p) for p in pts])
    ok = np.isfinite(d_src) & (d_src > 0)
    if not np.any(ok):
        return out, valid

    homog = np.concatenate([pts[ok], np.ones((int(ok.sum()), 1))], axis=1)
    rays = homog @ np.linalg.inv(src.K).T
    X_src = rays * d_src[ok, None]
    X_world = (X_src - src.t) @ src.R  # R^T (X - t), row form
    X_dst = X_world @ dst.R.T + dst.t
    z = X_dst[:, 2]
    front = z > 1e-9

    uvw = X_dst @ dst.K.T
    uv = np.full((X_dst.shape[0], 2), np.nan)
    uv[front] = uvw[front, :2] / uvw[front, 2:3]

    in_bounds = front.copy()
    in_bounds[front] &= (
        (uv[front, 0] >= 0)
        & (uv[front, 0] <= dst.width - 1)
        & (uv[front, 1] >= 0)
        & (uv[front, 1] <= dst.height - 1)
    )

    consistent = np.zeros_like(in_bounds)
    for k in np.flatnonzero(in_bounds):
        d_obs = depth_at(dst, uv[k])
        if math.isfinite(d_obs) and abs(d_obs - z[k]) <= DEPTH_CONSISTENCY_RTOL * z[k]:
            consistent[k] = True

    idx = np.flatnonzero(ok)
    out[idx] = uv
    valid[idx] = consistent
    return out, valid


def projected_distance(src: CameraFrame, dst: CameraFrame, pA, pB) -> float:
    """Distance in `dst` pixels between the warp of pA and pB; inf when the
    warp is invalid."""
    res = project(src, dst, pA)
    if not res.valid:
        return math.inf
    dx = res.point[0] - float(pB[0])
    dy = res.point[1] - float(pB[1])
    return math.hypot(dx, dy)


def homography_apply(H: Homography, p) -> tuple:
    """Apply a homography to a single (x, y) point."""
    x, y = float(p[0]), float(p[1])
    v = H.H @ np.array([x, y, 1.0])
    if abs(v[2]) < 1e-12:
        raise DegeneracyError(f"homography denominator vanishes at ({x}, {y})")
    return (v[0] / v[2], v[1] / v[2])


def homography_apply_many(H: Homography, points) -> np.ndarray:
    """Apply a homography to an (N, 2) array of points."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    homog = np.concatenate([pts, np.ones((pts.shape[0], 1))], axis=1)
    v = homog @ H.H.T
    w = v[:, 2]
    if np.any(np.abs(w) < 1e-12):
        bad = np.flatnonzero(np.abs(w) < 1e-12)
        raise DegeneracyError(f"homography denominator vanishes at indices {bad.tolist()[:8]}")
    return v[:, :2] / w[:, None]


def normalized_coords(K, points) -> np.ndarray:
    """Pixel -> normalized camera coordinates, (N, 2)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    homog = np.concatenate([pts, np.ones((pts.shape[0], 1))], axis=1)
    return (homog @ np.linalg.inv(np.asarray(K, dtype=np.float64)).T)[:, :2]


def skew(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).reshape(3)
    return np.array(
        [[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]], dtype=np.float64
    )


def relative_pose(src: CameraFrame, dst: CameraFrame) -> tuple:
    """(R, t) with X_dst = R @ X_src + t."""
    R = dst.R @ src.R.T
    t = dst.t - R @ src.t
    return R, t


def essential_from_pose(R, t) -> np.ndarray:
    """E = [t]x R for the relative pose src -> dst."""
    return skew(t) @ np.asarray(R, dtype=np.float64)


def epipolar_error(F_or_E, pA, pB) -> float:
    """Symmetric (squared) epipolar distance of a correspondence.

    Points are normalized image coordinates when F_or_E is an essential
    matrix. The matrix is rescaled to unit Frobenius norm first, so the
    returned value is independent of the input matrix scale.
    """
    return float(epipolar_error_many(F_or_E, [pA], [pB])[0])


def epipolar_error_many(F_or_E, ptsA, ptsB) -> np.ndarray:
    M = np.asarray(F_or_E, dtype=np.float64).reshape(3, 3)
    norm = np.linalg.norm(M)
    if norm == 0:
        raise ValueError("epipolar matrix is zero")
    M = M / norm
    a = np.asarray(ptsA, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(ptsB, dtype=np.float64).reshape(-1, 2)
    ah = np.concatenate([a, np.ones((a.shape[0], 1))], axis=1)
    bh = np.concatenate([b, np.ones((b.shape[0], 1))], axis=1)
    lineB = ah @ M.T  # epipolar line of pA in image B
    lineA = bh @ M  # epipolar line of pB in image A
    resid = np.sum(bh * lineB, axis=1)
    dB = lineB[:, 0] ** 2 + lineB[:, 1] ** 2
    dA = lineA[:, 0] ** 2 + lineA[:, 1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        err = resid**2 * (1.0 / dB + 1.0 / dA)
    err[~np.isfinite(err)] = np.inf
    return err
