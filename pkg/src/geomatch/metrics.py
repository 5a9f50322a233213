"""Evaluation metrics and robust estimators.

Homography fitting (normalized 4-point DLT inside RANSAC), relative pose
recovery (normalized 8-point essential estimation inside RANSAC with
cheirality disambiguation), pose-error AUC, homography corner accuracy,
mean matching accuracy and epipolar precision. Everything is seeded and
deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Homography, epipolar_error_many, homography_apply_many, normalized_coords

DEFAULT_RANSAC_ITERS = 2000
DEFAULT_HOMOGRAPHY_THRESH_PX = 3.0
DEFAULT_EPIPOLAR_THRESH = 1e-3


class InsufficientDataError(ValueError):
    """Raised when an estimator receives fewer matches than its minimal set."""


def _hartley_normalization(pts: np.ndarray) -> tuple:
    """Similarity transform sending the centroid to 0 at mean norm sqrt(2)."""
    c = pts.mean(axis=0)
    scale = math.sqrt(2) / max(np.mean(np.linalg.norm(pts - c, axis=1)), 1e-12)
    T = np.array([[scale, 0, -scale * c[0]], [0, scale, -scale * c[1]], [0, 0, 1.0]])
    return (pts - c) * scale, T


def _dlt_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Least-squares homography via the normalized direct linear transform."""
    n = src.shape[0]
    if n < 4:
        raise InsufficientDataError(f"homography needs >= 4 matches, got {n}")
    ps, Ts = _hartley_normalization(src)
    pd, Td = _hartley_normalization(dst)
    A = np.zeros((2 * n, 9))
    for k in range(n):
        x, y = ps[k]
        u, v = pd[k]
        A[2 * k] = [-x, -y, -1, 0, 0, 0, u * x, u * y, u]
        A[2 * k + 1] = [0, 0, 0, -x, -y, -1, v * x, v * y, v]
    _, _, vt = np.linalg.svd(A)
    Hn = vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ Hn @ Ts
    return H


def ransac_homography(pts_a, pts_b, iters: int = DEFAULT_RANSAC_ITERS,
                      inlier_thresh_px: float = DEFAULT_HOMOGRAPHY_THRESH_PX,
                      seed: int = 0) -> tuple:
    """RANSAC homography fit; returns (Homography, inlier mask).

    The best minimal model by inlier count (first found on ties) is
    refit on its inliers with least-squares DLT.
    """
    a = np.asarray(pts_a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(pts_b, dtype=np.float64).reshape(-1, 2)
    n = a.shape[0]
    if n < 4:
        raise InsufficientDataError(f"RANSAC homography needs >= 4 matches, got {n}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x4A])))
    ah = np.concatenate([a, np.ones((n, 1))], axis=1)

    def residuals(H):
        proj = ah @ H.T
        w = proj[:, 2]
        ok = np.abs(w) > 1e-12
        r = np.full(n, np.inf)
        r[ok] = np.linalg.norm(proj[ok, :2] / w[ok, None] - b[ok], axis=1)
        return r

    best_mask = None
    best_count = -1
    for _ in range(iters):
        pick = rng.choice(n, size=4, replace=False)
        try:
            H = _dlt_homography(a[pick], b[pick])
        except np.linalg.LinAlgError:
            continue
        if abs(np.linalg.det(H)) < 1e-12:
            continue
        mask = residuals(H) < inlier_thresh_px
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
    if best_mask is None or best_count < 4:
        raise InsufficientDataError("RANSAC found no valid homography model")
    H = _dlt_homography(a[best_mask], b[best_mask])
    final_mask = residuals(H) < inlier_thresh_px
    if final_mask.sum() >= 4:
        H = _dlt_homography(a[final_mask], b[final_mask])
    else:
        final_mask = best_mask
    return Homography(H), final_mask


# ---------------------------------------------------------------------------
# Essential matrix / relative pose
# ---------------------------------------------------------------------------


def _eight_point(xa: np.ndarray, xb: np.ndarray) -> tuple:
    """Normalized 8-point estimate on already-normalized camera coords.

    Returns (E, n_small_singular) where the second value counts
    near-zero singular values of the design matrix beyond the expected
    one (> 1 signals a degenerate configuration such as coplanar points
    with a small baseline).
    """
    n = xa.shape[0]
    pa, Ta = _hartley_normalization(xa)
    pb, Tb = _hartley_normalization(xb)
    A = np.zeros((n, 9))
    A[:, 0] = pb[:, 0] * pa[:, 0]
    A[:, 1] = pb[:, 0] * pa[:, 1]
    A[:, 2] = pb[:, 0]
    A[:, 3] = pb[:, 1] * pa[:, 0]
    A[:, 4] = pb[:, 1] * pa[:, 1]
    A[:, 5] = pb[:, 1]
    A[:, 6] = pa[:, 0]
    A[:, 7] = pa[:, 1]
    A[:, 8] = 1.0
    _, s, vt = np.linalg.svd(A)
    # one vanishing singular value is expected for exact data; more means
    # the configuration is degenerate (e.g. coplanar points, tiny baseline)
    tol = 1e-9 * max(float(s[0]), 1e-300)
    null_dim = 9 - int(np.sum(s > tol))
    extra_null = max(null_dim - 1, 0)
    F = vt[-1].reshape(3, 3)
    F = Tb.T @ F @ Ta
    # project onto the essential manifold: singular values (s, s, 0)
    u, sv, vt2 = np.linalg.svd(F)
    s_mean = (sv[0] + sv[1]) / 2
    E = u @ np.diag([s_mean, s_mean, 0.0]) @ vt2
    return E / max(np.linalg.norm(E), 1e-300), extra_null


def _triangulate(P0: np.ndarray, P1: np.ndarray, xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
    """Linear triangulation of normalized-coordinate correspondences."""
    out = np.zeros((xa.shape[0], 3))
    for k in range(xa.shape[0]):
        A = np.stack([
            xa[k, 0] * P0[2] - P0[0],
            xa[k, 1] * P0[2] - P0[1],
            xb[k, 0] * P1[2] - P1[0],
            xb[k, 1] * P1[2] - P1[1],
        ])
        _, _, vt = np.linalg.svd(A)
        X = vt[-1]
        out[k] = X[:3] / X[3] if abs(X[3]) > 1e-12 else np.full(3, np.inf)
    return out


def _decompose_essential(E: np.ndarray) -> list:
    u, _, vt = np.linalg.svd(E)
    if np.linalg.det(u) < 0:
        u = -u
    if np.linalg.det(vt) < 0:
        vt = -vt
    W = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
    R1 = u @ W @ vt
    R2 = u @ W.T @ vt
    t = u[:, 2]
    return [(R1, t), (R1, -t), (R2, t), (R2, -t)]


@dataclass
class PoseResult:
    R: np.ndarray
    t: np.ndarray  # unit norm
    inliers: np.ndarray
    degenerate: bool = False
    E: np.ndarray | None = None


def pose_from_matches(pts_a, pts_b, K_a, K_b, iters: int = DEFAULT_RANSAC_ITERS,
                      thresh: float = DEFAULT_EPIPOLAR_THRESH, seed: int = 0) -> PoseResult:
    """Relative pose (R, t up to scale) from pixel matches.

    Normalized 8-point essential estimation inside RANSAC, scored by the
    symmetric epipolar distance in normalized coordinates; the winning
    model is refit on its inliers and decomposed, with the candidate
    maximizing positive triangulated depth in both cameras selected.
    """
    a = np.asarray(pts_a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(pts_b, dtype=np.float64).reshape(-1, 2)
    n = a.shape[0]
    if n < 8:
        raise InsufficientDataError(f"pose estimation needs >= 8 matches, got {n}")
    xa = normalized_coords(K_a, a)
    xb = normalized_coords(K_b, b)

    degenerate = False
    disparity = np.median(np.linalg.norm(xa - xb, axis=1))
    if disparity < 1e-4:
        degenerate = True  # near-zero baseline: translation direction undefined

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xE8])))
    best_mask = None
    best_count = -1
    for _ in range(iters):
        pick = rng.choice(n, size=8, replace=False)
        try:
            E, _ = _eight_point(xa[pick], xb[pick])
        except np.linalg.LinAlgError:
            continue
        err = epipolar_error_many(E, xa, xb)
        mask = err < thresh
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
    if best_mask is None or best_count < 8:
        raise InsufficientDataError("RANSAC found no valid essential model")

    E, extra_null = _eight_point(xa[best_mask], xb[best_mask])
    if extra_null > 0:
        degenerate = True
    final_mask = epipolar_error_many(E, xa, xb) < thresh

    best_pose = None
    best_front = -1
    P0 = np.concatenate([np.eye(3), np.zeros((3, 1))], axis=1)
    sel = np.flatnonzero(final_mask)
    sub = sel[:: max(1, len(sel) // 50)]  # cheirality vote on a subsample
    for R, t in _decompose_essential(E):
        P1 = np.concatenate([R, t[:, None]], axis=1)
        X = _triangulate(P0, P1, xa[sub], xb[sub])
        z0 = X[:, 2]
        z1 = (X @ R.T + t)[:, 2]
        front = int(np.sum((z0 > 0) & (z1 > 0) & np.isfinite(z0)))
        if front > best_front:
            best_front = front
            best_pose = (R, t)
    R, t = best_pose
    t = t / max(np.linalg.norm(t), 1e-300)
    return PoseResult(R=R, t=t, inliers=final_mask, degenerate=degenerate, E=E)


def rotation_error_deg(R_est, R_gt) -> float:
    R = np.asarray(R_est) @ np.asarray(R_gt).T
    c = (np.trace(R) - 1) / 2
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def translation_error_deg(t_est, t_gt) -> float:
    """Angle between translation directions, sign-insensitive."""
    a = np.asarray(t_est, dtype=np.float64).reshape(3)
    b = np.asarray(t_gt, dtype=np.float64).reshape(3)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-12 or nb < 1e-12:
        return 180.0
    c = abs(float(a @ b) / (na * nb))
    return math.degrees(math.acos(min(1.0, c)))


def pose_error_deg(R_est, t_est, R_gt, t_gt) -> float:
    """Max of rotation and translation angular errors."""
    return max(rotation_error_deg(R_est, R_gt), translation_error_deg(t_est, t_gt))


# ---------------------------------------------------------------------------
# Aggregate metrics
# ---------------------------------------------------------------------------


def pose_auc(errors, thresholds=(5.0, 10.0, 20.0)) -> dict:
    """Area under the cumulative (step) error curve, normalized per threshold.

    Each error e <= t contributes (t - e) / (N * t); equivalently the
    integral of the empirical CDF of the errors from 0 to t, divided by t.
    """
    e = np.asarray(errors, dtype=np.float64).reshape(-1)
    if e.size == 0:
        raise ValueError("pose_auc needs at least one error value")
    if np.any(e < 0):
        raise ValueError("errors must be >= 0")
    out = {}
    for t in thresholds:
        below = e[e <= t]
        out[float(t)] = float(np.sum(t - below) / (e.size * t))
    return out


def mma(pts_a, pts_b, warp_fn, thresholds=(1.0, 2.0, 3.0)) -> dict:
    """Mean matching accuracy: fraction of matches whose warped source
    endpoint lands within each pixel threshold of its target.

    warp_fn maps an (N, 2) array of A-pixels to (points, valid); invalid
    warps count as incorrect. Returns {"rates": {t: rate}, "empty": flag}.
    """
    a = np.asarray(pts_a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(pts_b, dtype=np.float64).reshape(-1, 2)
    if a.shape[0] == 0:
        return {"rates": {float(t): 0.0 for t in thresholds}, "empty": True}
    warped, valid = warp_fn(a)
    dist = np.full(a.shape[0], np.inf)
    dist[valid] = np.linalg.norm(warped[valid] - b[valid], axis=1)
    return {
        "rates": {float(t): float(np.mean(dist < t)) for t in thresholds},
        "empty": False,
    }


def epipolar_precision(pts_a, pts_b, E_gt, K_a, K_b, thresh: float = 1e-4) -> float:
    """Fraction of matches whose symmetric epipolar error (normalized
    coordinates, Frobenius-normalized matrix) falls below `thresh`."""
    a = np.asarray(pts_a, dtype=np.float64).reshape(-1, 2)
    if a.shape[0] == 0:
        return 0.0
    xa = normalized_coords(K_a, a)
    xb = normalized_coords(K_b, np.asarray(pts_b, dtype=np.float64).reshape(-1, 2))
    err = epipolar_error_many(E_gt, xa, xb)
    return float(np.mean(err < thresh))


def corner_accuracy(H_est, H_gt: Homography, image_size, thresholds=(1.0, 3.0, 5.0)) -> dict:
    """Mean 4-corner warp error of an estimated homography vs ground truth.

    Returns {"mean_error": px or inf, "pass": {t: bool}}; a degenerate or
    missing estimate fails every threshold.
    """
    w, h = (image_size, image_size) if np.isscalar(image_size) else image_size
    corners = np.array([[0, 0], [w - 1, 0], [0, h - 1], [w - 1, h - 1]], dtype=np.float64)
    try:
        if not isinstance(H_est, Homography):
            H_est = Homography(H_est)
        pe = homography_apply_many(H_est, corners)
        pg = homography_apply_many(H_gt, corners)
        err = float(np.mean(np.linalg.norm(pe - pg, axis=1)))
    except (ValueError, np.linalg.LinAlgError):
        err = math.inf
    return {"mean_error": err, "pass": {float(t): bool(err < t) for t in thresholds}}
