"""Synthetic scene pairs with exact ground truth.

Instead of rendered images and a trained backbone, each view carries dense
descriptor grids sampled from a shared band-limited random field (a sum of
low-frequency sinusoids per channel). View B's descriptors equal view A's
field evaluated at the ground-truth warp of B's grid positions, plus
optional noise, so patch matching is well-posed without any learning and
every correspondence has a closed-form ground truth.

Two modes:
    * planar: view B related to A by a known homography (zoom + rotation
      + translation about the image centers)
    * 3d: two pinhole cameras with analytic depth (fronto-parallel plane
      or quadrant step profile), depth map of B obtained by exact ray
      casting against the same surface

Reproducibility: all randomness flows through numpy's PCG64 generator
seeded from a single integer; the generator name is recorded in pair
metadata.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import CameraFrame, Homography, homography_apply_many, project_many

GENERATOR_NAME = "pcg64(numpy)"
SCALE_BUCKETS = ("[1,2)", "[2,3)", "[3,4)", "[4,inf)")

# stream indices for SeedSequence.spawn, shared by both pair modes so a
# frontal-plane 3d pair reproduces the planar pair of the same seed
_S_FIELD_COARSE, _S_FIELD_FINE, _S_INDEP_COARSE, _S_INDEP_FINE, _S_NOISE_COARSE, _S_NOISE_FINE, _S_MISC = range(7)


def bucket_of(scale: float) -> str:
    if scale >= 4:
        return "[4,inf)"
    return f"[{int(scale)},{int(scale) + 1})"


def bucket_range(name: str) -> tuple:
    if name not in SCALE_BUCKETS:
        raise ValueError(f"unknown scale bucket {name!r}, expected one of {SCALE_BUCKETS}")
    lo = float(name[1])
    hi = math.inf if "inf" in name else float(name[3])
    return lo, hi


def patch_centers(grid_h: int, grid_w: int, stride: int) -> np.ndarray:
    """(N, 2) full-resolution (x, y) centers of a patch grid, row-major."""
    xs = np.arange(grid_w) * stride + stride // 2
    ys = np.arange(grid_h) * stride + stride // 2
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1).astype(np.float64)


@dataclass(frozen=True)
class SinusoidField:
    """Band-limited random field R^2 -> R^C (sum of plane waves per channel)."""

    wavevec: np.ndarray  # (C, n, 2) rad/px
    phase: np.ndarray  # (C, n)
    amp: np.ndarray  # (C, n)

    @classmethod
    def make(cls, rng: np.random.Generator, channels: int, n_waves: int,
             wavelength_range: tuple) -> "SinusoidField":
        lo, hi = wavelength_range
        theta = rng.uniform(0, 2 * np.pi, size=(channels, n_waves))
        lam = rng.uniform(lo, hi, size=(channels, n_waves))
        k = 2 * np.pi / lam
        wavevec = np.stack([k * np.cos(theta), k * np.sin(theta)], axis=-1)
        phase = rng.uniform(0, 2 * np.pi, size=(channels, n_waves))
        amp = np.full((channels, n_waves), 1.0 / math.sqrt(n_waves))
        return cls(wavevec=wavevec, phase=phase, amp=amp)

    def sample(self, points) -> np.ndarray:
        """Evaluate the field at (N, 2) positions -> (N, C) float32."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        args = np.einsum("nd,cwd->ncw", pts, self.wavevec) + self.phase[None]
        return np.sum(self.amp[None] * np.cos(args), axis=2).astype(np.float32)


@dataclass(frozen=True)
class PoseOffset:
    """Small relative pose of view B in addition to the bucket-driven pull-back."""

    yaw_deg: float = 0.0
    pitch_deg: float = 0.0
    roll_deg: float = 0.0
    translation: tuple = (0.0, 0.0, 0.0)


@dataclass
class ScenePair:
    """One synthetic view pair: descriptor grids plus exact geometry."""

    desc_a_coarse: np.ndarray
    desc_b_coarse: np.ndarray
    desc_a_fine: np.ndarray
    desc_b_fine: np.ndarray
    meta: dict
    homography: Homography | None = None
    frame_a: CameraFrame | None = None
    frame_b: CameraFrame | None = None

    @property
    def mode(self) -> str:
        return self.meta["mode"]

    @property
    def image_size(self) -> int:
        return self.meta["image_size"]

    @property
    def coarse_stride(self) -> int:
        return self.meta["coarse_stride"]

    @property
    def fine_stride(self) -> int:
        return self.meta["fine_stride"]

    def warp_ab(self, points) -> tuple:
        """Ground-truth warp of view-A pixels into view B: (points, valid)."""
        if self.mode == "planar":
            return self._warp_planar(self.homography, points)
        return project_many(self.frame_a, self.frame_b, points)

    def warp_ba(self, points) -> tuple:
        if self.mode == "planar":
            return self._warp_planar(self.homography.inverse(), points)
        return project_many(self.frame_b, self.frame_a, points)

    def _warp_planar(self, H: Homography, points) -> tuple:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        out = homography_apply_many(H, pts)
        s = self.image_size - 1
        valid = (
            (out[:, 0] >= 0) & (out[:, 0] <= s) & (out[:, 1] >= 0) & (out[:, 1] <= s)
        )
        return out, valid


def _rotation_zyx(yaw_deg: float, pitch_deg: float, roll_deg: float) -> np.ndarray:
    y, p, r = (math.radians(a) for a in (yaw_deg, pitch_deg, roll_deg))
    Rz = np.array([[math.cos(r), -math.sin(r), 0], [math.sin(r), math.cos(r), 0], [0, 0, 1]])
    Ry = np.array([[math.cos(y), 0, math.sin(y)], [0, 1, 0], [-math.sin(y), 0, math.cos(y)]])
    Rx = np.array([[1, 0, 0], [0, math.cos(p), -math.sin(p)], [0, math.sin(p), math.cos(p)]])
    return Rz @ Ry @ Rx


def _spawn_rngs(seed: int) -> list:
    seqs = np.random.SeedSequence(seed).spawn(7)
    return [np.random.Generator(np.random.PCG64(s)) for s in seqs]


def _grid_descriptors(field_true: SinusoidField, field_indep: SinusoidField,
                      centers: np.ndarray, warped: np.ndarray, covis: np.ndarray,
                      noise: np.ndarray, grid_shape: tuple) -> np.ndarray:
    """Descriptor grid of view B: true field at warped positions where
    co-visible, an independent field elsewhere, plus noise."""
    n = centers.shape[0]
    desc = field_indep.sample(centers)
    if np.any(covis):
        desc[covis] = field_true.sample(warped[covis])
    desc = desc + noise.reshape(n, -1)
    return desc.reshape(grid_shape).astype(np.float32)


def _descriptor_set(rngs, image_size, coarse_stride, fine_stride,
                    coarse_channels, fine_channels, n_waves,
                    warp_ba_fn, noise_sigma):
    """Build all four descriptor grids given a B->A ground-truth warp."""
    gc = image_size // coarse_stride
    gf = image_size // fine_stride

    # Coarse wavelengths scale with the image so that descriptors stay
    # correlated over the patch-center quantization distance even at large
    # zoom ratios (nearest-preimage ordering drives the argmax); fine
    # wavelengths stay short for a sharp sub-pixel correlation peak.
    coarse_wl = (0.75 * image_size, 2.0 * image_size)
    fine_wl = (5.0 * fine_stride, 20.0 * fine_stride)

    field_c = SinusoidField.make(rngs[_S_FIELD_COARSE], coarse_channels, n_waves, coarse_wl)
    field_f = SinusoidField.make(rngs[_S_FIELD_FINE], fine_channels, n_waves, fine_wl)
    indep_c = SinusoidField.make(rngs[_S_INDEP_COARSE], coarse_channels, n_waves, coarse_wl)
    indep_f = SinusoidField.make(rngs[_S_INDEP_FINE], fine_channels, n_waves, fine_wl)

    centers_c = patch_centers(gc, gc, coarse_stride)
    centers_f = patch_centers(gf, gf, fine_stride)

    desc_a_c = field_c.sample(centers_c).reshape(gc, gc, coarse_channels)
    desc_a_f = field_f.sample(centers_f).reshape(gf, gf, fine_channels)

    warped_c, covis_c = warp_ba_fn(centers_c)
    warped_f, covis_f = warp_ba_fn(centers_f)

    noise_c = rngs[_S_NOISE_COARSE].normal(0.0, noise_sigma, size=(gc * gc, coarse_channels)) \
        if noise_sigma > 0 else np.zeros((gc * gc, coarse_channels))
    noise_f = rngs[_S_NOISE_FINE].normal(0.0, noise_sigma, size=(gf * gf, fine_channels)) \
        if noise_sigma > 0 else np.zeros((gf * gf, fine_channels))

    desc_b_c = _grid_descriptors(field_c, indep_c, centers_c, warped_c, covis_c,
                                 noise_c, (gc, gc, coarse_channels))
    desc_b_f = _grid_descriptors(field_f, indep_f, centers_f, warped_f, covis_f,
                                 noise_f, (gf, gf, fine_channels))
    return desc_a_c, desc_b_c, desc_a_f, desc_b_f


def make_planar_pair(seed: int, scale_ratio: float = 1.0, rotation_deg: float = 0.0,
                     noise_sigma: float = 0.0, *, translation=(0.0, 0.0),
                     image_size: int = 64, coarse_stride: int = 8, fine_stride: int = 2,
                     coarse_channels: int = 256, fine_channels: int = 128,
                     n_waves: int = 16) -> ScenePair:
    """Planar pair under a known homography.

    View A is the zoomed-in view: the homography maps A into B shrunk by
    `scale_ratio` about the image centers, rotated by `rotation_deg`, then
    shifted by `translation` B-pixels. With scale_ratio s, roughly s^2
    patches of A project into each co-visible patch of B.
    """
    if scale_ratio < 1:
        raise ValueError(f"scale_ratio must be >= 1, got {scale_ratio}")
    if image_size % coarse_stride or image_size % fine_stride:
        raise ValueError("image_size must be divisible by both strides")

    rngs = _spawn_rngs(seed)
    c = (image_size - 1) / 2.0
    th = math.radians(rotation_deg)
    M = (1.0 / scale_ratio) * np.array([[math.cos(th), -math.sin(th)],
                                        [math.sin(th), math.cos(th)]])
    b = np.array([c + translation[0], c + translation[1]]) - M @ np.array([c, c])
    H = Homography(np.array([[M[0, 0], M[0, 1], b[0]],
                             [M[1, 0], M[1, 1], b[1]],
                             [0.0, 0.0, 1.0]]))
    Hinv = H.inverse()

    def warp_ba(pts):
        out = homography_apply_many(Hinv, pts)
        s = image_size - 1
        valid = (out[:, 0] >= 0) & (out[:, 0] <= s) & (out[:, 1] >= 0) & (out[:, 1] <= s)
        return out, valid

    da_c, db_c, da_f, db_f = _descriptor_set(
        rngs, image_size, coarse_stride, fine_stride, coarse_channels,
        fine_channels, n_waves, warp_ba, noise_sigma)

    meta = {
        "mode": "planar",
        "seed": int(seed),
        "image_size": image_size,
        "coarse_stride": coarse_stride,
        "fine_stride": fine_stride,
        "scale_ratio": float(scale_ratio),
        "bucket": bucket_of(scale_ratio),
        "rotation_deg": float(rotation_deg),
        "translation": [float(translation[0]), float(translation[1])],
        "noise_sigma": float(noise_sigma),
        "generator": GENERATOR_NAME,
        "homography": H.H.ravel().tolist(),
    }
    return ScenePair(desc_a_coarse=da_c, desc_b_coarse=db_c, desc_a_fine=da_f,
                     desc_b_fine=db_f, meta=meta, homography=H)


# ---------------------------------------------------------------------------
# 3-D pairs
# ---------------------------------------------------------------------------

_BASE_DEPTH = 4.0
_STEP_FACTORS = (1.0, 1.18, 1.36, 1.09)  # per-quadrant depth multipliers


def _quadrant(x, y, half):
    return (np.asarray(y) >= half).astype(int) * 2 + (np.asarray(x) >= half).astype(int)


def _depth_profile_a(profile: str, image_size: int) -> np.ndarray:
    ys, xs = np.mgrid[0:image_size, 0:image_size]
    if profile == "plane":
        return np.full((image_size, image_size), _BASE_DEPTH, dtype=np.float32)
    if profile == "steps":
        q = _quadrant(xs, ys, image_size / 2.0)
        levels = _BASE_DEPTH * np.asarray(_STEP_FACTORS)
        return levels[q].astype(np.float32)
    raise ValueError(f"unknown depth profile {profile!r} (expected 'plane' or 'steps')")


def _cast_depth_b(profile: str, image_size: int, K: np.ndarray,
                  R: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Exact depth of the quadrant-step surface seen from camera (R, t).

    The surface is the union of fronto-parallel planes z = z_k restricted
    to where camera A (identity pose) sees quadrant k; rays that miss all
    plane pieces get depth 0 (invalid).
    """
    levels = [_BASE_DEPTH] if profile == "plane" else list(_BASE_DEPTH * np.asarray(_STEP_FACTORS))
    half = image_size / 2.0
    ys, xs = np.mgrid[0:image_size, 0:image_size]
    pix = np.stack([xs.ravel(), ys.ravel(), np.ones(image_size * image_size)], axis=1)
    rays_cam = pix @ np.linalg.inv(K).T
    rays_world = rays_cam @ R  # R^T d
    center = -R.T @ t

    best = np.full(pix.shape[0], np.inf)
    fx, fy = K[0, 0], K[1, 1]
    cx, cy = K[0, 2], K[1, 2]
    for k, z_k in enumerate(levels):
        dz = rays_world[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = (z_k - center[2]) / dz
        pts = center[None, :] + lam[:, None] * rays_world
        ok = np.isfinite(lam) & (lam > 1e-9)
        # A-image position of the candidate surface point (A has identity pose)
        with np.errstate(divide="ignore", invalid="ignore"):
            ua = fx * pts[:, 0] / pts[:, 2] + cx
            va = fy * pts[:, 1] / pts[:, 2] + cy
        ok &= (ua >= 0) & (ua <= image_size - 1) & (va >= 0) & (va <= image_size - 1)
        if profile == "steps":
            ok &= _quadrant(ua, va, half) == k
        depth_b = (pts @ R.T + t)[:, 2]
        ok &= depth_b > 1e-9
        upd = ok & (depth_b < best)
        best[upd] = depth_b[upd]
    best[~np.isfinite(best)] = 0.0
    return best.reshape(image_size, image_size).astype(np.float32)


def make_3d_pair(seed: int, pose_offset: PoseOffset | None = None,
                 depth_profile: str = "steps", scale_bucket: str | None = None,
                 *, noise_sigma: float = 0.0, image_size: int = 64,
                 coarse_stride: int = 8, fine_stride: int = 2,
                 coarse_channels: int = 256, fine_channels: int = 128,
                 n_waves: int = 16) -> ScenePair:
    """Two-camera pair over an analytic surface with exact depth maps.

    Camera A sits at the origin looking down +z. When `scale_bucket` is
    given, camera B is pulled straight back so the depth ratio (and hence
    the image scale ratio of the dominant plane) lands mid-bucket; the
    `pose_offset` rotation/translation is applied on top. A is always the
    closer, zoomed-in view.
    """
    pose_offset = pose_offset or PoseOffset()
    rngs = _spawn_rngs(seed)

    f = float(image_size)
    c = (image_size - 1) / 2.0
    K = np.array([[f, 0, c], [0, f, c], [0, 0, 1.0]])

    ratio = 1.0
    pull_back = 0.0
    if scale_bucket is not None:
        lo, hi = bucket_range(scale_bucket)
        ratio = (lo + hi) / 2.0 if math.isfinite(hi) else lo + 0.5
        pull_back = _BASE_DEPTH * (ratio - 1.0)

    R_b = _rotation_zyx(pose_offset.yaw_deg, pose_offset.pitch_deg, pose_offset.roll_deg)
    center_b = np.array([pose_offset.translation[0], pose_offset.translation[1],
                         pose_offset.translation[2] - pull_back])
    t_b = -R_b @ center_b

    depth_a = _depth_profile_a(depth_profile, image_size)
    depth_b = _cast_depth_b(depth_profile, image_size, K, R_b, t_b)

    frame_a = CameraFrame(K=K, R=np.eye(3), t=np.zeros(3), depth=depth_a)
    frame_b = CameraFrame(K=K, R=R_b, t=t_b, depth=depth_b)

    def warp_ba(pts):
        return project_many(frame_b, frame_a, pts)

    da_c, db_c, da_f, db_f = _descriptor_set(
        rngs, image_size, coarse_stride, fine_stride, coarse_channels,
        fine_channels, n_waves, warp_ba, noise_sigma)

    meta = {
        "mode": "3d",
        "seed": int(seed),
        "image_size": image_size,
        "coarse_stride": coarse_stride,
        "fine_stride": fine_stride,
        "scale_ratio": float(ratio),
        "bucket": scale_bucket if scale_bucket is not None else bucket_of(ratio),
        "depth_profile": depth_profile,
        "noise_sigma": float(noise_sigma),
        "generator": GENERATOR_NAME,
        "K": K.ravel().tolist(),
        "R_b": R_b.ravel().tolist(),
        "t_b": t_b.ravel().tolist(),
        "pose_offset": {
            "yaw_deg": pose_offset.yaw_deg,
            "pitch_deg": pose_offset.pitch_deg,
            "roll_deg": pose_offset.roll_deg,
            "translation": list(pose_offset.translation),
        },
    }
    return ScenePair(desc_a_coarse=da_c, desc_b_coarse=db_c, desc_a_fine=da_f,
                     desc_b_fine=db_f, meta=meta, frame_a=frame_a, frame_b=frame_b)


# ---------------------------------------------------------------------------
# Dataset directory layout
# ---------------------------------------------------------------------------


def save_pair(pair: ScenePair, dirpath) -> None:
    """Write one pair directory: meta.json plus tensor containers
    (descA_c/descB_c/descA_f/descB_f, and depthA/depthB for 3-d pairs)."""
    import json
    import os

    from . import container

    os.makedirs(dirpath, exist_ok=True)
    tmp = os.path.join(dirpath, "meta.json.tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(pair.meta, f, sort_keys=True, indent=1)
    os.replace(tmp, os.path.join(dirpath, "meta.json"))
    container.write_tensors(os.path.join(dirpath, "descA_c.bin"), {"descA_c": pair.desc_a_coarse})
    container.write_tensors(os.path.join(dirpath, "descB_c.bin"), {"descB_c": pair.desc_b_coarse})
    container.write_tensors(os.path.join(dirpath, "descA_f.bin"), {"descA_f": pair.desc_a_fine})
    container.write_tensors(os.path.join(dirpath, "descB_f.bin"), {"descB_f": pair.desc_b_fine})
    if pair.mode == "3d":
        container.write_tensors(os.path.join(dirpath, "depthA.bin"), {"depthA": pair.frame_a.depth})
        container.write_tensors(os.path.join(dirpath, "depthB.bin"), {"depthB": pair.frame_b.depth})


def load_pair(dirpath) -> ScenePair:
    """Reconstruct a ScenePair (including exact geometry) from a pair dir."""
    import json
    import os

    from . import container

    with open(os.path.join(dirpath, "meta.json"), encoding="utf-8") as f:
        meta = json.load(f)
    da_c = container.read_tensors(os.path.join(dirpath, "descA_c.bin"))["descA_c"]
    db_c = container.read_tensors(os.path.join(dirpath, "descB_c.bin"))["descB_c"]
    da_f = container.read_tensors(os.path.join(dirpath, "descA_f.bin"))["descA_f"]
    db_f = container.read_tensors(os.path.join(dirpath, "descB_f.bin"))["descB_f"]
    if meta["mode"] == "planar":
        H = Homography(np.asarray(meta["homography"], dtype=np.float64).reshape(3, 3))
        return ScenePair(desc_a_coarse=da_c, desc_b_coarse=db_c, desc_a_fine=da_f,
                         desc_b_fine=db_f, meta=meta, homography=H)
    depth_a = container.read_tensors(os.path.join(dirpath, "depthA.bin"))["depthA"]
    depth_b = container.read_tensors(os.path.join(dirpath, "depthB.bin"))["depthB"]
    K = np.asarray(meta["K"], dtype=np.float64).reshape(3, 3)
    R_b = np.asarray(meta["R_b"], dtype=np.float64).reshape(3, 3)
    t_b = np.asarray(meta["t_b"], dtype=np.float64)
    frame_a = CameraFrame(K=K, R=np.eye(3), t=np.zeros(3), depth=depth_a)
    frame_b = CameraFrame(K=K, R=R_b, t=t_b, depth=depth_b)
    return ScenePair(desc_a_coarse=da_c, desc_b_coarse=db_c, desc_a_fine=da_f,
                     desc_b_fine=db_f, meta=meta, frame_a=frame_a, frame_b=frame_b)
