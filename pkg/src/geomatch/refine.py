"""Sub-pixel refinement of patch-level proposals.

For every proposal, windows are sampled from the half-resolution feature
grids around both endpoints. One self/cross attention layer lets windows
that share a target exchange information, the coarser (target) side is
zoomed by the estimated scale ratio, and the corrected target position is
the expectation over a softmax correlation heatmap between the source
center feature and the target window, with the heatmap variance reported
as a confidence proxy. Windows crossing the image border are discarded
(counted, not errors).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assignment import MatchSet, ScaleEstimate
from .cfi import block_forward, init_block_params, zero_block_params
from .numerics import bilinear_sample, softmax


@dataclass
class RefineWeights:
    """One self and one cross attention block at fine channel width."""

    params: dict
    kind: str = "softmax"

    @classmethod
    def init(cls, seed: int, c: int = 128, kind: str = "softmax") -> "RefineWeights":
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x5F1])))
        params = {}
        for blk in ("self", "cross"):
            for name, arr in init_block_params(rng, c).items():
                params[f"{blk}.{name}"] = arr
        return cls(params=params, kind=kind)

    @classmethod
    def zeros(cls, c: int = 128, kind: str = "softmax") -> "RefineWeights":
        params = {}
        for blk in ("self", "cross"):
            for name, arr in zero_block_params(c).items():
                params[f"{blk}.{name}"] = arr
        return cls(params=params, kind=kind)

    def to_entries(self, prefix: str) -> dict:
        return {f"{prefix}.{k}": v for k, v in self.params.items()}

    @classmethod
    def from_entries(cls, entries: dict, prefix: str, kind: str = "softmax") -> "RefineWeights":
        plen = len(prefix) + 1
        params = {k[plen:]: v for k, v in entries.items() if k.startswith(prefix + ".")}
        return cls(params=params, kind=kind)


@dataclass
class RefineConfig:
    window: int = 5
    temperature: float | None = None  # None -> 3/sqrt(channels)
    weights: RefineWeights | None = None
    use_attention: bool = True
    # Zoom applied to the target window before regression: "off" samples at
    # native spacing (the window then spans exactly one coarse patch, so the
    # correlation peak is always inside it), "linear" zooms by sqrt(s) (the
    # linear equivalent of the multiplicity ratio), "eq5" by the raw ratio.
    scale_align_mode: str = "off"


@dataclass
class RefinedMatch:
    """One correspondence in original-resolution pixels.

    The source endpoint stays at its patch center; the target endpoint
    carries the sub-pixel correction. variance is the heatmap variance
    mapped to full-resolution px^2.
    """

    point_a: tuple
    point_b: tuple
    confidence: float
    variance: float


@dataclass
class RefineStats:
    total: int = 0
    discarded_border: int = 0
    refined: int = 0
    groups: int = 0
    kept_indices: np.ndarray | None = None  # proposal indices that survived


def scale_align(patches, s: float) -> np.ndarray:
    """Zoom w x w patches into their central region by factor s.

    Each output texel (u, v) is the bilinear sample of the input patch at
    center + (u - center)/s, so s = 1 returns the patches unchanged and
    larger s magnifies the middle of the patch. Accepts (w, w, c) or
    (n, w, w, c).
    """
    if s < 1:
        raise ValueError(f"scale factor must be >= 1, got {s}")
    arr = np.asarray(patches, dtype=np.float32)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[1] != arr.shape[2]:
        raise ValueError(f"patches must be (n, w, w, c), got {arr.shape}")
    if s == 1:
        out = arr.copy()
        return out[0] if single else out
    w = arr.shape[1]
    c = (w - 1) / 2.0
    ax = c + (np.arange(w) - c) / s
    gx, gy = np.meshgrid(ax, ax)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    out = np.stack([
        bilinear_sample(p, pts).reshape(w, w, arr.shape[3]) for p in arr
    ])
    return out[0] if single else out


def expectation_regress(center_vec, patch, temperature: float | None = None) -> tuple:
    """Offset and variance of the correlation heatmap inside one window.

    The heatmap is the softmax of the correlations between the source
    center feature and every window texel, scaled by `temperature`
    (default 3/sqrt(channels), the sharpness that balances interpolation
    accuracy against edge-truncation bias for w=5 windows). Returns
    ((dx, dy), variance), both in window-texel units relative to the
    window center.
    """
    center_vec = np.asarray(center_vec, dtype=np.float64).reshape(-1)
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 3 or patch.shape[0] != patch.shape[1]:
        raise ValueError(f"patch must be (w, w, c), got {patch.shape}")
    if patch.shape[2] != center_vec.shape[0]:
        raise ValueError("channel mismatch between center feature and patch")
    w = patch.shape[0]
    if temperature is None:
        temperature = 3.0 / math.sqrt(patch.shape[2])
    logits = (patch.reshape(-1, patch.shape[2]) @ center_vec) * temperature
    heat = softmax(logits, axis=0).astype(np.float64)
    c = (w - 1) / 2.0
    xs, ys = np.meshgrid(np.arange(w) - c, np.arange(w) - c)
    ex = float(np.sum(heat * xs.ravel()))
    ey = float(np.sum(heat * ys.ravel()))
    var = float(np.sum(heat * ((xs.ravel() - ex) ** 2 + (ys.ravel() - ey) ** 2)))
    return (ex, ey), var


def _window_positions(center_fine, w: int) -> np.ndarray:
    """(w*w, 2) fine-grid sample positions of a window centered at a point."""
    c = (w - 1) // 2
    offs = np.arange(w) - c
    gx, gy = np.meshgrid(offs, offs)
    return np.stack([center_fine[0] + gx.ravel(), center_fine[1] + gy.ravel()], axis=1)


def _apply_group_attention(src_windows, tgt_window, weights: RefineWeights):
    """Self attention inside each window, then cross attention between the
    group's source windows and the shared target window."""
    P, kind = weights.params, weights.kind
    srcs = [block_forward(sw, sw, P, "self", kind) for sw in src_windows]
    tgt = block_forward(tgt_window, tgt_window, P, "self", kind)
    all_src = np.concatenate(srcs, axis=0)
    out_srcs = [block_forward(sw, tgt, P, "cross", kind) for sw in srcs]
    out_tgt = block_forward(tgt, all_src, P, "cross", kind)
    return out_srcs, out_tgt


def refine_matches(proposals: MatchSet, fine_a, fine_b, scale: ScaleEstimate,
                   cfg: RefineConfig, *, coarse_stride: int = 8,
                   fine_stride: int = 2) -> tuple:
    """Refine proposals to sub-pixel correspondences.

    The proposal direction decides the roles: sources keep their patch
    centers, targets (the "one" side of many-to-one, the coarser view) are
    scale-aligned per cfg.scale_align_mode and corrected. Returns
    (list of RefinedMatch, stats).
    """
    w = cfg.window
    if w % 2 == 0 or w < 3:
        raise ValueError(f"window must be odd and >= 3, got {w}")
    if cfg.scale_align_mode not in ("off", "linear", "eq5"):
        raise ValueError(f"unknown scale_align_mode {cfg.scale_align_mode!r}")
    stats = RefineStats(total=len(proposals))
    if len(proposals) == 0:
        return [], stats

    fine_a = np.asarray(fine_a, dtype=np.float32)
    fine_b = np.asarray(fine_b, dtype=np.float32)
    if proposals.direction == 0:
        src_grid, tgt_grid = fine_a, fine_b
        src_idx, tgt_idx = proposals.i, proposals.j
    else:
        src_grid, tgt_grid = fine_b, fine_a
        src_idx, tgt_idx = proposals.j, proposals.i

    gh = src_grid.shape[0]
    gw_coarse = gh * fine_stride // coarse_stride
    half = (w - 1) // 2
    off = fine_stride // 2

    def fine_center(flat_idx):
        gy, gx = divmod(int(flat_idx), gw_coarse)
        full = (gx * coarse_stride + coarse_stride // 2,
                gy * coarse_stride + coarse_stride // 2)
        return ((full[0] - off) / fine_stride, (full[1] - off) / fine_stride), full

    def in_bounds(center, grid):
        return (center[0] - half >= 0 and center[0] + half <= grid.shape[1] - 1
                and center[1] - half >= 0 and center[1] + half <= grid.shape[0] - 1)

    kept = []
    for n in range(len(proposals)):
        sc, s_full = fine_center(src_idx[n])
        tc, t_full = fine_center(tgt_idx[n])
        if in_bounds(sc, src_grid) and in_bounds(tc, tgt_grid):
            kept.append((n, sc, s_full, tc, t_full))
    stats.discarded_border = stats.total - len(kept)
    stats.kept_indices = np.array([k[0] for k in kept], dtype=np.int64)
    if not kept:
        return [], stats

    src_wins = np.stack([
        bilinear_sample(src_grid, _window_positions(sc, w)).reshape(w, w, -1)
        for _, sc, _, _, _ in kept
    ]).astype(np.float64)
    tgt_cache = {}
    for n, _, _, tc, _ in kept:
        key = int(tgt_idx[n])
        if key not in tgt_cache:
            tgt_cache[key] = bilinear_sample(tgt_grid, _window_positions(tc, w)).reshape(w, w, -1).astype(np.float64)

    c_feat = src_grid.shape[2]
    temp = cfg.temperature if cfg.temperature is not None else 3.0 / math.sqrt(c_feat)

    # group members by shared target for the attention step
    groups = {}
    for pos, (n, *_rest) in enumerate(kept):
        groups.setdefault(int(tgt_idx[n]), []).append(pos)
    stats.groups = len(groups)

    src_tokens = src_wins.reshape(len(kept), w * w, c_feat)
    refined_src = np.array(src_tokens)
    refined_tgt = {k: v.reshape(w * w, c_feat) for k, v in tgt_cache.items()}
    if cfg.use_attention and cfg.weights is not None:
        for key, members in groups.items():
            outs, out_t = _apply_group_attention(
                [src_tokens[m] for m in members], refined_tgt[key], cfg.weights)
            for m, o in zip(members, outs):
                refined_src[m] = o
            refined_tgt[key] = out_t

    if cfg.scale_align_mode == "eq5":
        s_zoom = max(float(scale.s), 1.0)
    elif cfg.scale_align_mode == "linear":
        s_zoom = max(math.sqrt(float(scale.s)), 1.0)
    else:
        s_zoom = 1.0
    zoomed = {k: scale_align(v.reshape(w, w, c_feat).astype(np.float32), s_zoom)
              for k, v in refined_tgt.items()}

    center_tok = (w * w - 1) // 2
    out = []
    for pos, (n, sc, s_full, tc, t_full) in enumerate(kept):
        center_feat = refined_src[pos, center_tok]
        (dx, dy), var = expectation_regress(center_feat, zoomed[int(tgt_idx[n])], temp)
        # resampled texel -> fine-grid offset -> full-resolution pixels
        fx = t_full[0] + fine_stride * dx / s_zoom
        fy = t_full[1] + fine_stride * dy / s_zoom
        var_full = var * (fine_stride / s_zoom) ** 2
        conf = float(proposals.confidence[n])
        if proposals.direction == 0:
            out.append(RefinedMatch(point_a=(float(s_full[0]), float(s_full[1])),
                                    point_b=(fx, fy), confidence=conf, variance=var_full))
        else:
            out.append(RefinedMatch(point_a=(fx, fy),
                                    point_b=(float(s_full[0]), float(s_full[1])),
                                    confidence=conf, variance=var_full))
    stats.refined = len(out)
    return out, stats
