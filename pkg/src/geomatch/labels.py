"""Ground-truth labels from exact pair geometry.

Patch centroids of each view are warped into the other view; every
centroid landing inside a patch marks that (source, target) pair positive,
with no mutual-nearest suppression, so several source patches may share a
target. The union over both directions forms the adaptive assignment
label matrix; per-direction views are kept for direction-resolved
supervision and for scale oracles. Co-visible masks record which centroids
warp validly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .assignment import MatchSet
from .synthscene import ScenePair, patch_centers


def bucket_index(coord, patch_size: int, n_patches: int) -> np.ndarray:
    """Patch index of a continuous coordinate.

    Floor division by the patch size; coordinates exactly on a patch
    boundary belong to the lower-index patch.
    """
    c = np.asarray(coord, dtype=np.float64)
    idx = np.ceil(c / patch_size).astype(np.int64) - 1
    idx = np.maximum(idx, 0)
    return np.minimum(idx, n_patches - 1)


@dataclass
class GroundTruthLabels:
    """Adaptive assignment labels plus co-visible masks of one pair."""

    positives: np.ndarray  # (n_a, n_b) bool, union of both directions
    positives_dir0: np.ndarray  # (n_a, n_b) bool, A centroids -> B patches
    positives_dir1: np.ndarray  # (n_a, n_b) bool, B centroids -> A patches
    cov_a: np.ndarray  # (h, w) bool
    cov_b: np.ndarray  # (h, w) bool
    grid_shape: tuple

    def match_set(self, direction: int) -> MatchSet:
        mat = self.positives_dir0 if direction == 0 else self.positives_dir1
        ii, jj = np.nonzero(mat)
        return MatchSet(i=ii, j=jj, confidence=np.ones(len(ii), dtype=np.float32),
                        direction=direction)

    def to_json_dict(self) -> dict:
        return {
            "grid_shape": list(self.grid_shape),
            "positives": np.argwhere(self.positives).tolist(),
            "positives_dir0": np.argwhere(self.positives_dir0).tolist(),
            "positives_dir1": np.argwhere(self.positives_dir1).tolist(),
            "cov_a": self.cov_a.astype(int).ravel().tolist(),
            "cov_b": self.cov_b.astype(int).ravel().tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "GroundTruthLabels":
        gh, gw = d["grid_shape"]
        n = gh * gw

        def mat(key):
            m = np.zeros((n, n), dtype=bool)
            for i, j in d[key]:
                m[i, j] = True
            return m

        return cls(
            positives=mat("positives"),
            positives_dir0=mat("positives_dir0"),
            positives_dir1=mat("positives_dir1"),
            cov_a=np.asarray(d["cov_a"], dtype=bool).reshape(gh, gw),
            cov_b=np.asarray(d["cov_b"], dtype=bool).reshape(gh, gw),
            grid_shape=(gh, gw),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json_dict(), f, sort_keys=True)

    @classmethod
    def load(cls, path) -> "GroundTruthLabels":
        with open(path, encoding="utf-8") as f:
            return cls.from_json_dict(json.load(f))


def generate_labels(pair: ScenePair, patch_size: int | None = None) -> GroundTruthLabels:
    """Bidirectional centroid projection labels of a scene pair."""
    patch = patch_size or pair.coarse_stride
    size = pair.image_size
    g = size // patch
    n = g * g
    centers = patch_centers(g, g, patch)

    pos0 = np.zeros((n, n), dtype=bool)
    pos1 = np.zeros((n, n), dtype=bool)

    warped_ab, valid_ab = pair.warp_ab(centers)
    src = np.flatnonzero(valid_ab)
    if src.size:
        tx = bucket_index(warped_ab[src, 0], patch, g)
        ty = bucket_index(warped_ab[src, 1], patch, g)
        pos0[src, ty * g + tx] = True

    warped_ba, valid_ba = pair.warp_ba(centers)
    src = np.flatnonzero(valid_ba)
    if src.size:
        tx = bucket_index(warped_ba[src, 0], patch, g)
        ty = bucket_index(warped_ba[src, 1], patch, g)
        pos1[ty * g + tx, src] = True

    return GroundTruthLabels(
        positives=pos0 | pos1,
        positives_dir0=pos0,
        positives_dir1=pos1,
        cov_a=valid_ab.reshape(g, g),
        cov_b=valid_ba.reshape(g, g),
        grid_shape=(g, g),
    )


@dataclass
class FineTargets:
    """Exact sub-pixel targets for a proposal list.

    points holds, per proposal, the warp of the source patch center into
    the other view (full-resolution pixels); invalid warps are flagged and
    excluded from losses.
    """

    points: np.ndarray  # (n, 2) float64
    valid: np.ndarray  # (n,) bool


def gt_matches_fine(labels: GroundTruthLabels, proposals: MatchSet,
                    pair: ScenePair) -> FineTargets:
    """Ground-truth refinement targets for each proposal.

    The source side is the proposal direction's source (A for direction 0);
    the target is the exact continuous warp of its patch center.
    """
    patch = pair.coarse_stride
    g = pair.image_size // patch
    centers = patch_centers(g, g, patch)
    n = len(proposals)
    if n == 0:
        return FineTargets(points=np.zeros((0, 2)), valid=np.zeros(0, dtype=bool))
    if proposals.direction == 0:
        src_idx = proposals.i
        warped, valid = pair.warp_ab(centers[src_idx])
    else:
        src_idx = proposals.j
        warped, valid = pair.warp_ba(centers[src_idx])
    return FineTargets(points=warped, valid=valid.copy())
