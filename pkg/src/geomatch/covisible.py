"""Co-visible area segmentation.

A per-view spatial weight map comes from the dot product of the decoded
context vector with the interacted features; features are gated by it and
residually enhanced, then a conv -> ReLU -> conv -> sigmoid head produces
a per-patch probability of lying in the region seen by both views.
Thresholding the map gives the binary mask used to filter matches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import conv2d


def _sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class CovisibleWeights:
    """Two-conv head: 3x3 d->d/2 with ReLU, then 3x3 d/2->1 with sigmoid."""

    conv1: np.ndarray
    bias1: np.ndarray
    conv2: np.ndarray
    bias2: np.ndarray

    def validate(self, d: int) -> None:
        if self.conv1.shape != (3, 3, d, d // 2):
            raise ValueError(f"conv1 shape {self.conv1.shape} != (3,3,{d},{d // 2})")
        if self.conv2.shape != (3, 3, d // 2, 1):
            raise ValueError(f"conv2 shape {self.conv2.shape} != (3,3,{d // 2},1)")

    @classmethod
    def init(cls, seed: int, d: int = 256) -> "CovisibleWeights":
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xC0])))
        s1 = 1.0 / math.sqrt(9 * d)
        s2 = 1.0 / math.sqrt(9 * (d // 2))
        return cls(
            conv1=(rng.normal(size=(3, 3, d, d // 2)) * s1).astype(np.float32),
            bias1=np.zeros(d // 2, dtype=np.float32),
            conv2=(rng.normal(size=(3, 3, d // 2, 1)) * s2).astype(np.float32),
            bias2=np.zeros(1, dtype=np.float32),
        )

    @classmethod
    def zeros(cls, d: int = 256) -> "CovisibleWeights":
        return cls(
            conv1=np.zeros((3, 3, d, d // 2), dtype=np.float32),
            bias1=np.zeros(d // 2, dtype=np.float32),
            conv2=np.zeros((3, 3, d // 2, 1), dtype=np.float32),
            bias2=np.zeros(1, dtype=np.float32),
        )

    def to_entries(self, prefix: str) -> dict:
        return {f"{prefix}.conv1": self.conv1, f"{prefix}.bias1": self.bias1,
                f"{prefix}.conv2": self.conv2, f"{prefix}.bias2": self.bias2}

    @classmethod
    def from_entries(cls, entries: dict, prefix: str) -> "CovisibleWeights":
        return cls(conv1=entries[f"{prefix}.conv1"], bias1=entries[f"{prefix}.bias1"],
                   conv2=entries[f"{prefix}.conv2"], bias2=entries[f"{prefix}.bias2"])


def spatial_gate(feat, query) -> np.ndarray:
    """(h, w) attention weights: sigmoid of the feature/context dot product."""
    feat = np.asarray(feat, dtype=np.float64)
    if feat.ndim != 3:
        raise ValueError("feat must be (h, w, d)")
    q = np.asarray(query, dtype=np.float64).reshape(-1)
    if q.shape[0] != feat.shape[2]:
        raise ValueError(f"query dim {q.shape[0]} != feature channels {feat.shape[2]}")
    return _sigmoid(feat @ q)


def covisible_head(feat, query, weights: CovisibleWeights) -> np.ndarray:
    """Per-patch co-visibility probabilities in (0, 1) for one view.

    Args:
        feat: (h, w, d) interacted features of the view.
        query: (d,) or (1, d) decoded context vector of the same view.
        weights: the two-conv head parameters.
    """
    feat = np.asarray(feat, dtype=np.float64)
    gate = spatial_gate(feat, query)  # (h, w) attention weight map
    weights.validate(feat.shape[2])
    enhanced = gate[:, :, None] * feat + feat
    h1 = conv2d(enhanced.astype(np.float32), weights.conv1, weights.bias1)
    h1 = np.maximum(h1, 0.0)
    h2 = conv2d(h1, weights.conv2, weights.bias2)
    return _sigmoid(h2[:, :, 0]).astype(np.float32)


def threshold_mask(prob, theta: float) -> np.ndarray:
    """Boolean mask: probability >= theta."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {theta}")
    prob = np.asarray(prob)
    if np.any(prob < 0) or np.any(prob > 1):
        raise ValueError("probabilities outside [0, 1]")
    return prob >= theta


@dataclass
class CoVisibleMap:
    """Probability maps of both views plus thresholded masks."""

    prob_a: np.ndarray
    prob_b: np.ndarray
    threshold: float
    mask_a: np.ndarray
    mask_b: np.ndarray

    @classmethod
    def from_probs(cls, prob_a, prob_b, threshold: float = 0.2) -> "CoVisibleMap":
        prob_a = np.asarray(prob_a, dtype=np.float32)
        prob_b = np.asarray(prob_b, dtype=np.float32)
        return cls(prob_a=prob_a, prob_b=prob_b, threshold=float(threshold),
                   mask_a=threshold_mask(prob_a, threshold),
                   mask_b=threshold_mask(prob_b, threshold))

    @classmethod
    def from_masks(cls, mask_a, mask_b) -> "CoVisibleMap":
        """Wrap exact boolean masks (e.g. ground truth) as a co-visible map."""
        mask_a = np.asarray(mask_a, dtype=bool)
        mask_b = np.asarray(mask_b, dtype=bool)
        return cls(prob_a=mask_a.astype(np.float32), prob_b=mask_b.astype(np.float32),
                   threshold=0.5, mask_a=mask_a, mask_b=mask_b)


def save_mask_pgm(mask, path) -> None:
    """Write a boolean mask as a binary PGM (1 byte per pixel) for inspection."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write((mask.astype(np.uint8) * 255).tobytes())
