"""Adaptive patch-level assignment.

A temperature-scaled similarity matrix between the interacted coarse
features is softmaxed along each axis separately; each direction yields
its own proposal set (many-to-one allowed), a per-direction scale ratio
is read off the proposal multiplicities, and the direction with the
larger ratio wins. Matches outside the co-visible masks are dropped.
Proposal extraction from external score matrices (no mutual-nearest
constraint) is provided for refining third-party matchers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .covisible import CoVisibleMap
from .numerics import softmax

DEFAULT_MATCH_THRESHOLD = 0.5  # on the one-way softmax probabilities
DEFAULT_TEMPERATURE = 0.1


@dataclass(frozen=True)
class SimilarityMatrix:
    scores: np.ndarray  # (n_a, n_b) float32
    temperature: float

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")


@dataclass
class MatchSet:
    """Patch-index matches of one direction with confidences.

    direction 0: sources are A patches committing to their best B patch;
    direction 1: the reverse. Index arrays are parallel.
    """

    i: np.ndarray  # A patch flat indices
    j: np.ndarray  # B patch flat indices
    confidence: np.ndarray
    direction: int = 0

    def __post_init__(self):
        self.i = np.asarray(self.i, dtype=np.int64).reshape(-1)
        self.j = np.asarray(self.j, dtype=np.int64).reshape(-1)
        self.confidence = np.asarray(self.confidence, dtype=np.float32).reshape(-1)
        if not (len(self.i) == len(self.j) == len(self.confidence)):
            raise ValueError("index/confidence arrays must be parallel")
        if self.direction not in (0, 1):
            raise ValueError("direction must be 0 or 1")

    def __len__(self) -> int:
        return len(self.i)

    def pairs(self) -> np.ndarray:
        return np.stack([self.i, self.j], axis=1)

    def take(self, mask) -> "MatchSet":
        mask = np.asarray(mask)
        return MatchSet(i=self.i[mask], j=self.j[mask],
                        confidence=self.confidence[mask], direction=self.direction)

    @classmethod
    def empty(cls, direction: int = 0) -> "MatchSet":
        return cls(i=np.zeros(0, dtype=np.int64), j=np.zeros(0, dtype=np.int64),
                   confidence=np.zeros(0, dtype=np.float32), direction=direction)


@dataclass(frozen=True)
class ScaleEstimate:
    """Per-direction scale ratios and the selected direction.

    s_k = |M_k| / #distinct targets of M_k (1 when M_k is empty: no
    evidence of scale change); s = max(s0/s1, s1/s0) >= 1 and index is
    the argmax of (s0, s1) with ties resolved to 0.
    """

    s0: float
    s1: float
    s: float = field(init=False)
    index: int = field(init=False)

    def __post_init__(self):
        if self.s0 <= 0 or self.s1 <= 0:
            raise ValueError("scale ratios must be positive")
        object.__setattr__(self, "s", max(self.s0 / self.s1, self.s1 / self.s0))
        object.__setattr__(self, "index", 0 if self.s0 >= self.s1 else 1)


def similarity(feat_a3, feat_b3, r: float = DEFAULT_TEMPERATURE) -> SimilarityMatrix:
    """Inner products of flattened patch features, scaled by 1/r."""
    if r <= 0:
        raise ValueError(f"temperature must be positive, got {r}")
    a = np.asarray(feat_a3, dtype=np.float64)
    b = np.asarray(feat_b3, dtype=np.float64)
    a = a.reshape(-1, a.shape[-1])
    b = b.reshape(-1, b.shape[-1])
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"channel dims differ: {a.shape[1]} vs {b.shape[1]}")
    return SimilarityMatrix(scores=((a @ b.T) / r).astype(np.float32), temperature=r)


def _one_way_matches(prob: np.ndarray, theta: float, axis: int, direction: int,
                     mode: str) -> MatchSet:
    """Above-threshold entries of a one-way softmax matrix.

    mode 'argmax': each source slice contributes its single best target
    (the one-way assignment reading); mode 'all': every entry above the
    threshold is kept (the permissive set-builder reading).
    """
    if mode == "argmax":
        best = np.argmax(prob, axis=axis)
        if axis == 1:
            src = np.arange(prob.shape[0])
            conf = prob[src, best]
            ii, jj = src, best
        else:
            src = np.arange(prob.shape[1])
            conf = prob[best, src]
            ii, jj = best, src
        keep = conf > theta
        return MatchSet(i=ii[keep], j=jj[keep], confidence=conf[keep], direction=direction)
    if mode == "all":
        ii, jj = np.nonzero(prob > theta)
        return MatchSet(i=ii, j=jj, confidence=prob[ii, jj], direction=direction)
    raise ValueError(f"unknown proposal mode {mode!r}")


def dual_softmax_proposals(sim: SimilarityMatrix, theta_m: float = DEFAULT_MATCH_THRESHOLD,
                           mode: str = "argmax"):
    """Softmax the similarity matrix along each axis and pick proposals.

    Returns (p0, p1, m0, m1): p0 is the row softmax (each A patch's
    distribution over B), p1 the column softmax; m0/m1 are the per-direction
    proposal sets thresholded at theta_m.
    """
    s = sim.scores
    p0 = softmax(s, axis=1)
    p1 = softmax(s, axis=0)
    m0 = _one_way_matches(p0, theta_m, axis=1, direction=0, mode=mode)
    m1 = _one_way_matches(p1, theta_m, axis=0, direction=1, mode=mode)
    return p0, p1, m0, m1


def estimate_scale(m0: MatchSet, m1: MatchSet) -> ScaleEstimate:
    """Scale ratio of each direction: match count over distinct targets."""

    def ratio(m: MatchSet, target: np.ndarray) -> float:
        if len(m) == 0:
            return 1.0
        return len(m) / len(np.unique(target))

    return ScaleEstimate(s0=ratio(m0, m0.j), s1=ratio(m1, m1.i))


def filter_covisible(matches: MatchSet, cov: CoVisibleMap) -> MatchSet:
    """Keep matches whose endpoints both fall in the co-visible masks."""
    flat_a = cov.mask_a.reshape(-1)
    flat_b = cov.mask_b.reshape(-1)
    if len(matches) == 0:
        return matches.take(np.zeros(0, dtype=bool))
    if matches.i.max() >= flat_a.size or matches.i.min() < 0:
        raise ValueError("A-side match index out of mask range")
    if matches.j.max() >= flat_b.size or matches.j.min() < 0:
        raise ValueError("B-side match index out of mask range")
    return matches.take(flat_a[matches.i] & flat_b[matches.j])


def proposals_from_external(scores, theta: float) -> MatchSet:
    """Proposals from a third-party score matrix: union of row-wise and
    column-wise argmaxes with score >= theta, no mutual-nearest constraint.
    Duplicates are emitted once with their (common) score."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError(f"score matrix must be 2-D, got shape {s.shape}")
    seen = {}
    best_j = np.argmax(s, axis=1)
    for i in range(s.shape[0]):
        if s[i, best_j[i]] >= theta:
            seen[(i, int(best_j[i]))] = s[i, best_j[i]]
    best_i = np.argmax(s, axis=0)
    for j in range(s.shape[1]):
        key = (int(best_i[j]), j)
        val = s[best_i[j], j]
        if val >= theta:
            seen[key] = max(seen.get(key, -np.inf), val)
    if not seen:
        return MatchSet.empty()
    items = sorted(seen.items())
    ii = np.array([k[0] for k, _ in items], dtype=np.int64)
    jj = np.array([k[1] for k, _ in items], dtype=np.int64)
    conf = np.array([v for _, v in items], dtype=np.float32)
    return MatchSet(i=ii, j=jj, confidence=conf, direction=0)
