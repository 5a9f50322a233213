"""Forward evaluation of the supervision terms.

Focal losses for the co-visibility maps and the matching probability
matrix, a variance-weighted euclidean loss for the refined positions, and
their weighted total. No training happens here; a finite-difference probe
stands in for gradient checks when testing monotonicity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_LOG_EPS = 1e-12
_VAR_EPS = 1e-6


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.25
    gamma: float = 2.0
    w_cov: float = 0.5
    w_match: float = 1.0
    w_refine: float = 1.0
    sample_fraction: float = 0.3
    sample_cap: int = 2500

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if min(self.w_cov, self.w_match, self.w_refine) < 0:
            raise ValueError("loss weights must be >= 0")


def focal_loss(pred, target, cfg: LossConfig = LossConfig()) -> float:
    """Mean focal loss over all elements.

    p_t is pred on positives and 1-pred on negatives; each element
    contributes -alpha * (1 - p_t)^gamma * log(p_t), with the log clamped
    for numerical safety. Zero iff every prediction is exact.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=bool)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    if np.any(pred < 0) or np.any(pred > 1):
        raise ValueError("predictions must lie in [0, 1]")
    p_t = np.where(target, pred, 1.0 - pred)
    loss = -cfg.alpha * (1.0 - p_t) ** cfg.gamma * np.log(np.maximum(p_t, _LOG_EPS))
    return float(np.mean(loss))


def refine_loss(refined, targets, direction: int = 0) -> tuple:
    """Variance-weighted mean euclidean error of refined target positions.

    Args:
        refined: sequence of RefinedMatch (target position + variance).
        targets: FineTargets aligned with `refined`.
        direction: proposal direction; the refined endpoint is point_b for
            direction 0 and point_a for direction 1.

    Returns:
        (loss, empty_flag): loss is the mean of ||err|| / sigma^2 over
        valid targets; empty_flag is True (and the loss 0) when no target
        is valid.
    """
    pts = np.asarray(targets.points, dtype=np.float64).reshape(-1, 2)
    valid = np.asarray(targets.valid, dtype=bool).reshape(-1)
    if len(refined) != pts.shape[0]:
        raise ValueError(f"{len(refined)} matches vs {pts.shape[0]} targets")
    total = 0.0
    n = 0
    for k, m in enumerate(refined):
        if not valid[k]:
            continue
        pred = m.point_b if direction == 0 else m.point_a
        err = math.hypot(pred[0] - pts[k, 0], pred[1] - pts[k, 1])
        total += err / max(m.variance, _VAR_EPS)
        n += 1
    if n == 0:
        return 0.0, True
    return total / n, False


def total_loss(cov_loss: float, match_loss: float, refine_loss_value: float,
               cfg: LossConfig = LossConfig()) -> float:
    """Weighted sum of the three supervision terms."""
    for name, v in (("cov", cov_loss), ("match", match_loss), ("refine", refine_loss_value)):
        if v < 0:
            raise ValueError(f"{name} loss must be >= 0, got {v}")
    return cfg.w_cov * cov_loss + cfg.w_match * match_loss + cfg.w_refine * refine_loss_value


def sample_for_supervision(n: int, cfg: LossConfig, seed: int) -> np.ndarray:
    """Deterministic indices of the supervision subsample.

    Picks min(ceil(fraction * n), cap) proposals without replacement,
    sorted for stable downstream iteration.
    """
    if n <= 0:
        return np.zeros(0, dtype=np.int64)
    count = min(math.ceil(cfg.sample_fraction * n), cfg.sample_cap, n)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x5A])))
    return np.sort(rng.choice(n, size=count, replace=False)).astype(np.int64)


def finite_difference_probe(f, x, index, eps: float = 1e-4) -> float:
    """Central-difference sensitivity of scalar f to one element of x."""
    x = np.asarray(x, dtype=np.float64)
    hi = x.copy()
    lo = x.copy()
    hi[index] += eps
    lo[index] -= eps
    return (f(hi) - f(lo)) / (2 * eps)
