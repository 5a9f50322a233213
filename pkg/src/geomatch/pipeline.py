"""Per-pair orchestration: interaction -> co-visibility -> assignment ->
filtering -> refinement, plus forward loss evaluation against labels."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import container
from .assignment import (
    MatchSet,
    ScaleEstimate,
    dual_softmax_proposals,
    estimate_scale,
    filter_covisible,
    similarity,
)
from .cfi import ATTENTION_KINDS, CfiWeights, cfi_forward
from .covisible import CoVisibleMap, CovisibleWeights, covisible_head
from .labels import GroundTruthLabels, gt_matches_fine
from .losses import LossConfig, focal_loss, refine_loss, sample_for_supervision, total_loss
from .refine import RefineConfig, RefineStats, RefineWeights, refine_matches
from .synthscene import ScenePair


@dataclass
class ModelWeights:
    """All learned-free parameters of the pipeline in one bundle."""

    cfi: CfiWeights
    covis: CovisibleWeights
    refine: RefineWeights

    @classmethod
    def init(cls, seed: int, d: int = 256, c: int = 128,
             kind: str = "softmax") -> "ModelWeights":
        return cls(
            cfi=CfiWeights.init(seed, d=d, kind=kind),
            covis=CovisibleWeights.init(seed, d=d),
            refine=RefineWeights.init(seed, c=c, kind=kind),
        )

    def save(self, path) -> None:
        entries = {"attention_kind": np.array([float(ATTENTION_KINDS.index(self.cfi.kind))])}
        for k, v in self.cfi.params.items():
            entries[f"cfi.{k}"] = v
        entries.update(self.covis.to_entries("covis"))
        entries.update(self.refine.to_entries("refine"))
        container.write_tensors(path, entries)

    @classmethod
    def load(cls, path) -> "ModelWeights":
        entries = container.read_tensors(path)
        kind = ATTENTION_KINDS[int(entries.pop("attention_kind")[0])]
        cfi_params = {k[4:]: v for k, v in entries.items() if k.startswith("cfi.")}
        return cls(
            cfi=CfiWeights(params=cfi_params, kind=kind),
            covis=CovisibleWeights.from_entries(entries, "covis"),
            refine=RefineWeights.from_entries(entries, "refine", kind=kind),
        )


@dataclass
class PipelineConfig:
    theta_m: float = 0.5  # one-way softmax confidence gate
    theta_cov: float = 0.2  # co-visibility mask threshold
    r: float = 0.1  # similarity temperature
    fine_temperature: float | None = None
    window: int = 5
    refine_enabled: bool = True
    scale_align_mode: str = "off"  # "off" | "linear" | "eq5" target-window zoom
    assignment_mode: str = "argmax"  # or "all": keep every above-threshold entry
    match_loss_directions: str = "selected"  # or "both"

    def validate(self) -> None:
        if not 0 <= self.theta_m <= 1:
            raise ValueError(f"theta_m must be in [0, 1], got {self.theta_m}")
        if not 0 <= self.theta_cov <= 1:
            raise ValueError(f"theta_cov must be in [0, 1], got {self.theta_cov}")
        if self.r <= 0:
            raise ValueError(f"similarity temperature must be positive, got {self.r}")
        if self.assignment_mode not in ("argmax", "all"):
            raise ValueError(f"unknown assignment mode {self.assignment_mode!r}")
        if self.scale_align_mode not in ("off", "linear", "eq5"):
            raise ValueError(f"unknown scale_align_mode {self.scale_align_mode!r}")
        if self.match_loss_directions not in ("selected", "both"):
            raise ValueError(f"unknown match loss mode {self.match_loss_directions!r}")


@dataclass
class PairOutput:
    matches: MatchSet  # co-visibility filtered, selected direction
    refined: list
    scale: ScaleEstimate
    cov: CoVisibleMap
    prob0: np.ndarray
    prob1: np.ndarray
    refine_stats: RefineStats
    proposals0: MatchSet = field(repr=False, default=None)
    proposals1: MatchSet = field(repr=False, default=None)


def run_pair(pair: ScenePair, weights: ModelWeights,
             cfg: PipelineConfig = PipelineConfig()) -> PairOutput:
    """Run the full matching pipeline on one scene pair."""
    cfg.validate()
    out = cfi_forward(pair.desc_a_coarse, pair.desc_b_coarse, weights.cfi)

    prob_a = covisible_head(out.feat_a2, out.query_a, weights.covis)
    prob_b = covisible_head(out.feat_b2, out.query_b, weights.covis)
    cov = CoVisibleMap.from_probs(prob_a, prob_b, cfg.theta_cov)

    sim = similarity(out.feat_a3, out.feat_b3, cfg.r)
    p0, p1, m0, m1 = dual_softmax_proposals(sim, cfg.theta_m, mode=cfg.assignment_mode)
    scale = estimate_scale(m0, m1)
    selected = m0 if scale.index == 0 else m1
    filtered = filter_covisible(selected, cov)

    refined = []
    stats = RefineStats(total=len(filtered))
    if cfg.refine_enabled:
        rcfg = RefineConfig(window=cfg.window, temperature=cfg.fine_temperature,
                            weights=weights.refine, use_attention=True,
                            scale_align_mode=cfg.scale_align_mode)
        refined, stats = refine_matches(
            filtered, pair.desc_a_fine, pair.desc_b_fine, scale, rcfg,
            coarse_stride=pair.coarse_stride, fine_stride=pair.fine_stride)

    return PairOutput(matches=filtered, refined=refined, scale=scale, cov=cov,
                      prob0=p0, prob1=p1, refine_stats=stats,
                      proposals0=m0, proposals1=m1)


def compute_losses(pair: ScenePair, labels: GroundTruthLabels, output: PairOutput,
                   loss_cfg: LossConfig = LossConfig(), seed: int = 0,
                   cfg: PipelineConfig = PipelineConfig()) -> dict:
    """Forward loss report for one pair: co-visibility, matching, refinement."""
    cov_loss = (focal_loss(output.cov.prob_a, labels.cov_a, loss_cfg)
                + focal_loss(output.cov.prob_b, labels.cov_b, loss_cfg))

    if cfg.match_loss_directions == "both":
        match_loss = (focal_loss(output.prob0, labels.positives_dir0, loss_cfg)
                      + focal_loss(output.prob1, labels.positives_dir1, loss_cfg))
    else:
        if output.scale.index == 0:
            match_loss = focal_loss(output.prob0, labels.positives_dir0, loss_cfg)
        else:
            match_loss = focal_loss(output.prob1, labels.positives_dir1, loss_cfg)

    r_loss, empty = 0.0, True
    n_sampled = 0
    if output.refined:
        targets = gt_matches_fine(labels, output.matches, pair)
        kept = output.refine_stats.kept_indices
        sampled = sample_for_supervision(len(output.refined), loss_cfg, seed)
        n_sampled = len(sampled)
        sub_refined = [output.refined[k] for k in sampled]
        sub_targets = type(targets)(points=targets.points[kept][sampled],
                                    valid=targets.valid[kept][sampled])
        r_loss, empty = refine_loss(sub_refined, sub_targets,
                                    direction=output.matches.direction)

    total = total_loss(cov_loss, match_loss, r_loss, loss_cfg)
    return {
        "cov": cov_loss,
        "match": match_loss,
        "refine": r_loss,
        "refine_empty": bool(empty),
        "refine_sampled": n_sampled,
        "total": total,
    }


CSV_HEADER = "xA,yA,xB,yB,confidence,variance,stage"


def matches_to_csv(output: PairOutput, coarse_stride: int = 8) -> str:
    """Serialize coarse + refined matches of one pair.

    Coordinates are original-image pixels (patch centers for the coarse
    stage); refined rows add the heatmap variance.
    """
    half = coarse_stride // 2
    lines = [CSV_HEADER]
    m = output.matches
    # grid width from indices is ambiguous for non-square setups; patch
    # centers below assume the square grids this package generates
    g = int(round(np.sqrt(output.prob0.shape[0])))
    for k in range(len(m)):
        ay, ax = divmod(int(m.i[k]), g)
        by, bx = divmod(int(m.j[k]), g)
        lines.append(f"{ax * coarse_stride + half:.4f},{ay * coarse_stride + half:.4f},"
                     f"{bx * coarse_stride + half:.4f},{by * coarse_stride + half:.4f},"
                     f"{m.confidence[k]:.6f},,coarse")
    for r in output.refined:
        lines.append(f"{r.point_a[0]:.4f},{r.point_a[1]:.4f},{r.point_b[0]:.4f},"
                     f"{r.point_b[1]:.4f},{r.confidence:.6f},{r.variance:.6f},refined")
    return "\n".join(lines) + "\n"


def parse_matches_csv(text: str) -> dict:
    """Read a matches CSV back into arrays per stage."""
    lines = [ln for ln in text.strip().splitlines() if ln]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("bad matches CSV header")
    coarse, refined = [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 7:
            raise ValueError(f"bad matches CSV row: {ln!r}")
        row = [float(parts[0]), float(parts[1]), float(parts[2]), float(parts[3]),
               float(parts[4])]
        if parts[6] == "refined":
            refined.append(row + [float(parts[5])])
        else:
            coarse.append(row)
    return {
        "coarse": np.asarray(coarse, dtype=np.float64).reshape(-1, 5),
        "refined": np.asarray(refined, dtype=np.float64).reshape(-1, 6),
    }
