"""Command-line entry points.

Subcommands:
    gen              synthesize a dataset of scene pairs across scale buckets
    match            run the matching pipeline over a dataset
    refine-external  refine proposals taken from a third-party score matrix
    eval             score match outputs against ground truth
    selftest         run the built-in invariant checks

Every failure path exits with a distinct code and prints one
machine-parsable line on stderr: `geomatch: error code=<NAME> <message>`.
The output directory can be overridden with the GEOMATCH_OUT environment
variable (output dir only; all other settings come from flags/config).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import container
from .assignment import MatchSet, estimate_scale, proposals_from_external
from .covisible import save_mask_pgm
from .geometry import Homography, essential_from_pose, relative_pose
from .labels import GroundTruthLabels, generate_labels
from .losses import LossConfig
from .metrics import (
    InsufficientDataError,
    corner_accuracy,
    epipolar_precision,
    mma,
    pose_auc,
    pose_error_deg,
    pose_from_matches,
    ransac_homography,
)
from .pipeline import (
    CSV_HEADER,
    ModelWeights,
    PipelineConfig,
    compute_losses,
    matches_to_csv,
    parse_matches_csv,
    run_pair,
)
from .plots import svg_line_plot
from .refine import RefineConfig, RefineWeights, refine_matches
from .synthscene import (
    SCALE_BUCKETS,
    PoseOffset,
    bucket_range,
    load_pair,
    make_3d_pair,
    make_planar_pair,
    save_pair,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_FORMAT = 4
EXIT_INSUFFICIENT = 5
EXIT_PAIRFAIL = 6
EXIT_SELFTEST = 7


class CliError(Exception):
    def __init__(self, code: int, name: str, msg: str):
        super().__init__(msg)
        self.code = code
        self.name = name


def _fail(code: int, name: str, msg: str):
    raise CliError(code, name, msg)


@dataclass
class RunConfig:
    """Pipeline + evaluation settings; round-trips losslessly through JSON."""

    dataset: str = ""
    out: str = ""
    weights: str = ""
    seed: int = -1  # -1 means "not set"
    theta_m: float = 0.5
    theta_cov: float = 0.2
    r: float = 0.1
    fine_temperature: float = -1.0  # <= 0 means default (2/sqrt(c))
    window: int = 5
    refine: bool = True
    scale_align_mode: str = "off"
    assignment_mode: str = "argmax"
    ransac_iters: int = 2000
    homography_thresh_px: float = 3.0
    epipolar_thresh: float = 1e-3
    workers: int = 1

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
        except OSError as e:
            _fail(EXIT_IO, "IO", f"cannot read config {path}: {e}")
        except json.JSONDecodeError as e:
            _fail(EXIT_FORMAT, "FORMAT", f"bad config JSON {path}: {e}")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            _fail(EXIT_CONFIG, "CONFIG", f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def pipeline_config(self) -> PipelineConfig:
        cfg = PipelineConfig(
            theta_m=self.theta_m,
            theta_cov=self.theta_cov,
            r=self.r,
            fine_temperature=None if self.fine_temperature <= 0 else self.fine_temperature,
            window=self.window,
            refine_enabled=self.refine,
            scale_align_mode=self.scale_align_mode,
            assignment_mode=self.assignment_mode,
        )
        try:
            cfg.validate()
        except ValueError as e:
            _fail(EXIT_CONFIG, "CONFIG", str(e))
        return cfg


def _atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as f:
        f.write(text)
    os.replace(tmp, path)


def _write_json(path, obj) -> None:
    _atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _ensure_outdir(path: str) -> str:
    if not path:
        _fail(EXIT_CONFIG, "CONFIG", "output directory is required")
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, ".write_probe")
        with open(probe, "w") as f:
            f.write("")
        os.unlink(probe)
    except OSError as e:
        _fail(EXIT_IO, "IO", f"output dir not writable: {e}")
    return path


def _pair_dirs(dataset: str) -> list:
    if not os.path.isdir(dataset):
        _fail(EXIT_IO, "IO", f"dataset dir not found: {dataset}")
    names = sorted(n for n in os.listdir(dataset)
                   if os.path.isfile(os.path.join(dataset, n, "meta.json")))
    return names


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    out = _ensure_outdir(args.out)
    buckets = [b.strip() for b in args.buckets.split(";") if b.strip()]
    for b in buckets:
        if b not in SCALE_BUCKETS:
            _fail(EXIT_CONFIG, "CONFIG", f"unknown bucket {b!r}; expected {SCALE_BUCKETS}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([args.seed, 0x9E4])))
    names = []
    idx = 0
    for bucket in buckets:
        lo, hi = bucket_range(bucket)
        hi_draw = lo + 1.0 if math.isinf(hi) else hi
        for _ in range(args.pairs_per_bucket):
            pair_seed = args.seed * 100003 + idx
            if args.mode == "planar":
                scale = float(rng.uniform(lo, hi_draw))
                rot = float(rng.uniform(-args.rotation_max, args.rotation_max))
                pair = make_planar_pair(pair_seed, scale_ratio=scale, rotation_deg=rot,
                                        noise_sigma=args.noise_sigma,
                                        image_size=args.image_size)
            else:
                yaw = float(rng.uniform(-args.rotation_max, args.rotation_max))
                lat = float(rng.uniform(-args.lateral_max, args.lateral_max))
                pair = make_3d_pair(pair_seed,
                                    pose_offset=PoseOffset(yaw_deg=yaw, translation=(lat, 0.0, 0.0)),
                                    depth_profile=args.depth_profile,
                                    scale_bucket=bucket,
                                    noise_sigma=args.noise_sigma,
                                    image_size=args.image_size)
            name = f"pair_{idx:04d}"
            pdir = os.path.join(out, name)
            save_pair(pair, pdir)
            generate_labels(pair).save(os.path.join(pdir, "labels.json"))
            names.append(name)
            idx += 1
    _write_json(os.path.join(out, "dataset.json"), {
        "pairs": names,
        "seed": args.seed,
        "mode": args.mode,
        "buckets": buckets,
        "pairs_per_bucket": args.pairs_per_bucket,
        "image_size": args.image_size,
        "noise_sigma": args.noise_sigma,
    })
    print(f"generated {len(names)} pairs in {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# match
# ---------------------------------------------------------------------------


def _load_weights(cfg: RunConfig, d: int, c: int) -> ModelWeights:
    if cfg.weights:
        try:
            weights = ModelWeights.load(cfg.weights)
        except OSError as e:
            _fail(EXIT_IO, "IO", f"cannot read weights: {e}")
        except (container.FormatError, KeyError, IndexError) as e:
            _fail(EXIT_FORMAT, "FORMAT", f"bad weights file: {e}")
        if weights.cfi.d != d:
            _fail(EXIT_FORMAT, "FORMAT",
                  f"weights channel dim {weights.cfi.d} != dataset {d}")
        return weights
    if cfg.seed < 0:
        _fail(EXIT_CONFIG, "CONFIG", "need --weights or --seed for initialization")
    return ModelWeights.init(cfg.seed, d=d, c=c)


def _match_one(dataset: str, out: str, name: str, weights: ModelWeights,
               pcfg: PipelineConfig, seed: int) -> dict:
    pair = load_pair(os.path.join(dataset, name))
    labels_path = os.path.join(dataset, name, "labels.json")
    if os.path.exists(labels_path):
        labels = GroundTruthLabels.load(labels_path)
    else:
        labels = generate_labels(pair)
    output = run_pair(pair, weights, pcfg)
    losses = compute_losses(pair, labels, output, LossConfig(), seed=seed, cfg=pcfg)
    pdir = os.path.join(out, name)
    os.makedirs(pdir, exist_ok=True)
    _atomic_write_text(os.path.join(pdir, "matches.csv"),
                       matches_to_csv(output, pair.coarse_stride))
    _write_json(os.path.join(pdir, "losses.json"), losses)
    save_mask_pgm(output.cov.mask_a, os.path.join(pdir, "covA.pgm"))
    save_mask_pgm(output.cov.mask_b, os.path.join(pdir, "covB.pgm"))
    return {
        "pair": name,
        "bucket": pair.meta.get("bucket"),
        "n_coarse": len(output.matches),
        "n_refined": len(output.refined),
        "discarded_border": output.refine_stats.discarded_border,
        "scale": round(output.scale.s, 6),
        "direction": output.scale.index,
        "total_loss": round(losses["total"], 6),
    }


def cmd_match(args) -> int:
    cfg = _config_from_args(args)
    if args.print_config:
        print(cfg.to_json())
        return EXIT_OK
    out = _ensure_outdir(cfg.out)
    names = _pair_dirs(cfg.dataset)
    if not names:
        _write_json(os.path.join(out, "run.json"), {"pairs": [], "errors": []})
        print("empty dataset, nothing to do")
        return EXIT_OK
    first = load_pair(os.path.join(cfg.dataset, names[0]))
    d = first.desc_a_coarse.shape[2]
    c = first.desc_a_fine.shape[2]
    weights = _load_weights(cfg, d, c)
    pcfg = cfg.pipeline_config()

    records, errors = [], []
    if cfg.workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            futs = {name: ex.submit(_match_one, cfg.dataset, out, name, weights,
                                    pcfg, cfg.seed if cfg.seed >= 0 else 0)
                    for name in names}
            for name in names:
                try:
                    records.append(futs[name].result())
                except Exception as e:  # per-pair isolation
                    errors.append({"pair": name, "error": str(e)})
    else:
        for name in names:
            try:
                records.append(_match_one(cfg.dataset, out, name, weights, pcfg,
                                          cfg.seed if cfg.seed >= 0 else 0))
            except Exception as e:
                errors.append({"pair": name, "error": str(e)})

    _write_json(os.path.join(out, "run.json"), {
        "config": json.loads(cfg.to_json()),
        "pairs": records,
        "errors": errors,
    })
    print(f"matched {len(records)}/{len(names)} pairs -> {out}")
    if errors:
        _fail(EXIT_PAIRFAIL, "PAIRFAIL", f"{len(errors)} pair(s) failed; see run.json")
    return EXIT_OK


# ---------------------------------------------------------------------------
# refine-external
# ---------------------------------------------------------------------------


def _single_entry(path) -> np.ndarray:
    try:
        entries = container.read_tensors(path)
    except OSError as e:
        _fail(EXIT_IO, "IO", f"cannot read tensor file: {e}")
    except container.FormatError as e:
        _fail(EXIT_FORMAT, "FORMAT", str(e))
    if len(entries) != 1:
        _fail(EXIT_FORMAT, "FORMAT", f"{path} must contain exactly one tensor")
    return next(iter(entries.values()))


def cmd_refine_external(args) -> int:
    scores = _single_entry(args.scores)
    fine_a = _single_entry(args.fine_a)
    fine_b = _single_entry(args.fine_b)
    if scores.ndim != 2:
        _fail(EXIT_FORMAT, "FORMAT", f"score matrix must be 2-D, got {scores.shape}")
    if fine_a.ndim != 3 or fine_b.ndim != 3:
        _fail(EXIT_FORMAT, "FORMAT", "fine feature grids must be (h, w, c)")
    ga = fine_a.shape[0] * args.fine_stride // args.coarse_stride
    gb = fine_b.shape[0] * args.fine_stride // args.coarse_stride
    if scores.shape != (ga * ga, gb * gb):
        _fail(EXIT_FORMAT, "FORMAT",
              f"score matrix {scores.shape} does not match coarse grids "
              f"({ga * ga}, {gb * gb}) implied by the fine features")

    proposals = proposals_from_external(scores, args.theta)
    # directional subsets for the scale ratio
    best_j = np.argmax(scores, axis=1)
    keep0 = scores[np.arange(scores.shape[0]), best_j] >= args.theta
    m0 = MatchSet(i=np.arange(scores.shape[0])[keep0], j=best_j[keep0],
                  confidence=scores[np.arange(scores.shape[0]), best_j][keep0], direction=0)
    best_i = np.argmax(scores, axis=0)
    keep1 = scores[best_i, np.arange(scores.shape[1])] >= args.theta
    m1 = MatchSet(i=best_i[keep1], j=np.arange(scores.shape[1])[keep1],
                  confidence=scores[best_i, np.arange(scores.shape[1])][keep1], direction=1)
    scale = estimate_scale(m0, m1)

    weights = RefineWeights.init(args.seed) if args.seed is not None else None
    rcfg = RefineConfig(window=args.window, weights=weights,
                        use_attention=weights is not None)
    refined, stats = refine_matches(proposals, fine_a, fine_b, scale, rcfg,
                                    coarse_stride=args.coarse_stride,
                                    fine_stride=args.fine_stride)
    lines = [CSV_HEADER]
    for r in refined:
        lines.append(f"{r.point_a[0]:.4f},{r.point_a[1]:.4f},{r.point_b[0]:.4f},"
                     f"{r.point_b[1]:.4f},{r.confidence:.6f},{r.variance:.6f},refined")
    _atomic_write_text(args.out, "\n".join(lines) + "\n")
    print(f"refined {stats.refined}/{stats.total} proposals "
          f"(scale {scale.s:.3f}, dir {scale.index}) -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _eval_planar(pair, rows, cfg: RunConfig) -> dict:
    rec = {}
    pts_a, pts_b = rows[:, 0:2], rows[:, 2:4]
    try:
        H_est, inliers = ransac_homography(pts_a, pts_b, iters=cfg.ransac_iters,
                                           inlier_thresh_px=cfg.homography_thresh_px,
                                           seed=max(cfg.seed, 0))
        acc = corner_accuracy(H_est, pair.homography, pair.image_size)
        rec["corner_error_px"] = acc["mean_error"]
        rec["corner_pass"] = {str(k): v for k, v in acc["pass"].items()}
        rec["inliers"] = int(inliers.sum())
    except InsufficientDataError as e:
        rec["corner_error_px"] = math.inf
        rec["corner_pass"] = {"1.0": False, "3.0": False, "5.0": False}
        rec["error"] = str(e)
    # matching accuracy is capped at the 1024 most confident matches
    order = np.argsort(-rows[:, 4], kind="stable")[:1024]
    rates = mma(pts_a[order], pts_b[order], pair.warp_ab)
    rec["mma"] = {str(k): v for k, v in rates["rates"].items()}
    return rec


def _eval_3d(pair, pts_a, pts_b, cfg: RunConfig) -> dict:
    rec = {}
    R_gt, t_gt = relative_pose(pair.frame_a, pair.frame_b)
    E_gt = essential_from_pose(R_gt, t_gt)
    K = pair.frame_a.K
    rec["precision_1e-4"] = epipolar_precision(pts_a, pts_b, E_gt, K, K)
    try:
        pose = pose_from_matches(pts_a, pts_b, K, K, iters=cfg.ransac_iters,
                                 thresh=cfg.epipolar_thresh, seed=max(cfg.seed, 0))
        rec["pose_error_deg"] = pose_error_deg(pose.R, pose.t, R_gt, t_gt)
        rec["degenerate"] = bool(pose.degenerate)
        rec["inliers"] = int(pose.inliers.sum())
    except InsufficientDataError as e:
        rec["pose_error_deg"] = math.inf
        rec["degenerate"] = True
        rec["error"] = str(e)
    return rec


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    out = _ensure_outdir(cfg.out)
    names = _pair_dirs(cfg.dataset)
    if not names:
        _fail(EXIT_IO, "IO", f"no pairs found in dataset {cfg.dataset}")
    per_pair = []
    for name in names:
        mpath = os.path.join(args.matches, name, "matches.csv")
        if not os.path.exists(mpath):
            _fail(EXIT_IO, "IO", f"missing matches for pair {name}: {mpath}")
        pair = load_pair(os.path.join(cfg.dataset, name))
        with open(mpath, encoding="utf-8") as f:
            try:
                parsed = parse_matches_csv(f.read())
            except ValueError as e:
                _fail(EXIT_FORMAT, "FORMAT", f"{mpath}: {e}")
        if parsed["refined"].size:
            rows = parsed["refined"]
        else:
            # pad coarse rows with a zero variance column for uniform shape
            rows = np.concatenate([parsed["coarse"],
                                   np.zeros((parsed["coarse"].shape[0], 1))], axis=1)
        rec = {"pair": name, "bucket": pair.meta.get("bucket"),
               "mode": pair.mode, "n_matches": int(rows.shape[0])}
        if pair.mode == "planar":
            rec.update(_eval_planar(pair, rows, cfg))
        else:
            rec.update(_eval_3d(pair, rows[:, 0:2], rows[:, 2:4], cfg))
        per_pair.append(rec)

    buckets = {}
    for rec in per_pair:
        buckets.setdefault(rec["bucket"], []).append(rec)
    aggregates = {}
    for bucket, recs in sorted(buckets.items()):
        agg = {"n_pairs": len(recs)}
        if recs[0]["mode"] == "planar":
            errs = [r["corner_error_px"] for r in recs]
            agg["corner_error_median_px"] = float(np.median(errs))
            for t in ("1.0", "3.0", "5.0"):
                agg[f"accuracy@{t}px"] = float(np.mean([r["corner_pass"][t] for r in recs]))
            for t in ("1.0", "2.0", "3.0"):
                agg[f"mma@{t}px"] = float(np.mean([r["mma"][t] for r in recs]))
        else:
            errs = [r["pose_error_deg"] for r in recs]
            for t, v in pose_auc(errs, (5.0, 10.0, 20.0)).items():
                agg[f"auc@{int(t)}deg"] = v
            agg["precision_1e-4"] = float(np.mean([r["precision_1e-4"] for r in recs]))
        aggregates[bucket] = agg

    report = {"config": json.loads(cfg.to_json()), "buckets": aggregates,
              "pairs": per_pair}
    _write_json(os.path.join(out, "report.json"), report)

    # flat CSV
    keys = ["pair", "bucket", "mode", "n_matches"]
    extra = sorted({k for r in per_pair for k in r
                    if k not in keys and not isinstance(r[k], dict)})
    lines = [",".join(keys + extra)]
    for r in per_pair:
        row = [str(r.get(k, "")) for k in keys + extra]
        lines.append(",".join(row))
    _atomic_write_text(os.path.join(out, "report.csv"), "\n".join(lines) + "\n")

    _write_curves(out, per_pair)
    print(f"evaluated {len(per_pair)} pairs -> {out}")
    return EXIT_OK


def _write_curves(out: str, per_pair: list) -> None:
    """Cumulative error curves per bucket (pose error or corner error)."""
    series = []
    is_planar = per_pair and per_pair[0]["mode"] == "planar"
    key = "corner_error_px" if is_planar else "pose_error_deg"
    xmax = 5.0 if is_planar else 20.0
    buckets = {}
    for r in per_pair:
        buckets.setdefault(r["bucket"], []).append(min(r.get(key, math.inf), 1e9))
    for bucket, errs in sorted(buckets.items()):
        e = np.sort(errs)
        xs = [0.0]
        ys = [0.0]
        for k, v in enumerate(e):
            if v > xmax:
                break
            xs += [float(v), float(v)]
            ys += [k / len(e), (k + 1) / len(e)]
        xs.append(xmax)
        ys.append(ys[-1])
        series.append((bucket, xs, ys))
    svg_line_plot(series, os.path.join(out, "cumulative_error.svg"),
                  title="Cumulative error by scale bucket",
                  xlabel="corner error (px)" if is_planar else "pose error (deg)",
                  ylabel="fraction of pairs", x_range=(0, xmax), y_range=(0, 1))


# ---------------------------------------------------------------------------
# selftest
# ---------------------------------------------------------------------------


def cmd_selftest(_args) -> int:
    from . import selftest

    ok = selftest.run(print)
    if not ok:
        _fail(EXIT_SELFTEST, "SELFTEST", "one or more selftest checks failed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------


def _config_from_args(args) -> RunConfig:
    if getattr(args, "config", None):
        cfg = RunConfig.from_file(args.config)
    else:
        cfg = RunConfig()
    for f in fields(RunConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            setattr(cfg, f.name, val)
    env_out = os.environ.get("GEOMATCH_OUT")
    if env_out:
        cfg.out = env_out
    return cfg


def _add_config_flags(p: argparse.ArgumentParser, need_dataset: bool = True) -> None:
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--print-config", action="store_true",
                   help="print the effective config and exit")
    if need_dataset:
        p.add_argument("--dataset", help="dataset directory")
    p.add_argument("--out", help="output directory (env GEOMATCH_OUT overrides)")
    p.add_argument("--seed", type=int, help="seed for init/RANSAC")
    p.add_argument("--weights", help="weights container file")
    p.add_argument("--theta-m", dest="theta_m", type=float, help="match confidence gate")
    p.add_argument("--theta-cov", dest="theta_cov", type=float, help="co-visibility threshold")
    p.add_argument("--r", type=float, help="similarity temperature")
    p.add_argument("--fine-temperature", dest="fine_temperature", type=float)
    p.add_argument("--window", type=int, help="refinement window size")
    p.add_argument("--no-refine", dest="refine", action="store_false", default=None)
    p.add_argument("--scale-align-mode", dest="scale_align_mode",
                   choices=("off", "linear", "eq5"))
    p.add_argument("--assignment-mode", dest="assignment_mode", choices=("argmax", "all"))
    p.add_argument("--ransac-iters", dest="ransac_iters", type=int)
    p.add_argument("--homography-thresh-px", dest="homography_thresh_px", type=float)
    p.add_argument("--epipolar-thresh", dest="epipolar_thresh", type=float)
    p.add_argument("--workers", type=int, help="parallel pair workers")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="geomatch", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--pairs-per-bucket", type=int, default=1)
    g.add_argument("--buckets", default=";".join(SCALE_BUCKETS),
                   help="semicolon-separated bucket names")
    g.add_argument("--mode", choices=("planar", "3d"), default="planar")
    g.add_argument("--noise-sigma", type=float, default=0.0)
    g.add_argument("--image-size", type=int, default=64)
    g.add_argument("--rotation-max", type=float, default=0.0,
                   help="max |rotation| in degrees (planar) / |yaw| (3d)")
    g.add_argument("--lateral-max", type=float, default=0.0,
                   help="max |lateral camera offset| in scene units (3d)")
    g.add_argument("--depth-profile", choices=("plane", "steps"), default="steps")
    g.set_defaults(func=cmd_gen)

    m = sub.add_parser("match", help="run the matching pipeline")
    _add_config_flags(m)
    m.set_defaults(func=cmd_match)

    r = sub.add_parser("refine-external", help="refine third-party proposals")
    r.add_argument("--scores", required=True, help="score matrix container")
    r.add_argument("--fine-a", required=True, help="fine features of view A")
    r.add_argument("--fine-b", required=True, help="fine features of view B")
    r.add_argument("--theta", type=float, default=0.2, help="score threshold")
    r.add_argument("--out", required=True, help="output CSV")
    r.add_argument("--window", type=int, default=5)
    r.add_argument("--coarse-stride", type=int, default=8)
    r.add_argument("--fine-stride", type=int, default=2)
    r.add_argument("--seed", type=int, default=None,
                   help="enable the attention layer with seeded weights")
    r.set_defaults(func=cmd_refine_external)

    e = sub.add_parser("eval", help="evaluate match outputs")
    e.add_argument("--matches", required=True, help="match output directory")
    _add_config_flags(e)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("selftest", help="run built-in invariant checks")
    s.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"geomatch: error code={e.name} {e}", file=sys.stderr)
        return e.code
    except FileNotFoundError as e:
        print(f"geomatch: error code=IO {e}", file=sys.stderr)
        return EXIT_IO
    except container.FormatError as e:
        print(f"geomatch: error code=FORMAT {e}", file=sys.stderr)
        return EXIT_FORMAT
    except InsufficientDataError as e:
        print(f"geomatch: error code=INSUFFICIENT {e}", file=sys.stderr)
        return EXIT_INSUFFICIENT


if __name__ == "__main__":
    sys.exit(main())
