"""Command-line pipeline: simulate -> aggregate -> evaluate -> bench.

Exit codes: 0 success, 2 configuration error (bad flags or parameter
ranges), 3 I/O error (missing or unwritable files), 4 validation error
(malformed tensors, inconsistent manifests, dimension mismatches).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import aggregator as agg
from .backend import active_backend
from .evaluation import (
    EvalReport,
    PRCurve,
    RankingReport,
    confusion,
    frame_error_rank,
    frame_error_rate,
    frame_uncertainty_rank,
    frame_uncertainty_score,
    kendall_tau,
    pr_sparsification,
    ranking_iou,
    seg_metrics,
)
from .manifest import (
    FrameRecord,
    Manifest,
    RunConfig,
    build_model,
    load_manifest,
)
from .synthworld import NoiseSpec, SceneSpec, iter_frames
from .tensorfile import TensorFileError, read_tensor, write_tensor
from .tensors import LabelMap, ProbMap, ScalarMap, argmax_labels
from .uncertainty import (
    ALL_KINDS,
    UncertaintyKind,
    negativity_diagnostics,
    uncertainty_from_state,
)
from .warp import BorderMode, WarpConfig, WarpMode, warm_kernels

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_VALIDATION = 4


class ConfigError(Exception):
    """Bad flag values or inconsistent run configuration."""


def pred_filename(t: int) -> str:
    return f"pred_{t:04d}.fct"


def unc_filename(kind: UncertaintyKind, t: int) -> str:
    return f"unc_{UncertaintyKind(kind).value}_{t:04d}.fct"


def _parse_kinds(raw: list[str]) -> tuple[UncertaintyKind, ...]:
    if not raw or "all" in raw:
        return ALL_KINDS
    try:
        return tuple(dict.fromkeys(UncertaintyKind(k) for k in raw))
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _run_config(args) -> RunConfig:
    try:
        policy = agg.AggregationPolicy(
            kind=(
                agg.PolicyKind.RTA_STEP
                if args.mode == "rta"
                else agg.PolicyKind.CUMULATIVE
                if getattr(args, "cumulative", False)
                else agg.PolicyKind.TA_FIXED
            ),
            alpha=args.alpha,
            alpha_acc=args.alpha_acc,
            alpha_err=args.alpha_err,
            error_threshold=args.lam,
        )
        return RunConfig(
            policy=policy,
            kinds=_parse_kinds(getattr(args, "uncertainty", [])),
            warp=WarpConfig(mode=WarpMode(args.warp_mode), border=BorderMode(args.border)),
            mc_samples=args.mc_samples,
            seed=args.seed,
            sample_schedule=args.sample_schedule,
        )
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=("mc", "ta", "rta"), default="ta")
    p.add_argument("--alpha", type=float, default=0.2,
                   help="fixed EMA weight of the newest output (ta mode)")
    p.add_argument("--alpha-acc", type=float, default=0.2, dest="alpha_acc",
                   help="weight where the warp reconstruction looks good (rta)")
    p.add_argument("--alpha-err", type=float, default=0.7, dest="alpha_err",
                   help="weight where the warp reconstruction looks wrong (rta)")
    p.add_argument("--lambda", type=float, default=10.0, dest="lam",
                   help="reconstruction-error threshold separating the two weights")
    p.add_argument("--mc-samples", type=int, default=20, dest="mc_samples")
    p.add_argument("--uncertainty", action="append", default=[],
                   choices=[k.value for k in ALL_KINDS] + ["all"],
                   help="uncertainty maps to emit (repeatable; default all)")
    p.add_argument("--seed", type=int, default=None,
                   help="override the manifest's noise seed")
    p.add_argument("--cumulative", action="store_true",
                   help="use the 1/t weight schedule instead of a fixed alpha")
    p.add_argument("--sample-schedule", choices=("per-frame", "stream-index"),
                   default="per-frame", dest="sample_schedule",
                   help="stream-index replays one frame's sample sequence across "
                        "the stream (verification schedule for static scenes)")
    p.add_argument("--warp-mode", choices=[m.value for m in WarpMode],
                   default=WarpMode.BACKWARD_BILINEAR.value, dest="warp_mode")
    p.add_argument("--border", choices=[b.value for b in BorderMode],
                   default=BorderMode.CLAMP.value)


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# --- simulate ---------------------------------------------------------


def cmd_simulate(args) -> int:
    try:
        doc = json.loads(Path(args.scene).read_text())
        scene = SceneSpec.from_dict(doc["scene"])
        noise = NoiseSpec.from_dict(doc.get("noise", {}))
        delay = float(doc.get("sample_delay_s", 0.0))
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad scene config: {e}") from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    frames = []
    for bundle in iter_frames(scene):
        t = bundle.frame_index
        rec = {
            "image": f"image_{t:04d}.fct",
            "labels": f"labels_{t:04d}.fct",
            "logits": f"logits_{t:04d}.fct",
        }
        write_tensor(
            bundle.image.data[:, :, 0].astype(np.uint8), out / rec["image"]
        )
        write_tensor(bundle.labels.data, out / rec["labels"])
        write_tensor(bundle.clean_logits.astype(np.float32), out / rec["logits"])
        if bundle.flow_to_next is not None:
            rec["flow_to_next"] = f"flow_{t:04d}.fct"
            write_tensor(
                bundle.flow_to_next.data.astype(np.float32), out / rec["flow_to_next"]
            )
        frames.append(FrameRecord(**rec))

    manifest = Manifest(
        video_id=args.video_id or Path(args.scene).stem,
        class_count=scene.classes,
        frames=tuple(frames),
        noise=noise,
        sample_delay_s=delay,
        base_dir=out,
    )
    manifest_path = out / "manifest.json"
    manifest.save(manifest_path)
    _write_json(out / "scene.json", {"scene": scene.to_dict(), "noise": noise.to_dict()})
    print(manifest_path)
    return EXIT_OK


# --- aggregate --------------------------------------------------------


class _TimedModel:
    """Forwards to a model while accumulating time spent sampling."""

    def __init__(self, base):
        self.base = base
        self.seconds = 0.0

    def sample(self, frame: int, sample_index: int) -> ProbMap:
        t0 = time.perf_counter()
        out = self.base.sample(frame, sample_index)
        self.seconds += time.perf_counter() - t0
        return out

    def take(self) -> float:
        s, self.seconds = self.seconds, 0.0
        return s


def _write_frame_outputs(out: Path, t: int, state, kinds) -> None:
    write_tensor(state.prediction.data.astype(np.float32), out / pred_filename(t))
    for kind in kinds:
        unc = uncertainty_from_state(state, kind)
        write_tensor(unc.data.astype(np.float32), out / unc_filename(kind, t))


def run_aggregate(manifest: Manifest, cfg: RunConfig, mode: str, out: Path) -> dict:
    """Drive one aggregation pass over a manifest; returns the timing log."""
    base = build_model(manifest, seed_override=cfg.seed)
    if cfg.sample_schedule == "stream-index" and mode != "mc":
        base = agg.SampleSequenceModel(base, anchor_frame=0)
    model = _TimedModel(base)
    n_frames = len(manifest.frames)
    if mode in ("ta", "rta"):
        manifest.require(mode, flows=True, images=(mode == "rta"))
    out.mkdir(parents=True, exist_ok=True)

    records = []
    state = None
    prev_image = None
    for t in range(n_frames):
        t0 = time.perf_counter()
        if mode == "mc":
            state = agg.mc_predict(model, t, cfg.mc_samples)
        else:
            o_t = model.sample(t, 0)
            if state is None:
                state = agg.init_state(o_t)
            else:
                flow = manifest.load_flow(t - 1)
                if mode == "rta":
                    image = manifest.load_image(t)
                    state = agg.rta_step(
                        state, o_t, flow, image, prev_image, cfg.policy, cfg.warp
                    )
                    prev_image = image
                else:
                    alpha = (
                        1.0 / (state.frame_index + 1)
                        if cfg.policy.kind is agg.PolicyKind.CUMULATIVE
                        else cfg.policy.alpha
                    )
                    state = agg.ta_step(state, o_t, flow, alpha, cfg.warp)
            if mode == "rta" and prev_image is None:
                prev_image = manifest.load_image(t)
        sample_s = model.take()
        total_s = time.perf_counter() - t0
        _write_frame_outputs(out, t, state, cfg.kinds)
        records.append(
            {
                "frame": t,
                "sample_s": round(sample_s, 9),
                "aggregate_s": round(max(total_s - sample_s, 0.0), 9),
            }
        )

    timing = {
        "nondeterministic": True,
        "mode": mode,
        "backend": active_backend(),
        "frames": records,
        "total_sample_s": round(sum(r["sample_s"] for r in records), 9),
        "total_aggregate_s": round(sum(r["aggregate_s"] for r in records), 9),
    }
    diag = negativity_diagnostics(state)
    _write_json(out / "timing.json", timing)
    _write_json(
        out / "run_config.json",
        {"mode": mode, "config": cfg.to_json_dict(), "diagnostics": diag},
    )
    return timing


def cmd_aggregate(args) -> int:
    cfg = _run_config(args)
    manifest = load_manifest(args.manifest)
    run_aggregate(manifest, cfg, args.mode, Path(args.out))
    return EXIT_OK


# --- evaluate ---------------------------------------------------------


def run_evaluate(
    manifest: Manifest, pred_dir: Path, cfg: RunConfig, mode_label: str = ""
) -> EvalReport:
    labeled = manifest.labeled_frames()
    if not labeled:
        raise ValueError("manifest has no labeled frames to evaluate")

    preds: list[LabelMap] = []
    gts: list[LabelMap] = []
    for t in labeled:
        prob = ProbMap(read_tensor(pred_dir / pred_filename(t)).astype(np.float64))
        gt = manifest.load_labels(t)
        if (prob.height, prob.width) != (gt.height, gt.width):
            raise ValueError(f"frame {t}: prediction and labels disagree on size")
        pred = argmax_labels(prob)
        if pred.num_classes != gt.num_classes:
            pred = LabelMap(pred.data, num_classes=gt.num_classes, void_label=gt.void_label)
        preds.append(pred)
        gts.append(gt)

    total_cm = confusion(preds[0], gts[0])
    for p, g in zip(preds[1:], gts[1:]):
        total_cm = total_cm + confusion(p, g)
    seg = seg_metrics(total_cm)

    error_rates = [frame_error_rate(p, g) for p, g in zip(preds, gts)]
    gt_rank = frame_error_rank(preds, gts)
    constant_error = len(set(error_rates)) == 1 and len(error_rates) > 1

    pr_curves: dict[str, PRCurve] = {}
    rankings: dict[str, RankingReport] = {}
    for kind in cfg.kinds:
        try:
            uncs = [
                ScalarMap(
                    read_tensor(pred_dir / unc_filename(kind, t)).astype(np.float64)
                )
                for t in labeled
            ]
        except FileNotFoundError:
            continue
        pr_curves[kind.value] = pr_sparsification(
            preds, gts, uncs, cfg.recall_points, pooling=cfg.pr_pooling
        )
        scores = [frame_uncertainty_score(u, cfg.frame_reduction) for u in uncs]
        if constant_error:
            rankings[kind.value] = RankingReport(
                kendall_tau=None,
                ranking_iou={},
                kendall_reason="constant frame error rate: ranking undefined",
            )
        elif len(set(scores)) == 1 and len(scores) > 1:
            rankings[kind.value] = RankingReport(
                kendall_tau=None,
                ranking_iou={},
                kendall_reason="constant frame uncertainty: ranking undefined",
            )
        else:
            unc_rank = frame_uncertainty_rank(uncs, cfg.frame_reduction)
            rankings[kind.value] = RankingReport(
                kendall_tau=kendall_tau(gt_rank, unc_rank),
                ranking_iou={
                    pct: ranking_iou(gt_rank, unc_rank, pct)
                    for pct in cfg.retrieval_percentages
                },
            )

    return EvalReport(
        seg=seg,
        pr_curves=pr_curves,
        rankings=rankings,
        metadata={
            "video_id": manifest.video_id,
            "mode": mode_label,
            "labeled_frames": len(labeled),
            "pr_pooling": cfg.pr_pooling,
            "frame_reduction": cfg.frame_reduction,
        },
    )


def cmd_evaluate(args) -> int:
    cfg = _run_config(args)
    overrides: dict = {
        "pr_pooling": args.pooling,
        "frame_reduction": args.frame_reduction,
    }
    if args.recall_points:
        overrides["recall_points"] = tuple(args.recall_points)
    if args.percentages:
        overrides["retrieval_percentages"] = tuple(args.percentages)
    try:
        cfg = dataclasses.replace(cfg, **overrides)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    manifest = load_manifest(args.manifest)
    report = run_evaluate(manifest, Path(args.pred), cfg, mode_label=args.mode)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_json(out, report.to_json_dict())
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("section", "kind", "key", "value"))
            writer.writerows(report.to_csv_rows())
    print(out)
    return EXIT_OK


# --- bench ------------------------------------------------------------


def run_bench(
    manifest: Manifest, cfg: RunConfig, mode: str, n_mc: int, delay_s: float | None
) -> dict:
    """Time brute-force MC against streaming aggregation on the same video.

    The first frame of each lane is treated as warm-up and excluded from
    the averages (JIT compilation, file cache).
    """
    if n_mc < 1:
        raise ConfigError("--mc-samples must be >= 1 for bench")
    warm_kernels()
    model = build_model(manifest, seed_override=cfg.seed, delay_override=delay_s)
    n_frames = len(manifest.frames)
    if mode == "rta":
        manifest.require(mode, flows=True, images=True)
    else:
        manifest.require(mode, flows=True)

    mc_times = []
    for t in range(n_frames):
        t0 = time.perf_counter()
        agg.mc_predict(model, t, n_mc)
        mc_times.append(time.perf_counter() - t0)

    stream_times = []
    state = None
    prev_image = None
    for t in range(n_frames):
        t0 = time.perf_counter()
        o_t = model.sample(t, 0)
        if state is None:
            state = agg.init_state(o_t)
            if mode == "rta":
                prev_image = manifest.load_image(t)
        else:
            flow = manifest.load_flow(t - 1)
            if mode == "rta":
                image = manifest.load_image(t)
                state = agg.rta_step(
                    state, o_t, flow, image, prev_image, cfg.policy, cfg.warp
                )
                prev_image = image
            else:
                state = agg.ta_step(state, o_t, flow, cfg.policy.alpha, cfg.warp)
        stream_times.append(time.perf_counter() - t0)

    mc_core = mc_times[1:] or mc_times
    stream_core = stream_times[1:] or stream_times
    mc_per_frame = sum(mc_core) / len(mc_core)
    stream_per_frame = sum(stream_core) / len(stream_core)
    return {
        "nondeterministic": True,
        "backend": active_backend(),
        "mode": mode,
        "mc_samples": n_mc,
        "sample_delay_s": delay_s if delay_s is not None else manifest.sample_delay_s,
        "frames_timed": len(mc_core),
        "mc_per_frame_s": mc_per_frame,
        "stream_per_frame_s": stream_per_frame,
        "speedup_ratio": mc_per_frame / stream_per_frame,
        "mc_frame_times_s": mc_times,
        "stream_frame_times_s": stream_times,
    }


def cmd_bench(args) -> int:
    cfg = _run_config(args)
    if args.mode == "mc":
        raise ConfigError("bench compares mc against a streaming mode; use ta or rta")
    manifest = load_manifest(args.manifest)
    result = run_bench(manifest, cfg, args.mode, args.mc_samples, args.sample_delay)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_json(out, result)
    print(
        f"mc(N={result['mc_samples']}): {result['mc_per_frame_s'] * 1e3:9.2f} ms/frame\n"
        f"{args.mode:>9s}: {result['stream_per_frame_s'] * 1e3:9.2f} ms/frame\n"
        f"speedup: {result['speedup_ratio']:.2f}x"
    )
    return EXIT_OK


# --- entry point ------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vidunc",
        description="Streaming uncertainty estimation for video segmentation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="render a synthetic video to tensor files")
    p_sim.add_argument("--scene", required=True, help="scene config JSON")
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--video-id", default=None, dest="video_id")
    p_sim.set_defaults(func=cmd_simulate)

    p_agg = sub.add_parser("aggregate", help="produce predictions and uncertainty maps")
    p_agg.add_argument("--manifest", required=True)
    p_agg.add_argument("--out", required=True)
    _add_run_flags(p_agg)
    p_agg.set_defaults(func=cmd_aggregate)

    p_eval = sub.add_parser("evaluate", help="score predictions against labels")
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--pred", required=True, help="directory written by aggregate")
    p_eval.add_argument("--out", required=True, help="JSON report path")
    p_eval.add_argument("--csv", default=None, help="also emit flat CSV rows")
    p_eval.add_argument("--recall-points", type=float, nargs="*", default=None,
                        dest="recall_points")
    p_eval.add_argument("--percentages", type=float, nargs="*", default=None)
    p_eval.add_argument("--pooling", choices=("global", "per-frame"), default="global")
    p_eval.add_argument("--frame-reduction", choices=("mean", "sum", "p95"),
                        default="mean", dest="frame_reduction")
    _add_run_flags(p_eval)
    p_eval.set_defaults(func=cmd_evaluate)

    p_bench = sub.add_parser("bench", help="time mc against streaming aggregation")
    p_bench.add_argument("--manifest", required=True)
    p_bench.add_argument("--out", default=None)
    p_bench.add_argument("--sample-delay", type=float, default=None, dest="sample_delay",
                         help="inject per-sample model cost in seconds")
    _add_run_flags(p_bench)
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, PermissionError, IsADirectoryError, NotADirectoryError) as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO
    except (TensorFileError, ValueError) as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
