"""Segmentation accuracy metrics, pixel-level sparsification curves, and
frame-level ranking agreement scores.

Void-labeled pixels are excluded from every metric.  All functions are
pure; per-frame confusion matrices merge additively so frames can be
scored in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .tensors import LabelMap, ScalarMap

DEFAULT_RECALL_POINTS = tuple(round(1.0 - 0.05 * i, 2) for i in range(11))  # 1.0 .. 0.5
DEFAULT_RETRIEVAL_PERCENTAGES = (0.1, 0.3, 0.5, 0.7)

FRAME_SCORE_REDUCTIONS = ("mean", "sum", "p95")


@dataclass(frozen=True)
class ConfusionMatrix:
    """C x C counts; rows are ground truth, columns are prediction."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64, copy=True)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {counts.shape}")
        if counts.min() < 0:
            raise ValueError("confusion counts must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.num_classes != other.num_classes:
            raise ValueError("cannot merge confusion matrices of different sizes")
        return ConfusionMatrix(self.counts + other.counts)

    @classmethod
    def empty(cls, num_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64))


def _flat_confusion(pred: np.ndarray, gt: np.ndarray, num_classes: int) -> np.ndarray:
    idx = gt.astype(np.int64) * num_classes + pred.astype(np.int64)
    return np.bincount(idx, minlength=num_classes * num_classes).reshape(
        num_classes, num_classes
    )


def confusion(pred: LabelMap, gt: LabelMap) -> ConfusionMatrix:
    """Counts over pixels that are non-void in both maps."""
    if pred.data.shape != gt.data.shape:
        raise ValueError(
            f"prediction shape {pred.data.shape} does not match labels {gt.data.shape}"
        )
    if pred.num_classes != gt.num_classes:
        raise ValueError("prediction and labels disagree on class count")
    live = (gt.data != gt.void_label) & (pred.data != pred.void_label)
    return ConfusionMatrix(
        _flat_confusion(pred.data[live], gt.data[live], gt.num_classes)
    )


@dataclass(frozen=True)
class SegMetrics:
    per_class_acc: tuple[float, ...]  # NaN for classes absent from gt
    per_class_iou: tuple[float, ...]  # NaN for classes absent from gt and pred
    class_avg: float
    global_avg: float
    mean_iou: float


def seg_metrics(cm: ConfusionMatrix) -> SegMetrics:
    """Accuracy and IoU summaries of a confusion matrix.

    class_avg averages per-class accuracy over classes that occur in the
    ground truth; mean_iou averages IoU over classes that occur in the
    ground truth or the prediction, so absent classes never drag curves to
    zero on small scenes.
    """
    counts = cm.counts.astype(np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("confusion matrix is empty")
    diag = np.diag(counts)
    row = counts.sum(axis=1)
    col = counts.sum(axis=0)

    acc = np.full(cm.num_classes, np.nan)
    np.divide(diag, row, out=acc, where=row > 0)
    union = row + col - diag
    iou = np.full(cm.num_classes, np.nan)
    np.divide(diag, union, out=iou, where=union > 0)

    return SegMetrics(
        per_class_acc=tuple(acc.tolist()),
        per_class_iou=tuple(iou.tolist()),
        class_avg=float(np.nanmean(acc)) if (row > 0).any() else float("nan"),
        global_avg=float(diag.sum() / total),
        mean_iou=float(np.nanmean(iou)) if (union > 0).any() else float("nan"),
    )


@dataclass(frozen=True)
class PRCurve:
    """mIoU of the retained pixels at each recall fraction, most-uncertain
    pixels removed first.  Recall fractions are strictly decreasing from 1."""

    points: tuple[tuple[float, float], ...]
    pooling: str = "global"

    def __post_init__(self):
        points = tuple((float(r), float(m)) for r, m in self.points)
        if not points:
            raise ValueError("PR curve needs at least one point")
        recalls = [r for r, _ in points]
        if recalls[0] != 1.0:
            raise ValueError("PR curve must start at recall 1.0")
        if any(b >= a for a, b in zip(recalls, recalls[1:])):
            raise ValueError("recall fractions must be strictly decreasing")
        if any(not 0.0 < r <= 1.0 for r in recalls):
            raise ValueError("recall fractions must lie in (0, 1]")
        object.__setattr__(self, "points", points)

    @property
    def recalls(self) -> tuple[float, ...]:
        return tuple(r for r, _ in self.points)

    @property
    def mious(self) -> tuple[float, ...]:
        return tuple(m for _, m in self.points)


def _pool_pixels(
    preds: Sequence[LabelMap],
    gts: Sequence[LabelMap],
    uncs: Sequence[ScalarMap],
):
    if not preds or len(preds) != len(gts) or len(preds) != len(uncs):
        raise ValueError("prediction, label, and uncertainty stacks must align")
    pred_parts, gt_parts, unc_parts, sizes = [], [], [], []
    for p, g, u in zip(preds, gts, uncs):
        if p.data.shape != g.data.shape or p.data.shape != u.data.shape:
            raise ValueError("stack entries must share dimensions")
        live = (g.data != g.void_label) & (p.data != p.void_label)
        pred_parts.append(p.data[live])
        gt_parts.append(g.data[live])
        unc_parts.append(u.data[live])
        sizes.append(int(live.sum()))
    return (
        np.concatenate(pred_parts),
        np.concatenate(gt_parts),
        np.concatenate(unc_parts),
        sizes,
    )


def _keep_count(recall: float, n: int) -> int:
    return min(n, max(1, int(math.floor(recall * n + 0.5))))


def pr_sparsification(
    preds: Sequence[LabelMap],
    gts: Sequence[LabelMap],
    uncs: Sequence[ScalarMap],
    recall_points: Sequence[float] = DEFAULT_RECALL_POINTS,
    pooling: str = "global",
) -> PRCurve:
    """Sparsification curve: rank pixels by uncertainty, keep the most
    certain `recall` fraction, report mean IoU of the kept pixels.

    Ranking pools every test pixel by default ("global"); "per-frame"
    ranks within each frame and keeps the per-frame fraction instead.
    Ties keep stable pixel order (frame, then row-major).  recall_points
    must include 1.0 (the full-set reference point).
    """
    if pooling not in ("global", "per-frame"):
        raise ValueError(f"pooling must be 'global' or 'per-frame', got {pooling!r}")
    recalls = sorted({float(r) for r in recall_points}, reverse=True)
    if not recalls:
        raise ValueError("need at least one recall point")
    if any(not 0.0 < r <= 1.0 for r in recalls):
        raise ValueError("recall points must lie in (0, 1]")
    if recalls[0] != 1.0:
        raise ValueError("recall points must include 1.0")

    pred_all, gt_all, unc_all, sizes = _pool_pixels(preds, gts, uncs)
    n = pred_all.size
    if n == 0:
        raise ValueError("no non-void pixels to evaluate")
    num_classes = gts[0].num_classes

    if pooling == "global":
        order = np.argsort(unc_all, kind="stable")
    else:
        offsets = np.cumsum([0] + sizes[:-1])
        order = np.concatenate(
            [
                off + np.argsort(unc_all[off : off + sz], kind="stable")
                for off, sz in zip(offsets, sizes)
            ]
        ) if sizes else np.empty(0, dtype=np.int64)

    points = []
    for r in recalls:
        if pooling == "global":
            kept = order[: _keep_count(r, n)]
        else:
            offsets = np.cumsum([0] + sizes[:-1])
            kept = np.concatenate(
                [
                    order[off : off + _keep_count(r, sz)]
                    for off, sz in zip(offsets, sizes)
                    if sz > 0
                ]
            )
        cm = ConfusionMatrix(
            _flat_confusion(pred_all[kept], gt_all[kept], num_classes)
        )
        points.append((r, seg_metrics(cm).mean_iou))
    return PRCurve(tuple(points), pooling=pooling)


def frame_error_rate(pred: LabelMap, gt: LabelMap) -> float:
    """Misclassified fraction of non-void pixels (0 if none are scored)."""
    live = (gt.data != gt.void_label) & (pred.data != pred.void_label)
    n = int(live.sum())
    if n == 0:
        return 0.0
    return float((pred.data[live] != gt.data[live]).sum() / n)


def frame_error_rank(
    preds: Sequence[LabelMap], gts: Sequence[LabelMap]
) -> list[int]:
    """Frame indices sorted by descending error rate, ties by index."""
    if not preds or len(preds) != len(gts):
        raise ValueError("prediction and label lists must align and be non-empty")
    rates = [frame_error_rate(p, g) for p, g in zip(preds, gts)]
    return sorted(range(len(rates)), key=lambda i: (-rates[i], i))


def frame_uncertainty_score(unc: ScalarMap, reduction: str = "mean") -> float:
    if reduction == "mean":
        return float(unc.data.mean())
    if reduction == "sum":
        return float(unc.data.sum())
    if reduction == "p95":
        return float(np.percentile(unc.data, 95))
    raise ValueError(f"reduction must be one of {FRAME_SCORE_REDUCTIONS}, got {reduction!r}")


def frame_uncertainty_rank(
    unc_maps: Sequence[ScalarMap], reduction: str = "mean"
) -> list[int]:
    """Frame indices sorted by descending uncertainty score, ties by index."""
    if not unc_maps:
        raise ValueError("need at least one uncertainty map")
    scores = [frame_uncertainty_score(u, reduction) for u in unc_maps]
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))


def _check_rankings(rank_a: Sequence[Hashable], rank_b: Sequence[Hashable]):
    set_a, set_b = set(rank_a), set(rank_b)
    if len(set_a) != len(rank_a) or len(set_b) != len(rank_b):
        raise ValueError("rankings must not contain duplicate ids")
    if set_a != set_b:
        raise ValueError("rankings must cover the same id set")


def kendall_tau(rank_a: Sequence[Hashable], rank_b: Sequence[Hashable]) -> float:
    """(concordant - discordant) / (n(n-1)/2) over all id pairs.

    1 for identical orderings, -1 for exactly reversed ones.  A
    single-element ranking has no pairs and scores 1 by convention.
    """
    _check_rankings(rank_a, rank_b)
    n = len(rank_a)
    if n == 1:
        return 1.0
    pos_b = {v: i for i, v in enumerate(rank_b)}
    seq = [pos_b[v] for v in rank_a]
    discordant = 0
    for i in range(n):
        for j in range(i + 1, n):
            if seq[i] > seq[j]:
                discordant += 1
    pairs = n * (n - 1) // 2
    return (pairs - 2 * discordant) / pairs


def ranking_iou(
    gt_rank: Sequence[Hashable],
    unc_rank: Sequence[Hashable],
    percentage: float,
) -> float:
    """Overlap of the top ceil(percentage * n) ids of the two rankings:
    |G intersect U| / |G union U|."""
    _check_rankings(gt_rank, unc_rank)
    if not 0.0 < percentage <= 1.0:
        raise ValueError(f"percentage must be in (0, 1], got {percentage}")
    m = math.ceil(percentage * len(gt_rank))
    top_g = set(gt_rank[:m])
    top_u = set(unc_rank[:m])
    return len(top_g & top_u) / len(top_g | top_u)


@dataclass(frozen=True)
class RankingReport:
    kendall_tau: float | None
    ranking_iou: dict[float, float]
    kendall_reason: str | None = None


@dataclass(frozen=True)
class EvalReport:
    """Serializable bundle of everything the evaluate command measures."""

    seg: SegMetrics
    pr_curves: dict[str, PRCurve]
    rankings: dict[str, RankingReport]
    metadata: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        def clean(x):
            return None if isinstance(x, float) and math.isnan(x) else x

        return {
            "metadata": dict(sorted(self.metadata.items())),
            "segmentation": {
                "per_class_acc": [clean(v) for v in self.seg.per_class_acc],
                "per_class_iou": [clean(v) for v in self.seg.per_class_iou],
                "class_avg": clean(self.seg.class_avg),
                "global_avg": clean(self.seg.global_avg),
                "mean_iou": clean(self.seg.mean_iou),
            },
            "pr_curves": {
                kind: {
                    "pooling": curve.pooling,
                    "points": [[r, m] for r, m in curve.points],
                }
                for kind, curve in sorted(self.pr_curves.items())
            },
            "rankings": {
                kind: {
                    "kendall_tau": rep.kendall_tau,
                    "kendall_reason": rep.kendall_reason,
                    "ranking_iou": {
                        f"{pct:g}": val
                        for pct, val in sorted(rep.ranking_iou.items())
                    },
                }
                for kind, rep in sorted(self.rankings.items())
            },
        }

    def to_csv_rows(self) -> list[tuple[str, str, str, str]]:
        """Flat (section, kind, key, value) rows, one per metric or point."""
        rows: list[tuple[str, str, str, str]] = []

        def fmt(v) -> str:
            if v is None or (isinstance(v, float) and math.isnan(v)):
                return ""
            return f"{v:.10g}"

        rows.append(("segmentation", "", "class_avg", fmt(self.seg.class_avg)))
        rows.append(("segmentation", "", "global_avg", fmt(self.seg.global_avg)))
        rows.append(("segmentation", "", "mean_iou", fmt(self.seg.mean_iou)))
        for c, (acc, iou) in enumerate(zip(self.seg.per_class_acc, self.seg.per_class_iou)):
            rows.append(("segmentation", "", f"acc_class_{c}", fmt(acc)))
            rows.append(("segmentation", "", f"iou_class_{c}", fmt(iou)))
        for kind, curve in sorted(self.pr_curves.items()):
            for r, m in curve.points:
                rows.append(("pr_curve", kind, f"recall_{r:g}", fmt(m)))
        for kind, rep in sorted(self.rankings.items()):
            rows.append(("ranking", kind, "kendall_tau", fmt(rep.kendall_tau)))
            for pct, val in sorted(rep.ranking_iou.items()):
                rows.append(("ranking", kind, f"iou_top_{pct:g}", fmt(val)))
        return rows
