"""Dataset manifests, run configuration, and the model ingestion path.

A manifest is a human-editable JSON document listing one record per frame
of a video.  Two routes bring stochastic model outputs into the pipeline:

  * stored samples: each frame record lists per-sample probability-map
    tensor files (real model outputs dumped offline);
  * logit model: each frame record points at a clean-logit tensor (plus
    labels for boundary-aware noise) and the manifest carries a noise
    spec; samples are drawn on demand, deterministically.

All paths are resolved relative to the manifest file's directory and are
checked for existence at load time.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aggregator import AggregationPolicy, PolicyKind, StochasticModel
from .evaluation import (
    DEFAULT_RECALL_POINTS,
    DEFAULT_RETRIEVAL_PERCENTAGES,
)
from .synthworld import NoiseSpec, sample_from_logits
from .tensorfile import read_tensor
from .tensors import VOID_LABEL, FlowField, ImageFrame, LabelMap, ProbMap
from .uncertainty import ALL_KINDS, UncertaintyKind
from .warp import WarpConfig


@dataclass(frozen=True)
class FrameRecord:
    image: str | None = None
    labels: str | None = None
    flow_to_next: str | None = None
    logits: str | None = None
    samples: tuple[str, ...] | None = None

    def to_dict(self) -> dict:
        d = {}
        for key in ("image", "labels", "flow_to_next", "logits"):
            val = getattr(self, key)
            if val is not None:
                d[key] = val
        if self.samples is not None:
            d["samples"] = list(self.samples)
        return d


@dataclass(frozen=True)
class Manifest:
    video_id: str
    class_count: int
    frames: tuple[FrameRecord, ...]
    void_label: int = VOID_LABEL
    noise: NoiseSpec | None = None
    sample_delay_s: float = 0.0
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        object.__setattr__(self, "base_dir", Path(self.base_dir))
        if self.class_count < 2:
            raise ValueError("class_count must be >= 2")
        if not self.frames:
            raise ValueError("manifest needs at least one frame")
        if self.sample_delay_s < 0:
            raise ValueError("sample_delay_s must be >= 0")

    def resolve(self, rel: str) -> Path:
        return self.base_dir / rel

    def to_dict(self) -> dict:
        d = {
            "video_id": self.video_id,
            "class_count": self.class_count,
            "void_label": self.void_label,
            "frames": [f.to_dict() for f in self.frames],
        }
        if self.noise is not None:
            d["noise"] = self.noise.to_dict()
        if self.sample_delay_s:
            d["sample_delay_s"] = self.sample_delay_s
        return d

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def require(self, what: str, *, flows: bool = False, images: bool = False) -> None:
        """Validate the manifest is complete enough for an aggregation mode."""
        if flows:
            for i, rec in enumerate(self.frames[:-1]):
                if rec.flow_to_next is None:
                    raise ValueError(f"{what} needs flow for frame {i}")
        if images:
            for i, rec in enumerate(self.frames):
                if rec.image is None:
                    raise ValueError(f"{what} needs an image for frame {i}")

    # --- typed loaders -------------------------------------------------

    def load_image(self, t: int) -> ImageFrame:
        rec = self.frames[t]
        if rec.image is None:
            raise ValueError(f"frame {t} has no image")
        return ImageFrame(read_tensor(self.resolve(rec.image)).astype(np.float64))

    def load_labels(self, t: int) -> LabelMap:
        rec = self.frames[t]
        if rec.labels is None:
            raise ValueError(f"frame {t} has no labels")
        return LabelMap(
            read_tensor(self.resolve(rec.labels)),
            num_classes=self.class_count,
            void_label=self.void_label,
        )

    def load_flow(self, t: int) -> FlowField:
        rec = self.frames[t]
        if rec.flow_to_next is None:
            raise ValueError(f"frame {t} has no flow")
        return FlowField(read_tensor(self.resolve(rec.flow_to_next)).astype(np.float64))

    def labeled_frames(self) -> list[int]:
        return [i for i, rec in enumerate(self.frames) if rec.labels is not None]


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    raw = json.loads(path.read_text())
    frames = []
    for rec in raw.get("frames", []):
        samples = rec.get("samples")
        frames.append(
            FrameRecord(
                image=rec.get("image"),
                labels=rec.get("labels"),
                flow_to_next=rec.get("flow_to_next"),
                logits=rec.get("logits"),
                samples=tuple(samples) if samples is not None else None,
            )
        )
    noise = raw.get("noise")
    man = Manifest(
        video_id=raw.get("video_id", path.stem),
        class_count=raw["class_count"],
        frames=tuple(frames),
        void_label=raw.get("void_label", VOID_LABEL),
        noise=NoiseSpec.from_dict(noise) if noise is not None else None,
        sample_delay_s=raw.get("sample_delay_s", 0.0),
        base_dir=path.parent,
    )
    for i, rec in enumerate(man.frames):
        referenced = [rec.image, rec.labels, rec.flow_to_next, rec.logits]
        referenced += list(rec.samples or ())
        for rel in referenced:
            if rel is not None and not man.resolve(rel).exists():
                raise FileNotFoundError(
                    f"manifest frame {i} references missing file {man.resolve(rel)}"
                )
    return man


class StoredSamplesModel:
    """StochasticModel over per-frame sample files dumped by a real model."""

    def __init__(self, manifest: Manifest):
        for i, rec in enumerate(manifest.frames):
            if not rec.samples:
                raise ValueError(f"frame {i} has no stored samples")
        self._manifest = manifest

    def sample(self, frame: int, sample_index: int) -> ProbMap:
        rec = self._manifest.frames[frame]
        if sample_index >= len(rec.samples):
            raise ValueError(
                f"frame {frame} has {len(rec.samples)} stored samples, "
                f"index {sample_index} requested"
            )
        arr = read_tensor(self._manifest.resolve(rec.samples[sample_index]))
        return ProbMap(arr.astype(np.float64))


class LogitNoiseModel:
    """StochasticModel drawing keyed noise over stored clean logits."""

    def __init__(self, manifest: Manifest, noise: NoiseSpec):
        for i, rec in enumerate(manifest.frames):
            if rec.logits is None or rec.labels is None:
                raise ValueError(f"frame {i} needs logits and labels for sampling")
        self._manifest = manifest
        self.noise = noise
        self._cache_frame: int | None = None
        self._cache: tuple[np.ndarray, np.ndarray] | None = None

    def _frame_arrays(self, frame: int) -> tuple[np.ndarray, np.ndarray]:
        if frame != self._cache_frame:
            rec = self._manifest.frames[frame]
            logits = read_tensor(self._manifest.resolve(rec.logits)).astype(np.float64)
            labels = read_tensor(self._manifest.resolve(rec.labels))
            self._cache_frame = frame
            self._cache = (logits, labels)
        return self._cache

    def sample(self, frame: int, sample_index: int) -> ProbMap:
        logits, labels = self._frame_arrays(frame)
        return sample_from_logits(logits, labels, self.noise, frame, sample_index)


@dataclass
class DelayedModel:
    """Adds a fixed per-sample cost, emulating a heavy backbone."""

    base: StochasticModel
    delay_s: float

    def sample(self, frame: int, sample_index: int) -> ProbMap:
        if self.delay_s > 0:
            time.sleep(self.delay_s)
        return self.base.sample(frame, sample_index)


def build_model(
    manifest: Manifest,
    seed_override: int | None = None,
    delay_override: float | None = None,
) -> StochasticModel:
    """Instantiate the manifest's model route (stored samples or logits)."""
    if manifest.frames[0].samples is not None:
        model: StochasticModel = StoredSamplesModel(manifest)
    else:
        noise = manifest.noise
        if noise is None:
            raise ValueError(
                "manifest has no stored samples and no noise spec; cannot sample"
            )
        if seed_override is not None:
            noise = NoiseSpec(
                kind=noise.kind,
                scale=noise.scale,
                boundary_boost=noise.boundary_boost,
                boundary_width=noise.boundary_width,
                seed=seed_override,
            )
        model = LogitNoiseModel(manifest, noise)
    delay = manifest.sample_delay_s if delay_override is None else delay_override
    if delay > 0:
        model = DelayedModel(model, delay)
    return model


SAMPLE_SCHEDULES = ("per-frame", "stream-index")


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run needs besides the manifest."""

    policy: AggregationPolicy = AggregationPolicy()
    kinds: tuple[UncertaintyKind, ...] = ALL_KINDS
    warp: WarpConfig = WarpConfig()
    recall_points: tuple[float, ...] = DEFAULT_RECALL_POINTS
    retrieval_percentages: tuple[float, ...] = DEFAULT_RETRIEVAL_PERCENTAGES
    mc_samples: int = 20
    seed: int | None = None
    sample_schedule: str = "per-frame"
    pr_pooling: str = "global"
    frame_reduction: str = "mean"

    def __post_init__(self):
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")
        if self.sample_schedule not in SAMPLE_SCHEDULES:
            raise ValueError(f"sample_schedule must be one of {SAMPLE_SCHEDULES}")
        object.__setattr__(
            self, "kinds", tuple(UncertaintyKind(k) for k in self.kinds)
        )

    def to_json_dict(self) -> dict:
        return {
            "policy": {
                "kind": self.policy.kind.value,
                "alpha": self.policy.alpha,
                "alpha_acc": self.policy.alpha_acc,
                "alpha_err": self.policy.alpha_err,
                "error_threshold": self.policy.error_threshold,
            },
            "uncertainty_kinds": [k.value for k in self.kinds],
            "warp": {"mode": self.warp.mode.value, "border": self.warp.border.value},
            "recall_points": list(self.recall_points),
            "retrieval_percentages": list(self.retrieval_percentages),
            "mc_samples": self.mc_samples,
            "seed": self.seed,
            "sample_schedule": self.sample_schedule,
            "pr_pooling": self.pr_pooling,
            "frame_reduction": self.frame_reduction,
        }
