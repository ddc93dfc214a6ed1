"""Deterministic synthetic videos with exact ground-truth flow, plus a
seedable stochastic segmenter.

A scene is a set of constant-intensity rects/disks translating over a
background.  Because motion is pure per-frame translation, the true flow
is known exactly: each pixel covered by an object in the *next* frame
carries that object's displacement, everything else is zero.  Indexed at
the arrival frame, that field drives a backward warp that reconstructs
the next frame everywhere except at genuinely dis-occluded pixels, which
the generator reports per frame together with the interpolation-ambiguous
band around label edges.

Objects bounce off the frame border: when a step would push an object
outside, the velocity component is reflected before the step, so every
frame-to-frame motion remains a clean translation.

The segmenter plays the role of a dropout network: per-class logits carry
a configurable margin toward the true class, and each sample adds noise
drawn from a generator keyed by (seed, frame, sample_index).  Noise can be
boosted near label boundaries, mirroring where real segmentation
uncertainty concentrates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .tensors import FlowField, ImageFrame, LabelMap, ProbMap, ScalarMap

_INTENSITY_LO = 30.0
_INTENSITY_HI = 225.0


def class_intensity(label: int, classes: int) -> float:
    """Gray level rendered for a class; classes are spread over [30, 225]."""
    if classes < 2:
        return _INTENSITY_LO
    return float(np.round(np.linspace(_INTENSITY_LO, _INTENSITY_HI, classes)[label]))


@dataclass(frozen=True)
class MovingObject:
    """One translating scene element.

    position is (y, x): the top-left corner for rects, the center for
    disks.  size is (h, w) for rects, the radius for disks.  velocity is
    (vx, vy) in pixels/frame, matching the flow field's (dx, dy) order.
    margin overrides the scene's default logit margin, letting individual
    objects be easy or hard for the segmenter.
    """

    shape: str
    label: int
    position: tuple[float, float]
    velocity: tuple[float, float]
    size: tuple[float, float] | float
    margin: float | None = None

    def __post_init__(self):
        if self.shape not in ("rect", "disk"):
            raise ValueError(f"shape must be 'rect' or 'disk', got {self.shape!r}")
        if self.shape == "rect":
            h, w = self.size
            if h <= 0 or w <= 0:
                raise ValueError("rect size must be positive")
        elif float(self.size) <= 0:
            raise ValueError("disk radius must be positive")
        if not all(math.isfinite(v) for v in self.velocity):
            raise ValueError("velocity must be finite")


@dataclass(frozen=True)
class SceneSpec:
    height: int
    width: int
    classes: int
    objects: tuple[MovingObject, ...]
    frames: int
    seed: int = 0
    background_class: int = 0
    default_margin: float = 2.5

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if self.height < 1 or self.width < 1:
            raise ValueError("scene dimensions must be positive")
        if self.classes < 2:
            raise ValueError("need at least 2 classes")
        if self.frames < 1:
            raise ValueError("need at least 1 frame")
        if not 0 <= self.background_class < self.classes:
            raise ValueError("background class out of range")
        for obj in self.objects:
            if not 0 <= obj.label < self.classes:
                raise ValueError(f"object label {obj.label} out of range")
            lo_y, hi_y, lo_x, hi_x = _position_bounds(obj, self.height, self.width)
            y, x = obj.position
            if not (lo_y <= y <= hi_y and lo_x <= x <= hi_x):
                raise ValueError(f"object at {obj.position} not inside frame at t=0")

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "classes": self.classes,
            "frames": self.frames,
            "seed": self.seed,
            "background_class": self.background_class,
            "default_margin": self.default_margin,
            "objects": [
                {
                    "shape": o.shape,
                    "label": o.label,
                    "position": list(o.position),
                    "velocity": list(o.velocity),
                    "size": list(o.size) if o.shape == "rect" else o.size,
                    "margin": o.margin,
                }
                for o in self.objects
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        objects = tuple(
            MovingObject(
                shape=o["shape"],
                label=o["label"],
                position=tuple(o["position"]),
                velocity=tuple(o["velocity"]),
                size=tuple(o["size"]) if o["shape"] == "rect" else o["size"],
                margin=o.get("margin"),
            )
            for o in d.get("objects", [])
        )
        return cls(
            height=d["height"],
            width=d["width"],
            classes=d["classes"],
            objects=objects,
            frames=d["frames"],
            seed=d.get("seed", 0),
            background_class=d.get("background_class", 0),
            default_margin=d.get("default_margin", 2.5),
        )


@dataclass(frozen=True)
class NoiseSpec:
    """Stochasticity of the simulated segmenter.

    gaussian-logit adds N(0, scale) to every logit; dropout-mask zeroes
    each logit with probability `scale` and rescales survivors.  Both add
    `boundary_boost` extra noise (std or drop rate) within
    `boundary_width` pixels of a label boundary.
    """

    kind: str = "gaussian-logit"
    scale: float = 1.0
    boundary_boost: float = 0.0
    boundary_width: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian-logit", "dropout-mask"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "gaussian-logit" and self.scale < 0:
            raise ValueError("gaussian scale must be >= 0")
        if self.kind == "dropout-mask" and not 0.0 <= self.scale < 1.0:
            raise ValueError("drop rate must be in [0, 1)")
        if self.boundary_boost < 0:
            raise ValueError("boundary_boost must be >= 0")
        if self.boundary_width < 1:
            raise ValueError("boundary_width must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative 64-bit integer")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "scale": self.scale,
            "boundary_boost": self.boundary_boost,
            "boundary_width": self.boundary_width,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        return cls(
            kind=d.get("kind", "gaussian-logit"),
            scale=d.get("scale", 1.0),
            boundary_boost=d.get("boundary_boost", 0.0),
            boundary_width=d.get("boundary_width", 2),
            seed=d.get("seed", 0),
        )


@dataclass(frozen=True)
class SynthFrameBundle:
    """Everything known about one synthetic frame.

    flow_to_next is None on the last frame.  disoccluded marks pixels of
    THIS frame with no usable correspondence in the previous frame (plus
    the interpolation-ambiguous band for fractional motion); it is all
    False on the first frame.
    """

    frame_index: int
    image: ImageFrame
    labels: LabelMap
    clean_logits: np.ndarray
    flow_to_next: FlowField | None
    disoccluded: np.ndarray = field(repr=False, default=None)  # (h, w) bool

    def __post_init__(self):
        logits = np.array(self.clean_logits, dtype=np.float64, copy=True)
        logits.setflags(write=False)
        object.__setattr__(self, "clean_logits", logits)
        mask = self.disoccluded
        if mask is None:
            mask = np.zeros((self.image.height, self.image.width), dtype=bool)
        mask = np.array(mask, dtype=bool, copy=True)
        mask.setflags(write=False)
        object.__setattr__(self, "disoccluded", mask)


def _position_bounds(obj: MovingObject, height: int, width: int):
    """Allowed (y, x) range keeping the object fully inside the frame."""
    if obj.shape == "rect":
        h, w = obj.size
        return 0.0, float(height - h), 0.0, float(width - w)
    r = float(obj.size)
    return r, float(height - 1) - r, r, float(width - 1) - r


def _object_positions(spec: SceneSpec) -> np.ndarray:
    """(frames, n_objects, 2) array of (y, x) positions with border bounce."""
    n = len(spec.objects)
    out = np.zeros((spec.frames, n, 2))
    for j, obj in enumerate(spec.objects):
        lo_y, hi_y, lo_x, hi_x = _position_bounds(obj, spec.height, spec.width)
        y, x = float(obj.position[0]), float(obj.position[1])
        vx, vy = float(obj.velocity[0]), float(obj.velocity[1])
        for t in range(spec.frames):
            out[t, j] = (y, x)
            ny, nx = y + vy, x + vx
            if ny < lo_y or ny > hi_y:
                vy = -vy
                ny = min(max(y + vy, lo_y), hi_y)
            if nx < lo_x or nx > hi_x:
                vx = -vx
                nx = min(max(x + vx, lo_x), hi_x)
            y, x = ny, nx
    return out


def _support(obj: MovingObject, pos_yx, height: int, width: int) -> np.ndarray:
    ys, xs = np.mgrid[0:height, 0:width]
    y0, x0 = pos_yx
    if obj.shape == "rect":
        h, w = obj.size
        return (ys >= y0) & (ys < y0 + h) & (xs >= x0) & (xs < x0 + w)
    r = float(obj.size)
    return (ys - y0) ** 2 + (xs - x0) ** 2 <= r * r


def label_boundary_mask(labels: np.ndarray, width: int = 1) -> np.ndarray:
    """Pixels within `width` (Chebyshev) of a differing-label 4-neighbor."""
    lab = np.asarray(labels)
    edge = np.zeros(lab.shape, dtype=bool)
    edge[:-1, :] |= lab[:-1, :] != lab[1:, :]
    edge[1:, :] |= lab[1:, :] != lab[:-1, :]
    edge[:, :-1] |= lab[:, :-1] != lab[:, 1:]
    edge[:, 1:] |= lab[:, 1:] != lab[:, :-1]
    for _ in range(width - 1):
        grown = edge.copy()
        grown[:-1, :] |= edge[1:, :]
        grown[1:, :] |= edge[:-1, :]
        grown[:, :-1] |= edge[:, 1:]
        grown[:, 1:] |= edge[:, :-1]
        grown[:-1, :-1] |= edge[1:, 1:]
        grown[1:, 1:] |= edge[:-1, :-1]
        grown[:-1, 1:] |= edge[1:, :-1]
        grown[1:, :-1] |= edge[:-1, 1:]
        edge = grown
    return edge


def _nn_warp_labels(labels: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Nearest-neighbor backward warp of a label grid (round half up)."""
    h, w = labels.shape
    ys, xs = np.mgrid[0:h, 0:w]
    sx = np.clip(np.floor(xs - flow[..., 0] + 0.5).astype(np.int64), 0, w - 1)
    sy = np.clip(np.floor(ys - flow[..., 1] + 0.5).astype(np.int64), 0, h - 1)
    return labels[sy, sx]


def _mixed_support_mask(labels_prev: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Pixels whose bilinear source taps straddle a label edge in the
    previous frame; interpolated intensity is ill-defined there."""
    h, w = labels_prev.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sxc = np.clip(xs - flow[..., 0], -1.0, float(w))
    syc = np.clip(ys - flow[..., 1], -1.0, float(h))
    x0 = np.floor(sxc).astype(np.int64)
    y0 = np.floor(syc).astype(np.int64)
    fx = sxc - x0
    fy = syc - y0
    ref = None
    mixed = np.zeros((h, w), dtype=bool)
    for dy in (0, 1):
        for dx in (0, 1):
            wt = (fx if dx else 1.0 - fx) * (fy if dy else 1.0 - fy)
            lab = labels_prev[
                np.clip(y0 + dy, 0, h - 1), np.clip(x0 + dx, 0, w - 1)
            ]
            if ref is None:
                ref = np.where(wt > 0.0, lab, -1)
            else:
                live = wt > 0.0
                filled = ref >= 0
                mixed |= live & filled & (lab != ref)
                ref = np.where(live & ~filled, lab, ref)
    return mixed


def iter_frames(spec: SceneSpec) -> Iterator[SynthFrameBundle]:
    """Lazily generate the scene's frame bundles (constant memory in T)."""
    positions = _object_positions(spec)
    intensities = np.array(
        [class_intensity(c, spec.classes) for c in range(spec.classes)]
    )

    def render(t: int):
        labels = np.full((spec.height, spec.width), spec.background_class, np.int32)
        margin = np.full((spec.height, spec.width), spec.default_margin)
        for j, obj in enumerate(spec.objects):
            sup = _support(obj, positions[t, j], spec.height, spec.width)
            labels[sup] = obj.label
            if obj.margin is not None:
                margin[sup] = obj.margin
        image = intensities[labels]
        logits = np.zeros((spec.height, spec.width, spec.classes))
        np.put_along_axis(logits, labels[:, :, None], margin[:, :, None], axis=2)
        return labels, image, logits

    def flow_at(t: int) -> np.ndarray:
        flow = np.zeros((spec.height, spec.width, 2))
        for j, obj in enumerate(spec.objects):
            dy, dx = positions[t + 1, j] - positions[t, j]
            sup = _support(obj, positions[t + 1, j], spec.height, spec.width)
            flow[sup, 0] = dx
            flow[sup, 1] = dy
        return flow

    prev_labels = None
    prev_flow = None
    for t in range(spec.frames):
        labels, image, logits = render(t)
        if prev_labels is None:
            disocc = np.zeros((spec.height, spec.width), dtype=bool)
        else:
            disocc = _nn_warp_labels(prev_labels, prev_flow) != labels
            disocc |= _mixed_support_mask(prev_labels, prev_flow)
        flow = flow_at(t) if t + 1 < spec.frames else None
        yield SynthFrameBundle(
            frame_index=t,
            image=ImageFrame(image),
            labels=LabelMap(labels, num_classes=spec.classes),
            clean_logits=logits,
            flow_to_next=FlowField(flow) if flow is not None else None,
            disoccluded=disocc,
        )
        prev_labels = labels
        prev_flow = flow


def generate_video(spec: SceneSpec) -> list[SynthFrameBundle]:
    """All frame bundles of a scene; deterministic for a fixed spec."""
    return list(iter_frames(spec))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=2, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=2, keepdims=True)


def sample_from_logits(
    clean_logits: np.ndarray,
    labels: np.ndarray,
    noise: NoiseSpec,
    frame: int,
    sample_index: int,
) -> ProbMap:
    """One stochastic forward pass: softmax(clean logits + keyed noise).

    The draw is fully determined by (noise.seed, frame, sample_index); no
    global RNG state is touched.  Labels are only used to locate the
    boundary band where noise is boosted.
    """
    if sample_index < 0:
        raise ValueError("sample_index must be >= 0")
    rng = np.random.default_rng(
        np.random.SeedSequence([noise.seed, frame, sample_index])
    )
    logits = np.asarray(clean_logits, dtype=np.float64)
    near_edge = label_boundary_mask(labels, noise.boundary_width)
    if noise.kind == "gaussian-logit":
        std = noise.scale + noise.boundary_boost * near_edge
        noisy = logits + rng.standard_normal(logits.shape) * std[:, :, None]
    else:
        drop = np.clip(noise.scale + noise.boundary_boost * near_edge, 0.0, 0.99)
        keep = rng.random(logits.shape) >= drop[:, :, None]
        noisy = logits * keep / (1.0 - drop[:, :, None])
    return ProbMap(_softmax(noisy))


def sample_segmenter(
    bundle: SynthFrameBundle, noise: NoiseSpec, sample_index: int
) -> ProbMap:
    """Sample the simulated segmenter on one frame bundle."""
    return sample_from_logits(
        bundle.clean_logits, bundle.labels.data, noise, bundle.frame_index, sample_index
    )


class SynthSegmenterModel:
    """StochasticModel over a frame-indexed collection of bundles."""

    def __init__(self, bundles: Sequence[SynthFrameBundle], noise: NoiseSpec):
        self._bundles = {b.frame_index: b for b in bundles}
        self.noise = noise

    def sample(self, frame: int, sample_index: int) -> ProbMap:
        return sample_segmenter(self._bundles[frame], self.noise, sample_index)


def corrupt_flow(
    f: FlowField,
    region: tuple[int, int, int, int],
    magnitude: float,
    seed: int,
) -> FlowField:
    """Add seeded uniform noise in [-magnitude, magnitude] to both flow
    components inside the half-open (y0, x0, y1, x1) region."""
    y0, x0, y1, x1 = region
    if not (0 <= y0 < y1 <= f.height and 0 <= x0 < x1 <= f.width):
        raise ValueError(
            f"region {region} out of bounds for ({f.height}, {f.width})"
        )
    if magnitude < 0:
        raise ValueError("magnitude must be >= 0")
    rng = np.random.default_rng(seed)
    out = f.data.copy()
    out[y0:y1, x0:x1] += rng.uniform(-magnitude, magnitude, (y1 - y0, x1 - x0, 2))
    return FlowField(out)
