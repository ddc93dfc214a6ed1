"""Dense 2-D/3-D grid types with validated semantics.

All types are immutable after construction: the wrapped array is copied
and marked read-only, so values can be shared freely across threads.
Numeric payloads are float64; labels are int32.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

PROB_VALUE_TOL = 1e-6
PROB_SUM_TOL = 1e-5

VOID_LABEL = 255
"""Reserved label excluded from every metric (dis-occlusions, unlabeled)."""


def _freeze(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ProbMap:
    """Per-pixel class probability tensor, shape (height, width, classes).

    Every value must lie in [0, 1] (tolerance 1e-6 outside) and every
    pixel's class sum must be within 1e-5 of 1.
    """

    data: np.ndarray

    def __post_init__(self):
        data = _freeze(self.data, np.float64)
        if data.ndim != 3:
            raise ValueError(f"ProbMap needs (h, w, c) data, got shape {data.shape}")
        h, w, c = data.shape
        if h < 1 or w < 1 or c < 2:
            raise ValueError(f"ProbMap needs h, w >= 1 and c >= 2, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("ProbMap values must be finite")
        if data.min() < -PROB_VALUE_TOL or data.max() > 1.0 + PROB_VALUE_TOL:
            raise ValueError(
                f"ProbMap values outside [0, 1]: min={data.min():.3g} max={data.max():.3g}"
            )
        sums = data.sum(axis=2)
        if np.abs(sums - 1.0).max() > PROB_SUM_TOL:
            bad = np.abs(sums - 1.0).argmax()
            raise ValueError(
                f"ProbMap pixel sums must be 1 +/- {PROB_SUM_TOL}; "
                f"worst pixel sum {sums.ravel()[bad]:.6g}"
            )
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def classes(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ScalarMap:
    """Finite per-pixel scalar field, shape (height, width)."""

    data: np.ndarray

    def __post_init__(self):
        data = _freeze(self.data, np.float64)
        if data.ndim != 2:
            raise ValueError(f"ScalarMap needs (h, w) data, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"ScalarMap needs h, w >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("ScalarMap values must be finite")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement field, shape (height, width, 2) of (dx, dy)."""

    data: np.ndarray

    def __post_init__(self):
        data = _freeze(self.data, np.float64)
        if data.ndim != 3 or data.shape[2] != 2:
            raise ValueError(f"FlowField needs (h, w, 2) data, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"FlowField needs h, w >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("FlowField values must be finite")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @classmethod
    def zero(cls, height: int, width: int) -> "FlowField":
        return cls(np.zeros((height, width, 2)))


@dataclass(frozen=True)
class ImageFrame:
    """Intensity image, shape (height, width, channels), values in [0, 255].

    Channels is 1 or 3. Values are stored as float64 so warped frames keep
    sub-integer precision.
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        data = _freeze(data, np.float64)
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError(
                f"ImageFrame needs (h, w) or (h, w, 1|3) data, got shape {data.shape}"
            )
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"ImageFrame needs h, w >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("ImageFrame values must be finite")
        if data.min() < 0.0 or data.max() > 255.0:
            raise ValueError(
                f"ImageFrame values outside [0, 255]: min={data.min():.3g} "
                f"max={data.max():.3g}"
            )
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel class indices, shape (height, width), int32.

    Values must be in [0, num_classes) or equal the void label, which is
    excluded from all metrics.
    """

    data: np.ndarray
    num_classes: int
    void_label: int = field(default=VOID_LABEL)

    def __post_init__(self):
        data = _freeze(self.data, np.int32)
        if data.ndim != 2:
            raise ValueError(f"LabelMap needs (h, w) data, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"LabelMap needs h, w >= 1, got {data.shape}")
        if self.num_classes < 1:
            raise ValueError("LabelMap num_classes must be >= 1")
        if self.void_label < self.num_classes:
            raise ValueError("void label must not collide with a class index")
        live = data != self.void_label
        if live.any():
            vals = data[live]
            if vals.min() < 0 or vals.max() >= self.num_classes:
                raise ValueError(
                    f"LabelMap non-void values must be in [0, {self.num_classes}), "
                    f"got range [{vals.min()}, {vals.max()}]"
                )
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def new_prob_map(height: int, width: int, classes: int, fill: Sequence[float]) -> ProbMap:
    """Constant-fill probability map; fill must be a length-`classes`
    distribution summing to 1 within 1e-5."""
    if height < 1 or width < 1 or classes < 2:
        raise ValueError(f"bad dimensions ({height}, {width}, {classes})")
    fill_arr = np.asarray(fill, dtype=np.float64)
    if fill_arr.shape != (classes,):
        raise ValueError(f"fill must have length {classes}, got shape {fill_arr.shape}")
    if abs(fill_arr.sum() - 1.0) > PROB_SUM_TOL:
        raise ValueError(f"fill must sum to 1 +/- {PROB_SUM_TOL}, sums to {fill_arr.sum():.6g}")
    if fill_arr.min() < -PROB_VALUE_TOL or fill_arr.max() > 1.0 + PROB_VALUE_TOL:
        raise ValueError("fill values must lie in [0, 1]")
    return ProbMap(np.broadcast_to(fill_arr, (height, width, classes)))


def normalize(p: ProbMap | np.ndarray) -> ProbMap:
    """Rescale every pixel to sum exactly to 1; argmax is unchanged.

    Accepts a ProbMap or a raw (h, w, c) array of nonnegative class masses
    (e.g. interpolation output whose sums have drifted).  Raises on any
    pixel whose channel sum is not positive, naming its (y, x) coordinates.
    """
    data = p.data if isinstance(p, ProbMap) else np.asarray(p, dtype=np.float64)
    if data.ndim != 3:
        raise ValueError(f"expected (h, w, c) data, got shape {data.shape}")
    sums = data.sum(axis=2)
    if sums.min() <= 0.0:
        y, x = np.unravel_index(int((sums <= 0.0).argmax()), sums.shape)
        raise ValueError(f"cannot normalize zero-sum pixel at (y={y}, x={x})")
    return ProbMap(data / sums[:, :, None])


def argmax_labels(p: ProbMap) -> LabelMap:
    """Per-pixel index of the maximal class; ties go to the lowest index."""
    return LabelMap(np.argmax(p.data, axis=2).astype(np.int32), num_classes=p.classes)
