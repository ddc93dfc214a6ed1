"""Streaming temporal aggregation of stochastic segmenter outputs.

Instead of sampling a dropout model N times per frame, the aggregator
keeps a flow-warped exponential moving average over one sample per frame:

    P_1 = O_1
    P_t = O_t * alpha + warp(P_{t-1}, flow) * (1 - alpha)

For a static scene with the cumulative schedule alpha_t = 1/t this is
exactly the N-sample Monte Carlo average, which `mc_predict` computes by
brute force as the reference oracle.

Alongside the prediction the state carries two side aggregates updated by
the identical warped-EMA rule: the expected per-sample entropy (for BALD)
and the expected squared probabilities (for Mean STD), so every
uncertainty functional stays computable from O(H*W*C) state.

The region-based variant (RTA) replaces the scalar alpha with a per-pixel
map chosen by thresholding the flow reconstruction error: pixels whose
warp looks wrong trust the fresh sample more.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol, runtime_checkable

import numpy as np

from .tensors import FlowField, ImageFrame, ProbMap, ScalarMap
from .uncertainty import entropy
from .warp import DEFAULT_WARP, WarpConfig, reconstruction_error, warp_prob, warp_scalar, warp_values


class PolicyKind(str, Enum):
    TA_FIXED = "ta-fixed"
    RTA_STEP = "rta-step"
    CUMULATIVE = "cumulative-average"


@dataclass(frozen=True)
class AggregationPolicy:
    """EMA weighting schedule. alpha applies to TA_FIXED; the acc/err pair
    plus the error threshold apply to RTA_STEP; CUMULATIVE uses 1/t."""

    kind: PolicyKind = PolicyKind.TA_FIXED
    alpha: float = 0.2
    alpha_acc: float = 0.2
    alpha_err: float = 0.7
    error_threshold: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 < self.alpha_acc <= self.alpha_err <= 1.0:
            raise ValueError(
                "need 0 < alpha_acc <= alpha_err <= 1, got "
                f"alpha_acc={self.alpha_acc} alpha_err={self.alpha_err}"
            )
        if not 0.0 <= self.error_threshold <= 255.0:
            raise ValueError(
                f"error_threshold must be in [0, 255], got {self.error_threshold}"
            )


@runtime_checkable
class StochasticModel(Protocol):
    """One stochastic forward pass of a segmenter.

    Implementations must be deterministic for a fixed (frame, sample_index)
    pair and return a valid probability map.
    """

    def sample(self, frame: int, sample_index: int) -> ProbMap: ...


@dataclass(frozen=True)
class SampleSequenceModel:
    """Replay one frame's sample sequence as a per-frame stream.

    Streaming aggregation draws one sample per frame; wrapping a model in
    this adapter makes frame t of the stream return sample t of a fixed
    anchor frame.  That is the schedule under which a static video
    aggregated with the cumulative policy reproduces mc_predict exactly.
    """

    base: StochasticModel
    anchor_frame: int = 0

    def sample(self, frame: int, sample_index: int) -> ProbMap:
        return self.base.sample(self.anchor_frame, frame)


@dataclass(frozen=True)
class AggregatorState:
    """Running aggregates after some number of frames.

    prediction        warped-EMA of per-frame outputs (a valid ProbMap)
    expected_entropy  warped-EMA of per-sample entropy maps, in [0, ln C]
    expected_square   warped-EMA of squared outputs, (h, w, c) float64
    frame_index       1-based count of aggregated frames/samples
    """

    prediction: ProbMap
    expected_entropy: ScalarMap
    expected_square: np.ndarray
    frame_index: int = 1

    def __post_init__(self):
        sq = np.array(self.expected_square, dtype=np.float64, copy=True)
        sq.setflags(write=False)
        if sq.shape != self.prediction.data.shape:
            raise ValueError(
                f"expected_square shape {sq.shape} does not match prediction "
                f"{self.prediction.data.shape}"
            )
        hw = (self.prediction.height, self.prediction.width)
        if (self.expected_entropy.height, self.expected_entropy.width) != hw:
            raise ValueError("expected_entropy dimensions do not match prediction")
        if sq.min() < 0.0:
            raise ValueError("expected_square must be nonnegative")
        ln_c = np.log(self.prediction.classes)
        ee = self.expected_entropy.data
        if ee.min() < -1e-9 or ee.max() > ln_c + 1e-9:
            raise ValueError(
                f"expected_entropy must lie in [0, ln {self.prediction.classes}]"
            )
        if self.frame_index < 1:
            raise ValueError("frame_index must be >= 1")
        object.__setattr__(self, "expected_square", sq)

    @property
    def state_nbytes(self) -> int:
        return (
            self.prediction.data.nbytes
            + self.expected_entropy.data.nbytes
            + self.expected_square.nbytes
        )


def init_state(o_1: ProbMap) -> AggregatorState:
    """State after the first frame: the sample itself and its own moments."""
    return AggregatorState(
        prediction=o_1,
        expected_entropy=entropy(o_1),
        expected_square=o_1.data**2,
        frame_index=1,
    )


def _ema_step(
    s: AggregatorState,
    o_t: ProbMap,
    f: FlowField,
    alpha,
    warp_cfg: WarpConfig,
) -> AggregatorState:
    """Shared TA/RTA update; alpha is a python float or an (h, w) array."""
    if isinstance(alpha, np.ndarray):
        alpha_c = alpha[:, :, None]
        alpha_s = alpha
    else:
        alpha_c = alpha
        alpha_s = alpha
    warped_pred = warp_prob(s.prediction, f, warp_cfg)
    mixed = o_t.data * alpha_c + warped_pred.data * (1.0 - alpha_c)
    prediction = ProbMap(mixed / mixed.sum(axis=2)[:, :, None])

    warped_ee = warp_scalar(s.expected_entropy, f, warp_cfg)
    ee = entropy(o_t).data * alpha_s + warped_ee.data * (1.0 - alpha_s)

    warped_sq = warp_values(s.expected_square, f, warp_cfg)
    sq = (o_t.data**2) * alpha_c + warped_sq * (1.0 - alpha_c)

    return AggregatorState(
        prediction=prediction,
        expected_entropy=ScalarMap(ee),
        expected_square=np.clip(sq, 0.0, None),
        frame_index=s.frame_index + 1,
    )


def _check_step_dims(s: AggregatorState, o_t: ProbMap, f: FlowField) -> None:
    if o_t.data.shape != s.prediction.data.shape:
        raise ValueError(
            f"output shape {o_t.data.shape} does not match state "
            f"{s.prediction.data.shape}"
        )
    if (f.height, f.width) != (s.prediction.height, s.prediction.width):
        raise ValueError("flow dimensions do not match state")


def ta_step(
    s: AggregatorState,
    o_t: ProbMap,
    f: FlowField,
    alpha: float,
    warp_cfg: WarpConfig = DEFAULT_WARP,
) -> AggregatorState:
    """One fixed-weight aggregation step; alpha = 1 forgets all history."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    _check_step_dims(s, o_t, f)
    return _ema_step(s, o_t, f, float(alpha), warp_cfg)


def rta_alpha_map(e: ScalarMap, policy: AggregationPolicy) -> ScalarMap:
    """Step decision: alpha_acc where error <= threshold, else alpha_err."""
    if policy.kind is not PolicyKind.RTA_STEP:
        raise ValueError(f"policy kind must be {PolicyKind.RTA_STEP}, got {policy.kind}")
    return ScalarMap(
        np.where(e.data <= policy.error_threshold, policy.alpha_acc, policy.alpha_err)
    )


def rta_step(
    s: AggregatorState,
    o_t: ProbMap,
    f: FlowField,
    i_t: ImageFrame,
    i_prev: ImageFrame,
    policy: AggregationPolicy,
    warp_cfg: WarpConfig = DEFAULT_WARP,
) -> AggregatorState:
    """One region-gated step: the per-pixel weight map derived from the
    reconstruction error is applied identically to all three aggregates."""
    _check_step_dims(s, o_t, f)
    err = reconstruction_error(i_t, i_prev, f, warp_cfg)
    alpha = rta_alpha_map(err, policy)
    return _ema_step(s, o_t, f, alpha.data, warp_cfg)


def step(
    s: AggregatorState,
    o_t: ProbMap,
    f: FlowField,
    policy: AggregationPolicy,
    i_t: ImageFrame | None = None,
    i_prev: ImageFrame | None = None,
    warp_cfg: WarpConfig = DEFAULT_WARP,
) -> AggregatorState:
    """Policy dispatch for stream drivers."""
    if policy.kind is PolicyKind.RTA_STEP:
        if i_t is None or i_prev is None:
            raise ValueError("RTA stepping needs the current and previous frames")
        return rta_step(s, o_t, f, i_t, i_prev, policy, warp_cfg)
    if policy.kind is PolicyKind.CUMULATIVE:
        return ta_step(s, o_t, f, 1.0 / (s.frame_index + 1), warp_cfg)
    return ta_step(s, o_t, f, policy.alpha, warp_cfg)


def mc_predict(model: StochasticModel, frame: int, n: int) -> AggregatorState:
    """Brute-force Monte Carlo moments of one frame: the mean output, mean
    per-sample entropy, and mean squared output over n draws.

    This is the reference the streaming aggregator approximates; it costs n
    model evaluations against the aggregator's one per frame.
    """
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    first = model.sample(frame, 0)
    pred_sum = first.data.copy()
    ee_sum = entropy(first).data.copy()
    sq_sum = first.data**2
    for i in range(1, n):
        o = model.sample(frame, i)
        if o.data.shape != first.data.shape:
            raise ValueError("model returned inconsistent shapes across samples")
        pred_sum += o.data
        ee_sum += entropy(o).data
        sq_sum += o.data**2
    return AggregatorState(
        prediction=ProbMap(pred_sum / n),
        expected_entropy=ScalarMap(ee_sum / n),
        expected_square=sq_sum / n,
        frame_index=n,
    )
