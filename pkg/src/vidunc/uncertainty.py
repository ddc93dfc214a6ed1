"""Per-pixel uncertainty functionals over predictive distributions.

Four estimators are supported: predictive entropy, variation ratio,
mutual information between prediction and model draw (BALD), and the
class-averaged standard deviation of sampled probabilities (Mean STD).
Entropy and variation ratio need only the mean prediction; the other two
need the auxiliary running moments kept by the aggregator.

Entropy uses the natural logarithm; the base only rescales values and
leaves every ranking-based metric unchanged.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .tensors import ProbMap, ScalarMap


class UncertaintyKind(str, Enum):
    ENTROPY = "entropy"
    VARIATION_RATIO = "varratio"
    BALD = "bald"
    MEAN_STD = "meanstd"


ALL_KINDS = tuple(UncertaintyKind)


def entropy(p: ProbMap) -> ScalarMap:
    """H = -sum_c p_c ln p_c with 0 ln 0 = 0; values in [0, ln C]."""
    data = p.data
    plogp = data * np.log(np.where(data > 0.0, data, 1.0))
    return ScalarMap(np.clip(-plogp.sum(axis=2), 0.0, None))


def variation_ratio(p: ProbMap) -> ScalarMap:
    """1 - max_c p_c; values in [0, 1 - 1/C]."""
    return ScalarMap(np.clip(1.0 - p.data.max(axis=2), 0.0, None))


def _check_hw(a_shape, b_shape, what: str) -> None:
    if a_shape != b_shape:
        raise ValueError(f"{what} dimensions {b_shape} do not match prediction {a_shape}")


def bald(p_mean: ProbMap, expected_entropy: ScalarMap) -> ScalarMap:
    """Mutual information: H(mean prediction) - E[H(sample)].

    Under warped moving-average aggregation the two terms are surrogate
    expectations and the difference can dip slightly below zero; it is
    clamped at 0 (see negativity_diagnostics for how often that fires).
    """
    _check_hw((p_mean.height, p_mean.width),
              (expected_entropy.height, expected_entropy.width), "expected entropy")
    return ScalarMap(np.clip(entropy(p_mean).data - expected_entropy.data, 0.0, None))


def mean_std(p_mean: ProbMap, expected_square: np.ndarray) -> ScalarMap:
    """Class-averaged std: mean_c sqrt(E[p_c^2] - E[p_c]^2).

    The variance term is clamped at 0 before the square root for the same
    reason as in bald.
    """
    expected_square = np.asarray(expected_square, dtype=np.float64)
    if expected_square.shape != p_mean.data.shape:
        raise ValueError(
            f"expected_square shape {expected_square.shape} does not match "
            f"prediction {p_mean.data.shape}"
        )
    var = np.clip(expected_square - p_mean.data**2, 0.0, None)
    return ScalarMap(np.sqrt(var).mean(axis=2))


def uncertainty_from_state(state, kind: UncertaintyKind) -> ScalarMap:
    """Compute one functional from anything carrying the aggregate moments
    (an AggregatorState or an MC result with the same attributes)."""
    kind = UncertaintyKind(kind)
    if kind is UncertaintyKind.ENTROPY:
        return entropy(state.prediction)
    if kind is UncertaintyKind.VARIATION_RATIO:
        return variation_ratio(state.prediction)
    if kind is UncertaintyKind.BALD:
        return bald(state.prediction, state.expected_entropy)
    return mean_std(state.prediction, state.expected_square)


def negativity_diagnostics(state) -> dict[str, float]:
    """Fraction and worst magnitude of pixels where the bald / mean-std
    inner expressions went negative before clamping.  A nonzero fraction is
    expected under moving-average aggregation; large magnitudes indicate a
    problem upstream."""
    bald_inner = entropy(state.prediction).data - state.expected_entropy.data
    var_inner = np.asarray(state.expected_square) - state.prediction.data**2
    return {
        "bald_negative_fraction": float((bald_inner < 0.0).mean()),
        "bald_worst_negative": float(max(0.0, -bald_inner.min())),
        "meanstd_negative_fraction": float((var_inner < 0.0).mean()),
        "meanstd_worst_negative": float(max(0.0, -var_inner.min())),
    }
