"""Forward evaluation of the semantic, distance and center losses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from supportseg.targets import CenterProbMap, DistanceMaps, SemanticLogits

# center probabilities are clipped to sigmoid(+-10) before converting to scores
SCORE_CLIP = 10.0


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name}={v} must be in (0, 1]")


@dataclass(frozen=True)
class LossReport:
    l_cls: float
    l_common: float
    l_prob: float
    l_total: float

    def lines(self) -> list[str]:
        return [f"{k}={getattr(self, k):.4f}" for k in ("l_cls", "l_common", "l_prob", "l_total")]


def _data(x) -> np.ndarray:
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def ce_loss(logits: SemanticLogits | np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy over every pixel, void included.

    ``logits`` is ``(C, H, W)``; ``labels`` is ``(H, W)`` with values ``< C``.
    """
    x = _data(logits)
    labels = np.asarray(labels).astype(np.int64)
    if x.ndim != 3 or x.shape[1:] != labels.shape:
        raise ValueError(f"logits {x.shape} do not match labels {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= x.shape[0]):
        raise ValueError("label outside the logit channels")
    peak = x.max(axis=0)
    lse = peak + np.log(np.exp(x - peak).sum(axis=0))
    picked = np.take_along_axis(x, labels[None], axis=0)[0]
    return float(np.mean(lse - picked))


def l1_common(pred: DistanceMaps, target: DistanceMaps) -> float:
    """Mean absolute distance error over the 4 channels of valid cells."""
    if pred.data.shape != target.data.shape:
        raise ValueError(f"distance map shapes differ: {pred.data.shape} vs {target.data.shape}")
    if pred.stride != target.stride:
        raise ValueError(f"distance map strides differ: {pred.stride} vs {target.stride}")
    if not np.array_equal(pred.valid_mask, target.valid_mask):
        raise ValueError("valid masks differ")
    mask = np.asarray(target.valid_mask, dtype=bool)
    if not mask.any():
        return 0.0
    diff = np.abs(pred.data[:, mask].astype(np.float64) - target.data[:, mask].astype(np.float64))
    return float(np.mean(diff))


def bce_terms(scores: np.ndarray, targets: np.ndarray, weights: np.ndarray | float = 1.0) -> np.ndarray:
    """Per-cell stabilised BCE-with-logits: max(x,0) - x*y + log1p(exp(-|x|))."""
    x = np.asarray(scores, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    return weights * (np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x))))


def bce_prob(pred: CenterProbMap | np.ndarray, target: CenterProbMap | np.ndarray,
             weights: np.ndarray | float = 1.0) -> float:
    """Mean binary cross-entropy of raw scores ``pred`` against 0/1 ``target``."""
    x, y = _data(pred), _data(target)
    if x.shape != y.shape:
        raise ValueError(f"center map shapes differ: {x.shape} vs {y.shape}")
    return float(np.mean(bce_terms(x, y, weights)))


def prob_to_score(p: np.ndarray) -> np.ndarray:
    """Invert the sigmoid on stored probabilities, clipped to +-SCORE_CLIP."""
    lo = 1.0 / (1.0 + np.exp(SCORE_CLIP))
    p = np.clip(np.asarray(p, dtype=np.float64), lo, 1.0 - lo)
    return np.log(p) - np.log1p(-p)


def total_loss(components: tuple[float, float, float], w: LossWeights = LossWeights()) -> LossReport:
    l_cls, l_common, l_prob = (float(c) for c in components)
    if min(l_cls, l_common, l_prob) < 0:
        raise ValueError("loss components must be non-negative")
    return LossReport(l_cls, l_common, l_prob, w.alpha * l_cls + w.beta * l_common + w.gamma * l_prob)


def bundle_losses(pred, target, w: LossWeights = LossWeights()) -> LossReport:
    """Score a prediction bundle against a target bundle.

    The target bundle's argmax labels and 0/1 center maps are the ground truth;
    the prediction's center probabilities are converted back to raw scores.
    """
    labels = np.argmax(target.logits.data, axis=0)
    pred_dist = pred.distances
    if not np.array_equal(pred_dist.valid_mask, target.distances.valid_mask):
        pred_dist = DistanceMaps(pred_dist.data, pred_dist.stride, target.distances.valid_mask)
    return total_loss(
        (
            ce_loss(pred.logits, labels),
            l1_common(pred_dist, target.distances),
            bce_prob(prob_to_score(pred.center_prob.data), (target.center_prob.data >= 0.5).astype(np.float64)),
        ),
        w,
    )
