"""Seeded degradation of ideal predictions for robustness sweeps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from supportseg.targets import CenterProbMap, DistanceMaps, PredictionBundle, SemanticLogits

POSITIVE_LEVEL = 0.5


@dataclass(frozen=True)
class NoiseConfig:
    label_flip_rate: float = 0.0
    distance_sigma: float = 0.0
    center_dropout: float = 0.0
    center_false_rate: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        for name in ("label_flip_rate", "center_dropout", "center_false_rate"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name}={v} must be in [0, 1]")
        if self.distance_sigma < 0:
            raise ValueError("distance_sigma must be >= 0")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")

    @property
    def is_identity(self) -> bool:
        return not (self.label_flip_rate or self.distance_sigma or self.center_dropout or self.center_false_rate)


def corrupt(bundle: PredictionBundle, n: NoiseConfig) -> PredictionBundle:
    """Return a degraded copy of ``bundle``; the input is left untouched.

    Each noise source draws from its own child stream of the seed, so turning
    one source on or off does not change what the others draw.
    """
    out = bundle.copy()
    if n.is_identity:
        return out
    flip_rng, dist_rng, drop_rng, false_rng = (
        np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(n.rng_seed).spawn(4)
    )

    logits = out.logits.data
    n_classes, h, w = logits.shape
    if n.label_flip_rate and n_classes > 1:
        hit = flip_rng.random((h, w)) < n.label_flip_rate
        rows, cols = np.nonzero(hit)
        true = np.argmax(logits[:, rows, cols], axis=0)
        # uniform over the C-1 wrong classes
        wrong = flip_rng.integers(0, n_classes - 1, size=rows.size)
        wrong = wrong + (wrong >= true)
        peak = logits[:, rows, cols].max(axis=0)
        logits[wrong, rows, cols] = peak + 1

    if n.distance_sigma:
        d = out.distances.data
        noise = dist_rng.normal(0.0, n.distance_sigma, size=d.shape)
        out.distances.data = np.maximum(d + noise, 0.0).astype(np.float32)

    center = out.center_prob.data
    positive = center >= POSITIVE_LEVEL
    if n.center_dropout:
        drop = positive & (drop_rng.random(center.shape) < n.center_dropout)
        center[drop] = 0.0
    if n.center_false_rate:
        draw = false_rng.random(center.shape)
        level = false_rng.uniform(POSITIVE_LEVEL, 1.0, size=center.shape).astype(np.float32)
        false = ~positive & (draw < n.center_false_rate)
        center[false] = level[false]

    return PredictionBundle(
        SemanticLogits(logits, out.logits.stride),
        DistanceMaps(out.distances.data, out.distances.stride, out.distances.valid_mask),
        CenterProbMap(center, out.center_prob.stride),
        out.class_table,
    )
