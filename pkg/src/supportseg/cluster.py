"""Seed extraction, per-pixel box support voting and panoptic merging.

Every thing-labeled pixel decodes its own box from the distance maps and joins
the seed of its class whose box it overlaps best. Because each pixel picks
exactly one seed, the resulting instance masks never overlap and leave no
holes inside a class region.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from supportseg import kernels
from supportseg.geometry import Box, PixelCoord, decode_boxes
from supportseg.scene import ClassTable, InstanceScene, Violation
from supportseg.targets import DistanceMaps, PredictionBundle, SemanticLogits

SUPPORT_BINS = (0, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000)


@dataclass(frozen=True)
class ClusterConfig:
    seed_threshold: float = 0.5
    nms_iou: float = 0.5
    center_tiebreak_margin: float = 0.05
    min_instance_pixels: int = 1
    # require seeds to sit on pixels already labeled with their class
    seed_label_gate: bool = False

    def __post_init__(self) -> None:
        if not 0 < self.seed_threshold < 1:
            raise ValueError("seed_threshold must be in (0, 1)")
        if not 0 < self.nms_iou < 1:
            raise ValueError("nms_iou must be in (0, 1)")
        if self.center_tiebreak_margin < 0:
            raise ValueError("center_tiebreak_margin must be >= 0")
        if self.min_instance_pixels < 1:
            raise ValueError("min_instance_pixels must be >= 1")


@dataclass
class Seed:
    class_id: int
    anchor: PixelCoord
    box: Box
    score: float
    supporter_count: int = 0
    calibrated_box: Box | None = None
    instance_id: int = 0


@dataclass(frozen=True)
class Segment:
    class_id: int
    instance_id: int
    pixel_count: int


@dataclass
class PanopticMap:
    """Per-pixel ``(class_id, instance_id)``; instance 0 means stuff or void."""

    class_map: np.ndarray
    instance_map: np.ndarray
    stride: int = 1

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.class_map.shape)

    @property
    def segments(self) -> list[Segment]:
        """Every ``(class, instance)`` pair present, void excluded, sorted."""
        key = self.class_map.astype(np.int64) << 16 | self.instance_map.astype(np.int64)
        keys, counts = np.unique(key, return_counts=True)
        return [Segment(int(k >> 16), int(k & 0xFFFF), int(n)) for k, n in zip(keys, counts) if k >> 16 != 0]

    def instance_ids(self) -> list[int]:
        ids = np.unique(self.instance_map)
        return [int(i) for i in ids if i != 0]


@dataclass
class PipelineResult:
    panoptic: PanopticMap
    seeds: list[Seed]
    diagnostics: dict = field(default_factory=dict)


def panoptic_from_scene(s: InstanceScene, stride: int = 1) -> PanopticMap:
    return PanopticMap(np.asarray(s.semantic_map, dtype=np.uint16), np.asarray(s.instance_map, dtype=np.uint16), stride)


def validate_panoptic(p: PanopticMap, class_table: ClassTable) -> list[Violation]:
    """Partition checks on a panoptic map."""
    out: list[Violation] = []
    cls, inst = np.asarray(p.class_map), np.asarray(p.instance_map)
    if cls.shape != inst.shape or cls.ndim != 2:
        return [Violation("shape", f"class {cls.shape} vs instance {inst.shape}")]
    if cls.size and int(cls.max()) >= len(class_table):
        r, c = np.argwhere(cls >= len(class_table))[0]
        return [Violation("unknown-class", f"pixel ({r},{c}) has class {cls[r, c]}")]
    bad = np.argwhere((inst != 0) & ~class_table.thing_mask()[cls])
    if len(bad):
        r, c = bad[0]
        out.append(Violation("instance-on-non-thing", f"pixel ({r},{c}) class {cls[r, c]} instance {inst[r, c]}"))
    seen: dict[int, int] = {}
    total = 0
    for seg in p.segments:
        total += seg.pixel_count
        if seg.instance_id == 0:
            continue
        if seg.instance_id in seen:
            out.append(Violation("instance-overlap",
                                 f"instance {seg.instance_id} spans classes {seen[seg.instance_id]} and {seg.class_id}"))
        seen[seg.instance_id] = seg.class_id
    total += int(np.count_nonzero(cls == 0))
    if total != cls.size:
        out.append(Violation("segment-count", f"segments cover {total} of {cls.size} pixels"))
    return out


def argmax_semantics(logits: SemanticLogits | np.ndarray) -> np.ndarray:
    """Per-pixel argmax over classes; ties go to the lowest class id."""
    data = getattr(logits, "data", logits)
    return np.argmax(data, axis=0).astype(np.uint16)


def _grid_boxes(rows: np.ndarray, cols: np.ndarray, distances: DistanceMaps) -> np.ndarray:
    s = distances.stride
    return decode_boxes(rows * s, cols * s, distances.data[:, rows, cols], s)


def extract_seeds(bundle: PredictionBundle, labels: np.ndarray, cfg: ClusterConfig = ClusterConfig()) -> dict[int, list[Seed]]:
    """Threshold the center maps and run greedy NMS per thing class.

    Returns seeds keyed by class id, each list sorted by descending score with
    ties broken by row-major anchor order.
    """
    out: dict[int, list[Seed]] = {}
    table = bundle.class_table
    for c in table.thing_ids:
        prob = bundle.center_prob.data[table.thing_channel(c)]
        cand = prob >= cfg.seed_threshold
        if cfg.seed_label_gate:
            cand &= labels == c
        rows, cols = np.nonzero(cand)
        if rows.size == 0:
            out[c] = []
            continue
        scores = prob[rows, cols].astype(np.float64)
        order = np.argsort(-scores, kind="stable")
        rows, cols, scores = rows[order], cols[order], scores[order]
        boxes = _grid_boxes(rows, cols, bundle.distances)
        keep = kernels.greedy_nms(boxes, cfg.nms_iou)
        out[c] = [
            Seed(c, PixelCoord(int(rows[i]), int(cols[i])), Box.from_array(boxes[i]), float(scores[i]))
            for i in keep
        ]
    return out


def _vote_class(labels: np.ndarray, distances: DistanceMaps, c: int, seeds: list[Seed], margin: float):
    rows, cols = np.nonzero(labels == c)
    if not seeds or rows.size == 0:
        return rows, cols, np.full(rows.size, -1, dtype=np.int64)
    seed_boxes = np.array([s.box.as_tuple() for s in seeds], dtype=np.float64)
    return rows, cols, kernels.vote_assign(_grid_boxes(rows, cols, distances), seed_boxes, margin)


def assign_instances(
    labels: np.ndarray,
    distances: DistanceMaps,
    seeds: dict[int, list[Seed]],
    cfg: ClusterConfig = ClusterConfig(),
    workers: int = 1,
) -> np.ndarray:
    """Vote every thing pixel onto a seed of its own class.

    Returns a provisional instance map: seeds are numbered 1..N in ascending
    class id, then list order. Pixels of a class without seeds get 0.
    ``supporter_count`` and ``calibrated_box`` are filled on every seed.
    """
    classes = sorted(seeds)
    jobs = [(labels, distances, c, seeds[c], cfg.center_tiebreak_margin) for c in classes]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            votes = list(pool.map(lambda a: _vote_class(*a), jobs))
    else:
        votes = [_vote_class(*a) for a in jobs]

    provisional = np.zeros(labels.shape, dtype=np.int64)
    base = 0
    flat: list[Seed] = []
    for c, (rows, cols, idx) in zip(classes, votes):
        hit = idx >= 0
        provisional[rows[hit], cols[hit]] = base + 1 + idx[hit]
        base += len(seeds[c])
        flat.extend(seeds[c])

    boxes, counts = kernels.tight_boxes(provisional, base + 1)
    s = distances.stride
    for k, seed in enumerate(flat, start=1):
        seed.supporter_count = int(counts[k])
        seed.calibrated_box = Box.from_array(boxes[k] * s) if counts[k] else None
    return provisional


def prune_and_merge(
    provisional: np.ndarray,
    seeds: dict[int, list[Seed]],
    labels: np.ndarray,
    cfg: ClusterConfig = ClusterConfig(),
    stride: int = 1,
) -> PanopticMap:
    """Drop under-supported seeds and renumber survivors 1..k by score.

    Pixels of a dropped seed keep their class with instance id 0.
    """
    flat = [s for c in sorted(seeds) for s in seeds[c]]
    survivors = [
        (k, s) for k, s in enumerate(flat, start=1) if s.supporter_count >= cfg.min_instance_pixels
    ]
    ranked = sorted(survivors, key=lambda ks: (-ks[1].score, ks[1].class_id, ks[0]))
    if len(ranked) > 0xFFFF:
        raise ValueError("more than 65535 instances")
    lut = np.zeros(len(flat) + 1, dtype=np.uint16)
    for s in flat:
        s.instance_id = 0
    for new_id, (k, s) in enumerate(ranked, start=1):
        lut[k] = new_id
        s.instance_id = new_id
    return PanopticMap(np.asarray(labels, dtype=np.uint16), lut[provisional], stride)


def _histogram(counts: list[int]) -> list[int]:
    edges = list(SUPPORT_BINS) + [np.inf]
    hist, _ = np.histogram(np.asarray(counts, dtype=np.float64), bins=edges)
    return [int(v) for v in hist]


def run_pipeline(bundle: PredictionBundle, cfg: ClusterConfig = ClusterConfig(), workers: int = 1) -> PipelineResult:
    bundle.check()
    labels = argmax_semantics(bundle.logits)
    seeds = extract_seeds(bundle, labels, cfg)
    provisional = assign_instances(labels, bundle.distances, seeds, cfg, workers=workers)
    panoptic = prune_and_merge(provisional, seeds, labels, cfg, stride=bundle.stride)

    diagnostics: dict = {"backend": kernels.BACKEND, "classes": {}}
    for c in sorted(seeds):
        support = [s.supporter_count for s in seeds[c]]
        diagnostics["classes"][c] = {
            "seeds": len(seeds[c]),
            "pruned": sum(1 for s in seeds[c] if s.instance_id == 0),
            "support_hist": _histogram(support),
        }
    diagnostics["seeds"] = sum(d["seeds"] for d in diagnostics["classes"].values())
    diagnostics["pruned"] = sum(d["pruned"] for d in diagnostics["classes"].values())
    diagnostics["instances"] = diagnostics["seeds"] - diagnostics["pruned"]
    flat = [s for c in sorted(seeds) for s in seeds[c]]
    return PipelineResult(panoptic, flat, diagnostics)


def instance_scores(seeds: list[Seed]) -> dict[int, float]:
    """Instance id to confidence (the seed's center probability)."""
    return {s.instance_id: s.score for s in seeds if s.instance_id}
