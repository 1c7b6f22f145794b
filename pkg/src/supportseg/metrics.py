"""Panoptic quality and mask average precision."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from supportseg.cluster import PanopticMap
from supportseg.scene import THING, ClassTable, InstanceScene

PQ_MATCH_IOU = 0.5
AP_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


class MissingScoreError(ValueError):
    pass


@dataclass(frozen=True)
class ClassPQ:
    pq: float
    sq: float
    rq: float
    tp: int
    fp: int
    fn: int
    iou_sum: float


@dataclass
class PQReport:
    per_class: dict[int, ClassPQ]
    aggregates: dict[str, dict[str, float]]
    class_table: ClassTable

    @property
    def pq(self) -> float:
        return self.aggregates["all"]["pq"]

    def kv_lines(self) -> list[str]:
        lines = []
        for name, agg in self.aggregates.items():
            for k in ("pq", "sq", "rq"):
                lines.append(f"{name}.{k}={_fmt(agg[k])}")
            lines.append(f"{name}.n={agg['n']}")
        for c, r in sorted(self.per_class.items()):
            tag = f"class.{self.class_table.name(c)}"
            lines += [f"{tag}.pq={_fmt(r.pq)}", f"{tag}.sq={_fmt(r.sq)}", f"{tag}.rq={_fmt(r.rq)}",
                      f"{tag}.tp={r.tp}", f"{tag}.fp={r.fp}", f"{tag}.fn={r.fn}"]
        return lines

    def table(self) -> str:
        rows = [f"{'class':<12}{'kind':<7}{'PQ':>8}{'SQ':>8}{'RQ':>8}{'TP':>6}{'FP':>6}{'FN':>6}"]
        for c, r in sorted(self.per_class.items()):
            rows.append(f"{self.class_table.name(c):<12}{self.class_table.kind(c):<7}"
                        f"{_fmt(r.pq):>8}{_fmt(r.sq):>8}{_fmt(r.rq):>8}{r.tp:>6}{r.fp:>6}{r.fn:>6}")
        for name, agg in self.aggregates.items():
            rows.append(f"{name:<12}{'':<7}{_fmt(agg['pq']):>8}{_fmt(agg['sq']):>8}{_fmt(agg['rq']):>8}")
        return "\n".join(rows) + "\n"


@dataclass
class APReport:
    per_class: dict[int, tuple[float, float]]  # class id -> (ap, ap50)
    map: float
    map50: float
    per_threshold: dict[int, list[float]] = field(default_factory=dict)

    def kv_lines(self, class_table: ClassTable) -> list[str]:
        lines = [f"map={_fmt(self.map)}", f"map50={_fmt(self.map50)}"]
        for c, (ap, ap50) in sorted(self.per_class.items()):
            lines += [f"class.{class_table.name(c)}.ap={_fmt(ap)}", f"class.{class_table.name(c)}.ap50={_fmt(ap50)}"]
        return lines


def _fmt(v: float) -> str:
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.4f}"


def _segment_keys(p: PanopticMap, thing: np.ndarray) -> np.ndarray:
    """Segment key per pixel, -1 where the pixel belongs to no segment."""
    cls = p.class_map.astype(np.int64)
    inst = p.instance_map.astype(np.int64)
    key = cls << 16 | inst
    none = (cls == 0) | (thing[cls] & (inst == 0))
    return np.where(none, -1, key)


def panoptic_quality(pred: PanopticMap, gt: PanopticMap, class_table: ClassTable) -> PQReport:
    """PQ, SQ and RQ with the usual unique matching at IoU > 0.5.

    Ground-truth void pixels are dropped from both sides before IoU. A
    predicted segment that lies mostly on void is neither matched nor counted
    as a false positive. Thing pixels predicted without an instance belong to
    no segment, so they only lower the IoU of the ground truth they cover.
    """
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape[0]}x{pred.shape[1]} vs ground truth {gt.shape[0]}x{gt.shape[1]}")
    n_classes = len(class_table)
    for name, p in (("prediction", pred), ("ground truth", gt)):
        if p.class_map.size and int(p.class_map.max()) >= n_classes:
            raise ValueError(f"{name} uses class ids outside the class table")
    thing = class_table.thing_mask()
    gk = _segment_keys(gt, thing).ravel()
    pk = _segment_keys(pred, thing).ravel()

    g_ids, g_area = np.unique(gk[gk >= 0], return_counts=True)
    p_ids, p_area = np.unique(pk[pk >= 0], return_counts=True)
    gt_area = dict(zip(g_ids.tolist(), g_area.tolist()))
    pred_area = dict(zip(p_ids.tolist(), p_area.tolist()))
    void_ids, void_cnt = np.unique(pk[(gk < 0) & (pk >= 0)], return_counts=True)
    pred_void = dict(zip(void_ids.tolist(), void_cnt.tolist()))

    both = (gk >= 0) & (pk >= 0)
    pair_ids, pair_cnt = np.unique(gk[both] << 32 | pk[both], return_counts=True)

    iou_sum = np.zeros(n_classes)
    tp = np.zeros(n_classes, dtype=np.int64)
    matched_g: set[int] = set()
    matched_p: set[int] = set()
    for pair, inter in zip(pair_ids.tolist(), pair_cnt.tolist()):
        g, p = pair >> 32, pair & 0xFFFFFFFF
        if g >> 16 != p >> 16 or g in matched_g or p in matched_p:
            continue
        union = pred_area[p] + gt_area[g] - inter - pred_void.get(p, 0)
        v = inter / union
        if v > PQ_MATCH_IOU:
            matched_g.add(g)
            matched_p.add(p)
            iou_sum[g >> 16] += v
            tp[g >> 16] += 1

    fn = np.zeros(n_classes, dtype=np.int64)
    fp = np.zeros(n_classes, dtype=np.int64)
    for g in gt_area:
        if g not in matched_g:
            fn[g >> 16] += 1
    for p, area in pred_area.items():
        if p in matched_p or pred_void.get(p, 0) / area > 0.5:
            continue
        fp[p >> 16] += 1

    per_class: dict[int, ClassPQ] = {}
    for c in range(1, n_classes):
        if tp[c] + fp[c] + fn[c] == 0:
            continue
        denom = tp[c] + 0.5 * fp[c] + 0.5 * fn[c]
        sq = iou_sum[c] / tp[c] if tp[c] else 0.0
        rq = tp[c] / denom
        per_class[c] = ClassPQ(float(iou_sum[c] / denom), float(sq), float(rq),
                               int(tp[c]), int(fp[c]), int(fn[c]), float(iou_sum[c]))

    aggregates = {}
    for name, pick in (("all", lambda c: True),
                       ("thing", lambda c: class_table.kind(c) == THING),
                       ("stuff", lambda c: class_table.kind(c) != THING)):
        chosen = [r for c, r in per_class.items() if pick(c)]
        if chosen:
            aggregates[name] = {k: float(np.mean([getattr(r, k) for r in chosen])) for k in ("pq", "sq", "rq")}
        else:
            aggregates[name] = {"pq": math.nan, "sq": math.nan, "rq": math.nan}
        aggregates[name]["n"] = len(chosen)
    return PQReport(per_class, aggregates, class_table)


@dataclass(frozen=True)
class ScoredSegment:
    class_id: int
    mask: np.ndarray
    score: float


def scored_segments(p: PanopticMap, scores: dict[int, float]) -> list[ScoredSegment]:
    """One scored mask per predicted instance, in instance id order."""
    out = []
    for seg in p.segments:
        if seg.instance_id == 0:
            continue
        if seg.instance_id not in scores:
            raise MissingScoreError(f"instance {seg.instance_id} has no score")
        out.append(ScoredSegment(seg.class_id, p.instance_map == seg.instance_id, scores[seg.instance_id]))
    return out


def ap_from_matches(tp_flags: np.ndarray, n_gt: int) -> float:
    """All-point interpolated AP of a score-ordered TP/FP sequence."""
    if n_gt == 0:
        return math.nan
    if len(tp_flags) == 0:
        return 0.0
    tp = np.cumsum(tp_flags, dtype=np.float64)
    fp = np.cumsum(~tp_flags, dtype=np.float64)
    recall = np.concatenate(([0.0], tp / n_gt))
    precision = np.concatenate(([1.0], tp / (tp + fp)))
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    return float(np.sum((recall[1:] - recall[:-1]) * envelope[1:]))


def _iou_matrix(preds: list[ScoredSegment], gt_inst: np.ndarray, gt_ids: list[int], gt_area: np.ndarray) -> np.ndarray:
    n_ids = int(gt_inst.max()) + 1 if gt_inst.size else 1
    col = np.full(n_ids, -1, dtype=np.int64)
    col[gt_ids] = np.arange(len(gt_ids))
    out = np.zeros((len(preds), len(gt_ids)))
    for i, sp in enumerate(preds):
        inter = np.bincount(gt_inst[sp.mask], minlength=n_ids)
        area = int(np.count_nonzero(sp.mask))
        hit = inter[gt_ids]
        out[i] = hit / (area + gt_area - hit)
    return out


def average_precision(preds: list[ScoredSegment], gt: InstanceScene,
                      thresholds: tuple[float, ...] = AP_THRESHOLDS) -> APReport:
    """Per-class mask AP pooled over the whole set of predictions.

    Predictions are ranked by descending score and greedily matched to the
    unmatched ground-truth instance of highest IoU at or above each threshold.
    Classes without ground-truth instances are left out of the means.
    """
    for sp in preds:
        if sp.score is None or not math.isfinite(sp.score):
            raise MissingScoreError(f"prediction of class {sp.class_id} has no usable score")
        if sp.mask.shape != gt.instance_map.shape:
            raise ValueError(f"mask {sp.mask.shape} vs ground truth {gt.instance_map.shape}")
    gt_inst = np.asarray(gt.instance_map, dtype=np.int64)
    per_class: dict[int, tuple[float, float]] = {}
    per_threshold: dict[int, list[float]] = {}
    for c in gt.class_table.thing_ids:
        recs = [r for r in gt.instances if r.class_id == c]
        if not recs:
            continue
        gt_ids = [r.instance_id for r in recs]
        gt_area = np.array([r.pixel_count for r in recs], dtype=np.float64)
        cp = [sp for sp in preds if sp.class_id == c]
        order = sorted(range(len(cp)), key=lambda i: -cp[i].score)
        cp = [cp[i] for i in order]
        ious = _iou_matrix(cp, gt_inst, gt_ids, gt_area)
        aps = []
        for t in thresholds:
            free = np.ones(len(gt_ids), dtype=bool)
            flags = np.zeros(len(cp), dtype=bool)
            for i in range(len(cp)):
                cand = np.where(free & (ious[i] >= t), ious[i], -1.0)
                j = int(np.argmax(cand)) if len(gt_ids) else 0
                if cand.size and cand[j] >= 0:
                    free[j] = False
                    flags[i] = True
            aps.append(ap_from_matches(flags, len(gt_ids)))
        per_threshold[c] = aps
        ap50 = aps[thresholds.index(0.5)] if 0.5 in thresholds else math.nan
        per_class[c] = (float(np.mean(aps)), ap50)
    if per_class:
        m = float(np.mean([v[0] for v in per_class.values()]))
        m50 = float(np.mean([v[1] for v in per_class.values()]))
    else:
        m = m50 = math.nan
    return APReport(per_class, m, m50, per_threshold)
