"""Supervision targets: one-hot logits, border-distance maps, center maps.

Targets live on a working grid subsampled by ``stride``. Cell ``(i, j)`` is
represented by the full-resolution pixel ``(i * stride, j * stride)``, and all
boxes stay in full-resolution pixel units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from supportseg.scene import ClassTable, InstanceScene, scene_from_maps

LOGIT_MARGIN = 10.0


def logit_margin(n_classes: int) -> float:
    """One-hot height giving cross-entropy log(1 + e^-10) at the target for any class count."""
    return LOGIT_MARGIN + math.log(max(n_classes - 1, 1))


class StrideError(ValueError):
    pass


@dataclass
class DistanceMaps:
    data: np.ndarray  # (4, H', W') float32: left, top, right, bottom in stride units
    stride: int
    valid_mask: np.ndarray  # (H', W') bool

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[1:]


@dataclass
class CenterProbMap:
    data: np.ndarray  # (n_thing_classes, H', W') float32
    stride: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[1:]


@dataclass
class SemanticLogits:
    data: np.ndarray  # (C, H', W') float32
    stride: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[1:]


@dataclass
class PredictionBundle:
    logits: SemanticLogits
    distances: DistanceMaps
    center_prob: CenterProbMap
    class_table: ClassTable

    @property
    def stride(self) -> int:
        return self.logits.stride

    @property
    def shape(self) -> tuple[int, int]:
        return self.logits.shape

    def check(self) -> None:
        """Raise ``ValueError`` if the maps disagree on grid or channel layout."""
        shapes = {
            "logits": tuple(self.logits.shape),
            "distances": tuple(self.distances.shape),
            "valid_mask": tuple(self.distances.valid_mask.shape),
            "center_prob": tuple(self.center_prob.shape),
        }
        if len(set(shapes.values())) != 1:
            detail = ", ".join(f"{k}={v[0]}x{v[1]}" for k, v in shapes.items())
            raise ValueError(f"bundle map dimensions disagree: {detail}")
        strides = {self.logits.stride, self.distances.stride, self.center_prob.stride}
        if len(strides) != 1:
            raise ValueError(f"bundle strides disagree: {sorted(strides)}")
        if self.logits.data.shape[0] != len(self.class_table):
            raise ValueError(
                f"logits have {self.logits.data.shape[0]} channels for {len(self.class_table)} classes")
        if self.distances.data.shape[0] != 4:
            raise ValueError("distance maps need exactly 4 channels")
        n_thing = max(len(self.class_table.thing_ids), 1)
        if self.center_prob.data.shape[0] != n_thing:
            raise ValueError(
                f"center map has {self.center_prob.data.shape[0]} channels for {n_thing} thing classes")

    def copy(self) -> "PredictionBundle":
        return PredictionBundle(
            SemanticLogits(self.logits.data.copy(), self.logits.stride),
            DistanceMaps(self.distances.data.copy(), self.distances.stride, self.distances.valid_mask.copy()),
            CenterProbMap(self.center_prob.data.copy(), self.center_prob.stride),
            self.class_table,
        )


def _check_stride(height: int, width: int, stride: int) -> None:
    if stride <= 0 or height % stride or width % stride:
        raise StrideError(f"stride {stride} does not divide image size {height}x{width}")


def subsample_labels(s: InstanceScene, stride: int) -> np.ndarray:
    """Pick the top-left label of every ``stride x stride`` block."""
    _check_stride(s.height, s.width, stride)
    return np.ascontiguousarray(s.semantic_map[::stride, ::stride])


def downsample_scene(s: InstanceScene, stride: int) -> InstanceScene:
    """The scene as seen on the working grid; instance ids are kept."""
    if stride == 1:
        return s
    _check_stride(s.height, s.width, stride)
    return scene_from_maps(s.semantic_map[::stride, ::stride], s.instance_map[::stride, ::stride], s.class_table)


def center_subbox(left: int, top: int, right: int, bottom: int, fraction: float) -> tuple[int, int, int, int]:
    """Central sub-box scaled by ``fraction`` per side, at least one pixel."""
    bw, bh = right - left, bottom - top
    cw = max(1, int(bw * fraction))
    ch = max(1, int(bh * fraction))
    c0 = left + (bw - cw) // 2
    r0 = top + (bh - ch) // 2
    return c0, r0, c0 + cw, r0 + ch


def make_targets(s: InstanceScene, stride: int = 1, center_fraction: float = 0.2) -> PredictionBundle:
    """Encode ``s`` into ideal head outputs on the ``stride`` working grid.

    Center cells are the instance's own cells whose representative pixel lies
    in the central sub-box; an instance whose sub-box is hidden (occlusion or
    subsampling) falls back to its cell nearest the box center, so every
    instance visible on the grid gets at least one positive cell.
    """
    _check_stride(s.height, s.width, stride)
    if not 0 < center_fraction <= 1:
        raise ValueError("center_fraction must be in (0, 1]")
    table = s.class_table
    labels = subsample_labels(s, stride)
    inst = np.asarray(s.instance_map[::stride, ::stride], dtype=np.int64)
    hp, wp = labels.shape
    n_classes = len(table)

    logits = np.zeros((n_classes, hp, wp), dtype=np.float32)
    np.put_along_axis(logits, labels[None].astype(np.int64), logit_margin(n_classes), axis=0)

    n_ids = int(s.instance_map.max()) + 1 if s.instance_map.size else 1
    lut = np.zeros((n_ids, 4), dtype=np.float64)
    for rec in s.instances:
        lut[rec.instance_id] = rec.box.as_tuple()

    valid = inst != 0
    rows_full = np.arange(hp, dtype=np.float64)[:, None] * stride
    cols_full = np.arange(wp, dtype=np.float64)[None, :] * stride
    box = lut[inst]  # (H', W', 4)
    dist = np.stack([
        cols_full - box[..., 0],
        rows_full - box[..., 1],
        box[..., 2] - 1 - cols_full,
        box[..., 3] - 1 - rows_full,
    ]) / stride
    dist = np.where(valid[None], dist, 0.0).astype(np.float32)

    thing_ids = table.thing_ids
    center = np.zeros((max(len(thing_ids), 1), hp, wp), dtype=np.float32)
    rr = np.arange(hp)[:, None] * stride
    cc = np.arange(wp)[None, :] * stride
    for rec in s.instances:
        own = inst == rec.instance_id
        if not own.any():
            continue
        left, top, right, bottom = (int(v) for v in rec.box.as_tuple())
        c0, r0, c1, r1 = center_subbox(left, top, right, bottom, center_fraction)
        pos = own & (rr >= r0) & (rr < r1) & (cc >= c0) & (cc < c1)
        if not pos.any():
            cy, cx = (top + bottom) / 2, (left + right) / 2
            d2 = np.where(own, (rr + 0.5 - cy) ** 2 + (cc + 0.5 - cx) ** 2, np.inf)
            pos = np.zeros_like(own)
            pos.flat[int(np.argmin(d2))] = True
        center[table.thing_channel(rec.class_id)][pos] = 1.0

    return PredictionBundle(
        SemanticLogits(logits, stride),
        DistanceMaps(dist, stride, valid),
        CenterProbMap(center, stride),
        table,
    )
