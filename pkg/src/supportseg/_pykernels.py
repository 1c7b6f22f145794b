"""Numpy implementations of the hot kernels.

Each function mirrors ``_ckernels.pyx`` operation for operation so that both
backends give bit-identical results.
"""

from __future__ import annotations

import numpy as np

_VOTE_CHUNK = 1 << 15


def _pairwise_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    hit = (iw > 0) & (ih > 0)
    inter = np.where(hit, iw * ih, 0.0)
    union = (area_a[:, None] + area_b[None, :]) - inter
    return np.where(hit, inter / union, 0.0)


def vote_assign(pixel_boxes: np.ndarray, seed_boxes: np.ndarray, margin: float) -> np.ndarray:
    """Index of the seed each pixel box supports; -1 when there are no seeds."""
    pixel_boxes = np.ascontiguousarray(pixel_boxes, dtype=np.float64)
    seed_boxes = np.ascontiguousarray(seed_boxes, dtype=np.float64)
    n = pixel_boxes.shape[0]
    k = seed_boxes.shape[0]
    out = np.full(n, -1, dtype=np.int64)
    if k == 0 or n == 0:
        return out
    scx = (seed_boxes[:, 0] + seed_boxes[:, 2]) * 0.5
    scy = (seed_boxes[:, 1] + seed_boxes[:, 3]) * 0.5
    for start in range(0, n, _VOTE_CHUNK):
        boxes = pixel_boxes[start:start + _VOTE_CHUNK]
        ious = _pairwise_iou(boxes, seed_boxes)
        best = np.argmax(ious, axis=1)
        choice = best.copy()
        if margin > 0 and k > 1:
            top = ious[np.arange(len(best)), best]
            near = (top[:, None] - ious) < margin
            tied = near.sum(axis=1) >= 2
            if tied.any():
                pcx = (boxes[tied, 0] + boxes[tied, 2]) * 0.5
                pcy = (boxes[tied, 1] + boxes[tied, 3]) * 0.5
                dx = pcx[:, None] - scx[None, :]
                dy = pcy[:, None] - scy[None, :]
                dist = dx * dx + dy * dy
                dist = np.where(near[tied], dist, np.inf)
                choice[tied] = np.argmin(dist, axis=1)
        out[start:start + len(best)] = choice
    return out


def greedy_nms(boxes: np.ndarray, threshold: float) -> np.ndarray:
    """Greedy NMS over boxes already sorted by priority; returns kept indices."""
    boxes = np.ascontiguousarray(boxes, dtype=np.float64)
    order = np.arange(boxes.shape[0])
    keep = []
    while order.size > 0:
        i = order[0]
        keep.append(i)
        rest = order[1:]
        if rest.size == 0:
            break
        ious = _pairwise_iou(boxes[i:i + 1], boxes[rest])[0]
        order = rest[ious <= threshold]
    return np.asarray(keep, dtype=np.int64)


def tight_boxes(labels: np.ndarray, n_labels: int) -> tuple[np.ndarray, np.ndarray]:
    """Tight half-open boxes and pixel counts for labels ``0..n_labels-1``.

    Returns ``(boxes, counts)``; ``boxes[i]`` is ``(left, top, right, bottom)``
    and is all zeros for labels with no pixels.
    """
    labels = np.asarray(labels)
    h, w = labels.shape
    flat = labels.ravel().astype(np.int64)
    if flat.size and (flat.min() < 0 or flat.max() >= n_labels):
        raise ValueError("label out of range")
    counts = np.bincount(flat, minlength=n_labels).astype(np.int64)
    rows = np.repeat(np.arange(h, dtype=np.int64), w)
    cols = np.tile(np.arange(w, dtype=np.int64), h)
    big = np.iinfo(np.int64).max
    left = np.full(n_labels, big, dtype=np.int64)
    top = np.full(n_labels, big, dtype=np.int64)
    right = np.full(n_labels, -1, dtype=np.int64)
    bottom = np.full(n_labels, -1, dtype=np.int64)
    np.minimum.at(left, flat, cols)
    np.minimum.at(top, flat, rows)
    np.maximum.at(right, flat, cols)
    np.maximum.at(bottom, flat, rows)
    boxes = np.stack([left, top, right + 1, bottom + 1], axis=1)
    boxes[counts == 0] = 0
    return boxes, counts
