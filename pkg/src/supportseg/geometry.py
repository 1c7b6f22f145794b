"""Pixel coordinates, axis-aligned boxes and border-distance decoding.

Boxes use half-open pixel intervals ``[left, right) x [top, bottom)``. A pixel
at ``(row, col)`` whose four border distances are all zero decodes to the unit
box ``(col, row, col + 1, row + 1)``, so encoding a pixel-aligned box and
decoding it again is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class PixelCoord(NamedTuple):
    row: int
    col: int


class DistanceVector(NamedTuple):
    """Distances from a pixel to the left, top, right and bottom box borders."""

    d_left: float
    d_top: float
    d_right: float
    d_bottom: float


@dataclass(frozen=True)
class Box:
    left: float
    top: float
    right: float
    bottom: float

    def __post_init__(self) -> None:
        if not (self.left < self.right and self.top < self.bottom):
            raise ValueError(f"degenerate box {self.as_tuple()}")

    @property
    def width(self) -> float:
        return self.right - self.left

    @property
    def height(self) -> float:
        return self.bottom - self.top

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.left, self.top, self.right, self.bottom)

    @classmethod
    def from_array(cls, values) -> "Box":
        left, top, right, bottom = (float(v) for v in values)
        return cls(left, top, right, bottom)


def box_from_distances(u: PixelCoord, d: DistanceVector, stride: int = 1) -> Box:
    """Decode the box a pixel predicts from its four border distances.

    ``d`` is expressed in units of ``stride`` pixels; ``u`` is a full-resolution
    pixel coordinate. The result may extend past the image bounds.
    """
    if stride <= 0:
        raise ValueError("stride must be positive")
    if min(d) < 0:
        raise ValueError(f"negative border distance in {tuple(d)}")
    row, col = u
    d_left, d_top, d_right, d_bottom = d
    return Box(
        col - d_left * stride,
        row - d_top * stride,
        col + d_right * stride + 1,
        row + d_bottom * stride + 1,
    )


def iou(a: Box, b: Box) -> float:
    inter_w = min(a.right, b.right) - max(a.left, b.left)
    inter_h = min(a.bottom, b.bottom) - max(a.top, b.top)
    if inter_w <= 0 or inter_h <= 0:
        return 0.0
    inter = inter_w * inter_h
    return inter / (a.area + b.area - inter)


def center_of(b: Box) -> tuple[float, float]:
    """Return ``(x, y)``, the geometric center of ``b``."""
    return ((b.left + b.right) / 2, (b.top + b.bottom) / 2)


def decode_boxes(rows: np.ndarray, cols: np.ndarray, distances: np.ndarray, stride: int) -> np.ndarray:
    """Vectorised :func:`box_from_distances`.

    Args:
        rows, cols: full-resolution pixel coordinates, shape ``(N,)``.
        distances: shape ``(4, N)`` in left, top, right, bottom order.
        stride: working-grid stride.

    Returns:
        ``(N, 4)`` float64 array of ``left, top, right, bottom``.
    """
    d = np.asarray(distances, dtype=np.float64) * stride
    rows = np.asarray(rows, dtype=np.float64)
    cols = np.asarray(cols, dtype=np.float64)
    out = np.empty((rows.shape[0], 4), dtype=np.float64)
    out[:, 0] = cols - d[0]
    out[:, 1] = rows - d[1]
    out[:, 2] = cols + d[2] + 1.0
    out[:, 3] = rows + d[3] + 1.0
    return out
