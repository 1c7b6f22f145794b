"""Instance and panoptic clustering by per-pixel box support voting."""

from supportseg.geometry import Box, DistanceVector, PixelCoord, box_from_distances, center_of, iou
from supportseg.kernels import BACKEND

__all__ = [
    "BACKEND",
    "Box",
    "DistanceVector",
    "PixelCoord",
    "box_from_distances",
    "center_of",
    "iou",
]

__version__ = "0.1.0"
