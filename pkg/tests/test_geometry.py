import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from supportseg.geometry import Box, DistanceVector, PixelCoord, box_from_distances, center_of, decode_boxes, iou


def raster_iou(a: Box, b: Box) -> float:
    """Count unit cells of integer boxes; independent of the closed-form iou."""
    lo = int(min(a.left, b.left, a.top, b.top))
    hi = int(max(a.right, b.right, a.bottom, b.bottom))
    ys, xs = np.mgrid[lo:hi, lo:hi]

    def cover(box):
        return (xs >= box.left) & (xs < box.right) & (ys >= box.top) & (ys < box.bottom)

    ma, mb = cover(a), cover(b)
    return np.count_nonzero(ma & mb) / np.count_nonzero(ma | mb)


@pytest.mark.parametrize(
    "u, d, stride, expected",
    [
        ((10, 10), (0, 0, 0, 0), 1, (10, 10, 11, 11)),
        ((10, 10), (2, 3, 4, 5), 1, (8, 7, 15, 16)),
        ((4, 4), (1, 1, 1, 1), 8, (-4, -4, 13, 13)),
    ],
)
def test_box_from_distances(u, d, stride, expected):
    assert box_from_distances(PixelCoord(*u), DistanceVector(*d), stride).as_tuple() == expected


def test_box_from_distances_rejects_negative():
    with pytest.raises(ValueError):
        box_from_distances(PixelCoord(0, 0), DistanceVector(-1, 0, 0, 0))


def test_degenerate_box_rejected():
    with pytest.raises(ValueError):
        Box(3, 0, 3, 5)


def test_iou_examples():
    a = Box(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, Box(20, 20, 30, 30)) == 0.0
    b = Box(5, 5, 15, 15)
    assert raster_iou(a, b) == pytest.approx(25 / 175, abs=1e-12)
    assert iou(a, b) == pytest.approx(raster_iou(a, b), abs=1e-12)
    assert iou(a, Box(10, 0, 20, 10)) == 0.0  # touching edges share no cell


@pytest.mark.parametrize(
    "box, expected",
    [((0, 0, 10, 10), (5.0, 5.0)), ((8, 7, 15, 16), (11.5, 11.5)), ((-4, -4, 13, 13), (4.5, 4.5))],
)
def test_center_of(box, expected):
    assert center_of(Box(*box)) == expected


int_boxes = st.tuples(
    st.integers(-20, 20), st.integers(-20, 20), st.integers(1, 15), st.integers(1, 15)
).map(lambda t: Box(t[0], t[1], t[0] + t[2], t[1] + t[3]))

real_boxes = st.tuples(
    st.floats(-50, 50), st.floats(-50, 50), st.floats(0.01, 40), st.floats(0.01, 40)
).map(lambda t: Box(t[0], t[1], t[0] + t[2], t[1] + t[3]))


@given(real_boxes, real_boxes)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0
    assert iou(a, a) == pytest.approx(1.0)


@given(int_boxes, int_boxes)
def test_iou_matches_raster_oracle(a, b):
    assert math.isclose(iou(a, b), raster_iou(a, b), abs_tol=1e-9)


@given(int_boxes, st.data())
def test_encode_decode_round_trip(box, data):
    row = data.draw(st.integers(int(box.top), int(box.bottom) - 1))
    col = data.draw(st.integers(int(box.left), int(box.right) - 1))
    d = DistanceVector(col - box.left, row - box.top, box.right - 1 - col, box.bottom - 1 - row)
    assert box_from_distances(PixelCoord(row, col), d, 1) == box


def test_decode_boxes_matches_scalar():
    rng = np.random.default_rng(0)
    rows = rng.integers(0, 50, 40)
    cols = rng.integers(0, 50, 40)
    d = rng.uniform(0, 6, (4, 40)).astype(np.float32)
    got = decode_boxes(rows * 4, cols * 4, d, 4)
    for i in range(40):
        ref = box_from_distances(PixelCoord(rows[i] * 4, cols[i] * 4), DistanceVector(*map(float, d[:, i])), 4)
        assert tuple(got[i]) == ref.as_tuple()
