# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Semantics match ``_pykernels`` exactly."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


cdef inline double _iou(const double[:, ::1] a, Py_ssize_t i,
                        const double[:, ::1] b, Py_ssize_t j) noexcept nogil:
    cdef double iw = min(a[i, 2], b[j, 2]) - max(a[i, 0], b[j, 0])
    cdef double ih = min(a[i, 3], b[j, 3]) - max(a[i, 1], b[j, 1])
    cdef double area_a, area_b, inter
    if iw <= 0 or ih <= 0:
        return 0.0
    area_a = (a[i, 2] - a[i, 0]) * (a[i, 3] - a[i, 1])
    area_b = (b[j, 2] - b[j, 0]) * (b[j, 3] - b[j, 1])
    inter = iw * ih
    return inter / ((area_a + area_b) - inter)


def vote_assign(pixel_boxes, seed_boxes, double margin):
    cdef const double[:, ::1] pb = np.ascontiguousarray(pixel_boxes, dtype=np.float64)
    cdef const double[:, ::1] sb = np.ascontiguousarray(seed_boxes, dtype=np.float64)
    cdef Py_ssize_t n = pb.shape[0]
    cdef Py_ssize_t k = sb.shape[0]
    out_arr = np.full(n, -1, dtype=np.int64)
    if n == 0 or k == 0:
        return out_arr
    cdef cnp.int64_t[::1] out = out_arr
    scratch_arr = np.empty(k, dtype=np.float64)
    cdef double[::1] ious = scratch_arr
    cdef Py_ssize_t i, j, best, n_near
    cdef double top, v, pcx, pcy, dx, dy, dist, best_dist
    with nogil:
        for i in range(n):
            best = 0
            top = -1.0
            for j in range(k):
                v = _iou(pb, i, sb, j)
                ious[j] = v
                if v > top:
                    top = v
                    best = j
            if margin > 0 and k > 1:
                n_near = 0
                for j in range(k):
                    if top - ious[j] < margin:
                        n_near += 1
                if n_near >= 2:
                    pcx = (pb[i, 0] + pb[i, 2]) * 0.5
                    pcy = (pb[i, 1] + pb[i, 3]) * 0.5
                    best_dist = INFINITY
                    for j in range(k):
                        if top - ious[j] < margin:
                            dx = pcx - (sb[j, 0] + sb[j, 2]) * 0.5
                            dy = pcy - (sb[j, 1] + sb[j, 3]) * 0.5
                            dist = dx * dx + dy * dy
                            if dist < best_dist:
                                best_dist = dist
                                best = j
            out[i] = best
    return out_arr


def greedy_nms(boxes, double threshold):
    cdef const double[:, ::1] b = np.ascontiguousarray(boxes, dtype=np.float64)
    cdef Py_ssize_t n = b.shape[0]
    keep_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] keep = keep_arr
    cdef Py_ssize_t i, m, n_keep = 0
    cdef bint ok
    with nogil:
        for i in range(n):
            ok = True
            for m in range(n_keep):
                if _iou(b, keep[m], b, i) > threshold:
                    ok = False
                    break
            if ok:
                keep[n_keep] = i
                n_keep += 1
    return keep_arr[:n_keep].copy()


def tight_boxes(labels, Py_ssize_t n_labels):
    cdef const cnp.int64_t[:, ::1] lab = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t h = lab.shape[0]
    cdef Py_ssize_t w = lab.shape[1]
    boxes_arr = np.zeros((n_labels, 4), dtype=np.int64)
    counts_arr = np.zeros(n_labels, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] boxes = boxes_arr
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef Py_ssize_t r, c
    cdef cnp.int64_t v
    cdef bint bad = False
    with nogil:
        for r in range(h):
            for c in range(w):
                v = lab[r, c]
                if v < 0 or v >= n_labels:
                    bad = True
                    break
                if counts[v] == 0:
                    boxes[v, 0] = c
                    boxes[v, 1] = r
                    boxes[v, 2] = c + 1
                    boxes[v, 3] = r + 1
                else:
                    if c < boxes[v, 0]:
                        boxes[v, 0] = c
                    if c + 1 > boxes[v, 2]:
                        boxes[v, 2] = c + 1
                    boxes[v, 3] = r + 1
                counts[v] += 1
            if bad:
                break
    if bad:
        raise ValueError("label out of range")
    return boxes_arr, counts_arr
