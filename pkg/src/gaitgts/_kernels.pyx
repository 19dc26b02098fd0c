# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pixel kernels; see ``_fallback.py`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil

cnp.import_array()


def accumulate_frames(frames):
    cdef const unsigned char[:, :, ::1] f = np.ascontiguousarray(frames, dtype=np.uint8)
    cdef Py_ssize_t n = f.shape[0], h = f.shape[1], w = f.shape[2]
    cdef Py_ssize_t t, r, c
    # integer counts are exact, so converting once at the end matches the float sums
    occ_n = np.zeros((h, w), dtype=np.uint32)
    mot_n = np.zeros((h, w), dtype=np.uint32)
    cdef unsigned int[:, ::1] occ = occ_n
    cdef unsigned int[:, ::1] mot = mot_n
    with nogil:
        for t in range(n):
            for r in range(h):
                for c in range(w):
                    occ[r, c] += f[t, r, c]
        for t in range(1, n):
            for r in range(h):
                for c in range(w):
                    mot[r, c] += f[t, r, c] != f[t - 1, r, c]
    return occ_n.astype(np.float64), mot_n.astype(np.float64)


cdef inline Py_ssize_t _block_end(const Py_ssize_t[::1] starts, Py_ssize_t i, Py_ssize_t limit) nogil:
    if i + 1 < starts.shape[0] and starts[i + 1] > starts[i]:
        return starts[i + 1]
    if i + 1 < starts.shape[0]:
        return starts[i] + 1
    return limit


def resample_any(src, row_starts, col_starts):
    cdef const unsigned char[:, ::1] s = np.ascontiguousarray(src, dtype=np.uint8)
    cdef const Py_ssize_t[::1] rs = np.ascontiguousarray(row_starts, dtype=np.intp)
    cdef const Py_ssize_t[::1] cs = np.ascontiguousarray(col_starts, dtype=np.intp)
    cdef Py_ssize_t nr = rs.shape[0], nc = cs.shape[0]
    cdef Py_ssize_t h = s.shape[0], w = s.shape[1]
    out = np.zeros((nr, nc), dtype=np.uint8)
    cdef unsigned char[:, ::1] o = out
    cdef Py_ssize_t i, j, r, c, re, ce
    cdef unsigned char m
    for i in range(nr):
        re = _block_end(rs, i, h)
        for j in range(nc):
            ce = _block_end(cs, j, w)
            m = 0
            for r in range(rs[i], re):
                for c in range(cs[j], ce):
                    if s[r, c] > m:
                        m = s[r, c]
            o[i, j] = m
    return out


cdef inline void _clip_box(Py_ssize_t h, Py_ssize_t w, double x_lo, double x_hi,
                           double y_lo, double y_hi, Py_ssize_t* box) nogil:
    box[0] = <Py_ssize_t>floor(y_lo)
    if box[0] < 0:
        box[0] = 0
    box[1] = <Py_ssize_t>ceil(y_hi)
    if box[1] > h - 1:
        box[1] = h - 1
    box[2] = <Py_ssize_t>floor(x_lo)
    if box[2] < 0:
        box[2] = 0
    box[3] = <Py_ssize_t>ceil(x_hi)
    if box[3] > w - 1:
        box[3] = w - 1


def fill_capsule(canvas, double x0, double y0, double x1, double y1, double radius, int value=255):
    cdef unsigned char[:, ::1] cv = canvas
    cdef Py_ssize_t box[4]
    _clip_box(cv.shape[0], cv.shape[1], min(x0, x1) - radius, max(x0, x1) + radius,
              min(y0, y1) - radius, max(y0, y1) + radius, box)
    cdef double dx = x1 - x0, dy = y1 - y0
    cdef double len2 = dx * dx + dy * dy
    cdef double r2 = radius * radius
    cdef double px, py, t, ddx, ddy
    cdef Py_ssize_t r, c
    for r in range(box[0], box[1] + 1):
        py = <double>r
        for c in range(box[2], box[3] + 1):
            px = <double>c
            if len2 > 0.0:
                t = ((px - x0) * dx + (py - y0) * dy) / len2
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
            else:
                t = 0.0
            ddx = px - (x0 + t * dx)
            ddy = py - (y0 + t * dy)
            if ddx * ddx + ddy * ddy <= r2:
                cv[r, c] = value


def fill_ellipse(canvas, double cx, double cy, double ax, double ay, int value=255):
    if ax <= 0.0 or ay <= 0.0:
        return
    cdef unsigned char[:, ::1] cv = canvas
    cdef Py_ssize_t box[4]
    _clip_box(cv.shape[0], cv.shape[1], cx - ax, cx + ax, cy - ay, cy + ay, box)
    cdef double u, v
    cdef Py_ssize_t r, c
    for r in range(box[0], box[1] + 1):
        v = (<double>r - cy) / ay
        for c in range(box[2], box[3] + 1):
            u = (<double>c - cx) / ax
            if u * u + v * v <= 1.0:
                cv[r, c] = value
