"""Pure numpy implementations of the pixel kernels.

Every function here has a compiled twin in ``_kernels.pyx`` that must
produce bit-identical output; the arithmetic is written in the same order
on purpose.
"""
import numpy as np


def accumulate_frames(frames):
    """Return (occupancy sum, absolute frame-difference sum) over axis 0."""
    frames = np.ascontiguousarray(frames, dtype=np.uint8)
    occupancy = frames.sum(axis=0, dtype=np.float64)
    if frames.shape[0] < 2:
        motion = np.zeros(frames.shape[1:], dtype=np.float64)
    else:
        diff = frames[1:] != frames[:-1]
        motion = diff.sum(axis=0, dtype=np.float64)
    return occupancy, motion


def resample_any(src, row_starts, col_starts):
    """Block-max resample with ``np.maximum.reduceat`` semantics on both axes.

    A start index that does not increase selects the single source line at
    that index, so an upsampling index map gives nearest-neighbour output
    and a downsampling map gives any-pooling.
    """
    src = np.ascontiguousarray(src, dtype=np.uint8)
    rows = np.maximum.reduceat(src, np.asarray(row_starts, dtype=np.intp), axis=0)
    return np.maximum.reduceat(rows, np.asarray(col_starts, dtype=np.intp), axis=1)


def _clip_box(canvas, x_lo, x_hi, y_lo, y_hi):
    h, w = canvas.shape
    c0 = max(int(np.floor(x_lo)), 0)
    c1 = min(int(np.ceil(x_hi)), w - 1)
    r0 = max(int(np.floor(y_lo)), 0)
    r1 = min(int(np.ceil(y_hi)), h - 1)
    return r0, r1, c0, c1


def fill_capsule(canvas, x0, y0, x1, y1, radius, value=255):
    """Set every pixel whose centre lies within ``radius`` of segment (x0,y0)-(x1,y1)."""
    r0, r1, c0, c1 = _clip_box(canvas, min(x0, x1) - radius, max(x0, x1) + radius,
                               min(y0, y1) - radius, max(y0, y1) + radius)
    if r0 > r1 or c0 > c1:
        return
    py, px = np.mgrid[r0:r1 + 1, c0:c1 + 1].astype(np.float64)
    dx = x1 - x0
    dy = y1 - y0
    len2 = dx * dx + dy * dy
    if len2 > 0.0:
        t = ((px - x0) * dx + (py - y0) * dy) / len2
        t = np.clip(t, 0.0, 1.0)
    else:
        t = np.zeros_like(px)
    ddx = px - (x0 + t * dx)
    ddy = py - (y0 + t * dy)
    inside = ddx * ddx + ddy * ddy <= radius * radius
    canvas[r0:r1 + 1, c0:c1 + 1][inside] = value


def fill_ellipse(canvas, cx, cy, ax, ay, value=255):
    """Set every pixel whose centre lies inside the axis-aligned ellipse."""
    if ax <= 0.0 or ay <= 0.0:
        return
    r0, r1, c0, c1 = _clip_box(canvas, cx - ax, cx + ax, cy - ay, cy + ay)
    if r0 > r1 or c0 > c1:
        return
    py, px = np.mgrid[r0:r1 + 1, c0:c1 + 1].astype(np.float64)
    # a near-zero axis overflows to inf, which correctly lands outside
    with np.errstate(over="ignore"):
        u = (px - cx) / ax
        v = (py - cy) / ay
        inside = u * u + v * v <= 1.0
    canvas[r0:r1 + 1, c0:c1 + 1][inside] = value
