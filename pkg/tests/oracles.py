"""Slow, obviously-correct reference implementations used by the tests.

These deliberately avoid the vectorised code paths of the package.
"""
import math

import numpy as np


def gei(frames):
    n, h, w = frames.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            out[y, x] = sum(float(frames[t, y, x]) for t in range(n)) / n
    return out


def _h2(p):
    total = 0.0
    for q in (p, 1.0 - p):
        if q > 0.0:
            total -= q * math.log(q, 2)
    return total


def geni(frames):
    g = gei(frames)
    return np.vectorize(_h2)(g)


def aei(frames):
    n, h, w = frames.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            out[y, x] = sum(abs(float(frames[t, y, x]) - float(frames[t - 1, y, x]))
                            for t in range(1, n)) / (n - 1)
    return out


def decode_split(d, lo, hi):
    """Float formula, then nearest integer with ties up (via Fraction to dodge float error)."""
    from fractions import Fraction
    value = Fraction(lo) + Fraction(hi - lo) * Fraction(d, 255)
    return math.floor(value + Fraction(1, 2))


def mask(s_h, s_m, s_f, w_h, w_l, w_r, w_f, size=240):
    out = np.zeros((size, size), dtype=np.uint8)
    for y in range(size):
        for x in range(size):
            if y < s_h:
                out[y, x] = w_h
            elif y >= s_f:
                out[y, x] = w_f
            elif x < s_m:
                out[y, x] = w_l
            else:
                out[y, x] = w_r
    return out


def gaussian_posterior_label(x, means, cov, labels):
    """argmax of the full Gaussian density with uniform priors, computed directly."""
    d = len(x)
    inv = np.linalg.inv(cov)
    norm = 1.0 / math.sqrt((2 * math.pi) ** d * np.linalg.det(cov))
    dens = [norm * math.exp(-0.5 * float((x - m) @ inv @ (x - m))) for m in means]
    best = max(dens)
    return min(lab for lab, p in zip(labels, dens) if p == best)


def knn_label(gallery, labels, x, k):
    dists = sorted((float(np.sum((g - x) ** 2)), lab) for g, lab in zip(gallery, labels))[:k]
    votes = {}
    nearest = {}
    for dist, lab in dists:
        votes[lab] = votes.get(lab, 0) + 1
        nearest.setdefault(lab, dist)
    return sorted(votes, key=lambda lab: (-votes[lab], nearest[lab], lab))[0]


def extremity_scan(frame):
    top = bottom = None
    rows, cols = frame.shape
    for r in range(rows):
        for c in range(cols):
            if frame[r, c]:
                if top is None:
                    top = (r, c)
                if bottom is None or r > bottom[0]:
                    bottom = (r, c)
    return top, bottom


def rectangle_normalized(h, w, size=240):
    """Expected normalisation of a filled h x w rectangle."""
    new_w = int(math.floor(w * size / h + 0.5))
    out = np.zeros((size, size), dtype=np.uint8)
    centroid = (new_w - 1) / 2.0
    offset = int(math.floor(size // 2 - centroid + 0.5))
    offset = min(max(offset, 0), size - new_w)
    out[:, offset:offset + new_w] = 1
    return out
