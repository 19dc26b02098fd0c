"""28-bit chromosome decoding and the four-region template mask.

Chromosome layout, most significant bit first within each field::

    [S_H:8][S_M:8][S_F:8][W_H][W_L][W_R][W_F]

S_H is the row splitting the head region from the midsection, S_F the row
splitting the midsection from the legs, and S_M the column splitting the
midsection into its left and right halves.
"""
from dataclasses import dataclass

import numpy as np

from gaitgts.errors import DimensionMismatch
from gaitgts.imagecore import CANVAS, save_png

CHROMOSOME_BITS = 28
_FIELD = 8


@dataclass(frozen=True)
class SplitBounds:
    h_min: int = 12
    h_max: int = 96
    m_min: int = 48
    m_max: int = 192
    f_min: int = 120
    f_max: int = 228

    def __post_init__(self):
        for lo, hi, name in ((self.h_min, self.h_max, "S_H"), (self.m_min, self.m_max, "S_M"),
                             (self.f_min, self.f_max, "S_F")):
            if not 0 <= lo < hi <= CANVAS - 1:
                raise ValueError(f"{name} bounds [{lo}, {hi}] must satisfy 0 <= min < max <= {CANVAS - 1}")
        if self.h_max >= self.f_min:
            raise ValueError("S_H upper bound must lie above the S_F lower bound")


@dataclass(frozen=True, order=True)
class GtsHypothesis:
    s_h: int
    s_m: int
    s_f: int
    w_h: int = 1
    w_l: int = 0
    w_r: int = 0
    w_f: int = 1

    def __post_init__(self):
        if not 0 <= self.s_h < self.s_f <= CANVAS - 1:
            raise ValueError(f"need 0 <= s_h < s_f <= {CANVAS - 1}, got s_h={self.s_h}, s_f={self.s_f}")
        if not 0 <= self.s_m <= CANVAS - 1:
            raise ValueError(f"s_m={self.s_m} outside the canvas")
        for w in self.weights:
            if w not in (0, 1):
                raise ValueError("weight bits must be 0 or 1")

    @property
    def weights(self):
        return (self.w_h, self.w_l, self.w_r, self.w_f)

    def replace(self, **changes):
        fields = dict(s_h=self.s_h, s_m=self.s_m, s_f=self.s_f, w_h=self.w_h,
                      w_l=self.w_l, w_r=self.w_r, w_f=self.w_f)
        fields.update(changes)
        return GtsHypothesis(**fields)


WHOLE_TEMPLATE = GtsHypothesis(s_h=60, s_m=120, s_f=180, w_h=1, w_l=1, w_r=1, w_f=1)


def bits_to_int(bits):
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


def int_to_bits(value, width=_FIELD):
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


def decode_split(d, lo, hi):
    """lo + (hi - lo) * d / 255 rounded to the nearest integer, ties up."""
    numerator = lo * 255 + (hi - lo) * d
    return (2 * numerator + 255) // 510


def decode(chrom, bounds=SplitBounds()):
    chrom = np.asarray(chrom, dtype=np.uint8)
    if chrom.shape != (CHROMOSOME_BITS,):
        raise ValueError(f"chromosome must have {CHROMOSOME_BITS} bits, got shape {chrom.shape}")
    d_h = bits_to_int(chrom[0:8])
    d_m = bits_to_int(chrom[8:16])
    d_f = bits_to_int(chrom[16:24])
    w_h, w_l, w_r, w_f = (int(b) for b in chrom[24:28])
    return GtsHypothesis(
        s_h=decode_split(d_h, bounds.h_min, bounds.h_max),
        s_m=decode_split(d_m, bounds.m_min, bounds.m_max),
        s_f=decode_split(d_f, bounds.f_min, bounds.f_max),
        w_h=w_h, w_l=w_l, w_r=w_r, w_f=w_f,
    )


def encode_fields(d_h, d_m, d_f, weights):
    """Chromosome bits from raw 8-bit field values and four weight bits."""
    return np.concatenate([int_to_bits(d_h), int_to_bits(d_m), int_to_bits(d_f),
                           np.asarray(weights, dtype=np.uint8)])


def build_mask(h, size=CANVAS):
    mask = np.zeros((size, size), dtype=np.uint8)
    mask[:h.s_h, :] = h.w_h
    mask[h.s_h:h.s_f, :h.s_m] = h.w_l
    mask[h.s_h:h.s_f, h.s_m:] = h.w_r
    mask[h.s_f:, :] = h.w_f
    return mask


def apply_mask(template, mask):
    """Pixelwise product; accepts a GaitTemplate or a bare array."""
    pixels = getattr(template, "pixels", template)
    mask = np.asarray(mask)
    if np.shape(pixels) != mask.shape:
        raise DimensionMismatch(f"template {np.shape(pixels)} vs mask {mask.shape}")
    product = np.asarray(pixels, dtype=np.float64) * mask
    if hasattr(template, "with_pixels"):
        return template.with_pixels(product)
    return product


def mask_area_fraction(mask):
    mask = np.asarray(mask)
    return float(np.count_nonzero(mask)) / mask.size


def format_hypothesis(view, h):
    return f"{view},{h.s_h},{h.s_m},{h.s_f},{h.w_h},{h.w_l},{h.w_r},{h.w_f}"


def parse_hypothesis(line):
    parts = [int(p) for p in line.strip().split(",")]
    if len(parts) != 8:
        raise ValueError(f"expected 8 comma-separated integers, got {line!r}")
    view, s_h, s_m, s_f, w_h, w_l, w_r, w_f = parts
    return view, GtsHypothesis(s_h, s_m, s_f, w_h, w_l, w_r, w_f)


def write_hypotheses(path, hypotheses, header=None):
    """Write ``{view: hypothesis}`` as one record per line, sorted by view."""
    with open(path, "w") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for view in sorted(hypotheses):
            fh.write(format_hypothesis(view, hypotheses[view]) + "\n")


def read_hypotheses(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            if line.strip() and not line.startswith("#"):
                view, h = parse_hypothesis(line)
                out[view] = h
    return out


def export_mask_png(mask, path):
    save_png(path, np.asarray(mask, dtype=np.uint8) * 255)
