"""Silhouette binarisation, size normalisation and gait-cycle segmentation."""
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy.signal import find_peaks

from gaitgts import kernels
from gaitgts.errors import AspectOverflow, EmptySilhouette, NoCycleFound

CANVAS = 240
DEFAULT_THRESHOLD = 128


def load_png(path):
    """Read an 8-bit grayscale PNG as a 2-D uint8 array."""
    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=np.uint8)


def save_png(path, pixels):
    Image.fromarray(np.asarray(pixels, dtype=np.uint8), mode="L").save(path, optimize=False)


def binarize(raw, threshold=DEFAULT_THRESHOLD):
    """Foreground is every pixel with intensity >= threshold."""
    if not 1 <= threshold <= 255:
        raise ValueError(f"threshold must be in [1, 255], got {threshold}")
    raw = np.asarray(raw)
    if raw.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {raw.shape}")
    out = (raw >= threshold).astype(np.uint8)
    if not out.any():
        raise EmptySilhouette("no pixel reaches the binarisation threshold")
    return out


def bounding_box(binary):
    """Inclusive (top, bottom, left, right) of the foreground."""
    rows = np.flatnonzero(binary.any(axis=1))
    if rows.size == 0:
        raise EmptySilhouette("silhouette has no foreground")
    cols = np.flatnonzero(binary.any(axis=0))
    return int(rows[0]), int(rows[-1]), int(cols[0]), int(cols[-1])


def _block_starts(src_len, dst_len):
    return (np.arange(dst_len, dtype=np.int64) * src_len) // dst_len


def normalize(binary, size=CANVAS):
    """Crop to the foreground, scale it to ``size`` rows and centre it.

    Scaling preserves the aspect ratio. Upscaling samples the nearest source
    pixel; downscaling keeps a pixel when any source pixel in its block is
    set, so the top and bottom foreground rows always survive. The scaled
    figure is pasted so its column centroid lands on column ``size // 2``.
    """
    binary = np.asarray(binary, dtype=np.uint8)
    top, bottom, left, right = bounding_box(binary)
    crop = binary[top:bottom + 1, left:right + 1]
    h, w = crop.shape
    new_w = max(1, int(np.floor(w * size / h + 0.5)))
    if new_w > size:
        raise AspectOverflow(f"scaled width {new_w} exceeds canvas width {size}")
    scaled = kernels.resample_any(crop, _block_starts(h, size), _block_starts(w, new_w))
    weights = scaled.sum(axis=0, dtype=np.float64)
    centroid = float(np.dot(np.arange(new_w), weights) / weights.sum())
    offset = int(np.floor(size // 2 - centroid + 0.5))
    offset = min(max(offset, 0), size - new_w)
    out = np.zeros((size, size), dtype=np.uint8)
    out[:, offset:offset + new_w] = scaled
    return out


@dataclass(frozen=True)
class SilhouetteSequence:
    """Normalised frames B(t) of one gait cycle, stacked as (N, H, W) uint8."""

    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.uint8)
        if frames.ndim != 3:
            raise ValueError(f"expected (N, H, W) frames, got shape {frames.shape}")
        if frames.shape[0] < 2:
            raise ValueError("a silhouette sequence needs at least 2 frames")
        if frames.max(initial=0) > 1:
            raise ValueError("frames must be binary {0, 1}")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    def __len__(self):
        return self.frames.shape[0]

    @property
    def shape(self):
        return self.frames.shape[1:]


def lower_body_counts(frames):
    """Foreground pixel count in the bottom third of each frame."""
    frames = np.asarray(frames)
    h = frames.shape[1]
    return frames[:, h - h // 3:, :].reshape(frames.shape[0], -1).sum(axis=1).astype(np.float64)


def fundamental_period(signal, threshold=0.35):
    """Shortest lag at which the signal nearly repeats, or None.

    Uses the average squared difference between the signal and its shifted
    copy, normalised by twice the variance; the first local minimum below
    ``threshold`` wins.
    """
    signal = np.asarray(signal, dtype=np.float64)
    n = signal.size
    var = signal.var()
    if var <= 0.0:
        return None
    diff = np.array([np.mean((signal[lag:] - signal[:n - lag]) ** 2) / (2.0 * var)
                     for lag in range(n - 4)])
    for lag in range(3, diff.size - 1):
        if diff[lag] <= diff[lag - 1] and diff[lag] <= diff[lag + 1] and diff[lag] < threshold:
            return lag
    return None


def cycle_from_counts(counts):
    """(start, end) spanning three consecutive maxima of the smoothed signal.

    ``end`` is exclusive, so the cycle is ``frames[start:end]``. Maxima
    closer than 0.3 of the signal's fundamental period are merged into the
    higher one, which suppresses pixel-noise bumps.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if counts.size < 5:
        raise NoCycleFound("signal too short")
    smooth = np.convolve(counts, np.ones(3) / 3.0, mode="valid")
    period = fundamental_period(smooth)
    if period is None:
        raise NoCycleFound("signal has no periodic component")
    # smooth[i] is centred on frame i + 1
    peaks, _ = find_peaks(smooth, distance=max(1, int(round(0.3 * period))))
    if peaks.size < 3:
        raise NoCycleFound(f"found {peaks.size} local maxima, need 3")
    return int(peaks[0]) + 1, int(peaks[2]) + 1


def detect_gait_cycle(frames):
    frames = np.asarray(frames)
    if frames.shape[0] < 20:
        raise NoCycleFound(f"need at least 20 frames, got {frames.shape[0]}")
    return cycle_from_counts(lower_body_counts(frames))
