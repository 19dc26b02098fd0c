import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from gaitgts.errors import AspectOverflow, EmptySilhouette, NoCycleFound
from gaitgts.imagecore import (SilhouetteSequence, binarize, bounding_box, cycle_from_counts,
                               detect_gait_cycle, load_png, normalize, save_png)
from gaitgts.synth import WalkerSpec, render_sequence
from gaitgts.templates import Covariate

from oracles import rectangle_normalized


def test_binarize_all_zero_is_empty():
    with pytest.raises(EmptySilhouette):
        binarize(np.zeros((10, 10), np.uint8), 128)


def test_binarize_all_255():
    assert binarize(np.full((7, 5), 255, np.uint8), 128).all()


def test_binarize_checkerboard():
    yy, xx = np.mgrid[:16, :16]
    board = ((yy + xx) % 2 * 255).astype(np.uint8)
    expected = np.array([[1 if board[y, x] >= 128 else 0 for x in range(16)] for y in range(16)])
    np.testing.assert_array_equal(binarize(board, 128), expected)


def test_binarize_threshold_is_inclusive():
    img = np.array([[127, 128, 129]], np.uint8)
    np.testing.assert_array_equal(binarize(img, 128), [[0, 1, 1]])


@pytest.mark.parametrize("bad", [0, 256, -3])
def test_binarize_rejects_threshold(bad):
    with pytest.raises(ValueError):
        binarize(np.full((3, 3), 200, np.uint8), bad)


def test_normalize_identity_on_centred_rectangle():
    img = np.zeros((240, 240), np.uint8)
    img[:, 100:141] = 1  # columns 100..140, centroid exactly 120
    np.testing.assert_array_equal(normalize(img), img)


def test_normalize_small_rectangle_in_corner():
    img = np.zeros((300, 400), np.uint8)
    img[:120, :30] = 1
    out = normalize(img)
    np.testing.assert_array_equal(out, rectangle_normalized(120, 30))
    assert out.shape == (240, 240)
    cols = np.flatnonzero(out.any(axis=0))
    assert cols.size == 60
    assert abs(cols.mean() - 120) <= 0.5


def test_normalize_tall_rectangle_downscales():
    img = np.zeros((500, 200), np.uint8)
    img[10:490, 50:130] = 1
    np.testing.assert_array_equal(normalize(img), rectangle_normalized(480, 80))


def test_normalize_aspect_overflow():
    img = np.zeros((50, 400), np.uint8)
    img[10:20, :] = 1
    with pytest.raises(AspectOverflow):
        normalize(img)


def test_normalize_clamps_paste_inside_canvas():
    # thin top bar plus a heavy post at the right end: the centroid sits far
    # right, so centring would push the figure off the left edge
    img = np.zeros((100, 90), np.uint8)
    img[0:2, :] = 1
    img[:, 80:90] = 1
    out = normalize(img)
    assert out[:, 0].any()  # clamped to offset 0
    assert np.count_nonzero(out.any(axis=0)) == 216


def test_bounding_box_inclusive():
    img = np.zeros((10, 10), np.uint8)
    img[2:5, 3:8] = 1
    assert bounding_box(img) == (2, 4, 3, 7)


def test_png_roundtrip(tmp_path):
    img = (np.arange(64).reshape(8, 8) * 4).astype(np.uint8)
    save_png(tmp_path / "a.png", img)
    np.testing.assert_array_equal(load_png(tmp_path / "a.png"), img)


silhouettes = arrays(np.uint8, st.tuples(st.integers(4, 40), st.integers(4, 40)),
                     elements=st.integers(0, 1)).filter(lambda a: a.any())


def _fits(a):
    t, b, l, r = bounding_box(a)
    return (r - l + 1) * 240 / (b - t + 1) + 0.5 < 241


@given(silhouettes.filter(_fits))
def test_normalize_idempotent(a):
    once = normalize(a)
    np.testing.assert_array_equal(normalize(once), once)


@given(silhouettes.filter(_fits))
def test_normalize_touches_top_and_bottom(a):
    out = normalize(a)
    assert out[0].any() and out[239].any()
    assert set(np.unique(out)) <= {0, 1}


@given(arrays(np.uint8, (12, 9), elements=st.integers(0, 255)).filter(lambda a: a.max() >= 2),
       st.integers(1, 254))
def test_binarize_monotone_in_threshold(raw, t):
    lo = binarize(raw, 1)
    try:
        hi = binarize(raw, t + 1)
    except EmptySilhouette:
        return
    assert np.all(hi <= lo)
    try:
        mid = binarize(raw, t)
    except EmptySilhouette:
        return
    assert np.all(hi <= mid)


def test_sequence_invariants():
    with pytest.raises(ValueError):
        SilhouetteSequence(np.zeros((1, 4, 4), np.uint8))
    with pytest.raises(ValueError):
        SilhouetteSequence(np.full((3, 4, 4), 255, np.uint8))
    seq = SilhouetteSequence(np.zeros((3, 4, 4), np.uint8))
    assert len(seq) == 3 and seq.shape == (4, 4)
    assert not seq.frames.flags.writeable


def _frames_with_counts(counts):
    frames = np.zeros((len(counts), 240, 240), np.uint8)
    for t, c in enumerate(counts):
        block = frames[t, 160:, :].reshape(-1)
        block[:int(c)] = 1
        frames[t, 160:, :] = block.reshape(80, 240)
    frames[:, :10, 100:140] = 1
    return frames


def test_cycle_of_rectified_sine():
    t = np.arange(90)
    counts = np.round(2000 * np.abs(np.sin(np.pi * t / 15))) + 50
    start, end = detect_gait_cycle(_frames_with_counts(counts))
    assert abs((end - start) - 30) <= 1


def test_constant_signal_has_no_cycle():
    with pytest.raises(NoCycleFound):
        detect_gait_cycle(_frames_with_counts(np.full(40, 500)))


def test_short_stack_rejected():
    with pytest.raises(NoCycleFound):
        detect_gait_cycle(_frames_with_counts(np.full(19, 500)))


def test_cycle_from_counts_end_is_exclusive():
    counts = np.tile([0, 5, 10, 5, 0, 5, 10, 5], 5).astype(float)
    start, end = cycle_from_counts(counts)
    # peaks of the raw signal are at 2, 6, 10, ...
    assert (start, end) == (2, 10)


@pytest.mark.parametrize("subject", [1, 2, 3])
def test_synthetic_walker_cycle_length(subject):
    spec = WalkerSpec(subject, Covariate.NORMAL, 90, period=25)
    scene = render_sequence(spec)
    norm = np.stack([normalize(binarize(f)) for f in scene])
    start, end = detect_gait_cycle(norm)
    assert abs((end - start) - 25) <= 2
