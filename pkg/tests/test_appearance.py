import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fullinterp.appearance import (
    N_BINS,
    AppearanceDescriptor,
    descriptor_along_contour,
    descriptor_at,
    descriptor_distance,
    descriptor_in_region,
)
from fullinterp.errors import EmptyRegion, InvalidArgument
from fullinterp.geometry import ContourPrim, ImagePatch, SquareRegionPrim

from helpers import flat, step_image

seeds = st.integers(0, 2**32 - 1)


def oracle_histogram(px, centers):
    """Per-pixel loop: clamped central differences, magnitude into the orientation bin."""
    h, w = px.shape

    def at(r, c):
        return px[min(max(r, 0), h - 1), min(max(c, 0), w - 1)]

    hist = np.zeros(N_BINS)
    for r, c in centers:
        gx = 0.5 * (at(r, c + 1) - at(r, c - 1))
        gy = 0.5 * (at(r + 1, c) - at(r - 1, c))
        theta = math.atan2(gy, gx) % math.pi
        hist[int(theta // (math.pi / N_BINS)) % N_BINS] += math.hypot(gx, gy)
    return hist / hist.sum() if hist.sum() > 0 else hist


def test_uniform_window_has_zero_bins():
    d = descriptor_at(flat(9, 9, 0.3), (4, 4), 5)
    assert d.bins == (0.0,) * N_BINS
    assert d.mean_intensity == pytest.approx(0.3)


def test_vertical_step_concentrates_in_horizontal_gradient_bin():
    img = step_image(9, 9, 5)
    d = descriptor_at(img, (4, 4), 5)
    assert d.bins[0] >= 0.9
    window = [(r, c) for r in range(2, 7) for c in range(2, 7)]
    np.testing.assert_allclose(d.bins, oracle_histogram(img.pixels, window), atol=1e-12)


def test_window_outside_image_is_clamped_flat():
    d = descriptor_at(step_image(9, 9, 5), (40, 40), 5)
    assert d.bins == (0.0,) * N_BINS
    assert d.mean_intensity == 1.0


def test_window_must_be_odd_and_at_least_three():
    img = flat(5, 5)
    for bad in (1, 2, 4):
        with pytest.raises(InvalidArgument):
            descriptor_at(img, (2, 2), bad)


def test_contour_descriptor_examples():
    assert descriptor_along_contour(flat(12, 12), ContourPrim([[2, 2], [9, 7]])).bins == (0.0,) * N_BINS
    img = step_image(16, 16, 8)
    along = descriptor_along_contour(img, ContourPrim([[7.5, 2], [7.5, 13]]))
    single = descriptor_at(img, (7.5, 7), 5)
    assert int(np.argmax(along.bins)) == int(np.argmax(single.bins)) == 0
    # a degenerate two-vertex contour is still defined
    short = descriptor_along_contour(img, ContourPrim([[7, 7], [7.1, 7]]))
    assert len(short.as_array()) == 9


def test_contour_descriptor_is_mean_of_five_windows(rng):
    img = ImagePatch(rng.random((16, 16)))
    c = ContourPrim([[2, 3], [9, 4], [12, 12]])
    from fullinterp.geometry import resample_by_arclength

    descs = [descriptor_at(img, p, 5) for p in resample_by_arclength(c, 5)]
    bins = np.mean([d.bins for d in descs], axis=0)
    bins = bins / bins.sum()
    got = descriptor_along_contour(img, c)
    np.testing.assert_allclose(got.bins, bins, atol=1e-12)
    assert got.mean_intensity == pytest.approx(np.mean([d.mean_intensity for d in descs]))


def test_region_descriptor_examples():
    d = descriptor_in_region(flat(10, 10, 0.7), SquareRegionPrim(5, 5, 4))
    assert d.bins == (0.0,) * N_BINS and d.mean_intensity == pytest.approx(0.7)
    img = step_image(10, 10, 5)
    r = SquareRegionPrim(4.5, 4.5, 6)
    d = descriptor_in_region(img, r)
    assert int(np.argmax(d.bins)) == 0
    centers = [(row, col) for row in range(2, 8) for col in range(2, 8)]
    np.testing.assert_allclose(d.bins, oracle_histogram(img.pixels, centers), atol=1e-12)
    with pytest.raises(EmptyRegion):
        descriptor_in_region(img, SquareRegionPrim(4.5, 4.5, 0.4))


def test_distance_examples():
    zero_dark = AppearanceDescriptor((0.0,) * N_BINS, 0.0)
    zero_bright = AppearanceDescriptor((0.0,) * N_BINS, 1.0)
    assert descriptor_distance(zero_dark, zero_bright) == pytest.approx(1.0)
    assert descriptor_distance(zero_dark, zero_dark) == 0.0


def random_descriptor(rng):
    b = rng.random(N_BINS)
    if rng.random() < 0.2:
        b[:] = 0
    else:
        b /= b.sum()
    return AppearanceDescriptor(tuple(b.tolist()), float(rng.random()))


@given(seeds)
def test_distance_symmetric_nonnegative_zero_iff_equal(seed):
    rng = np.random.default_rng(seed)
    a, b = random_descriptor(rng), random_descriptor(rng)
    d = descriptor_distance(a, b)
    assert d >= 0
    assert d == descriptor_distance(b, a)
    assert descriptor_distance(a, a) == 0.0
    if not np.allclose(a.as_array(), b.as_array(), atol=1e-9):
        assert d > 0


@given(seeds, st.integers(3, 9).filter(lambda k: k % 2 == 1))
def test_bins_normalised_or_zero(seed, window):
    rng = np.random.default_rng(seed)
    px = rng.random((12, 12))
    if rng.random() < 0.3:
        px[:] = px[0, 0]
    d = descriptor_at(ImagePatch(px), rng.uniform(0, 11, size=2), window)
    s = sum(d.bins)
    assert abs(s - 1.0) <= 1e-6 or all(v == 0.0 for v in d.bins)
    assert 0.0 <= d.mean_intensity <= 1.0


@given(seeds, st.floats(-0.2, 0.2))
def test_bins_are_offset_invariant(seed, delta):
    rng = np.random.default_rng(seed)
    # dyadic intensities keep the offset exact in floating point
    px = np.round((0.25 + 0.5 * rng.random((10, 10))) * 256) / 256
    delta = round(delta * 256) / 256
    a = descriptor_in_region(ImagePatch(px), SquareRegionPrim(4.5, 4.5, 8))
    b = descriptor_in_region(ImagePatch(px + delta), SquareRegionPrim(4.5, 4.5, 8))
    np.testing.assert_allclose(a.bins, b.bins, atol=1e-9)
    assert b.mean_intensity == pytest.approx(a.mean_intensity + delta, abs=1e-12)


@given(seeds)
def test_quarter_turn_rotates_bins_by_four(seed):
    # eight bins over pi: a quarter turn moves every orientation by four bins
    rng = np.random.default_rng(seed)
    px = rng.random((11, 11))
    r = SquareRegionPrim(5, 5, 10)
    a = descriptor_in_region(ImagePatch(px), r)
    b = descriptor_in_region(ImagePatch(np.rot90(px)), r)
    np.testing.assert_allclose(np.roll(a.bins, 4), b.bins, atol=1e-9)
