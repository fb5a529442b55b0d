import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fullinterp.candidates import (
    CandidateConfig,
    _square_iou,
    compute_edge_map,
    extract_candidates,
    extract_contour_candidates,
    extract_point_candidates,
    extract_region_candidates,
    region_grid,
)
from fullinterp.errors import InvalidArgument
from fullinterp.geometry import ContourPrim, ImagePatch, SquareRegionPrim, point_to_polyline_distance, primitive_iou
from fullinterp.geometry import resample_by_arclength

from helpers import flat, step_image

seeds = st.integers(0, 2**32 - 1)


def hausdorff(c, pts):
    """Symmetric Hausdorff distance between a contour and a reference polyline, densely sampled."""
    ref_contour = ContourPrim(np.asarray(pts, dtype=np.float64))
    a = max(point_to_polyline_distance(p, ref_contour)[0] for p in resample_by_arclength(c, 200))
    b = max(point_to_polyline_distance(p, c)[0] for p in resample_by_arclength(ref_contour, 200))
    return max(a, b)


def test_uniform_image_has_no_edges():
    edges = compute_edge_map(flat(20, 20, 0.6))
    assert np.all(edges.strengths == 0)
    assert extract_contour_candidates(edges, 10) == []


def test_vertical_step_edge_map():
    edges = compute_edge_map(step_image(20, 20, 10))
    s = edges.strengths
    assert s.max() == 1.0
    row = s[10]
    assert set(np.flatnonzero(row == row.max())) <= {9, 10}
    assert edges.orientations[10, 9] == pytest.approx(math.pi / 2)
    assert np.all((s >= 0) & (s <= 1))


def test_single_dark_pixel_is_the_top_point():
    px = np.full((21, 21), 0.8)
    px[6, 13] = 0.0
    pts = extract_point_candidates(ImagePatch(px), 5)
    assert (pts[0][0].x, pts[0][0].y) == (13.0, 6.0)


def test_point_saliences_non_increasing(rng):
    pts = extract_point_candidates(ImagePatch(rng.random((24, 24))), 20)
    sal = [s for _, s in pts]
    assert len(pts) <= 20 and sal == sorted(sal, reverse=True)


def test_straight_edge_hausdorff_within_one_pixel():
    px = np.zeros((32, 32))
    px[:, 16:] = 1.0
    cons = extract_contour_candidates(compute_edge_map(ImagePatch(px)), 10)
    c = cons[0][0]
    ys = c.vertices[:, 1]
    # compare against the truth over the span the contour covers
    truth = [[15.5, ys.min()], [15.5, ys.max()]]
    assert hausdorff(c, truth) <= 1.0
    assert c.length >= 20


def test_l_shaped_edge_splits_in_two():
    px = np.zeros((40, 40))
    px[10:, 10:] = 1.0
    cons = extract_contour_candidates(compute_edge_map(ImagePatch(px)), 10)
    long = [c for c, _ in cons if c.length >= 10]
    assert len(long) == 2
    dirs = []
    for c in long:
        d = c.end - c.start
        dirs.append(abs(math.atan2(d[1], d[0])) % math.pi)
    horizontal = sum(min(a, math.pi - a) < 0.2 for a in dirs)
    assert horizontal == 1


def test_textured_square_is_found():
    rng = np.random.default_rng(5)
    px = np.full((64, 64), 0.5)
    px[16:32, 24:40] = rng.random((16, 16))
    img = ImagePatch(px)
    regs = extract_region_candidates(img, 30)
    truth = SquareRegionPrim(31.5, 23.5, 16)
    assert primitive_iou(regs[0][0], truth, 64, 64) >= 0.4
    # variance-map oracle: the top salience is the largest window variance
    best = max(px[y0 : y0 + s, x0 : x0 + s].var() for x0, y0, s in region_grid(64, 64))
    assert regs[0][1] == pytest.approx(best)


@given(seeds)
def test_regions_overlap_little_and_rank_by_salience(seed):
    rng = np.random.default_rng(seed)
    img = ImagePatch(rng.random((32, 32)))
    regs = extract_region_candidates(img, 30)
    sal = [s for _, s in regs]
    assert sal == sorted(sal, reverse=True)
    boxes = [(r.center_x - (r.side - 1) / 2, r.center_y - (r.side - 1) / 2, r.side) for r, _ in regs]
    for i in range(len(boxes)):
        for j in range(i):
            assert _square_iou(boxes[i], boxes[j]) <= 0.5


def test_region_grid_covers_three_scales():
    grid = region_grid(64, 64)
    assert {side for _, _, side in grid} == {16, 26, 38}
    assert all(x0 + side <= 64 and y0 + side <= 64 for x0, y0, side in grid)


def test_max_n_validated():
    img = flat(10, 10)
    for fn in (extract_point_candidates, extract_region_candidates):
        with pytest.raises(InvalidArgument):
            fn(img, 0)
    with pytest.raises(InvalidArgument):
        extract_contour_candidates(compute_edge_map(img), 0)


@given(seeds)
def test_caps_and_determinism(seed):
    rng = np.random.default_rng(seed)
    px = rng.random((24, 24))
    px[:, 12:] += 0.5
    img = ImagePatch(np.clip(px, 0, 1))
    cfg = CandidateConfig(max_points=5, max_contours=4, max_regions=3)
    a, b = extract_candidates(img, cfg), extract_candidates(img, cfg)
    for kind, cap in (("point", 5), ("contour", 4), ("region", 3)):
        assert len(a.by_kind(kind)) <= cap
        sal = a.saliences(kind)
        assert sal == sorted(sal, reverse=True)
        assert sal == b.saliences(kind)
    for x, y in zip(a.contours, b.contours):
        np.testing.assert_array_equal(x.vertices, y.vertices)
