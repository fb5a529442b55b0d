"""Planted-structure corpora with exact part annotations.

Two classes are provided.  ``head`` is an 8-part layout at fixed positions:
a dark eye point inside an open ring, a bar whose long sides form a
parallel pair, two stacked blocks whose facing edges continue each other,
and two striped texture regions.  ``tubes`` scatters a two-tone bar, a
broken two-tone bar and an eye-and-ring at random positions and angles, so
that location and appearance alone cannot identify the parts.

Every patch gets clutter shapes; negatives are clutter only.  Images are
quantized to multiples of 1/255 so they survive PGM round trips.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidArgument
from .geometry import ContourPrim, ImagePatch, PointPrim, SquareRegionPrim
from .model import AnnotatedPatch, RelationSpec, StructureSchema

BACKGROUND = 0.55
DARK = 0.15
BRIGHT = 0.9
_SUPERSAMPLE = 4
# pixels of placement jitter per unit of noise
JITTER_PER_NOISE = 16.0
# contour truth stops this far short of a shape corner, where edge chains split
CORNER_INSET = 2.0
EYE_HALO_RADIUS = 3.0
# moderate ring contrast so its bands do not outshine the eye as DoG extrema
RING_DARK = 0.3
RING_BRIGHT = 0.75


@dataclass(frozen=True)
class SyntheticClass:
    name: str
    size: int
    schema: StructureSchema
    render: Callable  # (canvas, rng, jitter) -> (parts dict, occupancy mask)
    n_clutter: int = 10


# -- rasterization ------------------------------------------------------------


def _subsamples(size: int):
    offs = (np.arange(_SUPERSAMPLE) + 0.5) / _SUPERSAMPLE - 0.5
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    xs = xs[:, :, None, None] + offs[None, None, None, :]
    ys = ys[:, :, None, None] + offs[None, None, :, None]
    return xs, ys


class Canvas:
    def __init__(self, size: int, value: float = BACKGROUND):
        self.size = size
        self.pixels = np.full((size, size), value)
        self.occupied = np.zeros((size, size), dtype=bool)
        self._xs, self._ys = _subsamples(size)

    def paint(self, inside: Callable, value: float, occupy: bool = True) -> None:
        cover = inside(self._xs, self._ys).mean(axis=(2, 3))
        self.pixels = self.pixels * (1.0 - cover) + value * cover
        if occupy:
            self.occupied |= cover > 0

    def paint_texture(self, x0: int, y0: int, side: int, base: float, horizontal: bool) -> None:
        """Period-3 stripes filling whole pixels of a square."""
        rows, cols = np.mgrid[y0 : y0 + side, x0 : x0 + side]
        phase = (rows if horizontal else cols) % 3
        self.pixels[y0 : y0 + side, x0 : x0 + side] = base + np.where(phase == 0, 0.3, -0.15)
        self.occupied[y0 : y0 + side, x0 : x0 + side] = True


def rect_inside(cx, cy, length, width, angle):
    c, s = math.cos(angle), math.sin(angle)

    def inside(xs, ys):
        u = (xs - cx) * c + (ys - cy) * s
        v = -(xs - cx) * s + (ys - cy) * c
        return (np.abs(u) <= length / 2) & (np.abs(v) <= width / 2)

    return inside


def disc_inside(cx, cy, r):
    return lambda xs, ys: (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r


def sector_inside(cx, cy, r0, r1, mid, sweep):
    def inside(xs, ys):
        dx, dy = xs - cx, ys - cy
        rr = dx * dx + dy * dy
        ang = np.abs(np.mod(np.arctan2(dy, dx) - mid + math.pi, 2 * math.pi) - math.pi)
        return (rr >= r0 * r0) & (rr <= r1 * r1) & (ang <= sweep / 2)

    return inside


def triangle_inside(pts):
    (x1, y1), (x2, y2), (x3, y3) = pts

    def inside(xs, ys):
        d1 = (xs - x2) * (y1 - y2) - (x1 - x2) * (ys - y2)
        d2 = (xs - x3) * (y2 - y3) - (x2 - x3) * (ys - y3)
        d3 = (xs - x1) * (y3 - y1) - (x3 - x1) * (ys - y1)
        neg = (d1 < 0) | (d2 < 0) | (d3 < 0)
        pos = (d1 > 0) | (d2 > 0) | (d3 > 0)
        return ~(neg & pos)

    return inside


def _paint_eye(cv: "Canvas", ex: float, ey: float) -> None:
    """Four dark pixels in a T on a bright halo, centred on pixel ``(ex, ey)``.

    The halo keeps the DoG minimum strong while the mark stays small enough
    for a four-pixel recolor to erase it.
    """
    cv.paint(disc_inside(ex, ey, EYE_HALO_RADIUS), BRIGHT)
    cv.paint(rect_inside(ex, ey, 3.0, 1.0, 0.0), 0.0)
    cv.paint(rect_inside(ex, ey - 1.0, 1.0, 1.0, 0.0), 0.0)


def _segment(p, q, inset: float = CORNER_INSET) -> ContourPrim:
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    d = q - p
    u = d / np.linalg.norm(d)
    return ContourPrim(np.array([p + inset * u, q - inset * u]))


def _arc(cx, cy, r, mid, sweep, inset: float = 1.0, n: int = 16) -> ContourPrim:
    half = sweep / 2 - inset / r
    ang = np.linspace(mid - half, mid + half, n)
    return ContourPrim(np.stack([cx + r * np.cos(ang), cy + r * np.sin(ang)], axis=1))


def _side(cx, cy, length, angle, offset) -> tuple:
    """Endpoints of the long side of a rotated bar at signed normal ``offset``."""
    c, s = math.cos(angle), math.sin(angle)
    nx, ny = -s, c
    p = (cx - c * length / 2 + nx * offset, cy - s * length / 2 + ny * offset)
    q = (cx + c * length / 2 + nx * offset, cy + s * length / 2 + ny * offset)
    return p, q


# -- head class ---------------------------------------------------------------

HEAD_SCHEMA = StructureSchema(
    "head",
    (
        ("eye", "point"),
        ("arc", "contour"),
        ("upper", "contour"),
        ("lower", "contour"),
        ("left_a", "contour"),
        ("left_b", "contour"),
        ("cheek", "region"),
        ("mane", "region"),
    ),
    (
        RelationSpec("location", ("eye",)),
        RelationSpec("location", ("arc",)),
        RelationSpec("location", ("upper",)),
        RelationSpec("location", ("lower",)),
        RelationSpec("location", ("left_a",)),
        RelationSpec("location", ("left_b",)),
        RelationSpec("location", ("cheek",)),
        RelationSpec("location", ("mane",)),
        RelationSpec("intensity_extremum", ("eye",)),
        RelationSpec("line_circle_deviation", ("arc",)),
        RelationSpec("line_circle_deviation", ("upper",)),
        RelationSpec("line_circle_deviation", ("left_a",)),
        RelationSpec("appearance_along_contour", ("arc",)),
        RelationSpec("appearance_in_region", ("cheek",)),
        RelationSpec("appearance_in_region", ("mane",)),
        RelationSpec("location", ("eye", "arc")),
        RelationSpec("cover", ("arc", "eye")),
        RelationSpec("parallelism", ("upper", "lower")),
        RelationSpec("length_ratio", ("upper", "lower")),
        RelationSpec("ending_distance", ("left_a", "left_b")),
        RelationSpec("continuity", ("left_a", "left_b")),
        RelationSpec("appearance_coherence", ("cheek", "mane")),
    ),
)


def _render_head(cv: Canvas, rng, jitter: float) -> dict:
    # whole-pixel jitter keeps straight edges on pixel boundaries
    def j():
        return np.round(rng.normal(0.0, jitter, size=2)) if jitter > 0 else np.zeros(2)

    # texture regions sit on the 16-pixel candidate grid and do not move
    cv.paint_texture(16, 48, 16, 0.65, horizontal=True)
    cv.paint_texture(48, 0, 16, 0.35, horizontal=False)
    cheek = SquareRegionPrim(16 + 7.5, 48 + 7.5, 16.0)
    mane = SquareRegionPrim(48 + 7.5, 0 + 7.5, 16.0)

    bx, by = np.array([30.0, 9.5]) + j()
    cv.paint(rect_inside(bx, by, 28.0, 6.0, 0.0), DARK)
    upper = _segment((bx - 14, by - 3), (bx + 14, by - 3))
    lower = _segment((bx - 14, by + 3), (bx + 14, by + 3))

    ax, ay = np.array([9.5, 25.0]) + j()
    bx2, by2 = np.array([9.5, 43.0]) + j()
    cv.paint(rect_inside(ax, ay, 6.0, 14.0, 0.0), DARK)
    cv.paint(rect_inside(bx2, by2, 6.0, 14.0, 0.0), DARK)
    left_a = _segment((ax + 3, ay - 7), (ax + 3, ay + 7))
    left_b = _segment((bx2 + 3, by2 - 7), (bx2 + 3, by2 + 7))

    ex, ey = np.array([44.0, 36.0]) + j()
    sweep = math.radians(220)
    # a bright inner rim makes the arc's edge unlike the ring's outer edge
    cv.paint(sector_inside(ex, ey, 9.0, 12.0, 0.0, sweep), RING_DARK)
    cv.paint(sector_inside(ex, ey, 6.5, 9.0, 0.0, sweep), RING_BRIGHT)
    _paint_eye(cv, ex, ey)
    eye = PointPrim(float(np.floor(ex + 0.5)), float(np.floor(ey + 0.5)))
    arc = _arc(ex, ey, 9.0, 0.0, sweep)
    return {
        "eye": eye,
        "arc": arc,
        "upper": upper,
        "lower": lower,
        "left_a": left_a,
        "left_b": left_b,
        "cheek": cheek,
        "mane": mane,
    }


# -- tubes class --------------------------------------------------------------

TUBES_SCHEMA = StructureSchema(
    "tubes",
    (
        ("eye", "point"),
        ("arc", "contour"),
        ("tube_a", "contour"),
        ("tube_b", "contour"),
        ("seg_a", "contour"),
        ("seg_b", "contour"),
    ),
    (
        RelationSpec("location", ("eye",)),
        RelationSpec("location", ("arc",)),
        RelationSpec("location", ("tube_a",)),
        RelationSpec("location", ("tube_b",)),
        RelationSpec("location", ("seg_a",)),
        RelationSpec("location", ("seg_b",)),
        RelationSpec("appearance_along_contour", ("arc",)),
        RelationSpec("appearance_along_contour", ("tube_a",)),
        RelationSpec("appearance_along_contour", ("tube_b",)),
        RelationSpec("appearance_along_contour", ("seg_a",)),
        RelationSpec("appearance_along_contour", ("seg_b",)),
        RelationSpec("cover", ("arc", "eye")),
        RelationSpec("parallelism", ("tube_a", "tube_b")),
        RelationSpec("length_ratio", ("tube_a", "tube_b")),
        RelationSpec("continuity", ("seg_a", "seg_b")),
        RelationSpec("length_ratio", ("seg_a", "seg_b")),
        RelationSpec("ending_distance", ("seg_a", "seg_b")),
    ),
)


def _free_spot(cv: Canvas, rng, radius: float, margin: float, tries: int = 200):
    """A centre whose disc of ``radius`` misses everything painted so far."""
    n = cv.size
    ys, xs = np.mgrid[0:n, 0:n]
    for _ in range(tries):
        cx, cy = rng.uniform(margin, n - 1 - margin, size=2)
        near = (xs - cx) ** 2 + (ys - cy) ** 2 <= (radius + 2) ** 2
        if not (near & cv.occupied).any():
            return float(cx), float(cy)
    return None


def _two_tone(cv: Canvas, cx, cy, length, angle, dark_w, bright_w):
    """Bright strip on the +normal side of a dark bar; returns the two side offsets."""
    c, s = math.cos(angle), math.sin(angle)
    nx, ny = -s, c
    cv.paint(rect_inside(cx, cy, length, dark_w, angle), DARK)
    off = dark_w / 2 + bright_w / 2
    cv.paint(rect_inside(cx + nx * off, cy + ny * off, length, bright_w, angle), BRIGHT)
    return dark_w / 2, -dark_w / 2  # bright|dark edge, dark|background edge


def _render_tubes(cv: Canvas, rng, jitter: float) -> dict:
    parts = {}
    for _ in range(50):
        cv.pixels[:] = BACKGROUND
        cv.occupied[:] = False
        spot = _free_spot(cv, rng, 15.0, 14.0)
        ang = rng.uniform(0, math.pi)
        cx, cy = spot
        a_off, b_off = _two_tone(cv, cx, cy, 24.0, ang, 7.0, 3.0)
        parts["tube_a"] = _segment(*_side(cx, cy, 24.0, ang, a_off))
        parts["tube_b"] = _segment(*_side(cx, cy, 24.0, ang, b_off))

        spot = _free_spot(cv, rng, 15.0, 14.0)
        if spot is None:
            continue
        cx, cy = spot
        ang = rng.uniform(0, 2 * math.pi)
        c, s = math.cos(ang), math.sin(ang)
        la, lb, gap = 13.0, 8.0, 5.0
        ca = (cx - c * (lb + gap) / 2, cy - s * (lb + gap) / 2)
        cb = (cx + c * (la + gap) / 2, cy + s * (la + gap) / 2)
        a_off, _ = _two_tone(cv, ca[0], ca[1], la, ang, 4.0, 3.0)
        _two_tone(cv, cb[0], cb[1], lb, ang, 4.0, 3.0)
        parts["seg_a"] = _segment(*_side(ca[0], ca[1], la, ang, a_off))
        parts["seg_b"] = _segment(*_side(cb[0], cb[1], lb, ang, a_off))

        spot = _free_spot(cv, rng, 12.0, 12.0)
        if spot is None:
            continue
        ex, ey = spot
        mid = rng.uniform(0, 2 * math.pi)
        sweep = math.radians(220)
        cv.paint(sector_inside(ex, ey, 8.0, 11.0, mid, sweep), DARK)
        cv.paint(sector_inside(ex, ey, 5.5, 8.0, mid, sweep), BRIGHT)
        cv.paint(disc_inside(ex, ey, 1.5), 0.02)
        ex_r, ey_r = float(np.floor(ex + 0.5)), float(np.floor(ey + 0.5))
        parts["eye"] = PointPrim(ex_r, ey_r)
        parts["arc"] = _arc(ex, ey, 8.0, mid, sweep)
        return parts
    raise RuntimeError("could not place the tubes layout")  # pragma: no cover


# -- clutter ------------------------------------------------------------------


def add_clutter(cv: Canvas, rng, n: int) -> None:
    """Small discs, triangles and squares away from painted structure."""
    for _ in range(n):
        shape = int(rng.integers(3))
        value = float(rng.choice([DARK, 0.3, 0.8]))
        radius = {0: 2.5, 1: 5.0, 2: 4.5}[shape]
        spot = _free_spot(cv, rng, radius, radius + 1.0, tries=60)
        if spot is None:
            continue
        cx, cy = spot
        if shape == 0:
            cv.paint(disc_inside(cx, cy, float(rng.uniform(1.0, 2.5))), value)
        elif shape == 1:
            a0 = rng.uniform(0, 2 * math.pi)
            angles = a0 + np.array([0.0, 2.1, 4.2]) + rng.uniform(-0.3, 0.3, size=3)
            r = rng.uniform(3.0, 5.0, size=3)
            cv.paint(triangle_inside([(cx + ri * math.cos(t), cy + ri * math.sin(t)) for ri, t in zip(r, angles)]), value)
        else:
            side = float(rng.uniform(3.0, 6.0))
            cv.paint(rect_inside(cx, cy, side, side, float(rng.uniform(0, math.pi))), value)


def _finish(cv: Canvas, rng, noise: float) -> ImagePatch:
    px = cv.pixels
    if noise > 0:
        px = px + rng.normal(0.0, noise, size=px.shape)
    px = np.round(np.clip(px, 0.0, 1.0) * 255.0) / 255.0
    return ImagePatch(px)


SYNTHETIC_CLASSES = {
    "head": SyntheticClass("head", 64, HEAD_SCHEMA, _render_head, n_clutter=10),
    "tubes": SyntheticClass("tubes", 64, TUBES_SCHEMA, _render_tubes, n_clutter=10),
}


def get_class(spec) -> SyntheticClass:
    if isinstance(spec, SyntheticClass):
        return spec
    try:
        return SYNTHETIC_CLASSES[spec]
    except KeyError:
        raise InvalidArgument(f"unknown synthetic class {spec!r}; choose from {sorted(SYNTHETIC_CLASSES)}") from None


def render_positive(cls: SyntheticClass, noise: float, seed: int, index: int) -> AnnotatedPatch:
    rng = np.random.default_rng([seed, 1, index])
    cv = Canvas(cls.size)
    parts = cls.render(cv, rng, JITTER_PER_NOISE * noise)
    add_clutter(cv, rng, cls.n_clutter)
    return AnnotatedPatch(_finish(cv, rng, noise), parts, name=f"{cls.name}_pos_{index:04d}")


def render_negative(cls: SyntheticClass, noise: float, seed: int, index: int) -> ImagePatch:
    rng = np.random.default_rng([seed, 2, index])
    cv = Canvas(cls.size)
    add_clutter(cv, rng, 2 * cls.n_clutter)
    return _finish(cv, rng, noise)


def generate_planted_corpus(spec, n_pos: int, n_neg: int, noise: float, seed: int = 0):
    """``(positives, negatives)``: annotated positives and clutter-only patches.

    Patch ``i`` depends only on ``(seed, i)``, so growing a corpus keeps its
    prefix.
    """
    cls = get_class(spec)
    if n_pos < 2:
        raise InvalidArgument(f"n_pos must be >= 2, got {n_pos}")
    if n_neg < 0:
        raise InvalidArgument(f"n_neg must be >= 0, got {n_neg}")
    if not (noise >= 0 and math.isfinite(noise)):
        raise InvalidArgument(f"noise must be finite and >= 0, got {noise}")
    positives = [render_positive(cls, noise, seed, i) for i in range(n_pos)]
    negatives = [render_negative(cls, noise, seed, i) for i in range(n_neg)]
    return positives, negatives
