"""Primitive types and polyline geometry.

Coordinates live in the patch frame: origin at the centre of the top-left
pixel, x to the right, y downward.  Pixel ``(row, col)`` has its centre at
``(x=col, y=row)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import ClassVar, Union

import numpy as np

from .errors import InvalidArgument, InvalidComparison

MAX_PATCH_SIDE = 512
_MIN_SEGMENT = 1e-9


class ImagePatch:
    """Small grayscale raster with intensities in [0, 1]."""

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        arr = np.array(pixels, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise InvalidArgument(f"image patch must be 2-D, got shape {arr.shape}")
        h, w = arr.shape
        if not (1 <= w <= MAX_PATCH_SIDE and 1 <= h <= MAX_PATCH_SIDE):
            raise InvalidArgument(f"patch dimensions {w}x{h} outside 1..{MAX_PATCH_SIDE}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise InvalidArgument("intensities must lie in [0, 1]")
        arr.setflags(write=False)
        self.pixels = arr

    @classmethod
    def from_intensities(cls, width: int, height: int, intensities) -> "ImagePatch":
        values = np.asarray(list(intensities), dtype=np.float64)
        if values.size != width * height:
            raise InvalidArgument(
                f"expected {width * height} intensities for {width}x{height}, got {values.size}"
            )
        return cls(values.reshape(height, width))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def intensities(self) -> list[float]:
        return self.pixels.ravel().tolist()

    def __eq__(self, other):
        if not isinstance(other, ImagePatch):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash((self.pixels.shape, self.pixels.tobytes()))

    def __repr__(self):
        return f"ImagePatch({self.width}x{self.height})"


@dataclass(frozen=True)
class PointPrim:
    x: float
    y: float
    kind: ClassVar[str] = "point"

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidArgument("point coordinates must be finite")


@dataclass(frozen=True)
class SquareRegionPrim:
    """Axis-aligned square; the boundary belongs to the region."""

    center_x: float
    center_y: float
    side: float
    kind: ClassVar[str] = "region"

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.center_x, self.center_y, self.side)):
            raise InvalidArgument("region fields must be finite")
        if self.side <= 0:
            raise InvalidArgument(f"region side must be > 0, got {self.side}")

    @property
    def half(self) -> float:
        return self.side / 2.0


class ContourPrim:
    """Polyline through subpixel vertices.

    A closed contour joins its last vertex back to the first; the first
    vertex is not repeated at the end.
    """

    kind: ClassVar[str] = "contour"
    __slots__ = ("vertices", "closed", "_cum", "_hash")

    def __init__(self, vertices, closed: bool = False):
        v = np.array(vertices, dtype=np.float64, copy=True)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 2:
            raise InvalidArgument("contour needs at least 2 vertices of shape (n, 2)")
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("contour vertices must be finite")
        closed = bool(closed)
        if closed and v.shape[0] < 3:
            raise InvalidArgument("closed contour needs at least 3 vertices")
        pts = np.vstack([v, v[:1]]) if closed else v
        seg = np.hypot(*np.diff(pts, axis=0).T)
        if np.any(seg <= _MIN_SEGMENT):
            raise InvalidArgument("consecutive contour vertices must be distinct")
        v.setflags(write=False)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        cum.setflags(write=False)
        self.vertices = v
        self.closed = closed
        self._cum = cum
        self._hash = hash((v.tobytes(), closed))

    @property
    def path(self) -> np.ndarray:
        """Vertices with the closing vertex appended for closed contours."""
        return np.vstack([self.vertices, self.vertices[:1]]) if self.closed else self.vertices

    @property
    def cumulative_length(self) -> np.ndarray:
        return self._cum

    @property
    def length(self) -> float:
        return float(self._cum[-1])

    @property
    def start(self) -> np.ndarray:
        return self.vertices[0]

    @property
    def end(self) -> np.ndarray:
        return self.vertices[-1]

    def reversed(self) -> "ContourPrim":
        return ContourPrim(self.vertices[::-1], self.closed)

    def translated(self, dx: float, dy: float) -> "ContourPrim":
        return ContourPrim(self.vertices + np.array([dx, dy]), self.closed)

    def __eq__(self, other):
        if not isinstance(other, ContourPrim):
            return NotImplemented
        return self.closed == other.closed and np.array_equal(self.vertices, other.vertices)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"ContourPrim({self.vertices.shape[0]} vertices, closed={self.closed})"


Primitive = Union[PointPrim, ContourPrim, SquareRegionPrim]
PRIMITIVE_KINDS = ("point", "contour", "region")


def check_in_frame(prim: Primitive, width: int, height: int) -> None:
    """Raise unless ``prim`` sits inside the patch frame with 1px slack."""
    if isinstance(prim, PointPrim):
        pts = np.array([[prim.x, prim.y]])
    elif isinstance(prim, ContourPrim):
        pts = prim.vertices
    else:
        pts = np.array([[prim.center_x, prim.center_y]])
    if np.any(pts[:, 0] < -1) or np.any(pts[:, 0] > width + 1) or np.any(pts[:, 1] < -1) or np.any(
        pts[:, 1] > height + 1
    ):
        raise InvalidArgument(f"{prim.kind} lies outside the {width}x{height} patch frame")


def polyline_length(c: ContourPrim) -> float:
    return c.length


def resample_by_arclength(c: ContourPrim, k: int) -> np.ndarray:
    """``k`` points at equal arc-length fractions ``i/(k-1)``; shape ``(k, 2)``."""
    if k < 2:
        raise InvalidArgument(f"resampling needs k >= 2, got {k}")
    path = c.path
    cum = c.cumulative_length
    targets = np.linspace(0.0, cum[-1], k)
    out = np.empty((k, 2))
    out[:, 0] = np.interp(targets, cum, path[:, 0])
    out[:, 1] = np.interp(targets, cum, path[:, 1])
    out[0] = path[0]
    out[-1] = path[-1]
    return out


def _segment_index(c: ContourPrim, s: float) -> int:
    cum = c.cumulative_length
    idx = int(np.searchsorted(cum, s, side="right")) - 1
    return min(max(idx, 0), len(cum) - 2)


def tangent_angle_at(c: ContourPrim, fraction: float) -> tuple[float, float]:
    """Tangent at an arc-length fraction as ``(undirected mod pi, directed)``.

    At a vertex the following segment wins; at the very end the last
    segment is used.
    """
    if not 0.0 <= fraction <= 1.0:
        raise InvalidArgument(f"fraction must be in [0, 1], got {fraction}")
    path = c.path
    i = _segment_index(c, fraction * c.length)
    d = path[i + 1] - path[i]
    directed = math.atan2(d[1], d[0])
    return directed % math.pi, directed


def tangent_angles(c: ContourPrim, fractions) -> np.ndarray:
    """Directed tangent angles at many fractions (vectorised)."""
    path = c.path
    cum = c.cumulative_length
    s = np.asarray(fractions, dtype=np.float64) * cum[-1]
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(cum) - 2)
    d = path[idx + 1] - path[idx]
    return np.arctan2(d[:, 1], d[:, 0])


def point_to_polyline_distance(p, c: ContourPrim) -> tuple[float, float]:
    """Distance from ``p`` to the contour and arc-length fraction of the foot."""
    p = np.asarray(p, dtype=np.float64)
    path = c.path
    a = path[:-1]
    d = path[1:] - a
    seg_len2 = np.einsum("ij,ij->i", d, d)
    t = np.clip(np.einsum("ij,ij->i", p - a, d) / seg_len2, 0.0, 1.0)
    foot = a + t[:, None] * d
    dist = np.hypot(*(foot - p).T)
    i = int(np.argmin(dist))
    s = c.cumulative_length[i] + t[i] * math.sqrt(seg_len2[i])
    return float(dist[i]), float(s / c.length)


def centroid(prim: Primitive) -> np.ndarray:
    """Point itself, region centre, or arc-length weighted contour centroid."""
    if isinstance(prim, PointPrim):
        return np.array([prim.x, prim.y])
    if isinstance(prim, SquareRegionPrim):
        return np.array([prim.center_x, prim.center_y])
    path = prim.path
    seg = np.diff(prim.cumulative_length)
    mids = 0.5 * (path[:-1] + path[1:])
    return (seg[:, None] * mids).sum(axis=0) / seg.sum()


def _pixel_grid(w: int, h: int, x0: int = 0, y0: int = 0):
    ys, xs = np.mgrid[y0 : y0 + h, x0 : x0 + w]
    return xs.astype(np.float64), ys.astype(np.float64)


def _polyline_sq_dist(path: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    best = np.full(xs.shape, np.inf)
    for (ax, ay), (bx, by) in zip(path[:-1], path[1:]):
        dx, dy = bx - ax, by - ay
        t = np.clip(((xs - ax) * dx + (ys - ay) * dy) / (dx * dx + dy * dy), 0.0, 1.0)
        ex = xs - (ax + t * dx)
        ey = ys - (ay + t * dy)
        np.minimum(best, ex * ex + ey * ey, out=best)
    return best


def squared_distance_field(c: ContourPrim, w: int, h: int) -> np.ndarray:
    """Squared distance from every pixel centre to the polyline, shape ``(h, w)``."""
    xs, ys = _pixel_grid(w, h)
    return _polyline_sq_dist(c.path, xs, ys)


def _window(lo: np.ndarray, hi: np.ndarray, pad: float, w: int, h: int):
    """Pixel index box covering ``[lo - pad, hi + pad]``, clipped to the patch."""
    x0 = max(0, int(math.floor(lo[0] - pad)))
    y0 = max(0, int(math.floor(lo[1] - pad)))
    x1 = min(w, int(math.ceil(hi[0] + pad)) + 1)
    y1 = min(h, int(math.ceil(hi[1] + pad)) + 1)
    return x0, y0, x1, y1


def rasterize_primitive(prim: Primitive, width: float, w: int, h: int) -> np.ndarray:
    """Boolean ``(h, w)`` mask of pixel centres covered by ``prim``.

    Points become discs of radius ``width``, contours strokes of half-width
    ``width``; regions are filled squares (``width`` unused).
    """
    if width <= 0:
        raise InvalidArgument(f"rasterization width must be > 0, got {width}")
    out = np.zeros((h, w), dtype=bool)
    if isinstance(prim, PointPrim):
        p = np.array([prim.x, prim.y])
        x0, y0, x1, y1 = _window(p, p, width, w, h)
    elif isinstance(prim, SquareRegionPrim):
        c = np.array([prim.center_x, prim.center_y])
        x0, y0, x1, y1 = _window(c, c, prim.half, w, h)
    else:
        x0, y0, x1, y1 = _window(prim.path.min(axis=0), prim.path.max(axis=0), width, w, h)
    if x1 <= x0 or y1 <= y0:
        return out
    xs, ys = _pixel_grid(x1 - x0, y1 - y0, x0, y0)
    if isinstance(prim, PointPrim):
        sub = (xs - prim.x) ** 2 + (ys - prim.y) ** 2 <= width * width
    elif isinstance(prim, SquareRegionPrim):
        half = prim.half
        sub = (np.abs(xs - prim.center_x) <= half) & (np.abs(ys - prim.center_y) <= half)
    else:
        sub = _polyline_sq_dist(prim.path, xs, ys) <= width * width
    out[y0:y1, x0:x1] = sub
    return out


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two boolean masks; two empty masks give 1."""
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


IOU_POINT_RADIUS = 2.0
IOU_CONTOUR_HALF_WIDTH = 2.0


def primitive_iou(
    pred: Primitive,
    truth: Primitive,
    width: int,
    height: int,
    point_radius: float = IOU_POINT_RADIUS,
    contour_half_width: float = IOU_CONTOUR_HALF_WIDTH,
) -> float:
    """Jaccard overlap of the rasterized masks of two same-kind primitives."""
    if pred.kind != truth.kind:
        raise InvalidComparison(f"cannot compare a {pred.kind} with a {truth.kind}")
    r = point_radius if pred.kind == "point" else contour_half_width
    return mask_iou(rasterize_primitive(pred, r, width, height), rasterize_primitive(truth, r, width, height))
