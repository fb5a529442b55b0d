"""The fourteen relation measurements.

Each relation maps one or two primitives (plus the patch when appearance or
edges matter) to a fixed-length float block.  Blocks are plain 1-D numpy
arrays whose length is ``RELATIONS[tag].feature_len``.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .appearance import descriptor_along_contour, descriptor_distance, descriptor_in_region
from .candidates import EdgeMap, compute_edge_map
from .errors import KindMismatch, OutOfBounds
from .filters import bilinear, difference_of_gaussians
from .geometry import (
    ContourPrim,
    ImagePatch,
    PointPrim,
    SquareRegionPrim,
    centroid,
    point_to_polyline_distance,
    resample_by_arclength,
    tangent_angles,
)

LINE_CIRCLE_SAMPLES = 32
PARALLEL_SAMPLES = 16
COVER_SAMPLES = 256
COVER_THRESHOLD = 0.5
BRIDGE_THRESHOLD = 0.1
BRIDGE_BUDGET_FACTOR = 3
POLARITY_THRESHOLD = 0.01

ANY = None


@dataclass(frozen=True)
class RelationKind:
    tag: str
    signatures: tuple  # admissible argument-kind tuples; None matches any kind
    feature_len: int

    @property
    def arities(self) -> tuple:
        return tuple(sorted({len(s) for s in self.signatures}))

    def accepts(self, kinds) -> bool:
        kinds = tuple(kinds)
        return any(
            len(sig) == len(kinds) and all(s is None or s == k for s, k in zip(sig, kinds))
            for sig in self.signatures
        )


RELATIONS = {
    r.tag: r
    for r in [
        RelationKind("location", ((ANY,), (ANY, ANY)), 2),
        RelationKind("intensity_extremum", (("point",),), 3),
        RelationKind("line_circle_deviation", (("contour",),), 2),
        RelationKind("appearance_along_contour", (("contour",),), 9),
        RelationKind("appearance_in_region", (("region",),), 9),
        RelationKind("ending_distance", (("contour", "contour"),), 4),
        RelationKind("continuity", (("contour", "contour"),), 3),
        RelationKind("length_ratio", (("contour", "contour"),), 1),
        RelationKind("parallelism", (("contour", "contour"),), 2),
        RelationKind("appearance_coherence", (("region", "region"),), 1),
        RelationKind("cover", (("contour", "point"),), 2),
        RelationKind("bridging", (("contour", "contour"),), 2),
        RelationKind("containment", (("point", "region"),), 2),
        RelationKind("ends_in_region", (("contour", "region"),), 2),
    ]
}
BASIC_RELATIONS = frozenset({"location", "appearance_along_contour", "appearance_in_region"})


class PatchContext:
    """A patch plus lazily computed, cached derived data."""

    def __init__(self, img: ImagePatch, edges: EdgeMap | None = None):
        self.img = img
        if edges is not None:
            self.__dict__["edges"] = edges
        self._appearance: dict = {}
        self._bridge: dict = {}

    @property
    def width(self) -> int:
        return self.img.width

    @property
    def height(self) -> int:
        return self.img.height

    @cached_property
    def edges(self) -> EdgeMap:
        return compute_edge_map(self.img)

    @cached_property
    def dog(self) -> np.ndarray:
        return difference_of_gaussians(self.img.pixels)

    def appearance(self, prim):
        try:
            return self._appearance[prim]
        except KeyError:
            pass
        if isinstance(prim, ContourPrim):
            d = descriptor_along_contour(self.img, prim)
        else:
            d = descriptor_in_region(self.img, prim)
        self._appearance[prim] = d
        return d


def _require(prim, cls, tag):
    if not isinstance(prim, cls):
        raise KindMismatch(f"relation {tag!r} expects a {cls.kind}, got {getattr(prim, 'kind', type(prim))}")


def _diag(w, h) -> float:
    return math.hypot(w, h)


# -- row 1 --------------------------------------------------------------------


def rel_location(a, w: int, h: int) -> np.ndarray:
    c = centroid(a)
    return np.array([c[0] / w, c[1] / h])


def rel_relative_location(a, b, w: int, h: int) -> np.ndarray:
    d = centroid(b) - centroid(a)
    return np.array([d[0] / w, d[1] / h])


# -- row 2 --------------------------------------------------------------------


def rel_intensity_extremum(p: PointPrim, img: ImagePatch, dog: np.ndarray | None = None) -> np.ndarray:
    _require(p, PointPrim, "intensity_extremum")
    if not (-0.5 <= p.x <= img.width - 0.5 and -0.5 <= p.y <= img.height - 0.5):
        raise OutOfBounds(f"point ({p.x}, {p.y}) outside {img.width}x{img.height} patch")
    if dog is None:
        dog = difference_of_gaussians(img.pixels)
    intensity = bilinear(img.pixels, p.x, p.y)
    response = bilinear(dog, p.x, p.y)
    polarity = 0.0
    if abs(response) > POLARITY_THRESHOLD:
        polarity = 1.0 if response > 0 else -1.0
    return np.array([intensity, response, polarity])


# -- row 3 --------------------------------------------------------------------


def fit_line_residuals(pts: np.ndarray) -> np.ndarray:
    """Orthogonal residuals to the total-least-squares line."""
    centred = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(centred, full_matrices=False)
    normal = vt[-1]
    return centred @ normal


def fit_circle_pratt(pts: np.ndarray):
    """Algebraic circle fit with Pratt's normalisation.

    Returns ``(cx, cy, r)`` or ``None`` when the points are (nearly) collinear.
    """
    mean = pts.mean(axis=0)
    x = pts[:, 0] - mean[0]
    y = pts[:, 1] - mean[1]
    z = x * x + y * y
    design = np.column_stack([z, x, y, np.ones_like(x)])
    _, s, vt = np.linalg.svd(design, full_matrices=False)
    v = vt.T
    if s[3] / s[0] < 1e-12:
        coef = v[:, 3]
    else:
        w = v * s
        binv = np.array([[0, 0, 0, -0.5], [0, 1, 0, 0], [0, 0, 1, 0], [-0.5, 0, 0, 0]])
        evals, evecs = np.linalg.eig(w.T @ binv @ w)
        order = np.argsort(evals.real)
        coef = evecs[:, order[1]].real
        coef = v @ (coef / s)
    a = coef[0]
    scale = np.abs(coef).max()
    if scale == 0 or abs(a) < 1e-12 * scale:
        return None
    cx, cy = -coef[1:3] / a / 2 + mean
    disc = coef[1] ** 2 + coef[2] ** 2 - 4 * a * coef[3]
    if disc <= 0:
        return None
    r = math.sqrt(disc) / abs(a) / 2
    if not math.isfinite(r):
        return None
    return float(cx), float(cy), float(r)


def rel_line_circle_deviation(c: ContourPrim) -> np.ndarray:
    _require(c, ContourPrim, "line_circle_deviation")
    pts = resample_by_arclength(c, LINE_CIRCLE_SAMPLES)
    length = c.length
    dev_line = float(np.sqrt(np.mean(fit_line_residuals(pts) ** 2))) / length
    fit = fit_circle_pratt(pts)
    if fit is None:
        dev_circle = dev_line
    else:
        cx, cy, r = fit
        # a near-line fit has a huge radius; its residual is no better than the line's
        if r > 1e4 * length:
            dev_circle = dev_line
        else:
            resid = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy) - r
            dev_circle = float(np.sqrt(np.mean(resid**2))) / length
    return np.array([dev_line, dev_circle])


# -- rows 4, 5 ----------------------------------------------------------------


def rel_appearance_along_contour(c: ContourPrim, img: ImagePatch) -> np.ndarray:
    _require(c, ContourPrim, "appearance_along_contour")
    return descriptor_along_contour(img, c).as_array()


def rel_appearance_in_region(r: SquareRegionPrim, img: ImagePatch) -> np.ndarray:
    _require(r, SquareRegionPrim, "appearance_in_region")
    return descriptor_in_region(img, r).as_array()


# -- rows 6, 7 ----------------------------------------------------------------


def closest_endings(a: ContourPrim, b: ContourPrim):
    """Closest endpoint pair as ``(gap, pair_index, a_is_end, b_is_end)``.

    Pair indices: 0 start-start, 1 start-end, 2 end-start, 3 end-end.
    """
    best = None
    for idx, (ea, eb) in enumerate(((False, False), (False, True), (True, False), (True, True))):
        pa = a.end if ea else a.start
        pb = b.end if eb else b.start
        gap = math.hypot(pb[0] - pa[0], pb[1] - pa[1])
        if best is None or gap < best[0]:
            best = (gap, idx, ea, eb)
    return best


def _outward_tangent(c: ContourPrim, at_end: bool) -> np.ndarray:
    v = c.vertices
    d = v[-1] - v[-2] if at_end else v[0] - v[1]
    return d / math.hypot(d[0], d[1])


def _angle_between(u, v) -> float:
    return math.atan2(abs(u[0] * v[1] - u[1] * v[0]), u[0] * v[0] + u[1] * v[1])


def rel_ending_distance(a: ContourPrim, b: ContourPrim, w: int, h: int) -> np.ndarray:
    _require(a, ContourPrim, "ending_distance")
    _require(b, ContourPrim, "ending_distance")
    if a.closed or b.closed:
        return np.array([1.0, 0.0, 0.0, -1.0])
    gap, idx, ea, eb = closest_endings(a, b)
    pa = a.end if ea else a.start
    pb = b.end if eb else b.start
    return np.array([gap / _diag(w, h), (pb[0] - pa[0]) / w, (pb[1] - pa[1]) / h, float(idx)])


def rel_continuity(a: ContourPrim, b: ContourPrim, w: int, h: int) -> np.ndarray:
    _require(a, ContourPrim, "continuity")
    _require(b, ContourPrim, "continuity")
    if a.closed or b.closed:
        return np.array([1.0, 2.0, 3.0])
    gap, _, ea, eb = closest_endings(a, b)
    pa = a.end if ea else a.start
    pb = b.end if eb else b.start
    ta = _outward_tangent(a, ea)
    tb = _outward_tangent(b, eb)
    if gap < 1e-12:
        chord = ta
    else:
        chord = (pb - pa) / gap
    theta = _angle_between(ta, chord) + _angle_between(tb, -chord)
    g = gap / _diag(w, h)
    return np.array([g, theta / math.pi, g + theta / math.pi])


# -- rows 8, 9 ----------------------------------------------------------------


def rel_length_ratio(a: ContourPrim, b: ContourPrim) -> np.ndarray:
    _require(a, ContourPrim, "length_ratio")
    _require(b, ContourPrim, "length_ratio")
    return np.array([a.length / b.length])


def _undirected_gap(t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
    d = np.mod(t1 - t2, math.pi)
    return np.minimum(d, math.pi - d)


def rel_parallelism(a: ContourPrim, b: ContourPrim, w: int, h: int) -> np.ndarray:
    _require(a, ContourPrim, "parallelism")
    _require(b, ContourPrim, "parallelism")
    fr = np.linspace(0.0, 1.0, PARALLEL_SAMPLES)
    ta = tangent_angles(a, fr)
    tb = tangent_angles(b, fr)
    pa = resample_by_arclength(a, PARALLEL_SAMPLES)
    pb = resample_by_arclength(b, PARALLEL_SAMPLES)
    forward = float(np.mean(_undirected_gap(ta, tb)))
    backward = float(np.mean(_undirected_gap(ta, tb[::-1])))
    spread_f = float(np.std(np.hypot(*(pa - pb).T)))
    spread_b = float(np.std(np.hypot(*(pa - pb[::-1]).T)))
    # gaps equal up to rounding: pick the pairing with the smaller spread so the result is stable
    if abs(backward - forward) <= 1e-9:
        dev, spread = min(forward, backward), min(spread_f, spread_b)
    elif backward < forward:
        dev, spread = backward, spread_b
    else:
        dev, spread = forward, spread_f
    return np.array([dev / (math.pi / 2), spread / _diag(w, h)])


# -- row 10 -------------------------------------------------------------------


def rel_appearance_coherence(a: SquareRegionPrim, b: SquareRegionPrim, img: ImagePatch, ctx=None) -> np.ndarray:
    _require(a, SquareRegionPrim, "appearance_coherence")
    _require(b, SquareRegionPrim, "appearance_coherence")
    if ctx is not None:
        da, db = ctx.appearance(a), ctx.appearance(b)
    else:
        da, db = descriptor_in_region(img, a), descriptor_in_region(img, b)
    return np.array([descriptor_distance(da, db)])


# -- row 11 -------------------------------------------------------------------


def angular_coverage(p, pts: np.ndarray) -> float:
    """Fraction of the circle of directions swept by the polyline ``pts`` seen from ``p``.

    Consecutive samples contribute the minor arc between their directions,
    i.e. every direction is thickened by half the step to each neighbour.
    """
    phi = np.arctan2(pts[:, 1] - p[1], pts[:, 0] - p[0])
    step = np.mod(np.diff(phi) + math.pi, 2 * math.pi) - math.pi
    lo = np.where(step >= 0, phi[:-1], phi[:-1] + step)
    span = np.abs(step)
    lo = np.mod(lo, 2 * math.pi)
    hi = lo + span
    # unwrap intervals crossing 2*pi into two pieces
    wrap = hi > 2 * math.pi
    starts = np.concatenate([lo, np.zeros(int(wrap.sum()))])
    ends = np.concatenate([np.minimum(hi, 2 * math.pi), hi[wrap] - 2 * math.pi])
    order = np.argsort(starts, kind="stable")
    total = 0.0
    cur_s = cur_e = None
    for s, e in zip(starts[order], ends[order]):
        if cur_e is None or s > cur_e:
            if cur_e is not None:
                total += cur_e - cur_s
            cur_s, cur_e = s, e
        elif e > cur_e:
            cur_e = e
    if cur_e is not None:
        total += cur_e - cur_s
    return min(1.0, total / (2 * math.pi))


def rel_cover(c: ContourPrim, p: PointPrim, threshold: float = COVER_THRESHOLD) -> np.ndarray:
    _require(c, ContourPrim, "cover")
    _require(p, PointPrim, "cover")
    dist, _ = point_to_polyline_distance((p.x, p.y), c)
    if dist <= 1e-6:
        coverage = 1.0
    else:
        coverage = angular_coverage((p.x, p.y), resample_by_arclength(c, COVER_SAMPLES))
    return np.array([coverage, 1.0 if coverage >= threshold else 0.0])


# -- row 12 -------------------------------------------------------------------


def _pixel_of(pt, w, h) -> tuple[int, int]:
    col = min(max(int(math.floor(pt[0] + 0.5)), 0), w - 1)
    row = min(max(int(math.floor(pt[1] + 0.5)), 0), h - 1)
    return row, col


_STEPS8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def _min_cost_tree(strengths: np.ndarray, start, threshold: float):
    """Dijkstra from ``start`` over passable pixels, ordered by (cost, steps)."""
    h, w = strengths.shape
    best = {start: (0.0, 0)}
    heap = [(0.0, 0, start)]
    while heap:
        cost, steps, (r, c) = heapq.heappop(heap)
        if best.get((r, c)) != (cost, steps):
            continue
        for dr, dc in _STEPS8:
            rr, cc = r + dr, c + dc
            if not (0 <= rr < h and 0 <= cc < w):
                continue
            s = strengths[rr, cc]
            if s < threshold:
                continue
            nxt = (cost + (1.0 - s), steps + 1)
            old = best.get((rr, cc))
            if old is None or nxt < old:
                best[(rr, cc)] = nxt
                heapq.heappush(heap, (nxt[0], nxt[1], (rr, cc)))
    return best


def constrained_min_cost_path(strengths: np.ndarray, start, goal, budget: int, threshold: float):
    """Cheapest path with at most ``budget`` steps as ``(cost, steps)``, or None.

    Label-setting search keeping non-dominated (steps, cost) labels per pixel.
    """
    if start == goal:
        return 0.0, 0
    h, w = strengths.shape
    labels: dict = {start: [(0, 0.0)]}
    heap = [(0.0, 0, start)]
    gr, gc = goal
    while heap:
        cost, steps, (r, c) = heapq.heappop(heap)
        if (r, c) == goal:
            return cost, steps
        if steps == budget:
            continue
        for dr, dc in _STEPS8:
            rr, cc = r + dr, c + dc
            if not (0 <= rr < h and 0 <= cc < w):
                continue
            s = strengths[rr, cc]
            if s < threshold:
                continue
            ns = steps + 1
            if ns + max(abs(gr - rr), abs(gc - cc)) > budget:
                continue
            nc = cost + (1.0 - s)
            existing = labels.setdefault((rr, cc), [])
            if any(es <= ns and ec <= nc for es, ec in existing):
                continue
            existing[:] = [(es, ec) for es, ec in existing if not (ns <= es and nc <= ec)]
            existing.append((ns, nc))
            heapq.heappush(heap, (nc, ns, (rr, cc)))
    return None


def rel_bridging(
    a: ContourPrim,
    b: ContourPrim,
    edges: EdgeMap,
    threshold: float = BRIDGE_THRESHOLD,
    ctx: PatchContext | None = None,
) -> np.ndarray:
    _require(a, ContourPrim, "bridging")
    _require(b, ContourPrim, "bridging")
    if a.closed or b.closed:
        return np.array([0.0, 1.0])
    gap, _, ea, eb = closest_endings(a, b)
    w, h = edges.width, edges.height
    start = _pixel_of(a.end if ea else a.start, w, h)
    goal = _pixel_of(b.end if eb else b.start, w, h)
    if start == goal:
        return np.array([1.0, 0.0])
    budget = BRIDGE_BUDGET_FACTOR * int(math.ceil(gap))
    result = None
    tree = None
    if ctx is not None:
        tree = ctx._bridge.get((start, threshold))
    if tree is None:
        tree = _min_cost_tree(edges.strengths, start, threshold)
        if ctx is not None:
            ctx._bridge[(start, threshold)] = tree
    reach = tree.get(goal)
    if reach is not None:
        if reach[1] <= budget:
            result = reach
        else:
            result = constrained_min_cost_path(edges.strengths, start, goal, budget, threshold)
    if result is None:
        return np.array([0.0, 1.0])
    cost, steps = result
    return np.array([1.0, cost / steps])


# -- rows 13, 14 --------------------------------------------------------------


def rel_containment(p: PointPrim, r: SquareRegionPrim) -> np.ndarray:
    _require(p, PointPrim, "containment")
    _require(r, SquareRegionPrim, "containment")
    cheb = max(abs(p.x - r.center_x), abs(p.y - r.center_y))
    half = r.half
    return np.array([1.0 if cheb <= half else 0.0, (half - cheb) / half])


def rel_ends_in_region(c: ContourPrim, r: SquareRegionPrim) -> np.ndarray:
    _require(c, ContourPrim, "ends_in_region")
    _require(r, SquareRegionPrim, "ends_in_region")
    if c.closed:
        return np.array([0.0, -1.0])
    blocks = [rel_containment(PointPrim(float(e[0]), float(e[1])), r) for e in (c.start, c.end)]
    return np.array([blocks[0][0] + blocks[1][0], min(blocks[0][1], blocks[1][1])])


# -- dispatch -----------------------------------------------------------------


def compute_relation(tag: str, prims, ctx: PatchContext) -> np.ndarray:
    """Evaluate relation ``tag`` on ``prims`` in the patch described by ``ctx``."""
    try:
        kind = RELATIONS[tag]
    except KeyError:
        raise KindMismatch(f"unknown relation {tag!r}") from None
    kinds = tuple(getattr(p, "kind", None) for p in prims)
    if not kind.accepts(kinds):
        raise KindMismatch(f"relation {tag!r} does not accept arguments of kinds {kinds}")
    w, h = ctx.width, ctx.height
    if tag == "location":
        if len(prims) == 1:
            return rel_location(prims[0], w, h)
        return rel_relative_location(prims[0], prims[1], w, h)
    if tag == "intensity_extremum":
        return rel_intensity_extremum(prims[0], ctx.img, ctx.dog)
    if tag == "line_circle_deviation":
        return rel_line_circle_deviation(prims[0])
    if tag in ("appearance_along_contour", "appearance_in_region"):
        return ctx.appearance(prims[0]).as_array()
    if tag == "ending_distance":
        return rel_ending_distance(prims[0], prims[1], w, h)
    if tag == "continuity":
        return rel_continuity(prims[0], prims[1], w, h)
    if tag == "length_ratio":
        return rel_length_ratio(prims[0], prims[1])
    if tag == "parallelism":
        return rel_parallelism(prims[0], prims[1], w, h)
    if tag == "appearance_coherence":
        return rel_appearance_coherence(prims[0], prims[1], ctx.img, ctx)
    if tag == "cover":
        return rel_cover(prims[0], prims[1])
    if tag == "bridging":
        return rel_bridging(prims[0], prims[1], ctx.edges, ctx=ctx)
    if tag == "containment":
        return rel_containment(prims[0], prims[1])
    return rel_ends_in_region(prims[0], prims[1])
