"""First inference stage: propose points, contours and regions in a patch.

Extraction is class-agnostic and deliberately over-generates; the
configuration search decides which candidates fill which parts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InvalidArgument
from .filters import central_gradients, difference_of_gaussians, gaussian_blur
from .geometry import ContourPrim, ImagePatch, PointPrim, SquareRegionPrim


@dataclass(frozen=True)
class EdgeMap:
    strengths: np.ndarray  # (h, w) in [0, 1]
    orientations: np.ndarray  # (h, w) edge direction mod pi

    @property
    def width(self) -> int:
        return self.strengths.shape[1]

    @property
    def height(self) -> int:
        return self.strengths.shape[0]


@dataclass(frozen=True)
class CandidateConfig:
    max_points: int = 20
    max_contours: int = 40
    max_regions: int = 30
    point_min_response: float = 0.01
    hysteresis_high: float = 0.3
    hysteresis_low: float = 0.1
    split_angle_deg: float = 60.0
    split_window: int = 3
    min_chain_pixels: int = 4
    simplify_tolerance: float = 0.75
    region_fractions: tuple = (0.25, 0.40, 0.60)
    region_max_iou: float = 0.5


@dataclass
class CandidateSet:
    points: list = field(default_factory=list)
    contours: list = field(default_factory=list)
    regions: list = field(default_factory=list)
    point_saliences: list = field(default_factory=list)
    contour_saliences: list = field(default_factory=list)
    region_saliences: list = field(default_factory=list)

    def by_kind(self, kind: str) -> list:
        return {"point": self.points, "contour": self.contours, "region": self.regions}[kind]

    def saliences(self, kind: str) -> list:
        return {
            "point": self.point_saliences,
            "contour": self.contour_saliences,
            "region": self.region_saliences,
        }[kind]


def compute_edge_map(img: ImagePatch) -> EdgeMap:
    smooth = gaussian_blur(img.pixels, 1.0)
    gx, gy = central_gradients(smooth)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    strengths = mag / peak if peak > 0 else np.zeros_like(mag)
    orient = np.mod(np.arctan2(gy, gx) + math.pi / 2, math.pi)
    strengths.setflags(write=False)
    orient.setflags(write=False)
    return EdgeMap(strengths, orient)


# -- points -------------------------------------------------------------------


def extract_point_candidates(img: ImagePatch, max_n: int, min_response: float = 0.01, dog=None):
    """DoG extrema over 3x3 neighbourhoods as ``[(PointPrim, salience), ...]``."""
    if max_n < 1:
        raise InvalidArgument(f"max_n must be >= 1, got {max_n}")
    if dog is None:
        dog = difference_of_gaussians(img.pixels)
    padded = np.pad(dog, 1, mode="edge")
    h, w = dog.shape
    neigh = np.stack(
        [padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w] for dy in (-1, 0, 1) for dx in (-1, 0, 1) if dy or dx]
    )
    is_max = np.all(dog >= neigh, axis=0)
    is_min = np.all(dog <= neigh, axis=0)
    keep = (is_max | is_min) & (np.abs(dog) >= min_response)
    rows, cols = np.nonzero(keep)  # row-major order
    resp = np.abs(dog[rows, cols])
    order = np.argsort(-resp, kind="stable")[:max_n]
    return [(PointPrim(float(cols[i]), float(rows[i])), float(resp[i])) for i in order]


# -- contours -----------------------------------------------------------------

_N4 = ((0, 1), (1, 0), (0, -1), (-1, 0))
_N8 = _N4 + ((1, 1), (1, -1), (-1, -1), (-1, 1))


def _gradient_steps(orientations: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Quantised gradient direction per pixel as integer (dy, dx) steps."""
    grad = np.mod(orientations - math.pi / 2, math.pi)
    q = np.floor(grad / (math.pi / 4) + 0.5).astype(np.int64) % 4
    dx = np.array([1, 1, 0, -1])[q]
    dy = np.array([0, 1, 1, 1])[q]
    return dy, dx


def _shifted(a: np.ndarray, dy: np.ndarray, dx: np.ndarray) -> np.ndarray:
    """``a[r + dy, c + dx]`` per pixel, zero outside the image."""
    h, w = a.shape
    rows, cols = np.mgrid[0:h, 0:w]
    r = rows + dy
    c = cols + dx
    inside = (r >= 0) & (r < h) & (c >= 0) & (c < w)
    out = np.zeros_like(a)
    out[inside] = a[r[inside], c[inside]]
    return out


def hysteresis_mask(strengths: np.ndarray, low: float, high: float) -> np.ndarray:
    weak = strengths >= low
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return weak
    strong_labels = np.unique(labels[strengths >= high])
    strong_labels = strong_labels[strong_labels > 0]
    return np.isin(labels, strong_labels)


def non_maximum_mask(edges: EdgeMap) -> np.ndarray:
    s = edges.strengths
    dy, dx = _gradient_steps(edges.orientations)
    ahead = _shifted(s, dy, dx)
    behind = _shifted(s, -dy, -dx)
    # asymmetric tie rule keeps one pixel of a two-pixel plateau
    return (s > behind) & (s >= ahead) & (s > 0)


def _trace_chains(mask: np.ndarray) -> list[list[tuple[int, int]]]:
    h, w = mask.shape
    on = {(int(r), int(c)) for r, c in zip(*np.nonzero(mask))}

    def neighbours(p):
        r, c = p
        return [(r + dr, c + dc) for dr, dc in _N8 if (r + dr, c + dc) in on]

    degree = {p: len(neighbours(p)) for p in on}
    visited: set = set()

    def walk(start):
        path = [start]
        cur = start
        while True:
            nxt = next((q for q in neighbours(cur) if q not in visited), None)
            if nxt is None:
                return path
            visited.add(nxt)
            path.append(nxt)
            cur = nxt

    chains = []
    for p in sorted(on, key=lambda q: (degree[q] != 1, q)):
        if p in visited:
            continue
        visited.add(p)
        chain = walk(p)
        if degree[p] != 1:
            back = walk(p)
            chain = back[::-1] + chain[1:]
        chains.append(chain)
    return chains


def _turning(pts: np.ndarray, window: int, cyclic: bool) -> np.ndarray:
    n = len(pts)
    turn = np.zeros(n)
    for i in range(n) if cyclic else range(window, n - window):
        v1 = pts[i] - pts[(i - window) % n]
        v2 = pts[(i + window) % n] - pts[i]
        den = np.linalg.norm(v1) * np.linalg.norm(v2)
        if den == 0:
            continue
        turn[i] = math.acos(max(-1.0, min(1.0, float(np.dot(v1, v2)) / den)))
    return turn


def _split_points(pts: np.ndarray, window: int, angle_deg: float, cyclic: bool = False) -> list[int]:
    """Indices of turning-angle maxima above ``angle_deg``.

    A maximum must also turn by more than ``angle_deg`` over a window two
    pixels wider, which rejects one-pixel staircase wiggles on curves.
    """
    n = len(pts)
    if n < 2 * window + 1:
        return []
    limit = math.radians(angle_deg)
    turn = _turning(pts, window, cyclic)
    wide = window + 2
    confirm = _turning(pts, wide, cyclic) if n >= 2 * wide + 1 else None
    above = turn > limit
    start = 0
    if cyclic:
        if above.all():
            return [int(np.argmax(turn))]
        # begin scanning just after a run boundary so no run wraps around
        start = int(np.nonzero(~above)[0][0])
    splits = []
    k = 0
    while k < n:
        i = (start + k) % n
        if above[i]:
            run = [i]
            while k + 1 < n and above[(start + k + 1) % n]:
                k += 1
                run.append((start + k) % n)
            best = run[int(np.argmax(turn[run]))]
            checkable = confirm is not None and (cyclic or wide <= best < n - wide)
            if not checkable or confirm[best] > limit:
                splits.append(best)
        k += 1
    return sorted(splits)


def _is_cycle(chain) -> bool:
    (r0, c0), (r1, c1) = chain[0], chain[-1]
    return len(chain) >= 4 and max(abs(r0 - r1), abs(c0 - c1)) == 1


def simplify_polyline(pts: np.ndarray, tol: float) -> np.ndarray:
    """Ramer-Douglas-Peucker with maximum deviation ``tol``."""
    if len(pts) <= 2:
        return pts
    keep = np.zeros(len(pts), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(pts) - 1)]
    while stack:
        i, j = stack.pop()
        if j <= i + 1:
            continue
        a, b = pts[i], pts[j]
        d = b - a
        norm = math.hypot(d[0], d[1])
        seg = pts[i + 1 : j] - a
        if norm < 1e-12:
            dist = np.hypot(seg[:, 0], seg[:, 1])
        else:
            dist = np.abs(seg[:, 0] * d[1] - seg[:, 1] * d[0]) / norm
        k = int(np.argmax(dist))
        if dist[k] > tol:
            m = i + 1 + k
            keep[m] = True
            stack.append((i, m))
            stack.append((m, j))
    return pts[keep]


def _refine(chain, edges: EdgeMap, dy: np.ndarray, dx: np.ndarray) -> np.ndarray:
    """Subpixel vertex positions by a parabola across the edge."""
    s = edges.strengths
    h, w = s.shape
    out = np.empty((len(chain), 2))
    for k, (r, c) in enumerate(chain):
        sy, sx = int(dy[r, c]), int(dx[r, c])
        s0 = s[r, c]
        rm, cm, rp, cp = r - sy, c - sx, r + sy, c + sx
        sm = s[rm, cm] if 0 <= rm < h and 0 <= cm < w else 0.0
        sp = s[rp, cp] if 0 <= rp < h and 0 <= cp < w else 0.0
        denom = sm - 2 * s0 + sp
        off = 0.0
        if denom < 0:
            off = min(0.5, max(-0.5, 0.5 * (sm - sp) / denom))
        out[k] = (c + off * sx, r + off * sy)
    return out


def _as_contour(pts: np.ndarray):
    keep = [0]
    for i in range(1, len(pts)):
        if math.hypot(*(pts[i] - pts[keep[-1]])) > 1e-6:
            keep.append(i)
    pts = pts[keep]
    if len(pts) < 2:
        return None
    return ContourPrim(pts)


def extract_contour_candidates(edges: EdgeMap, max_n: int, config: CandidateConfig = CandidateConfig()):
    if max_n < 1:
        raise InvalidArgument(f"max_n must be >= 1, got {max_n}")
    s = edges.strengths
    mask = hysteresis_mask(s, config.hysteresis_low, config.hysteresis_high) & non_maximum_mask(edges)
    if not mask.any():
        return []
    dy, dx = _gradient_steps(edges.orientations)
    found = []
    for chain in _trace_chains(mask):
        if len(chain) < config.min_chain_pixels:
            continue
        refined = _refine(chain, edges, dy, dx)
        grid = np.array([(c, r) for r, c in chain], dtype=np.float64)
        cyclic = _is_cycle(chain)
        cuts = _split_points(grid, config.split_window, config.split_angle_deg, cyclic)
        if cyclic and not cuts:
            pts = simplify_polyline(np.vstack([refined, refined[:1]]), config.simplify_tolerance)[:-1]
            if len(pts) >= 3:
                strength = float(np.mean([s[r, c] for r, c in chain]))
                contour = ContourPrim(pts, closed=True)
                found.append((contour, strength * contour.length))
            continue
        if cyclic:
            # reopen the loop at its first corner
            first = cuts[0]
            order = list(range(first, len(chain))) + list(range(first + 1))
            chain = [chain[i] for i in order]
            refined = refined[order]
            cuts = [c - first if c >= first else c - first + len(order) - 1 for c in cuts[1:]]
            cuts.sort()
        bounds = [0, *cuts, len(chain) - 1]
        for a, b in zip(bounds[:-1], bounds[1:]):
            # pixels within one step of a corner are rounded by the blur and
            # belong to neither side; true chain ends are kept
            lo = a + 2 if (a > 0 or cyclic) else a
            hi = b - 1 if (b < len(chain) - 1 or cyclic) else b + 1
            piece = chain[lo:hi]
            if len(piece) < config.min_chain_pixels:
                continue
            pts = simplify_polyline(refined[lo:hi], config.simplify_tolerance)
            contour = _as_contour(pts)
            if contour is None:
                continue
            strength = float(np.mean([s[r, c] for r, c in piece]))
            found.append((contour, strength * contour.length))
    order = sorted(range(len(found)), key=lambda i: -found[i][1])
    return [found[i] for i in order[:max_n]]


# -- regions ------------------------------------------------------------------


def region_sides(width: int, height: int, fractions=(0.25, 0.40, 0.60)) -> list[int]:
    m = min(width, height)
    return [max(1, int(round(f * m))) for f in fractions]


def region_grid(width: int, height: int, fractions=(0.25, 0.40, 0.60)):
    """All sliding squares as ``(x0, y0, side)`` with top-left pixel indices."""
    out = []
    for side in region_sides(width, height, fractions):
        stride = max(1, side // 2)
        for y0 in range(0, height - side + 1, stride):
            for x0 in range(0, width - side + 1, stride):
                out.append((x0, y0, side))
    return out


def _square_iou(a, b) -> float:
    ax, ay, asz = a
    bx, by, bsz = b
    ix = max(0, min(ax + asz, bx + bsz) - max(ax, bx))
    iy = max(0, min(ay + asz, by + bsz) - max(ay, by))
    inter = ix * iy
    return inter / (asz * asz + bsz * bsz - inter)


def extract_region_candidates(img: ImagePatch, max_n: int, config: CandidateConfig = CandidateConfig()):
    if max_n < 1:
        raise InvalidArgument(f"max_n must be >= 1, got {max_n}")
    px = img.pixels
    squares = region_grid(img.width, img.height, config.region_fractions)
    scored = []
    for sq in squares:
        x0, y0, side = sq
        scored.append((float(px[y0 : y0 + side, x0 : x0 + side].var()), sq))
    order = sorted(range(len(scored)), key=lambda i: -scored[i][0])
    kept = []
    for i in order:
        sal, sq = scored[i]
        if all(_square_iou(sq, k[1]) <= config.region_max_iou for k in kept):
            kept.append((sal, sq))
            if len(kept) == max_n:
                break
    return [
        (SquareRegionPrim(x0 + (side - 1) / 2.0, y0 + (side - 1) / 2.0, float(side)), sal)
        for sal, (x0, y0, side) in kept
    ]


def extract_candidates(img: ImagePatch, config: CandidateConfig = CandidateConfig(), edges=None, dog=None):
    edges = edges if edges is not None else compute_edge_map(img)
    pts = extract_point_candidates(img, config.max_points, config.point_min_response, dog=dog)
    cons = extract_contour_candidates(edges, config.max_contours, config)
    regs = extract_region_candidates(img, config.max_regions, config)
    return CandidateSet(
        points=[p for p, _ in pts],
        contours=[c for c, _ in cons],
        regions=[r for r, _ in regs],
        point_saliences=[s for _, s in pts],
        contour_saliences=[s for _, s in cons],
        region_saliences=[s for _, s in regs],
    )
