"""Relation-ablating image transforms and the score change they cause.

Two transforms are provided.  ``recolor_pixels`` paints a handful of pixels
with the colour of their surroundings, which removes a point-like intensity
extremum.  ``render_sketch`` redraws the extracted contours as thin black
strokes with smooth random wiggles, which removes contour straightness.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .candidates import CandidateConfig, compute_edge_map, extract_contour_candidates
from .errors import ConstraintViolation, InvalidArgument, UninterpretablePatch
from .forest import Forest
from .geometry import ContourPrim, ImagePatch, PointPrim, resample_by_arclength
from .inference import SearchParams, interpret
from .model import PatchFeatures, StructureSchema, UnaryStats
from .relations import RELATIONS

MAX_RECOLOR_PIXELS = 4
INTERVENTION_KINDS = ("recolor_pixels", "render_sketch")
SKETCH_STEP = 1.0  # vertex spacing before displacement, pixels
SKETCH_SMOOTHING = 8.0  # noise correlation length along the contour, pixels
_STROKE_STEP = 0.25
_NOISE_SEED_TAG = 0x736B


def _as_pixel(p) -> tuple[int, int]:
    try:
        x, y = p
    except (TypeError, ValueError):
        raise InvalidArgument(f"pixel must be an (x, y) pair, got {p!r}") from None
    for v in (x, y):
        if isinstance(v, bool) or not float(v).is_integer():
            raise InvalidArgument(f"pixel coordinates must be integers, got {p!r}")
    return int(x), int(y)


def recolor_pixels(img: ImagePatch, pixels) -> ImagePatch:
    """Replace each listed ``(x, y)`` pixel by the median of its 8-neighbours.

    Neighbours outside the patch or themselves listed are ignored; a pixel
    left with no usable neighbour keeps its value.  All medians are taken
    from the input image, so the result does not depend on list order.
    """
    pixels = list(pixels)
    if len(pixels) > MAX_RECOLOR_PIXELS:
        raise ConstraintViolation(f"at most {MAX_RECOLOR_PIXELS} pixels may be recolored, got {len(pixels)}")
    if not pixels:
        raise InvalidArgument("recolor needs at least one pixel")
    coords = [_as_pixel(p) for p in pixels]
    if len(set(coords)) != len(coords):
        raise InvalidArgument("recolor pixels must be distinct")
    w, h = img.width, img.height
    for x, y in coords:
        if not (0 <= x < w and 0 <= y < h):
            raise InvalidArgument(f"pixel ({x}, {y}) outside the {w}x{h} patch")
    listed = set(coords)
    src = img.pixels
    out = src.copy()
    for x, y in coords:
        vals = [
            src[y + dy, x + dx]
            for dy in (-1, 0, 1)
            for dx in (-1, 0, 1)
            if (dx or dy) and 0 <= x + dx < w and 0 <= y + dy < h and (x + dx, y + dy) not in listed
        ]
        if vals:
            out[y, x] = float(np.median(vals))
    return ImagePatch(out)


def extremum_pixels(img: ImagePatch, point: PointPrim, n: int = MAX_RECOLOR_PIXELS, radius: float = 1.5) -> list:
    """Up to ``n`` pixels near ``point`` that stand out most from the patch median.

    The polarity follows the point's own pixel: a dark point yields the
    darkest pixels, a bright one the brightest.  Ties go to the nearer pixel.
    """
    if not 1 <= n <= MAX_RECOLOR_PIXELS:
        raise InvalidArgument(f"n must lie in 1..{MAX_RECOLOR_PIXELS}")
    w, h = img.width, img.height
    cx, cy = int(round(point.x)), int(round(point.y))
    if not (0 <= cx < w and 0 <= cy < h):
        raise InvalidArgument(f"point ({point.x}, {point.y}) outside the patch")
    sign = 1.0 if img.pixels[cy, cx] >= np.median(img.pixels) else -1.0
    r = int(math.ceil(radius))
    cand = []
    for y in range(max(0, cy - r), min(h, cy + r + 1)):
        for x in range(max(0, cx - r), min(w, cx + r + 1)):
            d2 = (x - point.x) ** 2 + (y - point.y) ** 2
            if d2 <= radius * radius:
                cand.append((-sign * img.pixels[y, x], d2, y, x))
    cand.sort()
    return [(x, y) for _, _, y, x in cand[:n]]


def identity_recolor_pixel(img: ImagePatch) -> tuple[int, int]:
    """A pixel whose recoloring changes the image least (exactly not at all if possible)."""
    p = img.pixels
    h, w = p.shape
    best, arg = math.inf, (0, 0)
    for y in range(h):
        for x in range(w):
            vals = [p[y + dy, x + dx] for dy in (-1, 0, 1) for dx in (-1, 0, 1)
                    if (dx or dy) and 0 <= x + dx < w and 0 <= y + dy < h]
            if not vals:
                return (x, y)
            d = abs(float(np.median(vals)) - p[y, x])
            if d < best:
                best, arg = d, (x, y)
                if d == 0.0:
                    return arg
    return arg


def _normals(pts: np.ndarray, closed: bool) -> np.ndarray:
    if closed:
        t = np.roll(pts, -1, axis=0) - np.roll(pts, 1, axis=0)
    else:
        t = np.gradient(pts, axis=0)
    norm = np.hypot(t[:, 0], t[:, 1])
    norm[norm == 0] = 1.0
    return np.stack([-t[:, 1] / norm, t[:, 0] / norm], axis=1)


def _smooth_noise(rng, n: int, closed: bool) -> np.ndarray:
    """Unit-variance Gaussian noise correlated over ``SKETCH_SMOOTHING`` samples."""
    white = rng.standard_normal(n)
    smooth = gaussian_filter1d(white, SKETCH_SMOOTHING / SKETCH_STEP, mode="wrap" if closed else "reflect")
    # stationary std of white noise through a unit-area Gaussian of this width
    sigma = SKETCH_SMOOTHING / SKETCH_STEP
    return smooth * math.sqrt(2.0 * math.sqrt(math.pi) * sigma)


def displace_contour(c: ContourPrim, amplitude: float, rng) -> np.ndarray:
    """Densely resampled path of ``c`` pushed along its normals by smooth noise."""
    k = max(2, int(math.ceil(c.length / SKETCH_STEP)) + 1)
    pts = resample_by_arclength(c, k)
    if c.closed:
        pts = pts[:-1]
    offsets = amplitude * _smooth_noise(rng, len(pts), c.closed)
    out = pts + offsets[:, None] * _normals(pts, c.closed)
    return np.vstack([out, out[:1]]) if c.closed else out


def draw_polyline(canvas: np.ndarray, path: np.ndarray, value: float = 0.0) -> None:
    """Set every pixel whose centre is nearest a dense sample of ``path``."""
    h, w = canvas.shape
    for a, b in zip(path[:-1], path[1:]):
        n = max(1, int(math.ceil(np.hypot(*(b - a)) / _STROKE_STEP)))
        t = np.linspace(0.0, 1.0, n + 1)[:, None]
        s = a + t * (b - a)
        cols = np.floor(s[:, 0] + 0.5).astype(np.int64)
        rows = np.floor(s[:, 1] + 0.5).astype(np.int64)
        ok = (cols >= 0) & (cols < w) & (rows >= 0) & (rows < h)
        canvas[rows[ok], cols[ok]] = value


def render_sketch(
    img: ImagePatch,
    amplitude: float,
    seed: int = 0,
    candidate_config: CandidateConfig = CandidateConfig(),
) -> ImagePatch:
    """Black one-pixel strokes along the extracted contours, wiggled by ``amplitude`` pixels."""
    if not (math.isfinite(amplitude) and amplitude >= 0):
        raise InvalidArgument(f"amplitude must be finite and >= 0, got {amplitude}")
    edges = compute_edge_map(img)
    contours = [c for c, _ in extract_contour_candidates(edges, candidate_config.max_contours, candidate_config)]
    canvas = np.ones((img.height, img.width))
    rng = np.random.default_rng([seed, _NOISE_SEED_TAG])
    for c in contours:
        draw_polyline(canvas, displace_contour(c, amplitude, rng))
    return ImagePatch(canvas)


@dataclass(frozen=True)
class InterventionSpec:
    kind: str
    target_relation: str
    pixels: tuple = ()
    amplitude: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in INTERVENTION_KINDS:
            raise InvalidArgument(f"unknown intervention kind {self.kind!r}; expected one of {INTERVENTION_KINDS}")
        if self.target_relation not in RELATIONS:
            raise InvalidArgument(f"unknown relation {self.target_relation!r}")
        if self.kind == "recolor_pixels":
            pts = tuple(_as_pixel(p) for p in self.pixels)
            if len(pts) > MAX_RECOLOR_PIXELS:
                raise ConstraintViolation(f"at most {MAX_RECOLOR_PIXELS} pixels may be recolored, got {len(pts)}")
            if not pts:
                raise InvalidArgument("recolor needs at least one pixel")
            object.__setattr__(self, "pixels", pts)
        elif not (math.isfinite(self.amplitude) and self.amplitude >= 0):
            raise InvalidArgument(f"amplitude must be finite and >= 0, got {self.amplitude}")

    def apply(self, img: ImagePatch, candidate_config: CandidateConfig = CandidateConfig()) -> ImagePatch:
        if self.kind == "recolor_pixels":
            return recolor_pixels(img, self.pixels)
        return render_sketch(img, self.amplitude, self.seed, candidate_config)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "target_relation": self.target_relation, "seed": self.seed}
        if self.kind == "recolor_pixels":
            d["pixels"] = [list(p) for p in self.pixels]
        else:
            d["amplitude"] = self.amplitude
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "InterventionSpec":
        if not isinstance(doc, dict):
            raise InvalidArgument("intervention spec must be a JSON object")
        for key in ("kind", "target_relation"):
            if key not in doc:
                raise InvalidArgument(f"intervention spec lacks {key!r}")
        seed = doc.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise InvalidArgument("seed must be an integer")
        amp = doc.get("amplitude", 0.0)
        if isinstance(amp, bool) or not isinstance(amp, (int, float)):
            raise InvalidArgument("amplitude must be a number")
        pixels = doc.get("pixels", [])
        if not isinstance(pixels, list):
            raise InvalidArgument("pixels must be a list of [x, y] pairs")
        return cls(doc["kind"], doc["target_relation"], tuple(tuple(p) if isinstance(p, list) else p for p in pixels), float(amp), seed)


@dataclass
class InterventionReport:
    original_score: float
    transformed_score: float
    ablated_relation: str
    blocks: list = field(default_factory=list)  # (spec index, parts, before, after)
    uninterpretable: bool = False

    @property
    def delta(self) -> float:
        """Score drop: positive when the transform lowers the score."""
        return self.original_score - self.transformed_score

    def to_dict(self) -> dict:
        return {
            "format": "fullinterp-intervention-report",
            "version": 1,
            "original_score": self.original_score,
            "transformed_score": self.transformed_score,
            "score_delta": self.delta,
            "ablated_relation": self.ablated_relation,
            "transformed_uninterpretable": self.uninterpretable,
            "blocks": [
                {
                    "spec_index": i,
                    "parts": list(parts),
                    "before": [float(v) for v in before],
                    "after": None if after is None else [float(v) for v in after],
                }
                for i, parts, before, after in self.blocks
            ],
        }


def _target_blocks(schema: StructureSchema, tag: str, cfg: dict, features: PatchFeatures) -> list:
    return [
        (i, spec.parts, features.block(tag, tuple(cfg[p] for p in spec.parts)))
        for i, spec in enumerate(schema.relation_specs)
        if spec.tag == tag
    ]


def measure_intervention(
    img: ImagePatch,
    spec: InterventionSpec,
    schema: StructureSchema,
    forest: Forest,
    unary_stats: UnaryStats | None = None,
    params: SearchParams = SearchParams(),
    candidate_config: CandidateConfig = CandidateConfig(),
) -> tuple[InterventionReport, ImagePatch]:
    """Interpret ``img`` before and after the transform; returns the report and transformed patch.

    A transformed patch with no valid configuration scores 0 and is flagged.
    """
    feats = PatchFeatures(img)
    before = interpret(img, schema, forest, unary_stats, params, candidate_config, features=feats)
    out = spec.apply(img, candidate_config)
    before_blocks = _target_blocks(schema, spec.target_relation, before.configuration, feats)
    try:
        out_feats = PatchFeatures(out)
        after = interpret(out, schema, forest, unary_stats, params, candidate_config, features=out_feats)
    except UninterpretablePatch:
        blocks = [(i, parts, b, None) for i, parts, b in before_blocks]
        return InterventionReport(before.score, 0.0, spec.target_relation, blocks, True), out
    after_blocks = _target_blocks(schema, spec.target_relation, after.configuration, out_feats)
    blocks = [(i, parts, b, a) for (i, parts, b), (_, _, a) in zip(before_blocks, after_blocks)]
    return InterventionReport(before.score, after.score, spec.target_relation, blocks), out
