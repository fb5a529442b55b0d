"""Class models: part schemas, feature vectors over configurations, negatives.

A schema names the parts of a class and the relations measured between
them.  A configuration assigns one primitive to every part; its feature
vector concatenates the relation blocks in schema order.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .candidates import CandidateConfig, CandidateSet, extract_candidates
from .errors import (
    IncompleteConfiguration,
    InsufficientData,
    InvalidArgument,
    KindMismatch,
    SchemaViolation,
)
from .geometry import (
    IOU_CONTOUR_HALF_WIDTH,
    IOU_POINT_RADIUS,
    PRIMITIVE_KINDS,
    ImagePatch,
    mask_iou,
    primitive_iou,
    rasterize_primitive,
)
from .relations import BASIC_RELATIONS, RELATIONS, PatchContext, compute_relation

STD_FLOOR = 1e-3
HARD_NEGATIVE_MAX_IOU = 0.5


@dataclass(frozen=True)
class RelationSpec:
    tag: str
    parts: tuple

    def to_dict(self) -> dict:
        return {"relation": self.tag, "parts": list(self.parts)}


@dataclass(frozen=True)
class StructureSchema:
    class_name: str
    parts: tuple  # ((name, kind), ...)
    relation_specs: tuple  # (RelationSpec, ...)
    relation_set: str = "extended"

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple((str(n), str(k)) for n, k in self.parts))
        object.__setattr__(
            self,
            "relation_specs",
            tuple(
                RelationSpec(s.tag, tuple(s.parts)) if isinstance(s, RelationSpec) else RelationSpec(s[0], tuple(s[1]))
                for s in self.relation_specs
            ),
        )
        self._validate()

    def _validate(self) -> None:
        if not self.parts:
            raise SchemaViolation("schema has no parts")
        names = [n for n, _ in self.parts]
        if len(set(names)) != len(names):
            raise SchemaViolation("part names must be unique")
        kinds = dict(self.parts)
        for n, k in self.parts:
            if k not in PRIMITIVE_KINDS:
                raise SchemaViolation(f"part {n!r}: unknown kind {k!r}")
        if self.relation_set not in ("basic", "extended"):
            raise SchemaViolation(f"relation_set must be 'basic' or 'extended', got {self.relation_set!r}")
        for i, spec in enumerate(self.relation_specs):
            where = f"relation_specs[{i}]"
            if spec.tag not in RELATIONS:
                raise SchemaViolation(f"{where}: unknown relation {spec.tag!r}")
            rel = RELATIONS[spec.tag]
            if len(spec.parts) not in rel.arities:
                raise SchemaViolation(f"{where}: {spec.tag!r} takes {rel.arities} parts, got {len(spec.parts)}")
            for p in spec.parts:
                if p not in kinds:
                    raise SchemaViolation(f"{where}: unknown part {p!r}")
            if len(set(spec.parts)) != len(spec.parts):
                raise SchemaViolation(f"{where}: a part appears twice")
            arg_kinds = tuple(kinds[p] for p in spec.parts)
            if not rel.accepts(arg_kinds):
                raise SchemaViolation(f"{where}: {spec.tag!r} does not accept kinds {arg_kinds}")
            if self.relation_set == "basic" and spec.tag not in BASIC_RELATIONS:
                raise SchemaViolation(f"{where}: {spec.tag!r} is not allowed in a basic schema")

    # -- layout -------------------------------------------------------------

    @property
    def part_names(self) -> tuple:
        return tuple(n for n, _ in self.parts)

    def kind_of(self, part: str) -> str:
        return dict(self.parts)[part]

    @property
    def block_lengths(self) -> tuple:
        return tuple(RELATIONS[s.tag].feature_len for s in self.relation_specs)

    @property
    def offsets(self) -> tuple:
        out, acc = [], 0
        for n in self.block_lengths:
            out.append(acc)
            acc += n
        return tuple(out)

    @property
    def feature_vector_len(self) -> int:
        return sum(self.block_lengths)

    def block_slices(self) -> list:
        return [slice(o, o + n) for o, n in zip(self.offsets, self.block_lengths)]

    def degree(self, part: str) -> int:
        return sum(1 for s in self.relation_specs if part in s.parts)

    def unary_specs(self, part: str) -> list:
        return [i for i, s in enumerate(self.relation_specs) if s.parts == (part,)]

    def basic(self) -> "StructureSchema":
        """Same parts, restricted to location and appearance relations."""
        return StructureSchema(
            self.class_name,
            self.parts,
            tuple(s for s in self.relation_specs if s.tag in BASIC_RELATIONS),
            "basic",
        )

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": "fullinterp-schema",
            "version": 1,
            "class_name": self.class_name,
            "relation_set": self.relation_set,
            "parts": [{"name": n, "kind": k} for n, k in self.parts],
            "relation_specs": [s.to_dict() for s in self.relation_specs],
            "feature_vector_len": self.feature_vector_len,
        }

    @property
    def fingerprint(self) -> str:
        doc = self.to_dict()
        canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def schema_from_dict(doc: dict) -> StructureSchema:
    if not isinstance(doc, dict):
        raise SchemaViolation("schema document must be a JSON object")
    try:
        parts = doc["parts"]
        specs = doc.get("relation_specs", [])
        if not isinstance(parts, list) or not isinstance(specs, list):
            raise SchemaViolation("'parts' and 'relation_specs' must be lists")
        part_list = []
        for i, p in enumerate(parts):
            if not isinstance(p, dict) or "name" not in p or "kind" not in p:
                raise SchemaViolation(f"parts[{i}]: needs 'name' and 'kind'")
            part_list.append((p["name"], p["kind"]))
        spec_list = []
        for i, s in enumerate(specs):
            if not isinstance(s, dict) or "relation" not in s or not isinstance(s.get("parts"), list):
                raise SchemaViolation(f"relation_specs[{i}]: needs 'relation' and a 'parts' list")
            spec_list.append(RelationSpec(str(s["relation"]), tuple(str(x) for x in s["parts"])))
        schema = StructureSchema(
            str(doc.get("class_name", "")), tuple(part_list), tuple(spec_list), str(doc.get("relation_set", "extended"))
        )
    except KeyError as exc:
        raise SchemaViolation(f"schema: missing field {exc.args[0]!r}") from None
    declared = doc.get("feature_vector_len")
    if declared is not None and declared != schema.feature_vector_len:
        raise SchemaViolation(
            f"feature_vector_len: declared {declared}, computed {schema.feature_vector_len}"
        )
    return schema


# -- annotated data -----------------------------------------------------------


@dataclass
class AnnotatedPatch:
    image: ImagePatch
    parts: dict  # part name -> Primitive
    name: str = ""


class PatchFeatures:
    """Per-patch cache of relation blocks keyed by ``(tag, primitives)``."""

    def __init__(self, img: ImagePatch, edges=None, ctx: PatchContext | None = None):
        self.ctx = ctx if ctx is not None else PatchContext(img, edges)
        self._blocks: dict = {}

    @property
    def img(self) -> ImagePatch:
        return self.ctx.img

    def block(self, tag: str, prims: tuple) -> np.ndarray:
        key = (tag, prims)
        out = self._blocks.get(key)
        if out is None:
            try:
                out = compute_relation(tag, prims, self.ctx)
            except KindMismatch as exc:
                raise SchemaViolation(str(exc)) from None
            out = np.asarray(out, dtype=np.float64)
            self._blocks[key] = out
        return out


def _check_configuration(schema: StructureSchema, cfg: dict) -> None:
    for name, kind in schema.parts:
        if name not in cfg:
            raise IncompleteConfiguration(f"configuration has no primitive for part {name!r}")
        got = getattr(cfg[name], "kind", None)
        if got != kind:
            raise SchemaViolation(f"part {name!r} expects a {kind}, got {got}")


def assemble_feature_vector(schema: StructureSchema, cfg: dict, img: ImagePatch, edges=None, features=None) -> np.ndarray:
    """Concatenate every relation block of ``schema`` evaluated on ``cfg``."""
    _check_configuration(schema, cfg)
    if features is None:
        features = PatchFeatures(img, edges)
    out = np.empty(schema.feature_vector_len)
    for spec, sl in zip(schema.relation_specs, schema.block_slices()):
        out[sl] = features.block(spec.tag, tuple(cfg[p] for p in spec.parts))
    if not np.all(np.isfinite(out)):
        raise SchemaViolation("feature vector has non-finite values")
    return out


# -- unary statistics ---------------------------------------------------------


PRUNING_TAGS = ("location", "intensity_extremum", "appearance_along_contour", "appearance_in_region")


def unary_tags(schema: StructureSchema, part: str) -> tuple:
    """Unary blocks summarizing ``part``: location, then its intensity and appearance specs."""
    tags = ["location"]
    for i in schema.unary_specs(part):
        t = schema.relation_specs[i].tag
        if t in PRUNING_TAGS and t not in tags:
            tags.append(t)
    return tuple(tags)


def unary_vector(features: PatchFeatures, tags: tuple, prim) -> np.ndarray:
    return np.concatenate([features.block(t, (prim,)) for t in tags])


@dataclass
class PartStats:
    tags: tuple
    mean: np.ndarray
    std: np.ndarray

    def z_score(self, vec: np.ndarray) -> float:
        """Root-mean-square per-dimension z-score."""
        z = (np.asarray(vec) - self.mean) / self.std
        return float(math.sqrt(np.mean(z * z)))


@dataclass
class UnaryStats:
    parts: dict = field(default_factory=dict)  # part name -> PartStats

    def to_dict(self) -> dict:
        return {
            name: {"tags": list(s.tags), "mean": [float(v) for v in s.mean], "std": [float(v) for v in s.std]}
            for name, s in self.parts.items()
        }

    @staticmethod
    def from_dict(doc: dict) -> "UnaryStats":
        return UnaryStats(
            {
                name: PartStats(tuple(d["tags"]), np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64))
                for name, d in doc.items()
            }
        )


def unary_part_statistics(schema: StructureSchema, positives: list, configurations: list | None = None) -> UnaryStats:
    """Per-part diagonal Gaussian over location, intensity and appearance blocks."""
    if len(positives) < 2:
        raise InsufficientData(f"unary statistics need >= 2 positive examples, got {len(positives)}")
    stats = {}
    feats = [PatchFeatures(p.image) for p in positives]
    cfgs = configurations if configurations is not None else [p.parts for p in positives]
    for name in schema.part_names:
        tags = unary_tags(schema, name)
        rows = np.array([unary_vector(f, tags, c[name]) for f, c in zip(feats, cfgs)])
        stats[name] = PartStats(tags, rows.mean(axis=0), np.maximum(rows.std(axis=0), STD_FLOOR))
    return UnaryStats(stats)


# -- negatives ----------------------------------------------------------------


SNAP_MIN_IOU = 0.5


def _patch_candidates(img, candidate_config) -> CandidateSet:
    return extract_candidates(img, candidate_config)


def candidate_sets(images: list, candidate_config, n_jobs: int = 1) -> list:
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(lambda im: _patch_candidates(im, candidate_config), images))
    return [_patch_candidates(im, candidate_config) for im in images]


def _truth_overlaps(schema: StructureSchema, patch: AnnotatedPatch, cands: CandidateSet) -> dict:
    """Per part, IoU of each same-kind candidate with the annotated primitive."""
    w, h = patch.image.width, patch.image.height
    masks = {}
    out = {}
    for name, kind in schema.parts:
        r = IOU_POINT_RADIUS if kind == "point" else IOU_CONTOUR_HALF_WIDTH
        if kind not in masks:
            masks[kind] = [rasterize_primitive(p, r, w, h) for p in cands.by_kind(kind)]
        t = rasterize_primitive(patch.parts[name], r, w, h)
        out[name] = [mask_iou(m, t) for m in masks[kind]]
    return out


def snap_to_candidates(
    schema: StructureSchema,
    patch: AnnotatedPatch,
    cands: CandidateSet,
    min_iou: float = SNAP_MIN_IOU,
    overlaps: dict | None = None,
) -> dict:
    """The annotation with each part replaced by its best-overlapping candidate.

    Matching is greedy by IoU and one-to-one within a kind.  A part with no
    candidate reaching ``min_iou`` keeps its annotated primitive.  Training
    on snapped configurations keeps positives on the same footing as the
    extracted candidates seen at inference time.
    """
    overlaps = overlaps if overlaps is not None else _truth_overlaps(schema, patch, cands)
    pairs = []
    for name, kind in schema.parts:
        for j, v in enumerate(overlaps[name]):
            if v >= min_iou:
                pairs.append((-v, schema.part_names.index(name), j, name, kind))
    pairs.sort(key=lambda t: t[:3])
    out = dict(patch.parts)
    done, used = set(), set()
    for _, _, j, name, kind in pairs:
        if name in done or (kind, j) in used:
            continue
        out[name] = cands.by_kind(kind)[j]
        done.add(name)
        used.add((kind, j))
    return {n: out[n] for n in schema.part_names}


def _random_assignment(schema, cands: CandidateSet, rng) -> dict | None:
    """Kind-respecting random assignment, distinct within each kind."""
    cfg = {}
    used: dict = {}
    for name, kind in schema.parts:
        pool = cands.by_kind(kind)
        taken = used.setdefault(kind, set())
        free = [i for i in range(len(pool)) if i not in taken]
        if not free:
            return None
        i = free[int(rng.integers(len(free)))]
        taken.add(i)
        cfg[name] = pool[i]
    return cfg


def _hard_pools(schema, patch: AnnotatedPatch, cands: CandidateSet, overlaps: dict | None = None) -> dict:
    """Per part, same-kind alternatives that overlap the truth by < 0.5 IoU."""
    w, h = patch.image.width, patch.image.height
    overlaps = overlaps if overlaps is not None else _truth_overlaps(schema, patch, cands)
    pools = {}
    for name, kind in schema.parts:
        truth = patch.parts[name]
        alts = [p for p, v in zip(cands.by_kind(kind), overlaps[name]) if v < HARD_NEGATIVE_MAX_IOU]
        for n, k in schema.parts:
            other = patch.parts[n]
            if k != kind or n == name or other in alts:
                continue
            if primitive_iou(other, truth, w, h) < HARD_NEGATIVE_MAX_IOU:
                alts.append(other)
        pools[name] = alts
    return pools


def _hard_assignment(schema, base: dict, pools: dict, rng) -> dict:
    names = [n for n in schema.part_names if pools[n]]
    k = min(2, len(names))
    chosen = rng.choice(len(names), size=k, replace=False)
    cfg = dict(base)
    for j in sorted(int(c) for c in chosen):
        name = names[j]
        alts = pools[name]
        cfg[name] = alts[int(rng.integers(len(alts)))]
    return cfg


def draw_negative_configurations(
    schema: StructureSchema,
    positive_patches: list,
    negative_patches: list,
    n: int,
    seed: int,
    candidate_config: CandidateConfig = CandidateConfig(),
    positive_candidates: list | None = None,
    negative_candidates: list | None = None,
) -> list:
    """``n`` pairs ``(patch index tag, configuration)``; half hard, half random.

    Precomputed candidate sets may be passed to skip re-extraction.
    """
    if n < 1:
        raise InvalidArgument(f"n must be >= 1, got {n}")
    if not positive_patches and not negative_patches:
        raise InsufficientData("no source patches for negative sampling")
    rng = np.random.default_rng([seed, 0x6E6567])

    if negative_candidates is None:
        negative_candidates = candidate_sets(negative_patches, candidate_config)
    if positive_candidates is None:
        positive_candidates = candidate_sets([p.image for p in positive_patches], candidate_config)
    neg_sources = []
    for i, cands in enumerate(negative_candidates):
        if all(len(cands.by_kind(k)) >= sum(1 for _, kk in schema.parts if kk == k) for k in PRIMITIVE_KINDS):
            neg_sources.append((i, cands))
    hard_sources = []
    for i, (patch, cands) in enumerate(zip(positive_patches, positive_candidates)):
        overlaps = _truth_overlaps(schema, patch, cands)
        pools = _hard_pools(schema, patch, cands, overlaps)
        if sum(1 for v in pools.values() if v) >= min(2, len(schema.parts)):
            hard_sources.append((i, pools, snap_to_candidates(schema, patch, cands, overlaps=overlaps)))

    n_hard = n // 2 if neg_sources else n
    if not hard_sources:
        n_hard = 0
    n_rand = n - n_hard
    if n_rand and not neg_sources:
        raise InsufficientData(f"could not draw {n} negatives: no usable source patches")

    out = []
    for _ in range(n_hard):
        i, pools, base = hard_sources[int(rng.integers(len(hard_sources)))]
        out.append((("pos", i), _hard_assignment(schema, base, pools, rng)))
    for _ in range(n_rand):
        i, cands = neg_sources[int(rng.integers(len(neg_sources)))]
        out.append((("neg", i), _random_assignment(schema, cands, rng)))
    return out


def sample_negatives(
    schema: StructureSchema,
    positive_patches: list,
    negative_patches: list,
    n: int,
    seed: int = 0,
    candidate_config: CandidateConfig = CandidateConfig(),
    n_jobs: int = 1,
    positive_candidates: list | None = None,
) -> np.ndarray:
    """``(n, d)`` negative feature vectors; depends only on inputs and seed."""
    if positive_candidates is None:
        positive_candidates = candidate_sets([p.image for p in positive_patches], candidate_config, n_jobs)
    negative_candidates = candidate_sets(negative_patches, candidate_config, n_jobs)
    draws = draw_negative_configurations(
        schema, positive_patches, negative_patches, n, seed, candidate_config, positive_candidates, negative_candidates
    )
    by_patch: dict = {}
    for idx, (src, cfg) in enumerate(draws):
        by_patch.setdefault(src, []).append((idx, cfg))
    out = np.empty((n, schema.feature_vector_len))

    def work(src):
        img = positive_patches[src[1]].image if src[0] == "pos" else negative_patches[src[1]]
        feats = PatchFeatures(img)
        return [(idx, assemble_feature_vector(schema, cfg, img, features=feats)) for idx, cfg in by_patch[src]]

    keys = sorted(by_patch)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(work, keys))
    else:
        results = [work(k) for k in keys]
    for chunk in results:
        for idx, vec in chunk:
            out[idx] = vec
    return out


def positive_configurations(
    schema: StructureSchema,
    positives: list,
    candidate_config: CandidateConfig = CandidateConfig(),
    candidates: list | None = None,
) -> list:
    """Each positive's annotation snapped onto its own extracted candidates."""
    if candidates is None:
        candidates = candidate_sets([p.image for p in positives], candidate_config)
    return [snap_to_candidates(schema, p, c) for p, c in zip(positives, candidates)]


def positive_vectors(schema: StructureSchema, positives: list, configurations: list | None = None) -> np.ndarray:
    """Feature vectors of the positives; ``configurations`` overrides the annotations."""
    cfgs = configurations if configurations is not None else [p.parts for p in positives]
    return np.array([assemble_feature_vector(schema, c, p.image) for c, p in zip(cfgs, positives)])
