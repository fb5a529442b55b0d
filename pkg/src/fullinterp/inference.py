"""Second inference stage: find the configuration the forest likes best.

Parts are filled one at a time, most-connected first.  A partial state is
scored by filling the relation blocks it cannot compute yet with the mean
training-positive values, so one fixed-width forest ranks every level.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .candidates import CandidateConfig, CandidateSet, extract_candidates
from .errors import InvalidArgument, TooLarge, UninterpretablePatch
from .forest import Forest, score, score_batch
from .geometry import ImagePatch
from .model import PatchFeatures, StructureSchema, UnaryStats, assemble_feature_vector, unary_vector

FALLBACK_KEEP = 3
EXHAUSTIVE_CAP = 10**6
_BATCH = 4096


@dataclass(frozen=True)
class SearchParams:
    beam_width: int | None = 50  # None: unbounded
    rescore_k: int | None = 25  # None: all complete states
    unary_z_max: float = 4.0

    def __post_init__(self):
        if self.beam_width is not None and self.beam_width < 1:
            raise InvalidArgument("beam_width must be >= 1")
        if self.rescore_k is not None and self.rescore_k < 1:
            raise InvalidArgument("rescore_k must be >= 1")
        if not self.unary_z_max >= 0:
            raise InvalidArgument("unary_z_max must be >= 0")


@dataclass
class InterpretationResult:
    configuration: dict  # part name -> Primitive
    score: float
    search_stats: dict = field(default_factory=dict)

    @property
    def per_part_primitives(self) -> dict:
        return dict(self.configuration)


def search_order(schema: StructureSchema) -> list:
    """Part names by descending relation degree, schema order on ties."""
    idx = {n: i for i, n in enumerate(schema.part_names)}
    return sorted(schema.part_names, key=lambda n: (-schema.degree(n), idx[n]))


def _completion_levels(schema: StructureSchema, order: list) -> list:
    """For each search level, the spec indices whose last part is filled there."""
    level_of = {n: i for i, n in enumerate(order)}
    levels = [[] for _ in order]
    for si, spec in enumerate(schema.relation_specs):
        levels[max(level_of[p] for p in spec.parts)].append(si)
    return levels


def _pools(schema, cands: CandidateSet) -> dict:
    pools = {}
    for name, kind in schema.parts:
        pool = cands.by_kind(kind)
        if not pool:
            raise UninterpretablePatch(name, f"no {kind} candidates for part {name!r}")
        pools[name] = pool
    return pools


def prune_candidates(schema, pools: dict, features: PatchFeatures, stats: UnaryStats | None, z_max: float) -> dict:
    """Per part, pool indices passing the unary z-score test (salience order kept)."""
    out = {}
    for name in schema.part_names:
        pool = pools[name]
        if stats is None or name not in stats.parts or math.isinf(z_max):
            out[name] = list(range(len(pool)))
            continue
        ps = stats.parts[name]
        z = np.array([ps.z_score(unary_vector(features, ps.tags, prim)) for prim in pool])
        keep = [i for i in range(len(pool)) if z[i] <= z_max]
        if not keep:
            best = np.argsort(z, kind="stable")[:FALLBACK_KEEP]
            keep = sorted(int(i) for i in best)
        out[name] = keep
    return out


class _Scorer:
    def __init__(self, schema, forest: Forest, features: PatchFeatures, pools: dict, order: list):
        self.schema = schema
        self.forest = forest
        self.features = features
        self.pools = pools
        self.order = order
        self.levels = _completion_levels(schema, order)
        self.slices = schema.block_slices()
        mean = forest.positive_mean
        self.base = np.zeros(schema.feature_vector_len) if mean is None else np.asarray(mean, dtype=np.float64)

    def extend(self, parent_vec: np.ndarray, assign: tuple) -> np.ndarray:
        """Copy of ``parent_vec`` with the specs completed by the last part filled."""
        level = len(assign) - 1
        vec = parent_vec.copy()
        named = {self.order[i]: self.pools[self.order[i]][j] for i, j in enumerate(assign)}
        for si in self.levels[level]:
            spec = self.schema.relation_specs[si]
            vec[self.slices[si]] = self.features.block(spec.tag, tuple(named[p] for p in spec.parts))
        return vec


def _kind_clash(schema, order, assign: tuple, j: int) -> bool:
    """Would giving the next part pool index ``j`` reuse a candidate of its kind?"""
    kind = schema.kind_of(order[len(assign)])
    return any(schema.kind_of(order[i]) == kind and a == j for i, a in enumerate(assign))


def _configuration(order, pools, assign) -> dict:
    return {order[i]: pools[order[i]][j] for i, j in enumerate(assign)}


def _finish(schema, forest, img, features, order, pools, assign, stats, t0) -> InterpretationResult:
    cfg = _configuration(order, pools, assign)
    cfg = {n: cfg[n] for n in schema.part_names}
    vec = assemble_feature_vector(schema, cfg, img, features=features)
    stats["elapsed"] = time.perf_counter() - t0
    return InterpretationResult(cfg, score(forest, vec), stats)


def interpret(
    img: ImagePatch,
    schema: StructureSchema,
    forest: Forest,
    unary_stats: UnaryStats | None = None,
    params: SearchParams = SearchParams(),
    candidate_config: CandidateConfig = CandidateConfig(),
    candidates: CandidateSet | None = None,
    features: PatchFeatures | None = None,
) -> InterpretationResult:
    """Beam search over candidate assignments; see :class:`SearchParams`."""
    t0 = time.perf_counter()
    if forest.n_features != schema.feature_vector_len:
        raise InvalidArgument(
            f"forest expects {forest.n_features} features, schema produces {schema.feature_vector_len}"
        )
    features = features if features is not None else PatchFeatures(img)
    ctx = features.ctx
    if candidates is None:
        candidates = extract_candidates(img, candidate_config, edges=ctx.edges, dog=ctx.dog)
    pools = _pools(schema, candidates)
    kept = prune_candidates(schema, pools, features, unary_stats, params.unary_z_max)
    order = search_order(schema)
    scorer = _Scorer(schema, forest, features, pools, order)

    # a state is (assignment tuple, vector); lists stay in discovery order
    states = [((), scorer.base)]
    expanded = pruned = 0
    scores = np.zeros(1)
    for level, name in enumerate(order):
        children = _expand(schema, order, scorer, states, kept[name])
        if not children and len(kept[name]) < len(pools[name]):
            # pruning left only candidates already taken; reopen the full pool
            children = _expand(schema, order, scorer, states, range(len(pools[name])))
        if not children:
            raise UninterpretablePatch(name, f"not enough distinct candidates to fill part {name!r}")
        expanded += len(children)
        scores = _score_rows(forest, [v for _, v in children])
        limit = params.beam_width if level < len(order) - 1 else params.rescore_k
        if limit is not None and len(children) > limit:
            # best first; earlier discovery wins ties; survivors keep discovery order
            top = np.lexsort((np.arange(len(children)), -scores))[:limit]
            top.sort()
            pruned += len(children) - limit
            children = [children[i] for i in top]
            scores = scores[top]
        states = children

    best = int(np.argmax(scores))  # first maximum = earliest discovery
    stats = {"expanded": expanded, "pruned": pruned, "candidates": {n: len(kept[n]) for n in schema.part_names}}
    return _finish(schema, forest, img, features, order, pools, states[best][0], stats, t0)


def _expand(schema, order, scorer, states, choices) -> list:
    children = []
    for assign, vec in states:
        for j in choices:
            if _kind_clash(schema, order, assign, j):
                continue
            child = assign + (j,)
            children.append((child, scorer.extend(vec, child)))
    return children


def _score_rows(forest, rows) -> np.ndarray:
    out = []
    for i in range(0, len(rows), _BATCH):
        out.append(score_batch(forest, np.vstack(rows[i : i + _BATCH])))
    return np.concatenate(out)


def exhaustive_interpret(
    img: ImagePatch,
    schema: StructureSchema,
    forest: Forest,
    cap: int = EXHAUSTIVE_CAP,
    candidate_config: CandidateConfig = CandidateConfig(),
    candidates: CandidateSet | None = None,
) -> InterpretationResult:
    """Score every complete configuration; exact argmax, earliest on ties."""
    t0 = time.perf_counter()
    features = PatchFeatures(img)
    ctx = features.ctx
    if candidates is None:
        candidates = extract_candidates(img, candidate_config, edges=ctx.edges, dog=ctx.dog)
    pools = _pools(schema, candidates)
    order = search_order(schema)
    total = math.prod(len(pools[n]) for n in order)
    if total > cap:
        raise TooLarge(f"{total} configurations exceed the cap of {cap}")

    best_score, best_assign, seen = -1.0, None, 0
    slices = schema.block_slices()
    batch, assigns = [], []

    def flush():
        nonlocal best_score, best_assign
        s = score_batch(forest, np.vstack(batch))
        i = int(np.argmax(s))
        if s[i] > best_score:
            best_score, best_assign = float(s[i]), assigns[i]
        batch.clear()
        assigns.clear()

    for assign in itertools.product(*(range(len(pools[n])) for n in order)):
        if any(_kind_clash(schema, order, assign[:k], assign[k]) for k in range(1, len(assign))):
            continue
        cfg = _configuration(order, pools, assign)
        vec = np.empty(schema.feature_vector_len)
        for spec, sl in zip(schema.relation_specs, slices):
            vec[sl] = features.block(spec.tag, tuple(cfg[p] for p in spec.parts))
        batch.append(vec)
        assigns.append(assign)
        seen += 1
        if len(batch) == _BATCH:
            flush()
    if batch:
        flush()
    if best_assign is None:
        raise UninterpretablePatch(order[-1], "no configuration with distinct candidates exists")
    stats = {"expanded": seen, "pruned": 0, "candidates": {n: len(pools[n]) for n in schema.part_names}}
    return _finish(schema, forest, img, features, order, pools, best_assign, stats, t0)
