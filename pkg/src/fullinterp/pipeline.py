"""Train-then-interpret glue shared by evaluation, interventions and the CLI."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .candidates import CandidateConfig
from .errors import FingerprintMismatch, UninterpretablePatch
from .forest import Forest, ForestParams, train_forest
from .inference import InterpretationResult, SearchParams, interpret
from .model import (
    StructureSchema,
    UnaryStats,
    candidate_sets,
    positive_configurations,
    positive_vectors,
    sample_negatives,
    unary_part_statistics,
)


@dataclass
class TrainedModel:
    schema: StructureSchema
    forest: Forest
    unary_stats: UnaryStats

    def check(self) -> None:
        if self.forest.schema_fingerprint and self.forest.schema_fingerprint != self.schema.fingerprint:
            raise FingerprintMismatch(
                f"model was trained for schema {self.forest.schema_fingerprint[:12]}, "
                f"got schema {self.schema.fingerprint[:12]}"
            )


def train_model(
    schema: StructureSchema,
    positives: list,
    negative_patches: list,
    n_negatives: int = 25000,
    params: ForestParams = ForestParams(),
    candidate_config: CandidateConfig = CandidateConfig(),
    n_jobs: int = 1,
) -> TrainedModel:
    """Fit a forest on annotated positives against sampled negatives."""
    cands = candidate_sets([p.image for p in positives], candidate_config, n_jobs)
    cfgs = positive_configurations(schema, positives, candidate_config, cands)
    pos = positive_vectors(schema, positives, cfgs)
    neg = sample_negatives(
        schema,
        positives,
        negative_patches,
        n_negatives,
        seed=params.seed,
        candidate_config=candidate_config,
        n_jobs=n_jobs,
        positive_candidates=cands,
    )
    forest = train_forest(pos, neg, params, n_jobs=n_jobs)
    forest.schema_fingerprint = schema.fingerprint
    return TrainedModel(schema, forest, unary_part_statistics(schema, positives, cfgs))


def interpret_many(
    model: TrainedModel,
    images: list,
    params: SearchParams = SearchParams(),
    candidate_config: CandidateConfig = CandidateConfig(),
    n_jobs: int = 1,
) -> list:
    """Interpret each image; an uninterpretable patch yields ``None``."""

    def one(img):
        try:
            return interpret(img, model.schema, model.forest, model.unary_stats, params, candidate_config)
        except UninterpretablePatch:
            return None

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(one, images))
    return [one(img) for img in images]


def result_score(result: InterpretationResult | None) -> float:
    return 0.0 if result is None else float(result.score)


def scores_of(results) -> np.ndarray:
    return np.array([result_score(r) for r in results])
