"""Interpretation accuracy: per-part Jaccard overlap against annotations.

Accuracy is averaged per part within an image, then over images.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .candidates import CandidateConfig
from .errors import InvalidDataset
from .forest import ForestParams
from .geometry import IOU_CONTOUR_HALF_WIDTH, IOU_POINT_RADIUS, primitive_iou
from .inference import SearchParams
from .pipeline import interpret_many, train_model

AGGREGATION = "mean over parts within each image, then mean over images"

__all__ = [
    "EvalReport",
    "ComparisonParams",
    "compare_relation_sets",
    "evaluate_dataset",
    "primitive_iou",
]


@dataclass
class EvalReport:
    tag: str
    per_part: dict  # part -> mean IoU over images
    per_image: list  # mean IoU of each image
    dataset_mean: float
    n_images: int
    n_parts: int
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format": "fullinterp-eval-report",
            "version": 1,
            "model": self.tag,
            "dataset_mean_iou": self.dataset_mean,
            "per_part_mean_iou": dict(self.per_part),
            "per_image_mean_iou": list(self.per_image),
            "n_images": self.n_images,
            "n_parts": self.n_parts,
            "config": dict(self.config),
        }

    def table(self) -> str:
        width = max([len("dataset")] + [len(p) for p in self.per_part])
        lines = [f"model: {self.tag}   images: {self.n_images}   parts: {self.n_parts}"]
        for part, v in self.per_part.items():
            lines.append(f"  {part:<{width}}  {v:.4f}")
        lines.append(f"  {'dataset':<{width}}  {self.dataset_mean:.4f}")
        return "\n".join(lines)


def evaluate_dataset(
    results: list,
    truths: list,
    patch_dims: list,
    tag: str = "extended",
    point_radius: float = IOU_POINT_RADIUS,
    contour_half_width: float = IOU_CONTOUR_HALF_WIDTH,
) -> EvalReport:
    """Compare predicted configurations with annotated ones.

    ``results`` holds configurations (dicts), :class:`InterpretationResult`
    objects or ``None``; a part missing from a prediction scores 0.
    """
    if not (len(results) == len(truths) == len(patch_dims)):
        raise InvalidDataset(
            f"results ({len(results)}), truths ({len(truths)}) and dims ({len(patch_dims)}) must align"
        )
    if not truths:
        raise InvalidDataset("no images to evaluate")
    names = list(truths[0])
    per_part = {n: [] for n in names}
    per_image = []
    for i, (res, truth, dims) in enumerate(zip(results, truths, patch_dims)):
        if list(truth) != names and set(truth) != set(names):
            raise InvalidDataset(f"image {i}: annotation parts {sorted(truth)} differ from {sorted(names)}")
        cfg = {} if res is None else getattr(res, "configuration", res)
        extra = set(cfg) - set(names)
        if extra:
            raise InvalidDataset(f"image {i}: predicted parts {sorted(extra)} are not annotated")
        w, h = dims
        vals = []
        for n in names:
            v = 0.0 if n not in cfg else primitive_iou(cfg[n], truth[n], w, h, point_radius, contour_half_width)
            per_part[n].append(v)
            vals.append(v)
        per_image.append(float(np.mean(vals)))
    return EvalReport(
        tag=tag,
        per_part={n: float(np.mean(v)) for n, v in per_part.items()},
        per_image=per_image,
        dataset_mean=float(np.mean(per_image)),
        n_images=len(per_image),
        n_parts=len(names),
        config={
            "point_radius": point_radius,
            "contour_half_width": contour_half_width,
            "aggregation": AGGREGATION,
        },
    )


@dataclass(frozen=True)
class ComparisonParams:
    n_negatives: int = 25000
    forest: ForestParams = ForestParams()
    search: SearchParams = SearchParams()
    candidates: CandidateConfig = CandidateConfig()
    n_jobs: int = 1


def compare_relation_sets(schema, train_positives, negative_patches, test_positives, params=ComparisonParams()):
    """Train and evaluate a basic and an extended model on the same split.

    Returns ``(basic_report, extended_report)``.
    """
    reports = []
    for tag, sch in (("basic", schema.basic()), ("extended", schema)):
        model = train_model(
            sch,
            train_positives,
            negative_patches,
            params.n_negatives,
            params.forest,
            params.candidates,
            params.n_jobs,
        )
        results = interpret_many(model, [p.image for p in test_positives], params.search, params.candidates, params.n_jobs)
        report = evaluate_dataset(
            results,
            [p.parts for p in test_positives],
            [(p.image.width, p.image.height) for p in test_positives],
            tag=tag,
        )
        report.config.update(
            {
                "n_negatives": params.n_negatives,
                "n_trees": params.forest.n_trees,
                "max_depth": params.forest.max_depth,
                "seed": params.forest.seed,
                "beam_width": params.search.beam_width,
                "rescore_k": params.search.rescore_k,
                "unary_z_max": params.search.unary_z_max,
                "n_train": len(train_positives),
            }
        )
        reports.append(report)
    return reports[0], reports[1]
