import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fullinterp.errors import InvalidArgument, InvalidComparison, InvalidDataset
from fullinterp.evaluation import ComparisonParams, compare_relation_sets, evaluate_dataset
from fullinterp.forest import ForestParams
from fullinterp.geometry import ContourPrim, PointPrim, SquareRegionPrim, primitive_iou
from fullinterp.inference import InterpretationResult
from fullinterp.relations import rel_parallelism
from fullinterp.synthetic import HEAD_SCHEMA, TUBES_SCHEMA, generate_planted_corpus, get_class

seeds = st.integers(0, 2**32 - 1)


def test_identical_primitives_have_unit_iou():
    for p in (PointPrim(5, 5), ContourPrim([[1, 1], [9, 4], [3, 8]]), SquareRegionPrim(6, 6, 5)):
        assert primitive_iou(p, p, 16, 16) == 1.0


def test_points_far_apart_have_zero_iou():
    assert primitive_iou(PointPrim(3, 3), PointPrim(8, 3), 16, 16) == 0.0
    # 13-pixel discs one pixel apart share 8 pixels
    assert primitive_iou(PointPrim(3, 3), PointPrim(4, 3), 16, 16) == pytest.approx(8 / 18)


def test_kind_mismatch_cannot_be_compared():
    with pytest.raises(InvalidComparison):
        primitive_iou(PointPrim(3, 3), SquareRegionPrim(3, 3, 2), 16, 16)


def toy():
    truths = [
        {"p": PointPrim(3, 3), "r": SquareRegionPrim(5, 5, 4)},
        {"p": PointPrim(8, 8), "r": SquareRegionPrim(4, 4, 2)},
    ]
    preds = [
        {"p": PointPrim(3, 3), "r": SquareRegionPrim(6, 5, 4)},  # 20 px shared of 30
        {"r": SquareRegionPrim(4, 4, 2)},
    ]
    return preds, truths, [(12, 12), (12, 12)]


def test_hand_computed_two_image_toy():
    preds, truths, dims = toy()
    rep = evaluate_dataset(preds, truths, dims, tag="toy")
    assert rep.per_image == pytest.approx([(1 + 2 / 3) / 2, 0.5])
    assert rep.per_part == pytest.approx({"p": 0.5, "r": (2 / 3 + 1) / 2})
    assert rep.dataset_mean == pytest.approx(2 / 3)
    assert (rep.n_images, rep.n_parts) == (2, 2)
    assert rep.to_dict()["format"] == "fullinterp-eval-report"
    assert "dataset" in rep.table()


def test_empty_predictions_score_zero():
    _, truths, dims = toy()
    rep = evaluate_dataset([None, {}], truths, dims)
    assert rep.dataset_mean == 0.0
    res = InterpretationResult(dict(truths[0]), 0.7, {})
    assert evaluate_dataset([res], truths[:1], dims[:1]).dataset_mean == 1.0


def test_dataset_errors():
    preds, truths, dims = toy()
    with pytest.raises(InvalidDataset):
        evaluate_dataset(preds[:1], truths, dims)
    with pytest.raises(InvalidDataset):
        evaluate_dataset([], [], [])
    with pytest.raises(InvalidDataset):
        evaluate_dataset([{"q": PointPrim(1, 1)}, {}], truths, dims)
    with pytest.raises(InvalidDataset):
        evaluate_dataset(preds, [truths[0], {"p": PointPrim(1, 1)}], dims)


@given(seeds)
def test_dataset_mean_is_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    truths, preds = [], []
    for _ in range(6):
        truths.append({"p": PointPrim(*rng.uniform(2, 14, 2)), "r": SquareRegionPrim(*rng.uniform(4, 12, 2), 4.0)})
        preds.append({"p": PointPrim(*rng.uniform(2, 14, 2)), "r": SquareRegionPrim(*rng.uniform(4, 12, 2), 4.0)})
    dims = [(16, 16)] * 6
    perm = rng.permutation(6)
    a = evaluate_dataset(preds, truths, dims)
    b = evaluate_dataset([preds[i] for i in perm], [truths[i] for i in perm], dims)
    assert a.dataset_mean == pytest.approx(b.dataset_mean, abs=1e-12)
    assert 0.0 <= a.dataset_mean <= 1.0


# -- synthetic corpora --------------------------------------------------------


def test_noise_zero_head_positives_share_the_planted_structure():
    pos, _ = generate_planted_corpus("head", 4, 0, 0.0, seed=2)
    for p in pos[1:]:
        assert p.parts == pos[0].parts


def test_corpus_is_reproducible_and_prefix_stable():
    a_pos, a_neg = generate_planted_corpus("tubes", 5, 3, 0.05, seed=9)
    b_pos, b_neg = generate_planted_corpus("tubes", 7, 4, 0.05, seed=9)
    for x, y in zip(a_pos, b_pos):
        assert x.image.pixels.tobytes() == y.image.pixels.tobytes()
        assert x.parts == y.parts
    for x, y in zip(a_neg, b_neg):
        assert x.pixels.tobytes() == y.pixels.tobytes()
    c_pos, _ = generate_planted_corpus("tubes", 5, 0, 0.05, seed=10)
    assert c_pos[0].image.pixels.tobytes() != a_pos[0].image.pixels.tobytes()


def test_corpus_images_are_byte_quantized():
    pos, neg = generate_planted_corpus("head", 2, 2, 0.1, seed=4)
    for img in [p.image for p in pos] + neg:
        px = img.pixels
        assert px.shape == (64, 64)
        np.testing.assert_array_equal(np.round(px * 255) / 255, px)


def test_planted_relations_at_noise_zero():
    for name, schema in (("head", HEAD_SCHEMA), ("tubes", TUBES_SCHEMA)):
        pos, _ = generate_planted_corpus(name, 3, 0, 0.0, seed=1)
        for p in pos:
            assert set(p.parts) == set(schema.part_names)
            a, b = (p.parts["upper"], p.parts["lower"]) if name == "head" else (p.parts["tube_a"], p.parts["tube_b"])
            assert rel_parallelism(a, b, 64, 64)[0] <= 0.05


def test_corpus_argument_checks():
    with pytest.raises(InvalidArgument):
        generate_planted_corpus("head", 1, 0, 0.0)
    with pytest.raises(InvalidArgument):
        generate_planted_corpus("head", 2, -1, 0.0)
    with pytest.raises(InvalidArgument):
        generate_planted_corpus("head", 2, 0, float("nan"))
    with pytest.raises(InvalidArgument):
        get_class("owl")


def test_compare_relation_sets_small():
    pos, neg = generate_planted_corpus("tubes", 10, 6, 0.05, seed=3)
    params = ComparisonParams(n_negatives=300, forest=ForestParams(n_trees=5, max_depth=8, seed=1))
    basic, extended = compare_relation_sets(TUBES_SCHEMA, pos[:6], neg, pos[6:], params)
    assert (basic.tag, extended.tag) == ("basic", "extended")
    assert basic.n_images == extended.n_images == 4
    for rep in (basic, extended):
        assert 0.0 <= rep.dataset_mean <= 1.0
