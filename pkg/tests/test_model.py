import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fullinterp.candidates import CandidateSet
from fullinterp.errors import IncompleteConfiguration, InsufficientData, InvalidArgument, SchemaViolation
from fullinterp.geometry import ContourPrim, ImagePatch, PointPrim, SquareRegionPrim, primitive_iou
from fullinterp.model import (
    STD_FLOOR,
    AnnotatedPatch,
    PatchFeatures,
    RelationSpec,
    StructureSchema,
    assemble_feature_vector,
    draw_negative_configurations,
    sample_negatives,
    schema_from_dict,
    snap_to_candidates,
    unary_part_statistics,
    unary_tags,
    unary_vector,
)
from fullinterp.relations import RELATIONS, PatchContext, compute_relation
from fullinterp.synthetic import HEAD_SCHEMA, TUBES_SCHEMA, generate_planted_corpus

from helpers import flat

seeds = st.integers(0, 2**32 - 1)


@pytest.fixture(scope="module")
def corpus():
    return generate_planted_corpus("head", 6, 4, 0.05, seed=3)


def two_contours():
    return StructureSchema(
        "pair",
        (("a", "contour"), ("b", "contour")),
        (RelationSpec("length_ratio", ("a", "b")),),
    )


# -- schema -------------------------------------------------------------------


def test_schema_layout():
    s = HEAD_SCHEMA
    assert s.feature_vector_len == sum(RELATIONS[r.tag].feature_len for r in s.relation_specs)
    slices = s.block_slices()
    assert slices[0].start == 0 and slices[-1].stop == s.feature_vector_len
    assert all(a.stop == b.start for a, b in zip(slices[:-1], slices[1:]))
    assert s.degree("eye") == 4
    basic = s.basic()
    assert basic.relation_set == "basic"
    assert {r.tag for r in basic.relation_specs} <= {"location", "appearance_along_contour", "appearance_in_region"}
    assert basic.fingerprint != s.fingerprint


def test_schema_violations_name_the_spec():
    with pytest.raises(SchemaViolation, match=r"relation_specs\[1\]"):
        StructureSchema(
            "x",
            (("p", "point"), ("c", "contour")),
            (RelationSpec("location", ("p",)), RelationSpec("parallelism", ("p", "c"))),
        )
    with pytest.raises(SchemaViolation, match="no parts"):
        StructureSchema("x", (), ())
    with pytest.raises(SchemaViolation, match="unique"):
        StructureSchema("x", (("p", "point"), ("p", "point")), ())
    with pytest.raises(SchemaViolation, match="unknown part"):
        StructureSchema("x", (("p", "point"),), (RelationSpec("location", ("q",)),))
    with pytest.raises(SchemaViolation, match="basic"):
        StructureSchema("x", (("a", "contour"), ("b", "contour")), (RelationSpec("parallelism", ("a", "b")),), "basic")


def test_schema_dict_round_trip_and_length_check():
    for s in (HEAD_SCHEMA, TUBES_SCHEMA, HEAD_SCHEMA.basic()):
        doc = s.to_dict()
        back = schema_from_dict(doc)
        assert back == s and back.fingerprint == s.fingerprint
    doc = HEAD_SCHEMA.to_dict()
    doc["feature_vector_len"] += 1
    with pytest.raises(SchemaViolation, match="feature_vector_len"):
        schema_from_dict(doc)


# -- feature vectors ----------------------------------------------------------


def test_identical_contours_have_unit_length_ratio():
    c = ContourPrim([[1, 1], [8, 3], [9, 9]])
    np.testing.assert_array_equal(assemble_feature_vector(two_contours(), {"a": c, "b": c}, flat(12, 12)), [1.0])


def test_head_vector_is_concatenation_of_relation_calls(corpus):
    patch = corpus[0][0]
    ctx = PatchContext(patch.image)
    want = np.concatenate(
        [compute_relation(r.tag, tuple(patch.parts[p] for p in r.parts), ctx) for r in HEAD_SCHEMA.relation_specs]
    )
    got = assemble_feature_vector(HEAD_SCHEMA, patch.parts, patch.image)
    np.testing.assert_array_equal(got, want)
    assert got.shape == (HEAD_SCHEMA.feature_vector_len,)


def test_configuration_errors():
    s = two_contours()
    c = ContourPrim([[1, 1], [8, 3]])
    with pytest.raises(IncompleteConfiguration, match="'b'"):
        assemble_feature_vector(s, {"a": c}, flat(12, 12))
    with pytest.raises(SchemaViolation):
        assemble_feature_vector(s, {"a": c, "b": PointPrim(2, 2)}, flat(12, 12))


def test_patch_features_cache_returns_same_block():
    f = PatchFeatures(flat(12, 12))
    c = ContourPrim([[1, 1], [8, 3]])
    assert f.block("line_circle_deviation", (c,)) is f.block("line_circle_deviation", (c,))


# -- unary statistics ---------------------------------------------------------


def test_unary_tags():
    assert unary_tags(HEAD_SCHEMA, "eye") == ("location", "intensity_extremum")
    assert unary_tags(HEAD_SCHEMA, "cheek") == ("location", "appearance_in_region")
    assert unary_tags(TUBES_SCHEMA, "seg_a") == ("location", "appearance_along_contour")


def test_unary_statistics_examples(corpus):
    positives = corpus[0]
    same = [positives[0], positives[0]]
    stats = unary_part_statistics(HEAD_SCHEMA, same)
    for ps in stats.parts.values():
        np.testing.assert_array_equal(ps.std, STD_FLOOR)
    two = unary_part_statistics(HEAD_SCHEMA, positives[:2])
    one_a = unary_part_statistics(HEAD_SCHEMA, [positives[0]] * 2)
    one_b = unary_part_statistics(HEAD_SCHEMA, [positives[1]] * 2)
    for n in HEAD_SCHEMA.part_names:
        np.testing.assert_allclose(two.parts[n].mean, (one_a.parts[n].mean + one_b.parts[n].mean) / 2)
    with pytest.raises(InsufficientData):
        unary_part_statistics(HEAD_SCHEMA, positives[:1])


def test_held_out_positive_is_typical():
    positives, _ = generate_planted_corpus("head", 41, 0, 0.05, seed=8)
    stats = unary_part_statistics(HEAD_SCHEMA, positives[:40])
    held = positives[40]
    f = PatchFeatures(held.image)
    for name, ps in stats.parts.items():
        assert ps.z_score(unary_vector(f, ps.tags, held.parts[name])) <= 3.0, name


# -- snapping and negatives ---------------------------------------------------


def test_snap_keeps_truth_when_nothing_overlaps():
    patch = AnnotatedPatch(flat(20, 20), {"a": ContourPrim([[1, 1], [9, 1]]), "b": ContourPrim([[1, 9], [9, 9]])})
    out = snap_to_candidates(two_contours(), patch, CandidateSet())
    assert out == patch.parts


def test_snap_picks_overlapping_candidates_one_to_one():
    a, b = ContourPrim([[1, 1], [15, 1]]), ContourPrim([[1, 12], [15, 12]])
    near_a = ContourPrim([[1, 1.5], [15, 1.5]])
    patch = AnnotatedPatch(flat(20, 20), {"a": a, "b": b})
    out = snap_to_candidates(two_contours(), patch, CandidateSet(contours=[near_a]))
    assert out["a"] is near_a and out["b"] is b
    assert primitive_iou(near_a, a, 20, 20) >= 0.5


@pytest.mark.parametrize("n", [1, 7, 25000])
def test_sample_negatives_exact_count(corpus, n):
    pos, neg = corpus
    X = sample_negatives(HEAD_SCHEMA, pos, neg, n, seed=0)
    assert X.shape == (n, HEAD_SCHEMA.feature_vector_len)
    assert np.all(np.isfinite(X))


def test_sample_negatives_deterministic_and_thread_independent(corpus):
    pos, neg = corpus
    a = sample_negatives(HEAD_SCHEMA, pos, neg, 300, seed=4)
    b = sample_negatives(HEAD_SCHEMA, pos, neg, 300, seed=4, n_jobs=3)
    c = sample_negatives(HEAD_SCHEMA, pos, neg, 300, seed=5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_negative_configurations_mix_hard_and_random(corpus):
    pos, neg = corpus
    draws = draw_negative_configurations(HEAD_SCHEMA, pos, neg, 100, seed=0)
    sources = [src[0] for src, _ in draws]
    assert sources.count("pos") == 50 and sources.count("neg") == 50
    for (kind, i), cfg in draws:
        assert set(cfg) == set(HEAD_SCHEMA.part_names)
        if kind == "pos":
            changed = [n for n in HEAD_SCHEMA.part_names if cfg[n] != pos[i].parts[n]]
            assert changed  # a hard negative is never the annotation itself
    with pytest.raises(InvalidArgument):
        draw_negative_configurations(HEAD_SCHEMA, pos, neg, 0, seed=0)
    with pytest.raises(InsufficientData):
        draw_negative_configurations(HEAD_SCHEMA, [], [], 5, seed=0)


@given(seeds)
def test_region_only_schema_negatives_are_finite(seed):
    rng = np.random.default_rng(seed)
    s = StructureSchema(
        "r",
        (("u", "region"), ("v", "region")),
        (RelationSpec("appearance_coherence", ("u", "v")), RelationSpec("location", ("u", "v"))),
    )
    imgs = [ImagePatch(rng.random((24, 24)))]
    pos = [AnnotatedPatch(imgs[0], {"u": SquareRegionPrim(6, 6, 6), "v": SquareRegionPrim(16, 16, 6)})]
    X = sample_negatives(s, pos, imgs, 9, seed=seed)
    assert X.shape == (9, 3) and np.all(np.isfinite(X))
