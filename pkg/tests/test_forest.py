import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fullinterp.errors import InvalidArgument, InvalidTrainingSet, SchemaViolation
from fullinterp.forest import (
    Forest,
    ForestParams,
    Tree,
    forest_from_dict,
    forest_to_dict,
    permutation_importance,
    score,
    score_batch,
    train_forest,
)

seeds = st.integers(0, 2**32 - 1)


def separable(rng, n=200):
    pos = rng.uniform(0.6, 1.0, size=(n, 1))
    neg = rng.uniform(0.0, 0.4, size=(n, 1))
    return pos, neg


def stump(feature, thr, left_counts, right_counts):
    return Tree(
        np.array([feature, -1, -1], dtype=np.int32),
        np.array([thr, 0.0, 0.0]),
        np.array([1, -1, -1], dtype=np.int32),
        np.array([2, -1, -1], dtype=np.int32),
        np.array([0, left_counts[0], right_counts[0]], dtype=np.int64),
        np.array([0, left_counts[1], right_counts[1]], dtype=np.int64),
    )


def test_separable_one_dimensional_data(rng):
    pos, neg = separable(rng)
    f = train_forest(pos, neg, ForestParams(n_trees=20, seed=1))
    test_pos, test_neg = separable(np.random.default_rng(9), 500)
    acc = 0.5 * (np.mean(score_batch(f, test_pos) >= 0.5) + np.mean(score_batch(f, test_neg) < 0.5))
    assert acc >= 0.99


def test_pure_leaves_score_one_and_zero(rng):
    pos, neg = separable(rng, 50)
    f = train_forest(pos, neg, ForestParams(n_trees=10))
    assert score(f, [0.95]) == 1.0
    assert score(f, [0.05]) == 0.0


def test_hand_built_forest_averages_leaf_proportions():
    t1 = stump(0, 0.5, (3, 1), (0, 2))
    t2 = stump(1, 2.0, (1, 1), (4, 0))
    f = Forest([t1, t2], 2, ForestParams(n_trees=2))
    assert score(f, [0.2, 5.0]) == (0.75 + 1.0) / 2
    assert score(f, [0.5, 2.0]) == (0.75 + 0.5) / 2  # ties go left
    assert score(f, [0.9, 0.0]) == (0.0 + 0.5) / 2


def test_serialization_is_byte_stable(rng):
    X = rng.normal(size=(300, 6))
    y = X[:, 0] + 0.3 * rng.normal(size=300) > 0
    params = ForestParams(n_trees=8, max_depth=6, seed=3)
    a = json.dumps(forest_to_dict(train_forest(X[y], X[~y], params)), sort_keys=True)
    b = json.dumps(forest_to_dict(train_forest(X[y], X[~y], params)), sort_keys=True)
    assert a == b
    f = forest_from_dict(json.loads(a))
    assert json.dumps(forest_to_dict(f), sort_keys=True) == a
    Z = rng.normal(size=(100, 6))
    np.testing.assert_array_equal(score_batch(f, Z), score_batch(train_forest(X[y], X[~y], params), Z))


@given(seeds)
def test_training_is_invariant_to_input_order(seed):
    rng = np.random.default_rng(seed)
    P = rng.normal(1.0, size=(30, 4))
    N = rng.normal(0.0, size=(60, 4))
    params = ForestParams(n_trees=4, max_depth=5, seed=seed % 1000)
    a = forest_to_dict(train_forest(P, N, params))
    b = forest_to_dict(train_forest(P[rng.permutation(30)], N[rng.permutation(60)], params))
    assert a == b


def test_thread_count_does_not_change_trees(rng):
    P, N = rng.normal(1, size=(40, 5)), rng.normal(size=(80, 5))
    params = ForestParams(n_trees=6, seed=2)
    assert forest_to_dict(train_forest(P, N, params, n_jobs=1)) == forest_to_dict(train_forest(P, N, params, n_jobs=4))


@given(seeds)
def test_scores_lie_in_unit_interval(seed):
    rng = np.random.default_rng(seed)
    P, N = rng.normal(0.5, size=(20, 3)), rng.normal(size=(40, 3))
    f = train_forest(P, N, ForestParams(n_trees=3, max_depth=4, seed=1))
    s = score_batch(f, rng.normal(size=(50, 3)) * 3)
    assert np.all((s >= 0) & (s <= 1))


def test_training_errors():
    with pytest.raises(InvalidTrainingSet):
        train_forest(np.zeros((0, 3)), np.ones((4, 3)))
    with pytest.raises(InvalidTrainingSet):
        train_forest(np.ones((4, 3)), np.zeros((0, 3)))
    with pytest.raises(SchemaViolation):
        train_forest(np.ones((4, 3)), np.zeros((4, 2)))
    with pytest.raises(InvalidTrainingSet):
        train_forest(np.full((2, 1), np.nan), np.zeros((2, 1)))
    for bad in (dict(n_trees=0), dict(max_depth=0), dict(min_leaf=0)):
        with pytest.raises(InvalidArgument):
            ForestParams(**bad)


def test_scoring_checks_vector_length(rng):
    f = train_forest(*separable(rng, 20), ForestParams(n_trees=2))
    with pytest.raises(SchemaViolation):
        score(f, [0.1, 0.2])
    with pytest.raises(SchemaViolation):
        score_batch(f, np.zeros((3, 2)))


def test_corrupt_forest_documents_are_rejected(rng):
    doc = forest_to_dict(train_forest(*separable(rng, 20), ForestParams(n_trees=2)))
    bad = json.loads(json.dumps(doc))
    bad["trees"][0][0][0] = 5  # feature index past n_features
    with pytest.raises(InvalidArgument):
        forest_from_dict(bad)
    bad = json.loads(json.dumps(doc))
    bad["trees"][0][0][2] = 0  # root pointing at itself
    with pytest.raises(InvalidArgument):
        forest_from_dict(bad)


def test_permutation_importance_finds_informative_block(rng):
    X = rng.normal(size=(400, 4))
    y = X[:, 2] > 0
    f = train_forest(X[y], X[~y], ForestParams(n_trees=10, seed=4))
    imp = permutation_importance(f, X, y, [slice(0, 2), slice(2, 3), slice(3, 4)])
    assert int(np.argmax(imp)) == 1 and imp[1] > 0.3
