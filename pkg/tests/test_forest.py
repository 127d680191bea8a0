import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mobattack.forest import EnsembleSpec, TreeEnsemble

SINGLE = dict(n_trees=1, bootstrap=False, max_features="all")


def gini(y):
    if len(y) == 0:
        return 0.0
    _, c = np.unique(y, return_counts=True)
    p = c / len(y)
    return 1.0 - (p * p).sum()


def majority(y):
    vals, c = np.unique(y, return_counts=True)
    return vals[np.argmax(c)]


def brute_stump(X, y):
    """Best single split by weighted Gini over every feature and every gap between sorted values."""
    best = (gini(y) * len(y), None, None)
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for a, b in zip(vals, vals[1:]):
            t = (a + b) / 2
            m = X[:, f] <= t
            cost = gini(y[m]) * m.sum() + gini(y[~m]) * (~m).sum()
            if cost < best[0] - 1e-12:
                best = (cost, f, t)
    return best


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_depth_one_matches_brute_force_stump(seed):
    rng = np.random.default_rng(seed)
    X = np.column_stack([rng.integers(0, 2, 30), rng.normal(size=30)]).astype(float)
    y = rng.integers(0, 3, 30)
    model = TreeEnsemble(EnsembleSpec(max_depth=1, **SINGLE)).fit(X, y)
    best_cost, _, _ = brute_stump(X, y)
    feature, threshold = model.trees[0][0], model.trees[0][1]
    if feature[0] < 0:
        # no split improves the impurity
        assert best_cost == pytest.approx(gini(y) * len(y))
        assert (model.predict(X) == majority(y)).all()
        return
    m = X[:, feature[0]] <= threshold[0]
    # equal-cost splits may be chosen among, so compare cost, then the leaf votes
    assert gini(y[m]) * m.sum() + gini(y[~m]) * (~m).sum() == pytest.approx(best_cost, abs=1e-9)
    want = np.where(m, majority(y[m]), majority(y[~m]))
    assert (model.predict(X) == want).all()


def test_stump_on_two_value_feature_by_hand():
    X = np.array([[0.0], [0.0], [0.0], [1.0], [1.0], [1.0]])
    y = np.array([5, 5, 7, 7, 7, 5])
    model = TreeEnsemble(EnsembleSpec(max_depth=1, **SINGLE)).fit(X, y)
    assert model.predict(np.array([[0.0], [1.0]])).tolist() == [5, 7]


def test_pure_separable_data_is_fit_exactly():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 3))
    y = (X[:, 0] > 0).astype(int) + 2 * (X[:, 1] > 0.5)
    model = TreeEnsemble(EnsembleSpec(max_depth=8, **SINGLE)).fit(X, y)
    assert (model.predict(X) == y).all()


def test_constant_labels():
    X = np.random.default_rng(0).normal(size=(20, 4))
    model = TreeEnsemble(EnsembleSpec(n_trees=3)).fit(X, np.full(20, 42))
    assert (model.predict(X) == 42).all()


def test_proba_rows_sum_to_one_and_argmax_tie_is_lowest():
    rng = np.random.default_rng(1)
    X, y = rng.normal(size=(100, 5)), rng.integers(0, 4, 100)
    model = TreeEnsemble(EnsembleSpec(n_trees=7, seed=3)).fit(X, y)
    p = model.predict_proba(X)
    assert np.allclose(p.sum(axis=1), 1.0)
    tie = TreeEnsemble(EnsembleSpec(max_depth=1, **SINGLE)).fit(np.zeros((4, 1)), np.array([3, 1, 3, 1]))
    assert tie.predict(np.zeros((1, 1))).tolist() == [1]


def test_seeded_determinism_and_thread_invariance():
    rng = np.random.default_rng(2)
    X, y = rng.normal(size=(300, 6)), rng.integers(0, 5, 300)
    spec = EnsembleSpec(n_trees=6, seed=9)
    a = TreeEnsemble(spec).fit(X, y).predict_proba(X)
    b = TreeEnsemble(spec).fit(X, y, n_jobs=3).predict_proba(X)
    assert np.array_equal(a, b)
    c = TreeEnsemble(EnsembleSpec(n_trees=6, seed=10)).fit(X, y).predict_proba(X)
    assert not np.array_equal(a, c)


@pytest.mark.parametrize("random_thresholds", [False, True])
def test_array_roundtrip(random_thresholds):
    rng = np.random.default_rng(4)
    X, y = rng.normal(size=(150, 4)), rng.integers(10, 14, 150)
    model = TreeEnsemble(EnsembleSpec(n_trees=4, random_thresholds=random_thresholds)).fit(X, y)
    back = TreeEnsemble.from_arrays(model.to_arrays("m_"), "m_")
    assert np.array_equal(back.predict_proba(X), model.predict_proba(X))


def test_input_validation():
    with pytest.raises(ValueError):
        EnsembleSpec(criterion="entropy")
    with pytest.raises(ValueError):
        TreeEnsemble().fit(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ValueError):
        TreeEnsemble().fit(np.array([[np.nan]]), np.array([1]))
    model = TreeEnsemble(EnsembleSpec(n_trees=1)).fit(np.zeros((3, 2)), np.array([0, 1, 0]))
    with pytest.raises(ValueError):
        model.predict(np.zeros((1, 3)))


def test_single_tree_matches_reference_implementation():
    tree = pytest.importorskip("sklearn.tree")
    rng = np.random.default_rng(7)
    X = rng.normal(size=(400, 5))
    y = (X[:, 0] * 2 + X[:, 1] ** 2 + rng.normal(scale=0.5, size=400) > 1).astype(int) + (X[:, 2] > 1)
    for depth in (1, 3, 6):
        ours = TreeEnsemble(EnsembleSpec(max_depth=depth, **SINGLE)).fit(X, y)
        ref = tree.DecisionTreeClassifier(max_depth=depth, random_state=0).fit(X, y)
        probe = rng.normal(size=(300, 5))
        assert (ours.predict(X) == ref.predict(X)).all()
        assert (ours.predict(probe) == ref.predict(probe)).mean() > 0.97
