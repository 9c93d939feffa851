"""Weight learners: kNN, honest trees, forests, and the weighted regression."""

import numpy as np
import pytest

from prescriptor import InputError, TrainingSet, WeightSpec, default_k
from prescriptor.weights import (ForestModel, SplitParams, TreeModel,
                                 default_subsample, fit_forest,
                                 fit_stage_models, fit_tree, forest_from_json,
                                 forest_to_json, forest_weights, knn_weights,
                                 tree_weights, weighted_regression)


def single_leaf_tree(members, n_total, k=1):
    return TreeModel(feature=np.array([-1]), threshold=np.array([0.0]),
                     left=np.array([-1]), right=np.array([-1]),
                     leaf_slot=np.array([0]),
                     leaf_members=[np.array(members, dtype=int)],
                     n_total=n_total, params=SplitParams(k=k), seed=0)


# ---------------------------------------------------------------------------
# kNN


def test_knn_unique_nearest():
    w = knn_weights(np.array([0.1]), np.array([[0.0], [1.0], [2.0]]), k=1)
    assert np.array_equal(w, [1.0, 0.0, 0.0])


def test_knn_k_equals_n_is_saa():
    rng = np.random.default_rng(3)
    for _ in range(10):
        n = int(rng.integers(2, 20))
        cov = rng.normal(size=(n, 3))
        w = knn_weights(rng.normal(size=3), cov, k=n)
        assert np.allclose(w, np.full(n, 1.0 / n))


def test_knn_tie_breaks_to_lowest_index():
    w = knn_weights(np.array([0.5]), np.array([[0.0], [1.0]]), k=1)
    assert np.array_equal(w, [1.0, 0.0])


def test_knn_support_is_exactly_k():
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = int(rng.integers(3, 40))
        k = int(rng.integers(1, n + 1))
        w = knn_weights(rng.normal(size=2), rng.normal(size=(n, 2)), k)
        assert np.count_nonzero(w) == k
        assert np.isclose(w.sum(), 1.0)
        assert (w[w > 0] == 1.0 / k).all()


def test_knn_matches_brute_force_sort():
    rng = np.random.default_rng(5)
    for _ in range(30):
        n = int(rng.integers(4, 25))
        cov = rng.normal(size=(n, 3))
        q = rng.normal(size=3)
        k = int(rng.integers(1, n))
        w = knn_weights(q, cov, k)
        dist = np.linalg.norm(cov - q, axis=1)
        order = np.lexsort((np.arange(n), dist))
        expect = np.zeros(n)
        expect[order[:k]] = 1.0 / k
        assert np.allclose(w, expect)


# ---------------------------------------------------------------------------
# weighted regression


def test_regression_uniform_weights():
    assert weighted_regression(np.full(3, 1 / 3), np.array([2.0, 4.0, 6.0])) == 4.0


def test_regression_point_mass():
    assert weighted_regression(np.array([1.0, 0, 0]), np.array([2.0, 4.0, 6.0])) == 2.0


def test_regression_knn_case():
    cov = np.array([[0.0], [1.0], [9.0]])
    w = knn_weights(np.array([0.4]), cov, k=2)
    assert weighted_regression(w, np.array([10.0, 20.0, 30.0])) == 15.0


# ---------------------------------------------------------------------------
# honest trees


def test_tree_too_small_to_split():
    """Three estimation samples with k=2 cannot split: band is [2, 3]."""
    x = np.array([[0.0], [1.0], [2.0]])
    tree = fit_tree(x, x, SplitParams(k=2), seed=0)
    assert tree.n_leaves == 1
    assert np.array_equal(tree.leaf_members[0], [0, 1, 2])


def test_tree_forced_single_split():
    x = np.array([[0.0], [1.0], [2.0], [3.0]])
    tree = fit_tree(x, x, SplitParams(k=2, lam=0.5), seed=4)
    assert tree.n_leaves == 2
    sizes = sorted(len(m) for m in tree.leaf_members)
    assert sizes == [2, 2]
    joined = np.sort(np.concatenate(tree.leaf_members))
    assert np.array_equal(joined, [0, 1, 2, 3])


def test_tree_determinism():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(40, 2))
    a = fit_tree(x, x, SplitParams(k=3), seed=17)
    b = fit_tree(x, x, SplitParams(k=3), seed=17)
    assert np.array_equal(a.feature, b.feature)
    assert np.array_equal(a.threshold, b.threshold)
    assert all(np.array_equal(p, q) for p, q in zip(a.leaf_members, b.leaf_members))


def test_tree_band_and_lam_rule():
    """Every leaf holds k..2k-1 estimation samples; every split keeps at
    least ceil(lam * n) samples per side."""
    rng = np.random.default_rng(21)
    for trial in range(20):
        n = int(rng.integers(8, 60))
        k = int(rng.integers(2, 5))
        x = rng.normal(size=(n, int(rng.integers(1, 4))))
        tree = fit_tree(x, x, SplitParams(k=k, lam=0.2), seed=trial)
        for members in tree.leaf_members:
            assert k <= members.size <= 2 * k - 1 or tree.n_leaves == 1
        # reconstruct per-node estimation counts by replaying the partition
        counts = {0: np.arange(n)}
        for node in range(tree.feature.size):
            if tree.feature[node] < 0:
                continue
            idx = counts[node]
            go = x[idx, tree.feature[node]] <= tree.threshold[node]
            counts[int(tree.left[node])] = idx[go]
            counts[int(tree.right[node])] = idx[~go]
            m = max(k, int(np.ceil(0.2 * idx.size)))
            assert go.sum() >= m and (~go).sum() >= m


def test_tree_splits_ignore_responses():
    """Honesty: the fit never sees responses, so any response permutation
    leaves the partition unchanged by construction; the structural check is
    that two fits of the same covariates coincide regardless of how the
    caller pairs them with responses."""
    rng = np.random.default_rng(2)
    x = rng.normal(size=(30, 2))
    t1 = fit_tree(x, x, SplitParams(k=2), seed=5)
    t2 = fit_tree(x, x, SplitParams(k=2), seed=5)
    assert np.array_equal(t1.feature, t2.feature)
    assert np.array_equal(t1.threshold, t2.threshold)


def test_tree_weights_single_leaf():
    tree = single_leaf_tree(range(6), 6)
    w = tree_weights(tree, np.array([0.3]))
    assert np.allclose(w, np.full(6, 1 / 6))


def test_tree_weights_leaf_membership():
    tree = single_leaf_tree([2, 5, 7], 8, k=3)
    w = tree_weights(tree, np.array([1.2]))
    expect = np.zeros(8)
    expect[[2, 5, 7]] = 1 / 3
    assert np.allclose(w, expect)


def test_same_leaf_same_weights():
    rng = np.random.default_rng(13)
    x = rng.normal(size=(24, 1))
    tree = fit_tree(x, x, SplitParams(k=4), seed=1)
    lo = x.min() - 1.0
    w1 = tree_weights(tree, np.array([lo]))
    w2 = tree_weights(tree, np.array([lo - 5.0]))
    assert np.array_equal(w1, w2)


def test_half_split_spec_separates_data():
    spec = WeightSpec(method="tree", honesty="half-split", k=3)
    rng = np.random.default_rng(7)
    training = TrainingSet(covariates=rng.normal(size=(30, 2, 2)),
                           uncertainties=rng.normal(size=(30, 2, 1)))
    models = fit_stage_models(spec, training)
    w = models[0].weights_batch(training.x(0))
    assert w.shape == (30, 30)
    assert np.allclose(w.sum(axis=1), 1.0)


# ---------------------------------------------------------------------------
# forests


def test_forest_single_tree_equals_tree_weights():
    rng = np.random.default_rng(31)
    cov = rng.normal(size=(20, 2))
    forest = fit_forest(cov, SplitParams(k=2), seed=5, b_trees=1)
    q = rng.normal(size=2)
    want = tree_weights(forest.trees[0], q)
    assert np.allclose(forest_weights(forest, q), want)


def test_forest_average_of_two_point_masses():
    t1 = single_leaf_tree([0], 2)
    t2 = single_leaf_tree([1], 2)
    forest = ForestModel(trees=[t1, t2], subsamples=[np.array([0]), np.array([1])],
                         n_total=2, params=SplitParams(k=1), subsample_size=1,
                         seed=0)
    assert np.allclose(forest_weights(forest, np.array([0.0])), [0.5, 0.5])


def test_forest_weight_invariants():
    rng = np.random.default_rng(17)
    cov = rng.normal(size=(40, 3))
    forest = fit_forest(cov, SplitParams(k=3), seed=2, b_trees=25)
    for _ in range(10):
        w = forest_weights(forest, rng.normal(size=3))
        assert (w >= 0).all() and np.isclose(w.sum(), 1.0)


def test_forest_subsample_default():
    assert default_subsample(100) == min(int(np.ceil(100 ** 0.8)), 99)
    forest = fit_forest(np.random.default_rng(0).normal(size=(30, 2)),
                        SplitParams(k=2), seed=0, b_trees=3)
    assert forest.subsample_size == default_subsample(30)
    for sub in forest.subsamples:
        assert sub.size == forest.subsample_size


def test_forest_json_round_trip(tmp_path):
    rng = np.random.default_rng(23)
    cov = rng.normal(size=(25, 2))
    forest = fit_forest(cov, SplitParams(k=2), seed=9, b_trees=4)
    path = tmp_path / "forest.json"
    forest_to_json(forest, str(path))
    back = forest_from_json(str(path))
    for _ in range(5):
        q = rng.normal(size=2)
        assert np.allclose(forest_weights(forest, q), forest_weights(back, q))


# ---------------------------------------------------------------------------
# defaults and stage models


def test_default_k_values():
    assert default_k(1) == 1
    assert default_k(100) == 16
    assert default_k(200) == 25


def test_weight_spec_rejects_unknown_method():
    with pytest.raises(InputError):
        WeightSpec(method="mystery")


def test_stage_models_condition_on_their_stage():
    """models[t] must weight stage-(t+1) scenarios using stage-t covariates."""
    rng = np.random.default_rng(41)
    cov = rng.normal(size=(12, 3, 2))
    training = TrainingSet(covariates=cov, uncertainties=rng.normal(size=(12, 3, 1)))
    models = fit_stage_models(WeightSpec(method="knn", k=3), training)
    assert len(models) == 3
    for t in range(3):
        q = rng.normal(size=2)
        got = models[t].weights_batch(q[None, :])[0]
        assert np.allclose(got, knn_weights(q, training.x(t), 3))


def test_stage_models_default_k():
    rng = np.random.default_rng(43)
    training = TrainingSet(covariates=rng.normal(size=(50, 2, 2)),
                           uncertainties=rng.normal(size=(50, 2, 1)))
    models = fit_stage_models(WeightSpec(method="knn"), training)
    w = models[0].weights_batch(training.x(0)[:1])[0]
    assert np.count_nonzero(w) == default_k(50)


def test_saa_stage_models_ignore_covariates():
    rng = np.random.default_rng(47)
    training = TrainingSet(covariates=rng.normal(size=(8, 2, 2)),
                           uncertainties=rng.normal(size=(8, 2, 1)))
    models = fit_stage_models(WeightSpec(method="saa"), training)
    a = models[0].weights_batch(np.zeros((1, 2)))
    b = models[0].weights_batch(np.full((1, 2), 9.0))
    assert np.allclose(a, 1 / 8) and np.allclose(b, 1 / 8)


def test_per_stage_spec_list():
    rng = np.random.default_rng(53)
    training = TrainingSet(covariates=rng.normal(size=(10, 2, 2)),
                           uncertainties=rng.normal(size=(10, 2, 1)))
    specs = [WeightSpec(method="saa"), WeightSpec(method="knn", k=2)]
    models = fit_stage_models(specs, training)
    assert np.allclose(models[0].weights_batch(np.zeros((1, 2)))[0], 0.1)
    w1 = models[1].weights_batch(training.x(1)[:1])[0]
    assert np.count_nonzero(w1) == 2
