"""Weight-function learners.

Each learner turns training covariates into a weight function: for a query
covariate x it returns a nonnegative vector over the N training samples that
sums to one. Downstream, conditional expectations are replaced by weighted
sums over training samples, so these weights are the single point where
machine learning enters the optimization.

Implemented learners:

* uniform weights (sample average, ignores the query),
* k-nearest-neighbor weights under Euclidean distance,
* honest regression trees (splits never look at responses) that weight the
  co-occupants of the query's leaf,
* forests that average tree weights over trees fit on random subsamples.

Trees are "honest, regular, random-split": every leaf holds between k and
2k-1 estimation samples, every split keeps at least a fraction ``lam`` of the
node's estimation samples on each side, and each feature is chosen with
probability at least ``pi / d``. Splitting is a deterministic function of
(covariates, parameters, seed); refitting after permuting responses yields
the identical partition because responses are never consulted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .seeding import Stream, substream
from .training import TrainingSet

__all__ = [
    "default_k", "default_subsample",
    "knn_weights", "weighted_regression",
    "SplitParams", "TreeModel", "fit_tree", "tree_weights",
    "ForestModel", "fit_forest", "forest_weights",
    "forest_to_json", "forest_from_json",
    "WeightSpec", "SaaWeights", "KnnWeights", "TreeWeights", "ForestWeights",
    "fit_stage_models",
]


def default_k(n: int) -> int:
    """Default neighborhood / leaf parameter, max(1, ceil(n^0.6))."""
    return max(1, math.ceil(n ** 0.6))


def default_subsample(n: int) -> int:
    """Default per-tree subsample size, min(ceil(n^0.8), n - 1)."""
    return min(math.ceil(n ** 0.8), n - 1) if n > 1 else 1


# ---------------------------------------------------------------------------
# k-nearest neighbors


def knn_weights(query: np.ndarray, covariates: np.ndarray, k: int) -> np.ndarray:
    """Weight vector putting 1/k on the k nearest training covariates.

    Distance ties are broken toward the lowest sample index, so the result is
    a deterministic function of the inputs.
    """
    return knn_weights_batch(np.asarray(query, dtype=float)[None, :], covariates, k)[0]


def knn_weights_batch(queries: np.ndarray, covariates: np.ndarray, k: int) -> np.ndarray:
    """Vectorized :func:`knn_weights`; queries (Q, d) -> weights (Q, N)."""
    pts = np.asarray(covariates, dtype=float)
    qs = np.asarray(queries, dtype=float)
    n = pts.shape[0]
    if not 1 <= k <= n:
        raise InputError(f"k must be in 1..{n}, got {k}")
    if qs.shape[1] != pts.shape[1]:
        raise InputError(f"query dimension {qs.shape[1]} != covariate dimension "
                         f"{pts.shape[1]}")
    d2 = ((qs[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    # stable sort: among equal distances the lower index wins
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    out = np.zeros((qs.shape[0], n))
    np.put_along_axis(out, order, 1.0 / k, axis=1)
    return out


def weighted_regression(weights: np.ndarray, responses: np.ndarray) -> np.ndarray | float:
    """Weighted sample average of responses; the plug-in regression estimate."""
    w = np.asarray(weights, dtype=float)
    r = np.asarray(responses, dtype=float)
    if w.shape[0] != r.shape[0]:
        raise InputError(f"{w.shape[0]} weights for {r.shape[0]} responses")
    out = w @ r
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# honest trees


@dataclass(frozen=True)
class SplitParams:
    """Growth parameters for honest trees.

    k: leaf size band is [k, 2k-1] estimation samples.
    lam: each split keeps >= ceil(lam * n) estimation samples per side.
    pi: probability of drawing the split feature uniformly at random; with the
        complementary probability the feature cycles round-robin by depth, so
        every feature is chosen with probability at least pi / d.
    honesty: "ignore-response" grows the partition on the covariates alone;
        "half-split" uses one half of the data for split placement and the
        other half as estimation samples.
    """

    k: int
    lam: float = 0.2
    pi: float = 1.0
    honesty: str = "ignore-response"

    def __post_init__(self):
        if self.k < 1:
            raise InputError(f"k must be >= 1, got {self.k}")
        if not 0.0 < self.lam <= 0.5:
            raise InputError(f"lam must be in (0, 0.5], got {self.lam}")
        if not 0.0 <= self.pi <= 1.0:
            raise InputError(f"pi must be in [0, 1], got {self.pi}")
        if self.honesty not in ("ignore-response", "half-split"):
            raise InputError(f"unknown honesty mode {self.honesty!r}")


@dataclass
class TreeModel:
    """A fitted honest tree in flat-array form.

    Internal node j tests ``x[feature[j]] <= threshold[j]`` (left on true);
    leaves have ``feature[j] == -1`` and index into ``leaf_members``, which
    holds the original sample indices of their estimation samples. Weight
    vectors have length ``n_total`` so samples outside the estimation set get
    weight zero.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_slot: np.ndarray
    leaf_members: list[np.ndarray]
    n_total: int
    params: SplitParams
    seed: int

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_members)

    def apply(self, queries: np.ndarray) -> np.ndarray:
        """Leaf slot for each query row; vectorized descent."""
        qs = np.atleast_2d(np.asarray(queries, dtype=float))
        node = np.zeros(qs.shape[0], dtype=np.int64)
        while True:
            internal = self.feature[node] >= 0
            if not internal.any():
                break
            idx = np.flatnonzero(internal)
            feats = self.feature[node[idx]]
            goes_left = qs[idx, feats] <= self.threshold[node[idx]]
            node[idx] = np.where(goes_left, self.left[node[idx]], self.right[node[idx]])
        return self.leaf_slot[node]


def fit_tree(split_samples: np.ndarray, estimation_samples: np.ndarray,
             params: SplitParams, seed: int,
             estimation_index: np.ndarray | None = None,
             n_total: int | None = None) -> TreeModel:
    """Grow an honest, regular, random-split tree.

    ``split_samples`` drive threshold placement (the node median of the chosen
    feature); ``estimation_samples`` populate the leaves and are the set the
    leaf-size band and the lam rule are enforced on. Pass the same array for
    both to get the ignore-response mode. ``estimation_index`` maps estimation
    rows to original sample indices (identity by default) and ``n_total`` sets
    the weight-vector length.

    Nodes stop splitting below 2k estimation samples. If constraints leave no
    admissible threshold on any feature (possible only with heavily tied
    data), the node becomes a leaf. A node whose split samples are exhausted
    falls back to estimation-sample medians; responses are never involved
    either way.
    """
    split = np.atleast_2d(np.asarray(split_samples, dtype=float))
    est = np.atleast_2d(np.asarray(estimation_samples, dtype=float))
    if split.shape[1] != est.shape[1]:
        raise InputError("split and estimation samples must share dimension")
    d = est.shape[1]
    if estimation_index is None:
        estimation_index = np.arange(est.shape[0])
    if n_total is None:
        n_total = est.shape[0]

    feature, threshold, left, right, leaf_slot = [], [], [], [], []
    leaf_members: list[np.ndarray] = []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        leaf_slot.append(-1)
        return len(feature) - 1

    def make_leaf(node, est_idx):
        leaf_slot[node] = len(leaf_members)
        leaf_members.append(np.sort(estimation_index[est_idx]))

    # stack entries: (node, split rows, est rows, depth, path code)
    root = new_node()
    stack = [(root, np.arange(split.shape[0]), np.arange(est.shape[0]), 0, 1)]
    while stack:
        node, s_idx, e_idx, depth, code = stack.pop()
        n_est = e_idx.size
        if n_est < 2 * params.k:
            make_leaf(node, e_idx)
            continue
        rng = substream(seed, Stream.TREE_FIT, code)
        if rng.random() < params.pi:
            first = int(rng.integers(d))
        else:
            first = depth % d
        m = max(params.k, math.ceil(params.lam * n_est))
        chosen = None
        for probe in range(d):
            j = (first + probe) % d
            cut = _admissible_threshold(split[s_idx, j] if s_idx.size else est[e_idx, j],
                                        est[e_idx, j], m)
            if cut is not None:
                chosen = (j, cut)
                break
        if chosen is None:
            make_leaf(node, e_idx)
            continue
        j, cut = chosen
        feature[node] = j
        threshold[node] = cut
        s_go = split[s_idx, j] <= cut
        e_go = est[e_idx, j] <= cut
        left[node] = new_node()
        right[node] = new_node()
        stack.append((left[node], s_idx[s_go], e_idx[e_go], depth + 1, 2 * code))
        stack.append((right[node], s_idx[~s_go], e_idx[~e_go], depth + 1, 2 * code + 1))

    return TreeModel(np.array(feature), np.array(threshold),
                     np.array(left), np.array(right), np.array(leaf_slot),
                     leaf_members, int(n_total), params, int(seed))


def _admissible_threshold(split_vals: np.ndarray, est_vals: np.ndarray,
                          m: int) -> float | None:
    """Median of split_vals, clipped so each side keeps >= m estimation samples.

    Returns None when no threshold on this feature can satisfy the count
    constraints (all candidate cut points fall on tied estimation values).
    """
    n = est_vals.size
    if n - 2 * m < 0:
        return None
    order = np.sort(est_vals)
    thr = float(np.median(split_vals))
    count_left = int(np.searchsorted(order, thr, side="right"))
    target = min(max(count_left, m), n - m)
    if target == count_left and order[target - 1] <= thr < order[target]:
        return thr
    # move to the nearest admissible gap between estimation order statistics
    candidates = sorted(range(m, n - m + 1), key=lambda c: (abs(c - target), c))
    for c in candidates:
        if order[c - 1] < order[c]:
            return float(0.5 * (order[c - 1] + order[c]))
    return None


def tree_weights(tree: TreeModel, query: np.ndarray) -> np.ndarray:
    """Weight 1/|leaf| on the estimation samples sharing the query's leaf."""
    return tree_weights_batch(tree, np.asarray(query, dtype=float)[None, :])[0]


def tree_weights_batch(tree: TreeModel, queries: np.ndarray) -> np.ndarray:
    slots = tree.apply(queries)
    out = np.zeros((len(slots), tree.n_total))
    for row, slot in enumerate(slots):
        members = tree.leaf_members[slot]
        out[row, members] = 1.0 / members.size
    return out


# ---------------------------------------------------------------------------
# forests


@dataclass
class ForestModel:
    """Trees fit on random subsamples; weights average the per-tree weights."""

    trees: list[TreeModel]
    subsamples: list[np.ndarray]
    n_total: int
    params: SplitParams
    subsample_size: int
    seed: int

    @property
    def b_trees(self) -> int:
        return len(self.trees)


def fit_forest(covariates: np.ndarray, params: SplitParams, seed: int,
               b_trees: int = 100, subsample_size: int | None = None) -> ForestModel:
    """Fit ``b_trees`` honest trees, each on its own random subsample.

    Every tree's subsample and growth seed derive from ``(seed, tree index)``
    alone, so the forest is reproducible independently of evaluation order.
    In half-split mode the subsample is split in two: the first half places
    splits, the second populates leaves.
    """
    pts = np.atleast_2d(np.asarray(covariates, dtype=float))
    n = pts.shape[0]
    if subsample_size is None:
        subsample_size = default_subsample(n)
    if not 1 <= subsample_size <= n:
        raise InputError(f"subsample size must be in 1..{n}, got {subsample_size}")
    trees, subsamples = [], []
    for b in range(b_trees):
        rng = substream(seed, Stream.FOREST_SUBSAMPLE, b)
        sub = rng.choice(n, size=subsample_size, replace=False)
        if params.honesty == "half-split":
            half = subsample_size // 2
            split_idx, est_idx = sub[:half], sub[half:]
            if split_idx.size == 0:
                split_idx = est_idx
        else:
            split_idx = est_idx = sub
        tree_seed = int(substream(seed, Stream.FOREST_TREE, b).integers(2 ** 63))
        tree = fit_tree(pts[split_idx], pts[est_idx], params, tree_seed,
                        estimation_index=est_idx, n_total=n)
        trees.append(tree)
        subsamples.append(np.sort(sub))
    return ForestModel(trees, subsamples, n, params, subsample_size, int(seed))


def forest_weights(forest: ForestModel, query: np.ndarray) -> np.ndarray:
    """Average of the member trees' weight vectors at the query."""
    return forest_weights_batch(forest, np.asarray(query, dtype=float)[None, :])[0]


def forest_weights_batch(forest: ForestModel, queries: np.ndarray) -> np.ndarray:
    out = np.zeros((np.atleast_2d(queries).shape[0], forest.n_total))
    for tree in forest.trees:
        out += tree_weights_batch(tree, queries)
    out /= forest.b_trees
    return out


def forest_to_json(forest: ForestModel, path: str) -> None:
    doc = {
        "n_total": forest.n_total,
        "subsample_size": forest.subsample_size,
        "seed": forest.seed,
        "params": {"k": forest.params.k, "lam": forest.params.lam,
                   "pi": forest.params.pi, "honesty": forest.params.honesty},
        "trees": [
            {
                "feature": tree.feature.tolist(),
                "threshold": tree.threshold.tolist(),
                "left": tree.left.tolist(),
                "right": tree.right.tolist(),
                "leaf_slot": tree.leaf_slot.tolist(),
                "leaves": [m.tolist() for m in tree.leaf_members],
                "seed": tree.seed,
                "subsample": sub.tolist(),
            }
            for tree, sub in zip(forest.trees, forest.subsamples)
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def forest_from_json(path: str) -> ForestModel:
    with open(path) as fh:
        doc = json.load(fh)
    params = SplitParams(**doc["params"])
    trees, subsamples = [], []
    for td in doc["trees"]:
        trees.append(TreeModel(
            np.array(td["feature"]), np.array(td["threshold"]),
            np.array(td["left"]), np.array(td["right"]), np.array(td["leaf_slot"]),
            [np.array(m, dtype=np.int64) for m in td["leaves"]],
            doc["n_total"], params, td["seed"]))
        subsamples.append(np.array(td["subsample"], dtype=np.int64))
    return ForestModel(trees, subsamples, doc["n_total"], params,
                       doc["subsample_size"], doc["seed"])


# ---------------------------------------------------------------------------
# per-stage weight models


class SaaWeights:
    """Uniform weights 1/N regardless of the query: the classic sample average."""

    def __init__(self, n: int):
        self.n_samples = n

    def weights(self, query: np.ndarray) -> np.ndarray:
        return np.full(self.n_samples, 1.0 / self.n_samples)

    def weights_batch(self, queries: np.ndarray) -> np.ndarray:
        q = np.atleast_2d(queries)
        return np.full((q.shape[0], self.n_samples), 1.0 / self.n_samples)


class KnnWeights:
    def __init__(self, covariates: np.ndarray, k: int):
        self.covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
        self.k = int(k)
        self.n_samples = self.covariates.shape[0]

    def weights(self, query: np.ndarray) -> np.ndarray:
        return knn_weights(query, self.covariates, self.k)

    def weights_batch(self, queries: np.ndarray) -> np.ndarray:
        return knn_weights_batch(np.atleast_2d(queries), self.covariates, self.k)


class TreeWeights:
    def __init__(self, tree: TreeModel):
        self.tree = tree
        self.n_samples = tree.n_total

    def weights(self, query: np.ndarray) -> np.ndarray:
        return tree_weights(self.tree, query)

    def weights_batch(self, queries: np.ndarray) -> np.ndarray:
        return tree_weights_batch(self.tree, np.atleast_2d(queries))


class ForestWeights:
    def __init__(self, forest: ForestModel):
        self.forest = forest
        self.n_samples = forest.n_total

    def weights(self, query: np.ndarray) -> np.ndarray:
        return forest_weights(self.forest, query)

    def weights_batch(self, queries: np.ndarray) -> np.ndarray:
        return forest_weights_batch(self.forest, np.atleast_2d(queries))


@dataclass(frozen=True)
class WeightSpec:
    """Learner choice plus hyperparameters; `fit` builds one stage's model.

    ``k`` and ``subsample`` default to :func:`default_k` and
    :func:`default_subsample` of the training size when left as None.
    """

    method: str = "knn"
    k: int | None = None
    b_trees: int = 100
    subsample: int | None = None
    lam: float = 0.2
    pi: float = 1.0
    honesty: str = "ignore-response"
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("saa", "knn", "tree", "forest"):
            raise InputError(f"unknown weight method {self.method!r}")

    def resolved_k(self, n: int) -> int:
        return self.k if self.k is not None else default_k(n)

    def split_params(self, n: int) -> SplitParams:
        return SplitParams(k=self.resolved_k(n), lam=self.lam, pi=self.pi,
                           honesty=self.honesty)

    def fit(self, training: TrainingSet, stage: int):
        """Model for stage t in 1..T, trained on the stage t-1 covariates."""
        if not 1 <= stage <= training.horizon:
            raise InputError(f"stage {stage} outside 1..{training.horizon}")
        pts = training.x(stage - 1)
        n = training.n_samples
        if self.method == "saa":
            return SaaWeights(n)
        if self.method == "knn":
            return KnnWeights(pts, self.resolved_k(n))
        stage_seed = int(substream(self.seed, Stream.WEIGHT_STAGE, stage).integers(2 ** 63))
        if self.method == "tree":
            params = self.split_params(n)
            if self.honesty == "half-split":
                rng = substream(self.seed, Stream.WEIGHT_STAGE, stage, 1)
                perm = rng.permutation(n)
                split_idx, est_idx = perm[: n // 2], perm[n // 2:]
                tree = fit_tree(pts[split_idx], pts[est_idx], params, stage_seed,
                                estimation_index=est_idx, n_total=n)
            else:
                tree = fit_tree(pts, pts, params, stage_seed)
            return TreeWeights(tree)
        sub = self.subsample if self.subsample is not None else default_subsample(n)
        forest = fit_forest(pts, self.split_params(n), stage_seed,
                            b_trees=self.b_trees, subsample_size=sub)
        return ForestWeights(forest)


def fit_stage_models(spec: WeightSpec | list[WeightSpec], training: TrainingSet) -> list:
    """One weight model per stage 1..T; accepts a single spec or one per stage."""
    T = training.horizon
    if isinstance(spec, WeightSpec):
        specs = [spec] * T
    else:
        specs = list(spec)
        if len(specs) != T:
            raise InputError(f"need {T} stage specs, got {len(specs)}")
    return [specs[t - 1].fit(training, t) for t in range(1, T + 1)]
