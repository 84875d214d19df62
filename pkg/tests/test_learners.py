"""Low-level learner cores, exercised directly on numeric arrays."""

import math

import numpy as np
import pytest

from farecast.learners.boosting import AdaBoostClassifier, AdaBoostRegressor
from farecast.learners.forest import RandomForest, default_mtry
from farecast.learners.knn import Knn
from farecast.learners.linear import LeastSquares, Logistic
from farecast.learners.mlp import Mlp3
from farecast.learners.tree import Cart


# -- least squares ----------------------------------------------------------


def test_least_squares_exact_on_linear_data():
    X = np.array([[1.0], [2.0], [3.0]])
    y = np.array([2.0, 4.0, 6.0])
    model = LeastSquares().fit(X, y)
    intercept, slopes = model.coef_original()
    assert abs(slopes[0] - 2.0) < 1e-9
    assert abs(intercept) < 1e-9
    assert np.allclose(model.predict(X), y, atol=1e-9)


def test_least_squares_multifeature_exact():
    rng = np.random.default_rng(0)
    X = rng.normal(0, 5, (50, 4))
    true = np.array([1.5, -2.0, 0.0, 3.25])
    y = X @ true + 7.0
    model = LeastSquares().fit(X, y)
    intercept, slopes = model.coef_original()
    assert np.allclose(slopes, true, atol=1e-8)
    assert abs(intercept - 7.0) < 1e-8


def test_least_squares_survives_collinear_columns():
    # duplicated column makes the normal equations singular without jitter
    rng = np.random.default_rng(1)
    x = rng.normal(0, 1, 30)
    X = np.column_stack([x, x])
    y = 3 * x + 1
    model = LeastSquares().fit(X, y)
    assert np.allclose(model.predict(X), y, atol=1e-6)


def test_least_squares_json_round_trip():
    X = np.array([[1.0], [2.0], [3.0]])
    y = np.array([2.0, 4.0, 6.0])
    model = LeastSquares().fit(X, y)
    clone = LeastSquares.from_jsonable(model.to_jsonable())
    assert np.array_equal(model.predict(X), clone.predict(X))


# -- logistic ---------------------------------------------------------------


def separable_blobs(seed=0, n=40):
    rng = np.random.default_rng(seed)
    a = rng.normal([-3, -3], 0.5, (n, 2))
    b = rng.normal([3, 3], 0.5, (n, 2))
    X = np.vstack([a, b])
    y = np.array([0] * n + [1] * n)
    return X, y


def perceptron_separable(X, y, max_epochs=200):
    """Independent separability oracle: perceptron converges iff separable."""
    Xb = np.hstack([X, np.ones((len(X), 1))])
    s = 2 * y - 1
    w = np.zeros(Xb.shape[1])
    for _ in range(max_epochs):
        changed = False
        for i in range(len(Xb)):
            if s[i] * (Xb[i] @ w) <= 0:
                w = w + s[i] * Xb[i]
                changed = True
        if not changed:
            return True
    return False


def test_logistic_separable_reaches_accuracy_one():
    X, y = separable_blobs()
    assert perceptron_separable(X, y)
    model = Logistic().fit(X, y)
    assert np.array_equal(model.predict(X), y)


def test_logistic_loss_non_increasing():
    X, y = separable_blobs(seed=2)
    model = Logistic(max_iter=300).fit(X, y)
    hist = model.loss_history
    assert len(hist) >= 2
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))


def test_logistic_zero_coef_predicts_wait():
    X, y = separable_blobs(seed=3)
    model = Logistic(max_iter=0).fit(X, y)
    assert np.allclose(model.predict_proba(X), 0.5)
    assert not model.predict(X).any()  # p == 0.5 is not a buy


def test_logistic_converges_flag():
    X, y = separable_blobs(seed=4, n=20)
    model = Logistic(grad_tol=1e-4, max_iter=5000).fit(X, y)
    assert model.converged


def test_logistic_json_round_trip():
    X, y = separable_blobs(seed=5)
    model = Logistic().fit(X, y)
    clone = Logistic.from_jsonable(model.to_jsonable())
    assert np.array_equal(model.predict_proba(X), clone.predict_proba(X))


# -- MLP --------------------------------------------------------------------


@pytest.mark.parametrize("task", ["regression", "classification"])
def test_mlp_gradient_matches_finite_differences(task):
    rng = np.random.default_rng(6)
    X = rng.normal(0, 1, (12, 4))
    y = (rng.random(12) > 0.5).astype(float) if task == "classification" else rng.normal(0, 1, 12)
    net = Mlp3(task=task, hidden=5, epochs=0)
    net.fit(X, y, seed=0)  # epochs=0: init only
    theta = net.pack()
    _, grad = net.loss_and_grad(X, y)

    eps = 1e-6
    fd = np.zeros_like(theta)
    for i in range(len(theta)):
        up, dn = theta.copy(), theta.copy()
        up[i] += eps
        dn[i] -= eps
        net.unpack(up)
        lu, _ = net.loss_and_grad(X, y)
        net.unpack(dn)
        ld, _ = net.loss_and_grad(X, y)
        fd[i] = (lu - ld) / (2 * eps)
    net.unpack(theta)
    rel = np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-12)
    assert rel < 1e-4


def test_mlp_learns_a_simple_function():
    rng = np.random.default_rng(7)
    X = rng.normal(0, 1, (200, 2))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    net = Mlp3(task="classification", hidden=8, lr=0.1, epochs=300, batch_size=32)
    net.fit(X, y, seed=1)
    acc = (net.predict(X) == y).mean()
    assert acc > 0.95


def test_mlp_loss_history_tracks_epochs():
    rng = np.random.default_rng(8)
    X = rng.normal(0, 1, (40, 3))
    y = rng.normal(0, 1, 40)
    net = Mlp3(task="regression", hidden=4, epochs=25).fit(X, y, seed=0)
    assert len(net.loss_history) == 25
    assert net.loss_history[-1] < net.loss_history[0]


def test_mlp_deterministic_per_seed():
    rng = np.random.default_rng(9)
    X = rng.normal(0, 1, (30, 3))
    y = rng.normal(0, 1, 30)
    a = Mlp3(task="regression", hidden=4, epochs=10).fit(X, y, seed=5)
    b = Mlp3(task="regression", hidden=4, epochs=10).fit(X, y, seed=5)
    assert np.array_equal(a.predict(X), b.predict(X))


def test_mlp_json_round_trip():
    rng = np.random.default_rng(10)
    X = rng.normal(0, 1, (20, 3))
    y = (X[:, 0] > 0).astype(int)
    net = Mlp3(task="classification", hidden=4, epochs=20).fit(X, y, seed=0)
    clone = Mlp3.from_jsonable(net.to_jsonable())
    assert np.array_equal(net.predict_proba(X), clone.predict_proba(X))


# -- CART -------------------------------------------------------------------


def test_cart_simple_threshold():
    X = np.array([[1.0], [2.0], [3.0], [10.0], [11.0], [12.0]])
    y = np.array([0, 0, 0, 1, 1, 1])
    tree = Cart(task="classification").fit(X, y)
    assert np.array_equal(tree.predict(X), y)
    assert np.array_equal(tree.predict(np.array([[5.0]])), [0])  # left of midpoint 6.5
    assert np.array_equal(tree.predict(np.array([[8.0]])), [1])


def test_cart_split_at_midpoint_left_inclusive():
    X = np.array([[1.0], [3.0]])
    y = np.array([0, 1])
    tree = Cart(task="classification").fit(X, y)
    # boundary value 2.0 == midpoint goes left
    assert tree.predict(np.array([[2.0]]))[0] == 0
    assert tree.predict(np.array([[2.0001]]))[0] == 1


def test_cart_max_depth_zero_is_a_leaf():
    X = np.array([[1.0], [2.0], [3.0]])
    y = np.array([0, 1, 1])
    tree = Cart(task="classification", max_depth=0).fit(X, y)
    assert len(tree.feature) == 1  # single node
    assert np.array_equal(tree.predict(X), [1, 1, 1])


def test_cart_leaf_tie_predicts_wait():
    X = np.array([[1.0], [1.0]])
    y = np.array([0, 1])  # unsplittable, p = 0.5
    tree = Cart(task="classification").fit(X, y)
    assert tree.predict(np.array([[1.0]]))[0] == 0


def test_cart_min_leaf_respected():
    X = np.arange(10, dtype=float).reshape(-1, 1)
    y = np.array([0] * 9 + [1])
    tree = Cart(task="classification", min_leaf=3).fit(X, y)
    # the lone positive cannot be isolated: every leaf carries >= 3 rows
    counts = np.bincount(_leaf_of(tree, X), minlength=len(tree.feature))
    for node, cnt in enumerate(counts):
        if tree.feature[node] == -1 and cnt:
            assert cnt >= 3


def _leaf_of(tree, X):
    out = []
    for x in X:
        node = 0
        while tree.feature[node] != -1:
            node = tree.left[node] if x[tree.feature[node]] <= tree.threshold[node] else tree.right[node]
        out.append(node)
    return np.array(out)


def _weighted_impurity(tree, X, y, w):
    """Recompute impurity decrease at every internal node; must be positive."""
    node_rows = {0: np.arange(len(X))}
    stack = [0]
    decreases = []
    while stack:
        node = stack.pop()
        rows = node_rows[node]
        if tree.feature[node] == -1:
            continue
        f, thr = tree.feature[node], tree.threshold[node]
        go_left = X[rows, f] <= thr
        l_rows, r_rows = rows[go_left], rows[~go_left]
        node_rows[tree.left[node]] = l_rows
        node_rows[tree.right[node]] = r_rows
        stack += [tree.left[node], tree.right[node]]

        def gini(idx):
            ww = w[idx]
            tot = ww.sum()
            if tot == 0:
                return 0.0
            p = ww[y[idx] == 1].sum() / tot
            return 2 * p * (1 - p)

        tot = w[rows].sum()
        parent = gini(rows)
        child = (w[l_rows].sum() * gini(l_rows) + w[r_rows].sum() * gini(r_rows)) / tot
        decreases.append(parent - child)
    return decreases


def test_cart_every_split_strictly_reduces_impurity():
    rng = np.random.default_rng(11)
    X = rng.normal(0, 1, (120, 3))
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0.5)).astype(int)
    w = np.ones(len(y)) / len(y)
    tree = Cart(task="classification", max_depth=6).fit(X, y)
    decreases = _weighted_impurity(tree, X, y, w)
    assert decreases  # the pattern is splittable
    assert all(d > 0 for d in decreases)


def test_cart_zero_weight_rows_are_ignored():
    X = np.array([[1.0], [2.0], [3.0], [3.0]])
    y = np.array([0, 0, 1, 0])  # last row contradicts, but carries no weight
    w = np.array([1.0, 1.0, 1.0, 0.0])
    tree = Cart(task="classification").fit(X, y, sample_weight=w)
    assert tree.predict(np.array([[3.0]]))[0] == 1


def test_cart_regression_variance_split():
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    y = np.array([5.0, 5.0, 20.0, 22.0])
    tree = Cart(task="regression", max_depth=1).fit(X, y)
    assert tree.predict(np.array([[0.5]]))[0] == 5.0
    assert tree.predict(np.array([[10.5]]))[0] == 21.0  # leaf mean of {20, 22}


def test_cart_constant_target_single_leaf():
    X = np.arange(6, dtype=float).reshape(-1, 1)
    y = np.full(6, 9.5)
    tree = Cart(task="regression").fit(X, y)
    assert len(tree.feature) == 1
    assert np.allclose(tree.predict(X), 9.5)


def test_cart_json_round_trip():
    rng = np.random.default_rng(12)
    X = rng.normal(0, 1, (60, 4))
    y = (X[:, 2] > 0.2).astype(int)
    tree = Cart(task="classification", max_depth=4).fit(X, y)
    clone = Cart.from_jsonable(tree.to_jsonable())
    probe = rng.normal(0, 1, (30, 4))
    assert np.array_equal(tree.predict(probe), clone.predict(probe))


# -- AdaBoost classification -------------------------------------------------


def reference_adaboost_stumps(X, y, rounds):
    """Small independent implementation used as an oracle (1-D stumps only)."""
    x = X[:, 0]
    n = len(y)
    s = 2 * y - 1
    w = np.ones(n) / n
    committee = []
    thresholds = np.concatenate([[x.min() - 1], (np.sort(np.unique(x))[:-1] + np.sort(np.unique(x))[1:]) / 2, [x.max() + 1]])
    for _ in range(rounds):
        best = None
        for thr in thresholds:
            for pol in (1, -1):
                h = pol * np.where(x <= thr, -1, 1)
                err = w[(h != s)].sum()
                if best is None or err < best[0]:
                    best = (err, thr, pol)
        err, thr, pol = best
        if err >= 0.5:
            break
        if err == 0:
            committee = [(1.0, thr, pol)]
            break
        alpha = 0.5 * math.log((1 - err) / err)
        committee.append((alpha, thr, pol))
        h = pol * np.where(x <= thr, -1, 1)
        w = w * np.exp(-alpha * s * h)
        w = w / w.sum()
    margin = np.zeros(n)
    for alpha, thr, pol in committee:
        margin += alpha * pol * np.where(x <= thr, -1, 1)
    return (margin > 0).astype(int)


def test_adaboost_shatters_the_interleaved_pattern():
    # x in 1..8, buy at {1,2,5,6}: three stumps are provably needed
    X = np.arange(1, 9, dtype=float).reshape(-1, 1)
    y = np.array([1, 1, 0, 0, 1, 1, 0, 0])
    model = AdaBoostClassifier(n_rounds=10, weak_depth=1).fit(X, y)
    assert np.array_equal(model.predict(X), y)
    assert model.train_errors[-1] == 0.0
    # cross-check against the independent reference
    assert np.array_equal(reference_adaboost_stumps(X, y, 10), y)


def test_adaboost_per_round_invariants():
    rng = np.random.default_rng(13)
    X = rng.normal(0, 1, (300, 4))
    clean = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(int)
    flip = rng.random(300) < 0.08
    y = np.where(flip, 1 - clean, clean)
    model = AdaBoostClassifier(n_rounds=40, weak_depth=1).fit(X, y)
    assert len(model.epsilons) >= 5
    for eps in model.epsilons:
        assert eps < 0.5
    for err, bound in zip(model.train_errors, model.bounds):
        assert err <= bound


def test_adaboost_perfect_stump_collapses():
    X = np.array([[1.0], [2.0], [3.0], [10.0], [11.0]])
    y = np.array([0, 0, 0, 1, 1])
    model = AdaBoostClassifier(n_rounds=25, weak_depth=1).fit(X, y)
    assert len(model.trees) == 1
    assert model.alphas == [1.0]
    assert model.epsilons[-1] == 0.0
    assert model.bounds[-1] == 0.0
    assert model.train_errors[-1] == 0.0
    assert model.stopped_early and "weak error 0" in model.stopped_early
    assert np.array_equal(model.predict(X), y)


def test_adaboost_stops_on_unlearnable_xor():
    # axis-aligned stumps are useless on XOR; first round fails at eps >= 0.5
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([0, 1, 1, 0])
    model = AdaBoostClassifier(n_rounds=10, weak_depth=1).fit(X, y)
    assert model.trees == []
    assert model.stopped_early and ">= 0.5" in model.stopped_early
    # majority fallback: balanced classes tie -> wait
    assert not model.predict(X).any()


def test_adaboost_zero_margin_counts_as_wait():
    X = np.array([[1.0], [2.0], [3.0], [10.0], [11.0]])
    y = np.array([0, 0, 0, 1, 1])
    model = AdaBoostClassifier(n_rounds=5, weak_depth=1).fit(X, y)
    model.trees = model.trees * 2
    model.alphas = [1.0, -1.0]  # force margin exactly 0
    assert not model.predict(X).any()


def test_adaboost_proba_centered_on_half():
    X = np.array([[1.0], [2.0], [3.0], [10.0], [11.0], [12.0]])
    y = np.array([0, 0, 0, 1, 1, 1])
    model = AdaBoostClassifier(n_rounds=10, weak_depth=1).fit(X, y)
    p = model.predict_proba(X)
    assert ((0.0 <= p) & (p <= 1.0)).all()
    assert np.array_equal((p > 0.5).astype(int), model.predict(X))


def test_adaboost_json_round_trip():
    rng = np.random.default_rng(14)
    X = rng.normal(0, 1, (80, 3))
    y = (X[:, 0] + 0.3 * rng.normal(size=80) > 0).astype(int)
    model = AdaBoostClassifier(n_rounds=15, weak_depth=2).fit(X, y)
    clone = AdaBoostClassifier.from_jsonable(model.to_jsonable())
    probe = rng.normal(0, 1, (20, 3))
    assert np.array_equal(model.predict(probe), clone.predict(probe))


# -- AdaBoost regression -----------------------------------------------------


def test_adaboost_regressor_exact_fit_collapses():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([1.0, 2.0, 3.0, 4.0])
    model = AdaBoostRegressor(n_rounds=20, weak_depth=8).fit(X, y)
    assert len(model.trees) == 1
    assert model.stopped_early == "round 0: exact fit"
    assert np.allclose(model.predict(X), y)


def test_adaboost_regressor_improves_over_a_stump():
    rng = np.random.default_rng(15)
    X = rng.uniform(-3, 3, (200, 1))
    y = np.sin(X[:, 0])
    stump = Cart(task="regression", max_depth=3).fit(X, y)
    model = AdaBoostRegressor(n_rounds=30, weak_depth=3).fit(X, y)
    assert len(model.trees) > 1
    for avg in model.avg_losses:
        assert avg < 0.5
    rmse_stump = np.sqrt(np.mean((stump.predict(X) - y) ** 2))
    rmse_boost = np.sqrt(np.mean((model.predict(X) - y) ** 2))
    assert rmse_boost < rmse_stump


def test_adaboost_regressor_prediction_is_a_member_value():
    rng = np.random.default_rng(16)
    X = rng.uniform(-2, 2, (60, 2))
    y = X[:, 0] ** 2 + rng.normal(0, 0.05, 60)
    model = AdaBoostRegressor(n_rounds=10, weak_depth=2).fit(X, y)
    preds = np.column_stack([t.predict(X) for t in model.trees])
    out = model.predict(X)
    for i in range(len(X)):
        assert out[i] in preds[i]


def test_adaboost_regressor_json_round_trip():
    rng = np.random.default_rng(17)
    X = rng.uniform(-2, 2, (50, 2))
    y = X[:, 0] - X[:, 1]
    model = AdaBoostRegressor(n_rounds=8, weak_depth=3).fit(X, y)
    clone = AdaBoostRegressor.from_jsonable(model.to_jsonable())
    assert np.array_equal(model.predict(X), clone.predict(X))


# -- random forest -----------------------------------------------------------


def test_default_mtry():
    assert default_mtry("classification", 13) == 4  # round(sqrt(13))
    assert default_mtry("regression", 13) == 4  # round(13/3)
    assert default_mtry("classification", 4) == 2
    assert default_mtry("regression", 1) == 1


def test_forest_identity_single_tree_equals_cart():
    rng = np.random.default_rng(18)
    X = rng.normal(0, 1, (100, 5))
    y = (X[:, 1] > 0.1).astype(int)
    forest = RandomForest(
        task="classification", n_trees=1, bootstrap="identity", subsample=False
    ).fit(X, y, seed=0)
    tree = Cart(task="classification").fit(X, y)
    probe = rng.normal(0, 1, (40, 5))
    assert np.array_equal(forest.predict(probe), tree.predict(probe))


def test_forest_vote_tie_predicts_wait():
    X = np.array([[0.0], [1.0]])
    # constant-label training yields single-leaf trees with opposite votes
    always_buy = Cart(task="classification").fit(X, np.array([1, 1]))
    always_wait = Cart(task="classification").fit(X, np.array([0, 0]))
    forest = RandomForest(task="classification", n_trees=2)
    forest.trees = [always_buy, always_wait]
    assert np.allclose(forest.predict_scores(X), 0.5)
    assert not forest.predict(X).any()


def test_forest_deterministic_per_seed():
    rng = np.random.default_rng(19)
    X = rng.normal(0, 1, (80, 4))
    y = (X[:, 0] > 0).astype(int)
    a = RandomForest(task="classification", n_trees=10).fit(X, y, seed=7)
    b = RandomForest(task="classification", n_trees=10).fit(X, y, seed=7)
    probe = rng.normal(0, 1, (30, 4))
    assert np.array_equal(a.predict_scores(probe), b.predict_scores(probe))


def test_forest_regression_mean_of_members():
    rng = np.random.default_rng(20)
    X = rng.uniform(-2, 2, (90, 3))
    y = X[:, 0] * 2
    forest = RandomForest(task="regression", n_trees=5, max_depth=3).fit(X, y, seed=1)
    probe = rng.uniform(-2, 2, (10, 3))
    member = np.column_stack([t.predict(probe) for t in forest.trees])
    assert np.allclose(forest.predict(probe), member.mean(axis=1))


def test_forest_json_round_trip():
    rng = np.random.default_rng(21)
    X = rng.normal(0, 1, (60, 3))
    y = (X[:, 2] < 0).astype(int)
    forest = RandomForest(task="classification", n_trees=4, max_depth=3).fit(X, y, seed=2)
    clone = RandomForest.from_jsonable(forest.to_jsonable())
    assert np.array_equal(forest.predict(X), clone.predict(X))


# -- KNN ---------------------------------------------------------------------


def test_knn_one_reproduces_training_labels():
    rng = np.random.default_rng(22)
    X = rng.normal(0, 1, (50, 4))  # distinct points almost surely
    y = (rng.random(50) > 0.5).astype(int)
    model = Knn(task="classification", k=1).fit(X, y)
    assert np.array_equal(model.predict(X), y)


def test_knn_matches_brute_force():
    rng = np.random.default_rng(23)
    X = rng.normal(0, 1, (200, 5))  # spans multiple distance blocks
    y = rng.normal(0, 1, 200)
    model = Knn(task="regression", k=7).fit(X, y)
    probe = rng.normal(0, 1, (90, 5))
    dists = ((probe[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
    idx = np.argsort(dists, axis=1, kind="stable")[:, :7]
    expected = y[idx].mean(axis=1)
    assert np.allclose(model.predict(probe), expected, atol=1e-9)


def test_knn_vote_tie_predicts_wait():
    X = np.array([[0.0], [2.0]])
    y = np.array([0, 1])
    model = Knn(task="classification", k=2).fit(X, y)
    assert model.predict(np.array([[1.0]]))[0] == 0


def test_knn_k_larger_than_train_raises():
    X = np.zeros((3, 2))
    y = np.array([0, 1, 0])
    with pytest.raises(ValueError):
        Knn(task="classification", k=4).fit(X, y)


def test_knn_json_round_trip():
    rng = np.random.default_rng(24)
    X = rng.normal(0, 1, (40, 3))
    y = (X[:, 0] > 0).astype(int)
    model = Knn(task="classification", k=3).fit(X, y)
    clone = Knn.from_jsonable(model.to_jsonable())
    probe = rng.normal(0, 1, (15, 3))
    assert np.array_equal(model.predict_scores(probe), clone.predict_scores(probe))
