"""Learner tests: stump fitting, boosting, trees, model serialization."""

import numpy as np
import pytest

from riskgate.errors import DegenerateData, MalformedFile, SingleClassData, VersionMismatch
from riskgate.learner import (
    LEAF_EPS,
    Ensemble,
    ensemble_margin,
    ensemble_score,
    ensemble_vote,
    load_model,
    save_model,
    train_adaboost,
    train_single_tree,
    train_stump,
    tree_predict,
    tree_proba,
)


# -- stump ---------------------------------------------------------------

def test_two_point_split():
    stump = train_stump([[0.0], [1.0]], [0, 1])
    assert stump.feature == 0
    assert stump.threshold == pytest.approx(0.5)
    assert stump.left.label == 0 and stump.right.label == 1
    assert stump.left.p0 == pytest.approx(1 - LEAF_EPS)
    assert stump.right.p1 == pytest.approx(1 - LEAF_EPS)


def test_single_class_gives_constant_stump():
    stump = train_stump([[0.0], [1.0], [2.0]], [1, 1, 1])
    assert stump.feature is None
    assert stump.left.label == 1
    assert stump.left.p1 == pytest.approx(1 - LEAF_EPS)


def test_identical_features_two_classes_degenerate():
    with pytest.raises(DegenerateData):
        train_stump([[3.0, 1.0], [3.0, 1.0]], [0, 1])


def test_second_feature_separates():
    # Labels follow feature 1; feature 0 is useless. Gini enumeration over
    # all candidate splits picks feature 1 at 0.5.
    x = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([0, 1, 0, 1])
    stump = train_stump(x, y)
    assert stump.feature == 1
    assert stump.threshold == pytest.approx(0.5)


def test_stump_matches_exhaustive_search():
    rng = np.random.default_rng(8)
    for _ in range(20):
        x = rng.normal(size=(40, 3))
        y = (x[:, 1] + 0.3 * rng.normal(size=40) > 0).astype(int)
        w = rng.uniform(0.1, 1.0, 40)
        stump = train_stump(x, y, w)

        def weighted_gini(mask):
            best = 0.0
            for side in (mask, ~mask):
                tot = w[side].sum()
                if tot == 0:
                    continue
                p1 = w[side][y[side] == 1].sum() / tot
                best += tot * 2 * p1 * (1 - p1)
            return best / w.sum()

        best = None
        for f in range(3):
            vals = np.unique(x[:, f])
            for lo, hi in zip(vals[:-1], vals[1:]):
                thr = (lo + hi) / 2
                g = weighted_gini(x[:, f] <= thr)
                if best is None or g < best - 1e-12:
                    best = g
        got = weighted_gini(x[:, stump.feature] <= stump.threshold)
        assert got == pytest.approx(best, abs=1e-9)


def test_stump_permutation_invariant():
    rng = np.random.default_rng(12)
    x = rng.normal(size=(60, 4))
    y = (x[:, 2] > 0.2).astype(int)
    w = rng.uniform(0.5, 1.5, 60)
    ref = train_stump(x, y, w)
    for seed in range(5):
        perm = np.random.default_rng(seed).permutation(60)
        other = train_stump(x[perm], y[perm], w[perm])
        assert other.feature == ref.feature
        assert other.threshold == ref.threshold


# -- boosting ------------------------------------------------------------

def test_separable_data_selects_one_round():
    x = np.linspace(0, 1, 30).reshape(-1, 1)
    y = (x[:, 0] > 0.5).astype(int)
    for mode in ("samme", "samme.r"):
        ens = train_adaboost(x, y, rounds=10, mode=mode, k_folds=3)
        assert ens.rounds == 1
        assert np.array_equal(ensemble_vote(ens, x), y)


def test_single_round_equals_stump():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(50, 2))
    y = (x[:, 0] + 0.5 * rng.normal(size=50) > 0).astype(int)
    ens = train_adaboost(x, y, rounds=1, mode="samme", k_folds=2)
    stump = train_stump(x, y)
    assert ens.rounds == 1
    assert np.array_equal(ensemble_vote(ens, x), stump.predict(x))


def test_single_class_training_rejected():
    with pytest.raises(SingleClassData):
        train_adaboost(np.zeros((5, 2)), np.ones(5, dtype=int), rounds=3)


def test_samme_exponential_loss_non_increasing():
    # Independent checker: margins recomputed from the serialized stump
    # weights; the training exponential loss must never rise.
    rng = np.random.default_rng(77)
    x = rng.normal(size=(100, 2))
    y = ((x[:, 0] + x[:, 1] + 0.7 * rng.normal(size=100)) > 0).astype(int)
    ens = train_adaboost(x, y, rounds=25, mode="samme", k_folds=2)
    sign = np.where(y == 1, 1.0, -1.0)
    margin = np.zeros(len(y))
    losses = []
    for alpha, stump in zip(ens.weights, ens.stumps):
        margin += 0.5 * alpha * sign * (2.0 * stump.predict(x) - 1.0)
        losses.append(np.exp(-margin).sum())
    assert all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))
    assert all(w >= 0 for w in ens.weights)


def test_samme_accepted_stumps_beat_chance():
    rng = np.random.default_rng(42)
    x = rng.normal(size=(80, 3))
    y = (x[:, 0] > 0.1).astype(int)
    ens = train_adaboost(x, y, rounds=15, mode="samme", k_folds=3)
    # replay the boosting weights to verify every accepted stump's error
    w = np.full(len(y), 1.0 / len(y))
    for alpha, stump in zip(ens.weights, ens.stumps):
        miss = stump.predict(x) != y
        assert w[miss].sum() < 0.5
        w = w * np.exp(alpha * miss)
        w = w / w.sum()


# -- vote / score --------------------------------------------------------

def constant_stump(p1):
    from riskgate.learner import Leaf, Stump

    leaf = Leaf(1.0 - p1, p1)
    return Stump(feature=None, threshold=0.0, left=leaf, right=leaf)


def split_stump(feature, threshold, p1_left, p1_right):
    from riskgate.learner import Leaf, Stump

    return Stump(feature, threshold, Leaf(1 - p1_left, p1_left), Leaf(1 - p1_right, p1_right))


def test_weighted_vote_and_score():
    # votes 1 and 0 with weights 0.7/0.3: normalized vote 0.7 -> label 1
    ens = Ensemble(mode="samme", stumps=[constant_stump(0.9), constant_stump(0.1)], weights=[0.7, 0.3])
    x = np.zeros(23)
    assert ensemble_score(ens, x) == pytest.approx(0.7)
    assert ensemble_vote(ens, x) == 1


def test_unanimous_votes():
    ens0 = Ensemble("samme", [constant_stump(0.1)] * 3, [0.5, 0.2, 0.3])
    x = np.zeros(23)
    assert ensemble_vote(ens0, x) == 0
    assert ensemble_score(ens0, x) == 0.0
    ens1 = Ensemble("samme", [constant_stump(0.9)] * 2, [1.0, 2.0])
    assert ensemble_score(ens1, x) == pytest.approx(1.0)


def test_half_log_odds_margin():
    # single stump with p1 = 0.9: margin = 0.5*ln(9) > 0 -> vote 1
    ens = Ensemble("samme.r", [constant_stump(0.9)], None)
    x = np.zeros(23)
    assert ensemble_margin(ens, x.reshape(1, -1))[0] == pytest.approx(0.5 * np.log(9.0))
    assert ensemble_vote(ens, x) == 1
    assert ensemble_score(ens, x) == pytest.approx(1.0 / (1.0 + np.exp(-np.log(9.0))))


def test_zero_margin_score_half():
    ens = Ensemble("samme.r", [constant_stump(0.5)], None)
    assert ensemble_score(ens, np.zeros(4)) == pytest.approx(0.5)


def test_score_vote_consistency_property():
    rng = np.random.default_rng(19)
    x = rng.normal(size=(200, 5))
    y = (x[:, 0] - x[:, 3] > 0).astype(int)
    for mode in ("samme", "samme.r"):
        ens = train_adaboost(x, y, rounds=12, mode=mode, k_folds=3)
        pts = rng.normal(size=(300, 5))
        score = ensemble_score(ens, pts)
        vote = ensemble_vote(ens, pts)
        assert np.array_equal(vote, (score >= 0.5).astype(int))
        assert np.all((score >= 0.0) & (score <= 1.0))


# -- single tree -----------------------------------------------------------

def test_pure_training_set_constant_tree():
    tree = train_single_tree(np.random.default_rng(0).normal(size=(10, 3)), np.ones(10, dtype=int))
    assert tree.root.is_leaf
    assert tree_predict(tree, np.zeros(3)) == 1


def test_separable_tree_depth_one():
    x = np.linspace(-1, 1, 20).reshape(-1, 1)
    y = (x[:, 0] > 0).astype(int)
    tree = train_single_tree(x, y, max_depth=3)
    assert np.array_equal(tree_predict(tree, x), y)
    assert tree.root.feature is not None
    assert tree.root.left.is_leaf and tree.root.right.is_leaf


def test_tree_beats_stump_on_training_error():
    rng = np.random.default_rng(100)
    x = rng.normal(size=(200, 2))
    y = ((x[:, 0] > 0) & (x[:, 1] > 0.3)).astype(int)  # needs depth 2
    stump = train_stump(x, y)
    tree = train_single_tree(x, y, max_depth=3)
    stump_err = np.mean(stump.predict(x) != y)
    tree_err = np.mean(tree_predict(tree, x) != y)
    assert tree_err <= stump_err
    assert tree_err < 0.05


def test_tree_depth_limit():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(300, 4))
    y = rng.integers(0, 2, 300)

    def depth(node):
        if node.is_leaf:
            return 0
        return 1 + max(depth(node.left), depth(node.right))

    tree = train_single_tree(x, y, max_depth=3)
    assert depth(tree.root) <= 3


def test_tree_proba_in_unit_interval():
    rng = np.random.default_rng(15)
    x = rng.normal(size=(120, 3))
    y = (x[:, 1] > 0.3).astype(int)
    tree = train_single_tree(x, y)
    p = tree_proba(tree, x)
    assert np.all((p >= 0) & (p <= 1))
    assert np.array_equal(tree_predict(tree, x), (p >= 0.5).astype(int))


# -- model files ------------------------------------------------------------

def test_model_roundtrip(tmp_path):
    rng = np.random.default_rng(23)
    x = rng.normal(size=(80, 23))
    y = (x[:, 4] > 0).astype(int)
    for mode in ("samme", "samme.r"):
        ens = train_adaboost(x, y, rounds=8, mode=mode, k_folds=2)
        path = tmp_path / f"model_{mode}.json"
        save_model(path, ens, contingency=6)
        loaded, contingency, params = load_model(path)
        assert contingency == 6
        assert params is None
        pts = rng.normal(size=(100, 23))
        assert np.array_equal(ensemble_vote(ens, pts), ensemble_vote(loaded, pts))
        assert ensemble_score(ens, pts) == pytest.approx(ensemble_score(loaded, pts))


def test_model_with_calibration_roundtrip(tmp_path):
    from riskgate.calibration import PlattParams

    ens = Ensemble("samme.r", [constant_stump(0.8)], None)
    path = tmp_path / "model.json"
    save_model(path, ens, contingency=3, calibration=PlattParams(a=-4.0, b=2.0))
    _, _, params = load_model(path)
    assert params.a == -4.0 and params.b == 2.0


def test_truncated_model_rejected(tmp_path):
    path = tmp_path / "model.json"
    ens = Ensemble("samme", [constant_stump(0.8)], [1.0])
    save_model(path, ens)
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(MalformedFile):
        load_model(path)


def test_unknown_version_rejected(tmp_path):
    path = tmp_path / "model.json"
    ens = Ensemble("samme", [constant_stump(0.8)], [1.0])
    save_model(path, ens)
    doc = path.read_text().replace('"version": 1', '"version": 999')
    path.write_text(doc)
    with pytest.raises(VersionMismatch):
        load_model(path)
