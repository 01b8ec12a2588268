"""Boosted decision-stump ensembles and the depth-limited tree baseline.

Two boosting modes are supported: the real-valued variant (default, as
used for all shipped experiments) drives an additive half-log-odds
margin from stump leaf probabilities, while the discrete variant keeps
explicit nonnegative stump weights and realises the weighted-majority
vote literally.  Both expose the same two outputs: a binary vote and a
secure-class score in [0, 1] with ``vote == (score >= 0.5)`` exactly.

The ensemble size is chosen by k-fold cross-validation: the final model
is retrained on the full split with the round count that minimised the
mean fold error (ties go to fewer rounds).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateData, MalformedFile, SingleClassData, VersionMismatch

LEAF_EPS = 1e-6  # probability clamp applied before any logarithm
_TIE_TOL = 1e-12  # impurity window treated as a tie (lexicographic winner)
_ERR_FLOOR = 1e-10  # weighted-error clamp for discrete stump weights

MODEL_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Leaf:
    p0: float
    p1: float

    @property
    def label(self) -> int:
        return 1 if self.p1 >= self.p0 else 0


@dataclass(frozen=True)
class Stump:
    """Depth-1 split: ``x[feature] <= threshold`` goes left."""

    feature: int | None  # None for a constant (single-leaf) stump
    threshold: float
    left: Leaf
    right: Leaf

    def proba(self, x: np.ndarray) -> np.ndarray:
        """Secure-class probability per row of ``x``."""
        x = np.atleast_2d(x)
        if self.feature is None:
            return np.full(len(x), self.left.p1)
        mask = x[:, self.feature] <= self.threshold
        return np.where(mask, self.left.p1, self.right.p1)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.feature is None:
            return np.full(len(x), self.left.label, dtype=int)
        mask = x[:, self.feature] <= self.threshold
        return np.where(mask, self.left.label, self.right.label)


class _StumpFitter:
    """Caches per-feature sort order so boosting rounds reuse it."""

    def __init__(self, x: np.ndarray):
        self.x = x
        self.order = np.argsort(x, axis=0, kind="stable")
        sorted_vals = np.take_along_axis(x, self.order, axis=0)
        self.cuts = []
        self.midpoints = []
        for f in range(x.shape[1]):
            sv = sorted_vals[:, f]
            idx = np.nonzero(sv[:-1] != sv[1:])[0]
            self.cuts.append(idx)
            self.midpoints.append((sv[idx] + sv[idx + 1]) / 2.0)

    def fit(self, y: np.ndarray, w: np.ndarray) -> Stump:
        w0 = np.where(y == 0, w, 0.0)
        w1 = np.where(y == 1, w, 0.0)
        t0, t1 = w0.sum(), w1.sum()
        total = t0 + t1
        if total <= 0:
            raise ValueError("example weights must not all be zero")
        if t0 == 0.0 or t1 == 0.0:
            label1 = t1 > 0.0
            p1 = 1.0 - LEAF_EPS if label1 else LEAF_EPS
            leaf = Leaf(1.0 - p1, p1)
            return Stump(feature=None, threshold=0.0, left=leaf, right=leaf)

        best = None  # (impurity, feature, cut position, stats)
        for f in range(self.x.shape[1]):
            idx = self.cuts[f]
            if len(idx) == 0:
                continue
            c0 = np.cumsum(w0[self.order[:, f]])[idx]
            c1 = np.cumsum(w1[self.order[:, f]])[idx]
            wl = c0 + c1
            wr = total - wl
            r0 = t0 - c0
            r1 = t1 - c1
            left_term = np.divide(c0 * c0 + c1 * c1, wl, out=np.zeros_like(wl), where=wl > 0)
            right_term = np.divide(r0 * r0 + r1 * r1, wr, out=np.zeros_like(wr), where=wr > 0)
            impurity = (total - left_term - right_term) / total
            j = int(np.flatnonzero(impurity <= impurity.min() + _TIE_TOL)[0])
            if best is None or impurity[j] < best[0] - _TIE_TOL:
                best = (float(impurity[j]), f, j, (c0[j], c1[j], r0[j], r1[j]))

        if best is None:
            raise DegenerateData("all feature vectors are identical with both classes present")
        _, f, j, (l0, l1, r0, r1) = best

        def leaf(n0, n1):
            tot = n0 + n1
            p1 = np.clip(n1 / tot if tot > 0 else 0.5, LEAF_EPS, 1.0 - LEAF_EPS)
            return Leaf(1.0 - p1, float(p1))

        return Stump(feature=f, threshold=float(self.midpoints[f][j]), left=leaf(l0, l1), right=leaf(r0, r1))


def train_stump(features, labels, weights=None) -> Stump:
    """Fit the weighted-gini-optimal stump (midpoint thresholds).

    Single-class data yields a constant stump predicting that class;
    identical feature vectors with both classes present raise
    DegenerateData.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("example weights must be nonnegative")
    return _StumpFitter(x).fit(y, w)


# -- boosting ----------------------------------------------------------------

@dataclass
class Ensemble:
    """Boosted stump ensemble; ``weights`` is None in real-valued mode."""

    mode: str  # "samme" | "samme.r"
    stumps: list[Stump]
    weights: list[float] | None

    @property
    def rounds(self) -> int:
        return len(self.stumps)


def _boost(x, y, fitter, rounds, mode):
    n = len(y)
    w = np.full(n, 1.0 / n)
    sign = np.where(y == 1, 1.0, -1.0)
    stumps: list[Stump] = []
    alphas: list[float] = []
    for _ in range(rounds):
        stump = fitter.fit(y, w)
        if mode == "samme":
            miss = stump.predict(x) != y
            err = float(w[miss].sum())
            if err >= 0.5 and stumps:
                break
            err = min(max(err, _ERR_FLOOR), 1.0 - _ERR_FLOOR)
            alpha = np.log((1.0 - err) / err)  # + log(K-1) = 0 for two classes
            stumps.append(stump)
            alphas.append(float(max(alpha, 0.0)))
            w = w * np.exp(alpha * miss)
        else:
            p1 = stump.proba(x)
            contrib = 0.5 * (np.log(p1) - np.log1p(-p1))
            stumps.append(stump)
            w = w * np.exp(-sign * contrib)
        w = w / w.sum()
    return stumps, alphas


def _prefix_error_curve(stumps, alphas, mode, x, y, rounds):
    """Validation error of every prefix ensemble, padded to ``rounds``."""
    errs = np.empty(rounds)
    if mode == "samme":
        vote_sum = np.zeros(len(y))
        weight_sum = 0.0
        for r in range(rounds):
            if r < len(stumps):
                vote_sum += alphas[r] * stumps[r].predict(x)
                weight_sum += alphas[r]
            pred = vote_sum >= 0.5 * weight_sum if weight_sum > 0 else np.ones(len(y), bool)
            errs[r] = np.mean(pred.astype(int) != y)
    else:
        margin = np.zeros(len(y))
        for r in range(rounds):
            if r < len(stumps):
                p1 = stumps[r].proba(x)
                margin += 0.5 * (np.log(p1) - np.log1p(-p1))
            errs[r] = np.mean((margin >= 0).astype(int) != y)
    return errs


def train_adaboost(features, labels, rounds: int = 100, mode: str = "samme.r", k_folds: int = 3) -> Ensemble:
    """Boost stumps for up to ``rounds`` rounds with cross-validated stopping.

    Folds are assigned round-robin within each class (deterministic, no
    RNG); folds whose training part degenerates to one class are skipped.

    Raises
    ------
    SingleClassData
        If the training split contains only one class.
    """
    if mode not in ("samme", "samme.r"):
        raise ValueError(f"unknown boosting mode {mode!r}")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if k_folds < 2:
        raise ValueError("k_folds must be >= 2")
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    if len(np.unique(y)) < 2:
        raise SingleClassData("training split contains a single class")

    best_rounds = rounds
    if rounds > 1:
        fold_of = np.empty(len(y), dtype=int)
        for cls in (0, 1):
            idx = np.flatnonzero(y == cls)
            fold_of[idx] = np.arange(len(idx)) % k_folds
        curves = []
        for fold in range(k_folds):
            tr = fold_of != fold
            va = ~tr
            if len(np.unique(y[tr])) < 2 or not va.any():
                continue
            stumps, alphas = _boost(x[tr], y[tr], _StumpFitter(x[tr]), rounds, mode)
            curves.append(_prefix_error_curve(stumps, alphas, mode, x[va], y[va], rounds))
        if curves:
            mean_err = np.mean(curves, axis=0)
            best_rounds = int(np.flatnonzero(mean_err <= mean_err.min() + 1e-12)[0]) + 1

    stumps, alphas = _boost(x, y, _StumpFitter(x), best_rounds, mode)
    return Ensemble(mode=mode, stumps=stumps, weights=alphas if mode == "samme" else None)


def ensemble_margin(ensemble: Ensemble, features) -> np.ndarray:
    """Additive half-log-odds margin (real-valued mode only)."""
    x = np.atleast_2d(np.asarray(features, dtype=float))
    margin = np.zeros(len(x))
    for stump in ensemble.stumps:
        p1 = stump.proba(x)
        margin += 0.5 * (np.log(p1) - np.log1p(-p1))
    return margin


def ensemble_score(ensemble: Ensemble, features):
    """Secure-class score in [0, 1]; complements to 1 for the other class."""
    x = np.asarray(features, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if ensemble.mode == "samme":
        total = float(np.sum(ensemble.weights))
        if total <= 0:
            score = np.full(len(x), 0.5)
        else:
            vote = np.zeros(len(x))
            for alpha, stump in zip(ensemble.weights, ensemble.stumps):
                vote += alpha * stump.predict(x)
            score = vote / total
    else:
        score = 1.0 / (1.0 + np.exp(-2.0 * ensemble_margin(ensemble, x)))
    return float(score[0]) if single else score


def ensemble_vote(ensemble: Ensemble, features):
    """Binary label; 1 exactly when the score reaches 0.5."""
    score = ensemble_score(ensemble, features)
    if isinstance(score, float):
        return int(score >= 0.5)
    return (score >= 0.5).astype(int)


# -- depth-limited tree baseline ----------------------------------------------

@dataclass(frozen=True)
class TreeNode:
    feature: int | None
    threshold: float
    left: "TreeNode | None"
    right: "TreeNode | None"
    p0: float
    p1: float

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @property
    def label(self) -> int:
        return 1 if self.p1 >= self.p0 else 0


@dataclass(frozen=True)
class SingleTree:
    root: TreeNode
    max_depth: int


def _grow(x, y, depth, max_depth):
    n1 = int(np.sum(y == 1))
    n0 = len(y) - n1
    if depth >= max_depth or n0 == 0 or n1 == 0:
        return TreeNode(None, 0.0, None, None, n0 / len(y), n1 / len(y))
    try:
        stump = _StumpFitter(x).fit(y, np.ones(len(y)))
    except DegenerateData:
        return TreeNode(None, 0.0, None, None, n0 / len(y), n1 / len(y))
    if stump.feature is None:
        return TreeNode(None, 0.0, None, None, n0 / len(y), n1 / len(y))
    mask = x[:, stump.feature] <= stump.threshold
    return TreeNode(
        feature=stump.feature,
        threshold=stump.threshold,
        left=_grow(x[mask], y[mask], depth + 1, max_depth),
        right=_grow(x[~mask], y[~mask], depth + 1, max_depth),
        p0=n0 / len(y),
        p1=n1 / len(y),
    )


def train_single_tree(features, labels, max_depth: int = 3) -> SingleTree:
    """Greedy gini CART to ``max_depth``; leaves keep class frequencies."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    return SingleTree(root=_grow(x, y, 0, max_depth), max_depth=max_depth)


def _tree_leaf(node: TreeNode, row: np.ndarray) -> TreeNode:
    while not node.is_leaf:
        node = node.left if row[node.feature] <= node.threshold else node.right
    return node


def tree_predict(tree: SingleTree, features):
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        return _tree_leaf(tree.root, x).label
    return np.array([_tree_leaf(tree.root, row).label for row in x], dtype=int)


def tree_proba(tree: SingleTree, features):
    """Secure-class leaf frequency, used when thresholding a plain tree."""
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        return _tree_leaf(tree.root, x).p1
    return np.array([_tree_leaf(tree.root, row).p1 for row in x])


# -- model.json ---------------------------------------------------------------

def _leaf_to_dict(leaf: Leaf) -> dict:
    return {"p0": leaf.p0, "p1": leaf.p1, "label": leaf.label}


def _stump_to_dict(stump: Stump) -> dict:
    return {
        "feature": stump.feature,
        "threshold": stump.threshold,
        "left": _leaf_to_dict(stump.left),
        "right": _leaf_to_dict(stump.right),
    }


def save_model(path, ensemble: Ensemble, contingency: int | None = None, calibration=None) -> None:
    """Write ``model.json``: stumps, weights, optional sigmoid parameters."""
    doc = {
        "version": MODEL_SCHEMA_VERSION,
        "mode": ensemble.mode,
        "contingency": contingency,
        "stumps": [_stump_to_dict(s) for s in ensemble.stumps],
        "weights": ensemble.weights,
        "calibration": None if calibration is None else {"a": calibration.a, "b": calibration.b},
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_model(path):
    """Read ``model.json``; returns (ensemble, contingency, calibration).

    ``calibration`` is a PlattParams or None.
    """
    from .calibration import PlattParams

    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"invalid JSON in model file: {exc}", line=exc.lineno) from exc
    try:
        version = doc["version"]
        if version != MODEL_SCHEMA_VERSION:
            raise VersionMismatch(f"unsupported model version {version!r}")
        stumps = [
            Stump(
                feature=None if s["feature"] is None else int(s["feature"]),
                threshold=float(s["threshold"]),
                left=Leaf(float(s["left"]["p0"]), float(s["left"]["p1"])),
                right=Leaf(float(s["right"]["p0"]), float(s["right"]["p1"])),
            )
            for s in doc["stumps"]
        ]
        ensemble = Ensemble(
            mode=str(doc["mode"]),
            stumps=stumps,
            weights=None if doc["weights"] is None else [float(v) for v in doc["weights"]],
        )
        cal = doc.get("calibration")
        params = None if cal is None else PlattParams(a=float(cal["a"]), b=float(cal["b"]))
        return ensemble, doc.get("contingency"), params
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedFile(f"bad model description: {exc}") from exc
