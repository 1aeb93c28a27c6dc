"""Random forest, written from scratch on numpy.

Binary classification forest for the bot detector plus a regression mode
that the tuner uses as its surrogate model. Determinism contract: given
(matrix, hyperparams, seed) the trained ensemble is identical down to tree
structure, because every tree draws from its own generator seeded with
seed XOR tree_index and consumes it in a fixed depth-first order.

Split search: candidate thresholds are midpoints between consecutive
distinct sorted values; impurity is gini for classification and biased
variance for regression; ties break toward the lower feature index, then
the lower threshold. A split is legal only when both children have at
least min_node_size rows and the impurity decrease is strictly positive.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import FeatureMatrix, NormalizationParams, SpecVersionMismatch

FORMAT_VERSION = "1"

CLASSIFICATION = "classification"
REGRESSION = "regression"


class ForestError(Exception):
    pass


class EmptyDataset(ForestError):
    pass


class SingleClassDataset(ForestError):
    pass


class NoOobRows(ForestError):
    pass


class EmptyNode(ForestError):
    pass


class UnsupportedFormatVersion(ForestError):
    pass


class CorruptModelFile(ForestError):
    pass


@dataclass(frozen=True)
class HyperParams:
    num_trees: int = 200
    max_depth: int = 16
    min_node_size: int = 5
    # sqrt(p)/p for the 18-wide feature spec, the usual forest default.
    mtry_fraction: float = 0.24
    sample_fraction: float = 1.0

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_node_size < 1:
            raise ValueError("min_node_size must be >= 1")
        if not 0.0 < self.mtry_fraction <= 1.0:
            raise ValueError("mtry_fraction must be in (0, 1]")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise ValueError("sample_fraction must be in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "num_trees": self.num_trees,
            "max_depth": self.max_depth,
            "min_node_size": self.min_node_size,
            "mtry_fraction": self.mtry_fraction,
            "sample_fraction": self.sample_fraction,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "HyperParams":
        return cls(**{k: doc[k] for k in (
            "num_trees", "max_depth", "min_node_size", "mtry_fraction", "sample_fraction")})


class Leaf:
    __slots__ = ("counts", "mean")

    def __init__(self, counts: tuple[int, int] | None = None, mean: float | None = None):
        self.counts = counts
        self.mean = mean

    def vote(self) -> int:
        # Majority class; an exact tie counts as bot, matching the 0.5
        # decision threshold being inclusive.
        return 1 if self.counts[1] >= self.counts[0] else 0


class Split:
    __slots__ = ("feature", "threshold", "left", "right")

    def __init__(self, feature: int, threshold: float, left, right):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right


def gini(counts) -> float:
    """Gini impurity of a two-class count pair."""
    a, b = counts
    n = a + b
    if n <= 0:
        raise EmptyNode("gini of an empty node is undefined")
    pa = a / n
    pb = b / n
    return 1.0 - pa * pa - pb * pb


def _variance(total: float, total_sq: float, n: int) -> float:
    mean = total / n
    v = total_sq / n - mean * mean
    return v if v > 0.0 else 0.0


@dataclass
class _BestSplit:
    feature: int
    threshold: float
    decrease: float


def best_split(X: np.ndarray, y: np.ndarray, rows: np.ndarray,
               features: np.ndarray, min_node_size: int, task: str) -> _BestSplit | None:
    """Exhaustive scan over candidate features, vectorized per feature.

    Candidate thresholds are midpoints between consecutive distinct sorted
    values. Returns None when no legal split improves impurity.
    """
    n = rows.shape[0]
    yy_all = y[rows]
    if task == CLASSIFICATION:
        total_ones = int(yy_all.sum())
        parent = gini((n - total_ones, total_ones))
    else:
        s1 = float(yy_all.sum())
        s2 = float((yy_all * yy_all).sum())
        parent = _variance(s1, s2, n)

    best: _BestSplit | None = None
    for f in features:
        values = X[rows, f]
        order = np.argsort(values, kind="stable")
        v = values[order]
        yy = yy_all[order]

        left_n = np.arange(1, n)
        legal = (v[1:] > v[:-1]) & (left_n >= min_node_size) & ((n - left_n) >= min_node_size)
        if not legal.any():
            continue

        nl = left_n[legal].astype(np.float64)
        nr = n - nl
        if task == CLASSIFICATION:
            ones_prefix = np.cumsum(yy)[:-1][legal].astype(np.float64)
            b_l = ones_prefix
            a_l = nl - b_l
            b_r = total_ones - b_l
            a_r = nr - b_r
            p_al = a_l / nl
            p_bl = b_l / nl
            gini_l = 1.0 - p_al * p_al - p_bl * p_bl
            p_ar = a_r / nr
            p_br = b_r / nr
            gini_r = 1.0 - p_ar * p_ar - p_br * p_br
            weighted = (nl * gini_l + nr * gini_r) / n
        else:
            csum = np.cumsum(yy)[:-1][legal]
            csq = np.cumsum(yy * yy)[:-1][legal]
            mean_l = csum / nl
            var_l = np.maximum(csq / nl - mean_l * mean_l, 0.0)
            mean_r = (s1 - csum) / nr
            var_r = np.maximum((s2 - csq) / nr - mean_r * mean_r, 0.0)
            weighted = (nl * var_l + nr * var_r) / n

        decrease = parent - weighted
        k = int(np.argmax(decrease))  # first occurrence = lowest threshold
        if decrease[k] <= 0.0:
            continue
        if best is None or decrease[k] > best.decrease:
            boundary = int(nl[k])
            thr = (v[boundary - 1] + v[boundary]) / 2.0
            best = _BestSplit(feature=int(f), threshold=float(thr), decrease=float(decrease[k]))
    return best


def _leaf(yy: np.ndarray, task: str) -> Leaf:
    if task == CLASSIFICATION:
        ones = int(yy.sum())
        return Leaf(counts=(yy.shape[0] - ones, ones))
    return Leaf(mean=float(yy.mean()))


def grow_tree(X: np.ndarray, y: np.ndarray, rows: np.ndarray, hp: HyperParams,
              rng: np.random.Generator, task: str,
              importance: np.ndarray | None = None):
    """Depth-first recursive growth; rng is consumed in a fixed order."""
    p = X.shape[1]
    mtry = math.ceil(hp.mtry_fraction * p)

    def grow(node_rows: np.ndarray, depth: int):
        yy = y[node_rows]
        if (yy == yy[0]).all() or depth >= hp.max_depth or node_rows.shape[0] < 2 * hp.min_node_size:
            return _leaf(yy, task)
        feats = np.sort(rng.choice(p, size=mtry, replace=False))
        found = best_split(X, y, node_rows, feats, hp.min_node_size, task)
        if found is None:
            return _leaf(yy, task)
        mask = X[node_rows, found.feature] <= found.threshold
        left_rows = node_rows[mask]
        right_rows = node_rows[~mask]
        if left_rows.shape[0] == 0 or right_rows.shape[0] == 0:
            return _leaf(yy, task)
        if importance is not None:
            importance[found.feature] += node_rows.shape[0] * found.decrease
        return Split(found.feature, found.threshold,
                     grow(left_rows, depth + 1), grow(right_rows, depth + 1))

    return grow(rows, 0)


def _predict_tree(node, x: np.ndarray):
    while isinstance(node, Split):
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node


def tree_depth(node) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(node.left), tree_depth(node.right))


def tree_leaf_sizes(node) -> list[int]:
    if isinstance(node, Leaf):
        if node.counts is not None:
            return [node.counts[0] + node.counts[1]]
        return []
    return tree_leaf_sizes(node.left) + tree_leaf_sizes(node.right)


@dataclass
class RandomForest:
    trees: list
    task: str
    hyperparams: HyperParams
    seed: int
    feature_spec_version: str
    num_features: int
    bootstrap_indices: list[np.ndarray] = field(repr=False, default_factory=list)
    _importance_raw: np.ndarray | None = field(repr=False, default=None)

    def predict_proba(self, x: np.ndarray) -> float:
        """Fraction of trees voting bot; exactly votes / num_trees."""
        if self.task != CLASSIFICATION:
            raise ForestError("predict_proba requires a classification forest")
        votes = 0
        for tree in self.trees:
            votes += _predict_tree(tree, x).vote()
        return votes / len(self.trees)

    def predict_proba_batch(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.predict_proba(X[i]) for i in range(X.shape[0])])

    def predict_value(self, x: np.ndarray) -> float:
        if self.task != REGRESSION:
            raise ForestError("predict_value requires a regression forest")
        return float(np.mean([_predict_tree(t, x).mean for t in self.trees]))

    def predict_stats(self, x: np.ndarray) -> tuple[float, float]:
        """Mean and population spread of per-tree outputs (regression)."""
        if self.task != REGRESSION:
            raise ForestError("predict_stats requires a regression forest")
        outs = np.array([_predict_tree(t, x).mean for t in self.trees])
        return float(outs.mean()), float(outs.std())


@dataclass
class TrainReport:
    oob_error: float | None
    feature_importances: np.ndarray

    def to_dict(self) -> dict:
        return {
            "oob_error": self.oob_error,
            "feature_importances": [float(v) for v in self.feature_importances],
        }


@dataclass
class ArrayDataset:
    """Bare-array training set for non-feature-spec forests (the tuner's
    surrogate trains on hyperparameter vectors with float targets)."""
    rows: np.ndarray
    labels: np.ndarray
    feature_spec_version: str = "raw"

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.rows.ndim != 2 or len(self.labels) != len(self.rows):
            raise ValueError("rows must be 2d with one label per row")


def train(matrix: FeatureMatrix | ArrayDataset, hp: HyperParams | None = None,
          seed: int = 0, task: str = CLASSIFICATION) -> RandomForest:
    hp = hp or HyperParams()
    X = matrix.rows
    n = X.shape[0]
    if n == 0:
        raise EmptyDataset("cannot train on an empty matrix")
    if matrix.labels is None:
        raise EmptyDataset("matrix has no labels")
    if task == CLASSIFICATION:
        y = matrix.labels.astype(np.int64)
        if np.unique(y).shape[0] < 2:
            raise SingleClassDataset("training data contains a single class")
    elif task == REGRESSION:
        y = matrix.labels.astype(np.float64)
    else:
        raise ValueError(f"unknown task {task!r}")

    m = math.ceil(hp.sample_fraction * n)
    importance = np.zeros(X.shape[1], dtype=np.float64)
    trees = []
    bootstraps = []
    for i in range(hp.num_trees):
        rng = np.random.default_rng(seed ^ i)
        idx = rng.integers(0, n, size=m)
        bootstraps.append(idx)
        trees.append(grow_tree(X, y, idx, hp, rng, task, importance))

    return RandomForest(
        trees=trees,
        task=task,
        hyperparams=hp,
        seed=seed,
        feature_spec_version=matrix.feature_spec_version,
        num_features=X.shape[1],
        bootstrap_indices=bootstraps,
        _importance_raw=importance,
    )


def oob_error(forest: RandomForest, matrix: FeatureMatrix | ArrayDataset) -> float:
    """Out-of-bag error: each row judged only by trees that never sampled it.

    Classification: misclassified fraction under majority vote (ties vote
    bot). Regression: mean squared error. Raises NoOobRows when every row
    appears in every bootstrap.
    """
    X = matrix.rows
    y = matrix.labels
    n = X.shape[0]
    in_bag = np.zeros((len(forest.trees), n), dtype=bool)
    for t, idx in enumerate(forest.bootstrap_indices):
        in_bag[t, idx] = True

    if forest.task == CLASSIFICATION:
        votes_bot = np.zeros(n, dtype=np.int64)
        votes_all = np.zeros(n, dtype=np.int64)
        for t, tree in enumerate(forest.trees):
            out_rows = np.nonzero(~in_bag[t])[0]
            for r in out_rows:
                votes_all[r] += 1
                votes_bot[r] += _predict_tree(tree, X[r]).vote()
        covered = votes_all > 0
        if not covered.any():
            raise NoOobRows("every row was sampled by every tree")
        pred = (votes_bot[covered] * 2 >= votes_all[covered]).astype(np.int64)
        return float(np.mean(pred != y[covered]))

    sums = np.zeros(n, dtype=np.float64)
    counts = np.zeros(n, dtype=np.int64)
    for t, tree in enumerate(forest.trees):
        out_rows = np.nonzero(~in_bag[t])[0]
        for r in out_rows:
            counts[r] += 1
            sums[r] += _predict_tree(tree, X[r]).mean
    covered = counts > 0
    if not covered.any():
        raise NoOobRows("every row was sampled by every tree")
    resid = sums[covered] / counts[covered] - y[covered]
    return float(np.mean(resid * resid))


def feature_importance(forest: RandomForest) -> np.ndarray:
    """Mean impurity decrease per feature, normalized to sum to 1.

    All-zero when no tree ever split (for example a forest of stumps on
    constant data).
    """
    raw = forest._importance_raw
    if raw is None:
        raise ForestError("forest was not trained by this module")
    total = raw.sum()
    if total == 0.0:
        return np.zeros_like(raw)
    return raw / total


# -- serialization -----------------------------------------------------------


def _node_to_dict(node) -> dict:
    if isinstance(node, Leaf):
        if node.counts is not None:
            return {"counts": [int(node.counts[0]), int(node.counts[1])]}
        return {"mean": node.mean}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(doc: dict):
    if "feature" in doc:
        return Split(int(doc["feature"]), float(doc["threshold"]),
                     _node_from_dict(doc["left"]), _node_from_dict(doc["right"]))
    if "counts" in doc:
        c = doc["counts"]
        return Leaf(counts=(int(c[0]), int(c[1])))
    return Leaf(mean=float(doc["mean"]))


@dataclass
class ModelBundle:
    forest: RandomForest
    normalizer: NormalizationParams | None
    train_report: TrainReport | None
    model_version: str


def save(forest: RandomForest, path: str | Path,
         normalizer: NormalizationParams | None = None,
         train_report: TrainReport | None = None) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "task": forest.task,
        "feature_spec_version": forest.feature_spec_version,
        "seed": forest.seed,
        "num_features": forest.num_features,
        "hyperparams": forest.hyperparams.to_dict(),
        "normalizer": normalizer.to_dict() if normalizer is not None else None,
        "train_report": train_report.to_dict() if train_report is not None else None,
        "trees": [_node_to_dict(t) for t in forest.trees],
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":"), sort_keys=True), encoding="utf-8")


def load(path: str | Path) -> ModelBundle:
    try:
        raw = Path(path).read_bytes()
        doc = json.loads(raw.decode("utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptModelFile(f"cannot read model file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise CorruptModelFile("model document is not an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedFormatVersion(f"format_version {version!r}, supported: {FORMAT_VERSION!r}")
    try:
        hp = HyperParams.from_dict(doc["hyperparams"])
        trees = [_node_from_dict(t) for t in doc["trees"]]
        forest = RandomForest(
            trees=trees,
            task=doc["task"],
            hyperparams=hp,
            seed=int(doc["seed"]),
            feature_spec_version=doc["feature_spec_version"],
            num_features=int(doc["num_features"]),
        )
        norm = doc.get("normalizer")
        normalizer = NormalizationParams.from_dict(norm) if norm is not None else None
        rep = doc.get("train_report")
        report = None
        if rep is not None:
            report = TrainReport(
                oob_error=rep["oob_error"],
                feature_importances=np.array(rep["feature_importances"], dtype=np.float64),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModelFile(f"model file {path} is malformed: {exc}") from exc
    model_version = hashlib.sha256(raw).hexdigest()[:12]
    return ModelBundle(forest=forest, normalizer=normalizer,
                       train_report=report, model_version=model_version)


def check_spec_version(forest: RandomForest, version: str) -> None:
    if forest.feature_spec_version != version:
        raise SpecVersionMismatch(
            f"model expects feature spec {forest.feature_spec_version!r}, got {version!r}")
