"""Random-forest training, LOOCV, prediction, and serialization.

Determinism contract: a (dataset, hyperparams) pair fully determines the
model. Tree t draws its bootstrap and feature subsets from MINSTD stream
(seed, t); leave-one-out fold i trains with seed + i. Accuracies are
exact rationals (correct / total), never floats, so published figures
can be compared without tolerance fudging.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from ..preprocess import FeatureVector
from . import backend
from ._rng import stream_state

MODEL_FORMAT = "etongue-forest"
MODEL_FORMAT_VERSION = 1


class DatasetError(ValueError):
    """Training input is unusable; `record_ids` names the offenders when known."""

    def __init__(self, message: str, record_ids: Sequence[str] = ()):
        self.record_ids = tuple(record_ids)
        super().__init__(message)


@dataclass(frozen=True)
class Hyperparams:
    n_trees: int = 200
    max_depth: int | None = None
    min_samples_leaf: int = 1
    features_per_split: int | None = None  # None -> ceil(sqrt(n_features))
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1 or None, got {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise ValueError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ValueError(f"features_per_split must be >= 1 or None, got {self.features_per_split}")
        if not 0 <= self.seed < 2**62:
            raise ValueError(f"seed must be in [0, 2^62), got {self.seed}")

    def resolve_mtry(self, n_features: int) -> int:
        if self.features_per_split is not None:
            return min(self.features_per_split, n_features)
        return min(math.isqrt(n_features - 1) + 1 if n_features > 1 else 1, n_features)


@dataclass(frozen=True)
class ForestModel:
    """A trained forest in structure-of-arrays form.

    Node rows for tree t live at [tree_offsets[t], tree_offsets[t+1]);
    node_feature < 0 marks a leaf, otherwise go left iff
    x[node_feature] <= node_thresh. node_counts holds per-class training
    counts at every node; leaves of it drive predictions.
    """

    classes: tuple[str, ...]
    hyperparams: Hyperparams
    n_features: int
    tree_offsets: np.ndarray
    node_feature: np.ndarray
    node_thresh: np.ndarray
    node_left: np.ndarray
    node_right: np.ndarray
    node_counts: np.ndarray
    importances: np.ndarray
    train_record_ids: tuple[str, ...]
    train_labels: tuple[str, ...]
    train_leaf_ids: np.ndarray  # (n_train, n_trees)
    fingerprint: str

    @property
    def n_trees(self) -> int:
        return len(self.tree_offsets) - 1

    def tree_arrays(self, t: int):
        lo, hi = self.tree_offsets[t], self.tree_offsets[t + 1]
        return (
            self.node_feature[lo:hi],
            self.node_thresh[lo:hi],
            self.node_left[lo:hi],
            self.node_right[lo:hi],
            self.node_counts[lo:hi],
        )


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are predicted classes, columns are true classes."""

    classes: tuple[str, ...]
    counts: np.ndarray  # (C, C) int64

    def __post_init__(self) -> None:
        c = len(self.classes)
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (c, c):
            raise ValueError(f"confusion counts must be {c}x{c}, got {counts.shape}")
        if (counts < 0).any():
            raise ValueError("confusion counts must be nonnegative")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def render(self) -> str:
        """Plain-text table in the predicted-rows, true-columns orientation."""
        width = max(9, *(len(c) for c in self.classes)) + 2
        head = " " * (width + 10) + "".join(f"{c:>{width}}" for c in self.classes)
        lines = [head]
        for i, c in enumerate(self.classes):
            row = "".join(f"{int(v):>{width}}" for v in self.counts[i])
            lines.append(f"predicted {c:<{width}}{row}")
        return "\n".join(lines)


@dataclass(frozen=True)
class LoocvResult:
    accuracy: Fraction
    confusion: ConfusionMatrix
    proba: np.ndarray            # (n, C) leave-one-out probabilities
    predicted: tuple[str, ...]   # per input record, dataset order
    record_ids: tuple[str, ...]


def accuracy_from_confusion(cm: ConfusionMatrix) -> Fraction:
    """Diagonal mass over total, as an exact rational."""
    total = cm.total
    if total == 0:
        raise ValueError("confusion matrix is empty, accuracy is undefined")
    return Fraction(int(np.trace(cm.counts)), total)


def assemble_dataset(
    features: Sequence[FeatureVector], require_labels: bool = True
) -> tuple[np.ndarray, np.ndarray, tuple[str, ...], tuple[str, ...]]:
    """Stack feature vectors into (X, y, classes, record_ids).

    All vectors must agree on dimensionality; a mismatch is reported with
    the record ids that deviate from the most common length. Classes are
    the sorted distinct labels and y holds indices into them.
    """
    feats = list(features)
    if not feats:
        raise DatasetError("dataset is empty")
    ids = [f.record_id for f in feats]
    dup = [rid for rid, k in Counter(ids).items() if k > 1]
    if dup:
        raise DatasetError(f"duplicate record ids in dataset: {sorted(dup)}", dup)
    lengths = Counter(f.values.size for f in feats)
    modal_len, _ = max(lengths.items(), key=lambda kv: (kv[1], -kv[0]))
    offenders = [f.record_id for f in feats if f.values.size != modal_len]
    if offenders:
        raise DatasetError(
            f"feature length mismatch: expected {modal_len} values, "
            f"offending records: {offenders}",
            offenders,
        )
    if require_labels:
        unlabeled = [f.record_id for f in feats if f.label is None]
        if unlabeled:
            raise DatasetError(f"records without labels: {unlabeled}", unlabeled)
    classes = tuple(sorted({f.label for f in feats if f.label is not None}))
    class_index = {c: i for i, c in enumerate(classes)}
    X = np.ascontiguousarray(np.stack([f.values for f in feats]), dtype=np.float64)
    y = np.array([class_index.get(f.label, -1) for f in feats], dtype=np.int32)
    return X, y, classes, tuple(ids)


def _check_trainable(y: np.ndarray, classes: tuple[str, ...]) -> None:
    if len(classes) < 2:
        raise DatasetError(
            f"training needs at least two classes, dataset has {list(classes)}"
        )
    if (y < 0).any():
        raise DatasetError("training dataset contains unlabeled records")


def _dataset_fingerprint(
    X: np.ndarray,
    classes: tuple[str, ...],
    labels: Sequence[str],
    ids: Sequence[str],
    h: Hyperparams,
) -> str:
    meta = {
        "classes": list(classes),
        "labels": list(labels),
        "record_ids": list(ids),
        "hyperparams": {
            "n_trees": h.n_trees,
            "max_depth": h.max_depth,
            "min_samples_leaf": h.min_samples_leaf,
            "features_per_split": h.features_per_split,
            "bootstrap": h.bootstrap,
            "seed": h.seed,
        },
        "n_features": int(X.shape[1]),
    }
    digest = hashlib.sha256()
    digest.update(json.dumps(meta, sort_keys=True, separators=(",", ":")).encode())
    digest.update(b"|")
    digest.update(X.tobytes())
    return digest.hexdigest()


def train(features: Sequence[FeatureVector], h: Hyperparams | None = None) -> ForestModel:
    """Fit a forest. Deterministic in (features order, hyperparams)."""
    h = h or Hyperparams()
    X, y, classes, ids = assemble_dataset(features)
    _check_trainable(y, classes)
    n, p = X.shape
    n_classes = len(classes)
    mtry = h.resolve_mtry(p)
    max_depth = 0 if h.max_depth is None else h.max_depth
    use_bootstrap = 1 if h.bootstrap else 0
    max_nodes = 2 * n + 1

    feat_parts, thr_parts, left_parts, right_parts, count_parts = [], [], [], [], []
    offsets = [0]
    imp_acc = np.zeros(p, np.float64)
    tree_imp = np.empty(p, np.float64)
    nf = np.empty(max_nodes, np.int32)
    nt = np.empty(max_nodes, np.float64)
    nl = np.empty(max_nodes, np.int32)
    nr = np.empty(max_nodes, np.int32)
    nc = np.empty((max_nodes, n_classes), np.int64)
    for t in range(h.n_trees):
        state = stream_state(h.seed, t)
        tree_imp[:] = 0.0
        n_nodes, _ = backend.grow_tree(
            X, y, n_classes, h.min_samples_leaf, max_depth, mtry, use_bootstrap,
            state, nf, nt, nl, nr, nc, tree_imp,
        )
        feat_parts.append(nf[:n_nodes].copy())
        thr_parts.append(nt[:n_nodes].copy())
        left_parts.append(nl[:n_nodes].copy())
        right_parts.append(nr[:n_nodes].copy())
        count_parts.append(nc[:n_nodes].copy())
        offsets.append(offsets[-1] + n_nodes)
        total = tree_imp.sum()
        if total > 0:
            imp_acc += tree_imp / total

    importances = imp_acc / h.n_trees
    s = importances.sum()
    if s > 0:
        importances = importances / s

    node_feature = np.concatenate(feat_parts)
    node_thresh = np.concatenate(thr_parts)
    node_left = np.concatenate(left_parts)
    node_right = np.concatenate(right_parts)
    node_counts = np.concatenate(count_parts)
    tree_offsets = np.array(offsets, dtype=np.int64)

    labels = tuple(classes[i] for i in y)
    model = ForestModel(
        classes=classes,
        hyperparams=h,
        n_features=p,
        tree_offsets=tree_offsets,
        node_feature=node_feature,
        node_thresh=node_thresh,
        node_left=node_left,
        node_right=node_right,
        node_counts=node_counts,
        importances=importances,
        train_record_ids=ids,
        train_labels=labels,
        train_leaf_ids=_leaf_matrix(
            tree_offsets, node_feature, node_thresh, node_left, node_right, X
        ),
        fingerprint=_dataset_fingerprint(X, classes, labels, ids, h),
    )
    return model


def _leaf_matrix(offsets, feature, thresh, left, right, X) -> np.ndarray:
    n = X.shape[0]
    n_trees = len(offsets) - 1
    leaves = np.empty((n, n_trees), np.int32)
    out = np.empty(n, np.int64)
    for t in range(n_trees):
        lo, hi = offsets[t], offsets[t + 1]
        backend.apply_tree_batch(
            feature[lo:hi], thresh[lo:hi], left[lo:hi], right[lo:hi], X, out
        )
        leaves[:, t] = out
    return leaves


def _as_matrix(model: ForestModel, x: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != model.n_features:
        raise DatasetError(
            f"expected {model.n_features}-dimensional features, got shape {arr.shape}"
        )
    return arr


def _leaves_for(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """(m, n_trees) leaf ids for already-validated feature rows."""
    m = X.shape[0]
    leaves = np.empty((m, model.n_trees), np.int64)
    out = np.empty(m, np.int64)
    for t in range(model.n_trees):
        f, th, l, r, _ = model.tree_arrays(t)
        backend.apply_tree_batch(f, th, l, r, X, out)
        leaves[:, t] = out
    return leaves


def predict_proba(model: ForestModel, x: np.ndarray) -> np.ndarray:
    """Class probabilities: mean over trees of the leaf class distribution.

    Accepts one feature vector or a matrix of them; returns (C,) or (m, C).
    """
    X = _as_matrix(model, x)
    single = np.ndim(x) == 1
    proba = np.zeros((X.shape[0], len(model.classes)), np.float64)
    out = np.empty(X.shape[0], np.int64)
    for t in range(model.n_trees):
        f, th, l, r, counts = model.tree_arrays(t)
        backend.apply_tree_batch(f, th, l, r, X, out)
        leaf_counts = counts[out]
        proba += leaf_counts / leaf_counts.sum(axis=1, keepdims=True)
    proba /= model.n_trees
    return proba[0] if single else proba


def predict(model: ForestModel, x: np.ndarray) -> str | list[str]:
    """Most likely class; probability ties go to the earliest class name."""
    proba = predict_proba(model, x)
    if proba.ndim == 1:
        return model.classes[int(np.argmax(proba))]
    return [model.classes[int(i)] for i in np.argmax(proba, axis=1)]


def proximity(model: ForestModel, xa: np.ndarray, xb: np.ndarray) -> float:
    """Fraction of trees routing xa and xb to the same leaf."""
    pair = np.stack([np.asarray(xa, np.float64), np.asarray(xb, np.float64)])
    leaves = _leaves_for(model, _as_matrix(model, pair))
    return float((leaves[0] == leaves[1]).sum() / model.n_trees)


def similarity_to_training(model: ForestModel, x: np.ndarray) -> np.ndarray:
    """Proximity of x to every training record, in training order."""
    X = _as_matrix(model, x)
    leaves = _leaves_for(model, X)  # (1, T)
    return (model.train_leaf_ids == leaves[0][None, :]).mean(axis=1)


def feature_importance(model: ForestModel) -> np.ndarray:
    """Mean decrease in impurity per feature; sums to 1 when any split exists."""
    return model.importances.copy()


def _degenerate_fold(y: np.ndarray, n_classes: int) -> int | None:
    counts = np.bincount(y, minlength=n_classes)
    present = int((counts > 0).sum())
    if present >= 3:
        return None
    for i, yi in enumerate(y):
        if counts[yi] == 1 and present - 1 < 2:
            return i
    return None


def loocv(features: Sequence[FeatureVector], h: Hyperparams | None = None) -> LoocvResult:
    """Leave-one-out cross-validation with per-fold retraining.

    Fold i trains on everything except record i using seed h.seed + i and
    scores record i. Returns the exact accuracy, the confusion matrix
    (rows predicted, columns true), and the per-record probabilities.
    """
    h = h or Hyperparams()
    X, y, classes, ids = assemble_dataset(features)
    _check_trainable(y, classes)
    n, p = X.shape
    if n < 2:
        raise DatasetError("leave-one-out needs at least two records")
    bad = _degenerate_fold(y, len(classes))
    if bad is not None:
        raise DatasetError(
            f"fold {bad} (record {ids[bad]!r}) would leave a single-class training set",
            [ids[bad]],
        )
    proba = backend.loocv_predict(
        X,
        y,
        len(classes),
        h.n_trees,
        h.resolve_mtry(p),
        h.min_samples_leaf,
        0 if h.max_depth is None else h.max_depth,
        1 if h.bootstrap else 0,
        h.seed,
    )
    pred = np.argmax(proba, axis=1)
    cmat = np.zeros((len(classes), len(classes)), np.int64)
    for pi, ti in zip(pred, y):
        cmat[pi, ti] += 1
    correct = int((pred == y).sum())
    return LoocvResult(
        accuracy=Fraction(correct, n),
        confusion=ConfusionMatrix(classes=classes, counts=cmat),
        proba=proba,
        predicted=tuple(classes[int(i)] for i in pred),
        record_ids=ids,
    )


# --- serialization ---------------------------------------------------------


def _tree_to_nested(model: ForestModel, t: int) -> dict[str, Any]:
    feature, thresh, left, right, counts = model.tree_arrays(t)
    # children always carry higher ids than their parent, so walking the
    # rows backwards has both subtrees ready when the split is assembled
    built: dict[int, dict[str, Any]] = {}
    for node in range(len(feature) - 1, -1, -1):
        if feature[node] < 0:
            built[node] = {"counts": [int(v) for v in counts[node]]}
        else:
            built[node] = {
                "feature": int(feature[node]),
                "threshold": float(thresh[node]),
                "counts": [int(v) for v in counts[node]],
                "left": built[int(left[node])],
                "right": built[int(right[node])],
            }
    return built[0]


def model_to_document(model: ForestModel) -> dict[str, Any]:
    """Self-describing JSON form: round-trips through model_from_document."""
    h = model.hyperparams
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "classes": list(model.classes),
        "hyperparams": {
            "n_trees": h.n_trees,
            "max_depth": h.max_depth,
            "min_samples_leaf": h.min_samples_leaf,
            "features_per_split": h.features_per_split,
            "bootstrap": h.bootstrap,
            "seed": h.seed,
        },
        "n_features": model.n_features,
        "importances": [float(v) for v in model.importances],
        "train_record_ids": list(model.train_record_ids),
        "train_labels": list(model.train_labels),
        "train_leaf_ids": [[int(v) for v in row] for row in model.train_leaf_ids],
        "fingerprint": model.fingerprint,
        "trees": [_tree_to_nested(model, t) for t in range(model.n_trees)],
    }


def model_from_document(doc: dict[str, Any]) -> ForestModel:
    """Rebuild a model from its document form.

    Node numbering is reconstructed with the same traversal the trainer
    uses, so arrays (and therefore leaf ids) come out identical.
    """
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a forest model document: format={doc.get('format')!r}")
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model document version {doc.get('version')!r}")
    hp = doc["hyperparams"]
    h = Hyperparams(
        n_trees=int(hp["n_trees"]),
        max_depth=None if hp["max_depth"] is None else int(hp["max_depth"]),
        min_samples_leaf=int(hp["min_samples_leaf"]),
        features_per_split=None
        if hp["features_per_split"] is None
        else int(hp["features_per_split"]),
        bootstrap=bool(hp["bootstrap"]),
        seed=int(hp["seed"]),
    )
    classes = tuple(str(c) for c in doc["classes"])
    n_classes = len(classes)

    feat_parts, thr_parts, left_parts, right_parts, count_parts = [], [], [], [], []
    offsets = [0]
    for tree_doc in doc["trees"]:
        rows: list[tuple[int, float, int, int, list[int]]] = []
        stack = [(tree_doc, 0)]
        n_nodes = 1
        while stack:
            node_doc, node_id = stack.pop()
            while len(rows) <= node_id:
                rows.append((-1, 0.0, -1, -1, [0] * n_classes))
            if "feature" in node_doc:
                li, ri = n_nodes, n_nodes + 1
                n_nodes += 2
                rows[node_id] = (
                    int(node_doc["feature"]),
                    float(node_doc["threshold"]),
                    li,
                    ri,
                    [int(v) for v in node_doc["counts"]],
                )
                stack.append((node_doc["right"], ri))
                stack.append((node_doc["left"], li))
            else:
                rows[node_id] = (-1, 0.0, -1, -1, [int(v) for v in node_doc["counts"]])
        feat_parts.append(np.array([r[0] for r in rows], np.int32))
        thr_parts.append(np.array([r[1] for r in rows], np.float64))
        left_parts.append(np.array([r[2] for r in rows], np.int32))
        right_parts.append(np.array([r[3] for r in rows], np.int32))
        count_parts.append(np.array([r[4] for r in rows], np.int64).reshape(len(rows), n_classes))
        offsets.append(offsets[-1] + len(rows))

    return ForestModel(
        classes=classes,
        hyperparams=h,
        n_features=int(doc["n_features"]),
        tree_offsets=np.array(offsets, np.int64),
        node_feature=np.concatenate(feat_parts),
        node_thresh=np.concatenate(thr_parts),
        node_left=np.concatenate(left_parts),
        node_right=np.concatenate(right_parts),
        node_counts=np.concatenate(count_parts),
        importances=np.array([float(v) for v in doc["importances"]], np.float64),
        train_record_ids=tuple(str(r) for r in doc["train_record_ids"]),
        train_labels=tuple(str(r) for r in doc["train_labels"]),
        train_leaf_ids=np.array(doc["train_leaf_ids"], np.int32).reshape(
            len(doc["train_record_ids"]), h.n_trees
        ),
        fingerprint=str(doc["fingerprint"]),
    )
