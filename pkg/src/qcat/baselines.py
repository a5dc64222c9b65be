"""Classical learners: character n-gram TF-IDF vectorization, a Pegasos-style
linear SVM, multinomial logistic regression and a Gini random forest.

These are the bag-of-words base system and the voting-ensemble constituents.
Sparse rows are dict-backed SparseVectors; the linear learners work on both
sparse and dense inputs, the forest densifies sparse input.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import N_CLASSES
from .container import load_container, save_container
from .errors import ConfigError, DataError
from .neural import RngStream, softmax


@dataclass
class SparseVector:
    dimension: int
    weights: dict[int, float] = field(default_factory=dict)


def char_ngrams(text: str, n_min: int, n_max: int) -> Counter:
    """Multiset of all contiguous substrings of lengths n_min..n_max,
    whitespace included."""
    if n_min < 1 or n_min > n_max:
        raise ConfigError(f"bad n-gram range {n_min}..{n_max}")
    grams: Counter = Counter()
    for n in range(n_min, n_max + 1):
        for i in range(len(text) - n + 1):
            grams[text[i:i + n]] += 1
    return grams


@dataclass
class TfidfModel:
    vocabulary: dict[str, int]
    idf: np.ndarray
    n_min: int
    n_max: int


def tfidf_fit(corpus: list[str], n_min: int = 2, n_max: int = 5) -> TfidfModel:
    """Smoothed idf: ln((1+N)/(1+df)) + 1, vocabulary in sorted n-gram order."""
    if not corpus:
        raise DataError("cannot fit TF-IDF on an empty corpus")
    df: Counter = Counter()
    for text in corpus:
        df.update(char_ngrams(text, n_min, n_max).keys())
    vocabulary = {gram: i for i, gram in enumerate(sorted(df))}
    n_docs = len(corpus)
    idf = np.empty(len(vocabulary))
    for gram, i in vocabulary.items():
        idf[i] = np.log((1.0 + n_docs) / (1.0 + df[gram])) + 1.0
    return TfidfModel(vocabulary, idf, n_min, n_max)


def tfidf_transform(model: TfidfModel, text: str) -> SparseVector:
    """tf * idf, L2-normalized; n-grams outside the vocabulary are ignored."""
    weights: dict[int, float] = {}
    for gram, tf in char_ngrams(text, model.n_min, model.n_max).items():
        idx = model.vocabulary.get(gram)
        if idx is not None:
            weights[idx] = tf * model.idf[idx]
    norm = np.sqrt(sum(v * v for v in weights.values()))
    if norm > 0:
        weights = {i: v / norm for i, v in weights.items()}
    return SparseVector(len(model.vocabulary), weights)


def tfidf_transform_corpus(model: TfidfModel, corpus: list[str]) -> list[SparseVector]:
    return [tfidf_transform(model, text) for text in corpus]


# --- internal row access -------------------------------------------------------

def _dimension(x) -> int:
    if isinstance(x, np.ndarray):
        return x.shape[1]
    dims = {sv.dimension for sv in x}
    if len(dims) != 1:
        raise DataError(f"sparse rows disagree on dimension: {sorted(dims)}")
    return dims.pop()


def _to_csr(x):
    """(row_ids, indices, values, n_rows) for a list of SparseVectors."""
    row_ids, indices, values = [], [], []
    for n, sv in enumerate(x):
        for i, v in sv.weights.items():
            row_ids.append(n)
            indices.append(i)
            values.append(v)
    return (np.array(row_ids, dtype=np.int64),
            np.array(indices, dtype=np.int64),
            np.array(values, dtype=np.float64),
            len(x))


def _densify(x, dim: int) -> np.ndarray:
    if isinstance(x, np.ndarray):
        return np.asarray(x, dtype=np.float64)
    out = np.zeros((len(x), dim))
    for n, sv in enumerate(x):
        for i, v in sv.weights.items():
            out[n, i] = v
    return out


def _check_labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise DataError("training set contains a single class")
    return y


# --- linear models ---------------------------------------------------------------

@dataclass
class LinearModel:
    """One-vs-rest linear scorer: per-class weight vectors and intercepts."""

    weights: np.ndarray  # (n_classes, dim)
    intercepts: np.ndarray  # (n_classes,)
    kind: str  # "svm-hinge" or "logistic"

    def decision_values(self, x) -> np.ndarray:
        if isinstance(x, SparseVector):
            scores = self.intercepts.copy()
            for i, v in x.weights.items():
                scores += v * self.weights[:, i]
            return scores
        if isinstance(x, np.ndarray) and x.ndim == 1:
            return self.weights @ x + self.intercepts
        row_ids, indices, values, n = (None, None, None, None)
        if not isinstance(x, np.ndarray):
            row_ids, indices, values, n = _to_csr(x)
            scores = np.zeros((n, self.weights.shape[0]))
            for c in range(self.weights.shape[0]):
                t = values * self.weights[c][indices]
                scores[:, c] = np.bincount(row_ids, weights=t, minlength=n)
            return scores + self.intercepts
        return x @ self.weights.T + self.intercepts

    def predict(self, x) -> np.ndarray:
        scores = self.decision_values(x)
        return np.argmax(scores, axis=-1)

    def predict_proba(self, x) -> np.ndarray:
        # For the SVM this is a softmax over raw decision values, an
        # uncalibrated ranking score rather than a probability estimate.
        return softmax(self.decision_values(x))


def svm_train(x, y, lambda_reg: float = 0.01, epochs: int = 100,
              seed: int = 0) -> LinearModel:
    """One-vs-rest hinge loss by Pegasos-style stochastic subgradient descent
    with step 1/(lambda_reg * t). Sample order per epoch is a seeded
    permutation, so training is deterministic."""
    y = _check_labels(y)
    dim = _dimension(x)
    n = len(x)
    dense = isinstance(x, np.ndarray)
    weights = np.zeros((N_CLASSES, dim))
    intercepts = np.zeros(N_CLASSES)

    for c in range(N_CLASSES):
        target = np.where(y == c, 1.0, -1.0)
        w = np.zeros(dim)
        scale = 1.0
        b = 0.0
        rng = RngStream(seed, c)
        t = 0
        for _epoch in range(epochs):
            for idx in rng.permutation(n):
                t += 1
                eta = 1.0 / (lambda_reg * t)
                decay = 1.0 - eta * lambda_reg  # = 1 - 1/t
                if decay == 0.0:
                    w[:] = 0.0
                    scale = 1.0
                else:
                    scale *= decay
                yi = target[idx]
                if dense:
                    margin = yi * (scale * (w @ x[idx]) + b)
                else:
                    sv = x[idx]
                    dot = sum(w[i] * v for i, v in sv.weights.items())
                    margin = yi * (scale * dot + b)
                if margin < 1.0:
                    coef = eta * yi / scale
                    if dense:
                        w += coef * x[idx]
                    else:
                        for i, v in x[idx].weights.items():
                            w[i] += coef * v
                    b += eta * yi
        weights[c] = scale * w
        intercepts[c] = b
    return LinearModel(weights, intercepts, "svm-hinge")


def logreg_train(x, y, l2: float = 0.0, epochs: int = 500,
                 lr: float = 0.5) -> LinearModel:
    """Multinomial logistic regression by full-batch gradient descent."""
    y = _check_labels(y)
    dim = _dimension(x)
    n = len(x)
    weights = np.zeros((N_CLASSES, dim))
    intercepts = np.zeros(N_CLASSES)
    onehot = np.zeros((n, N_CLASSES))
    onehot[np.arange(n), y] = 1.0

    if isinstance(x, np.ndarray):
        xd = np.asarray(x, dtype=np.float64)
        for _epoch in range(epochs):
            probs = softmax(xd @ weights.T + intercepts)
            resid = probs - onehot
            weights -= lr * (resid.T @ xd / n + 2.0 * l2 * weights)
            intercepts -= lr * resid.mean(axis=0)
    else:
        row_ids, indices, values, _ = _to_csr(x)
        for _epoch in range(epochs):
            scores = np.zeros((n, N_CLASSES))
            for c in range(N_CLASSES):
                t = values * weights[c][indices]
                scores[:, c] = np.bincount(row_ids, weights=t, minlength=n)
            probs = softmax(scores + intercepts)
            resid = probs - onehot
            for c in range(N_CLASSES):
                contrib = values * resid[row_ids, c]
                grad_c = np.bincount(indices, weights=contrib, minlength=dim) / n
                weights[c] -= lr * (grad_c + 2.0 * l2 * weights[c])
            intercepts -= lr * resid.mean(axis=0)
    return LinearModel(weights, intercepts, "logistic")


# --- random forest ---------------------------------------------------------------

@dataclass
class Tree:
    """Flattened decision tree. Node i splits on feature[i] < threshold[i]
    (left if x <= threshold); feature[i] == -1 marks a leaf whose class-count
    row is counts[i]."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray

    def leaf_distribution(self, row: np.ndarray) -> np.ndarray:
        node = 0
        while self.feature[node] >= 0:
            if row[self.feature[node]] <= self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        c = self.counts[node]
        return c / c.sum()


@dataclass
class Forest:
    trees: list[Tree]
    n_classes: int = N_CLASSES


def _gini_split(col: np.ndarray, y: np.ndarray, n_classes: int):
    """Best threshold for one feature column: (weighted_gini, threshold),
    or None when the column is constant."""
    order = np.argsort(col, kind="stable")
    vals = col[order]
    labels = y[order]
    n = len(vals)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), labels] = 1.0
    left = np.cumsum(onehot, axis=0)  # counts among first i+1 samples
    total = left[-1]
    # Candidate cuts sit between distinct consecutive values.
    cuts = np.flatnonzero(vals[:-1] < vals[1:])
    if len(cuts) == 0:
        return None
    nl = (cuts + 1).astype(np.float64)
    nr = n - nl
    lc = left[cuts]
    rc = total - lc
    gini_l = 1.0 - ((lc / nl[:, None]) ** 2).sum(axis=1)
    gini_r = 1.0 - ((rc / nr[:, None]) ** 2).sum(axis=1)
    weighted = (nl * gini_l + nr * gini_r) / n
    best = int(np.argmin(weighted))
    threshold = 0.5 * (vals[cuts[best]] + vals[cuts[best] + 1])
    return float(weighted[best]), float(threshold)


def _grow_tree(x: np.ndarray, y: np.ndarray, rng: RngStream,
               max_features: int, n_classes: int) -> Tree:
    feature, threshold, left, right, counts = [], [], [], [], []

    def leaf(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(np.bincount(y[idx], minlength=n_classes).astype(np.float64))
        return len(feature) - 1

    def build(idx):
        node_counts = np.bincount(y[idx], minlength=n_classes)
        if len(idx) < 2 or np.count_nonzero(node_counts) == 1:
            return leaf(idx)
        feats = rng.choice(x.shape[1], size=max_features, replace=False)
        best = None
        for f in feats:
            split = _gini_split(x[idx, f], y[idx], n_classes)
            if split is None:
                continue
            if best is None or split[0] < best[0]:
                best = (split[0], int(f), split[1])
        if best is None:
            return leaf(idx)
        _, f, thr = best
        mask = x[idx, f] <= thr
        node = len(feature)
        feature.append(f)
        threshold.append(thr)
        left.append(-1)
        right.append(-1)
        counts.append(node_counts.astype(np.float64))
        left[node] = build(idx[mask])
        right[node] = build(idx[~mask])
        return node

    build(np.arange(len(y)))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                np.stack(counts))


def rf_train(x, y, n_trees: int = 100, seed: int = 0,
             bootstrap: bool = True, n_classes: int = N_CLASSES) -> Forest:
    """Bootstrap-aggregated Gini trees; sqrt(d) features tried per node,
    grown until pure or fewer than 2 samples."""
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise DataError("empty training set")
    xd = _densify(x, _dimension(x) if not isinstance(x, np.ndarray) else x.shape[1])
    max_features = max(1, int(np.sqrt(xd.shape[1])))
    trees = []
    for ti in range(n_trees):
        rng = RngStream(seed, ti)
        if bootstrap:
            idx = rng.integers(0, len(y), len(y))
        else:
            idx = np.arange(len(y))
        trees.append(_grow_tree(xd[idx], y[idx], rng, max_features, n_classes))
    return Forest(trees, n_classes)


def rf_predict_proba(forest: Forest, x) -> np.ndarray:
    """Mean of the per-tree leaf class distributions."""
    xd = _densify(x, _dimension(x) if not isinstance(x, np.ndarray) else x.shape[-1])
    single = xd.ndim == 1
    if single:
        xd = xd[None, :]
    out = np.zeros((xd.shape[0], forest.n_classes))
    for tree in forest.trees:
        for n in range(xd.shape[0]):
            out[n] += tree.leaf_distribution(xd[n])
    out /= len(forest.trees)
    return out[0] if single else out


def rf_predict(forest: Forest, x) -> np.ndarray:
    return np.argmax(rf_predict_proba(forest, x), axis=-1)


# --- model persistence -------------------------------------------------------------

def save_linear_model(m: LinearModel, path: str | Path) -> None:
    save_container(path, "linear-model", {"kind": m.kind},
                   {"weights": m.weights, "intercepts": m.intercepts})


def load_linear_model(path: str | Path) -> LinearModel:
    _, meta, arrays = load_container(path, expected_kind="linear-model")
    return LinearModel(arrays["weights"], arrays["intercepts"], meta["kind"])


def save_forest(forest: Forest, path: str | Path) -> None:
    arrays = {}
    for i, t in enumerate(forest.trees):
        arrays[f"tree{i}.feature"] = t.feature
        arrays[f"tree{i}.threshold"] = t.threshold
        arrays[f"tree{i}.left"] = t.left
        arrays[f"tree{i}.right"] = t.right
        arrays[f"tree{i}.counts"] = t.counts
    save_container(path, "forest",
                   {"n_trees": len(forest.trees), "n_classes": forest.n_classes},
                   arrays)


def load_forest(path: str | Path) -> Forest:
    _, meta, arrays = load_container(path, expected_kind="forest")
    trees = []
    for i in range(int(meta["n_trees"])):
        trees.append(Tree(arrays[f"tree{i}.feature"], arrays[f"tree{i}.threshold"],
                          arrays[f"tree{i}.left"], arrays[f"tree{i}.right"],
                          arrays[f"tree{i}.counts"]))
    return Forest(trees, int(meta["n_classes"]))
