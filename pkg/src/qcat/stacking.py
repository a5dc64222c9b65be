"""Stacked generalization over base-system probability outputs.

Base systems exchange per-question class probabilities through ProbMatrix
files, so external systems can join the stack. Meta-features for training a
stacker are built out-of-fold to keep the stack leakage-safe. Two stackers:
a linear-SVM meta-classifier, and a bagged committee of voting ensembles.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .baselines import (
    Forest,
    LinearModel,
    logreg_train,
    rf_predict_proba,
    rf_train,
    svm_train,
)
from .corpus import Dataset, LABEL_NAMES, N_CLASSES, Question
from .errors import DataError
from .neural import RngStream
from .residual import stratified_folds

log = logging.getLogger("qcat.stacking")

SUM_ERROR_HARD = 1e-4  # row sum off by more than this -> error
SUM_ERROR_SOFT = 1e-6  # off by (soft, hard] -> renormalize with a warning


@dataclass
class ProbMatrix:
    system_name: str
    ids: list[str]
    rows: np.ndarray  # (n, 3), each row a class distribution

    def row_for(self, qid: str) -> np.ndarray:
        return self.rows[self.ids.index(qid)]


def make_prob_matrix(system_name: str, ids: list[str], rows: np.ndarray) -> ProbMatrix:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape != (len(ids), N_CLASSES):
        raise DataError(f"probability matrix shape {rows.shape} for {len(ids)} ids")
    if len(set(ids)) != len(ids):
        raise DataError("duplicate ids in probability matrix")
    return ProbMatrix(system_name, list(ids), rows)


def load_prob_matrix(path: str | Path) -> ProbMatrix:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        sys_line = fh.readline().strip()
        cls_line = fh.readline().strip()
        if not sys_line.startswith("#system="):
            raise DataError(f"{path}: missing #system= header")
        system_name = sys_line[len("#system="):]
        if cls_line != "#classes=" + ",".join(LABEL_NAMES):
            raise DataError(f"{path}: bad class header {cls_line!r}")
        ids: list[str] = []
        seen: set[str] = set()
        rows: list[np.ndarray] = []
        for lineno, line in enumerate(fh, start=3):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise DataError(f"{path}:{lineno}: expected id<TAB>p0 p1 p2")
            qid, rest = line.split("\t", 1)
            if qid in seen:
                raise DataError(f"{path}:{lineno}: duplicate id {qid!r}")
            seen.add(qid)
            try:
                row = np.array([float(v) for v in rest.split()], dtype=np.float64)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric probability") from None
            if row.shape[0] != N_CLASSES:
                raise DataError(f"{path}:{lineno}: {row.shape[0]} values, expected {N_CLASSES}")
            if np.any(row < 0):
                raise DataError(f"{path}:{lineno}: negative probability")
            err = abs(row.sum() - 1.0)
            if err > SUM_ERROR_HARD:
                raise DataError(f"{path}:{lineno}: row sums to {row.sum():.6f}")
            if err > SUM_ERROR_SOFT:
                log.warning("%s:%d: row sum off by %.2e, renormalizing", path, lineno, err)
                row = row / row.sum()
            ids.append(qid)
            rows.append(row)
    return ProbMatrix(system_name, ids, np.stack(rows) if rows else np.zeros((0, N_CLASSES)))


def save_prob_matrix(m: ProbMatrix, path: str | Path) -> None:
    """Values are written with enough digits to round-trip at single precision."""
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"#system={m.system_name}\n")
        fh.write("#classes=" + ",".join(LABEL_NAMES) + "\n")
        for qid, row in zip(m.ids, m.rows):
            vals = " ".join("%.9g" % float(np.float32(v)) for v in row)
            fh.write(f"{qid}\t{vals}\n")


@dataclass
class MetaFeatures:
    """Per-system probability rows concatenated in a fixed system order."""

    ids: list[str]
    matrix: np.ndarray  # (n, 3 * n_systems)
    system_names: list[str]


def build_meta_features(bases: list[ProbMatrix],
                        ids: list[str] | None = None) -> MetaFeatures:
    if not bases:
        raise DataError("no base systems given")
    if ids is None:
        ids = list(bases[0].ids)
    columns = []
    for base in bases:
        index = {qid: i for i, qid in enumerate(base.ids)}
        missing = [qid for qid in ids if qid not in index]
        if missing:
            raise DataError(
                f"base system {base.system_name!r} is missing ids: {', '.join(missing[:10])}"
            )
        columns.append(base.rows[[index[qid] for qid in ids]])
    return MetaFeatures(list(ids), np.hstack(columns), [b.system_name for b in bases])


def oof_probs(fit_predict: Callable[[list[Question], list[Question]], np.ndarray],
              ds: Dataset, k: int = 5, seed: int = 0,
              system_name: str = "oof") -> ProbMatrix:
    """Out-of-fold probabilities: each question's row comes from a model
    trained on the other folds of a stratified k-fold split."""
    y = np.array([int(l) for l in ds.labels()])
    folds = stratified_folds(y, k, RngStream(seed))
    questions = list(ds)
    rows = np.zeros((len(ds), N_CLASSES))
    for fold in range(k):
        train_qs = [q for q, f in zip(questions, folds) if f != fold]
        eval_qs = [q for q, f in zip(questions, folds) if f == fold]
        probs = np.asarray(fit_predict(train_qs, eval_qs), dtype=np.float64)
        if probs.shape != (len(eval_qs), N_CLASSES):
            raise DataError(f"fold {fold}: fit_predict returned shape {probs.shape}")
        rows[np.flatnonzero(folds == fold)] = probs
    return make_prob_matrix(system_name, ds.ids(), rows)


def _labels_vector(ids: list[str], labels: dict[str, int]) -> np.ndarray:
    missing = [qid for qid in ids if qid not in labels]
    if missing:
        raise DataError(f"labels missing for ids: {', '.join(missing[:10])}")
    return np.array([int(labels[qid]) for qid in ids], dtype=np.int64)


@dataclass
class StackerC1:
    """Linear-SVM meta-classifier over concatenated base probabilities."""

    system_names: list[str]
    model: LinearModel

    def predict(self, bases: list[ProbMatrix]) -> tuple[list[str], np.ndarray]:
        meta = self._meta(bases)
        return meta.ids, self.model.predict(meta.matrix)

    def predict_proba(self, bases: list[ProbMatrix]) -> tuple[list[str], np.ndarray]:
        meta = self._meta(bases)
        return meta.ids, self.model.predict_proba(meta.matrix)

    def _meta(self, bases: list[ProbMatrix]) -> MetaFeatures:
        if len(bases) != len(self.system_names):
            raise DataError(
                f"stacker trained on {len(self.system_names)} systems, got {len(bases)}"
            )
        return build_meta_features(bases)


def stack_train_c1(bases: list[ProbMatrix], labels: dict[str, int],
                   seed: int = 0) -> StackerC1:
    meta = build_meta_features(bases)
    y = _labels_vector(meta.ids, labels)
    model = svm_train(meta.matrix, y, lambda_reg=0.01, epochs=200, seed=seed)
    return StackerC1(meta.system_names, model)


@dataclass
class _VotingEstimator:
    logreg: LinearModel
    forest: Forest
    svm: LinearModel

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Hard-majority vote; a three-way tie falls back to the logistic
        regression's probability argmax (which is its own vote)."""
        votes = np.stack([
            np.argmax(self.logreg.predict_proba(x), axis=-1),
            np.argmax(rf_predict_proba(self.forest, x), axis=-1),
            self.svm.predict(x),
        ])
        out = np.empty(x.shape[0], dtype=np.int64)
        for n in range(x.shape[0]):
            counts = np.bincount(votes[:, n], minlength=N_CLASSES)
            out[n] = votes[0, n] if counts.max() == 1 else int(np.argmax(counts))
        return out


@dataclass
class StackerC2:
    """Bagging committee: each estimator is a voting ensemble of logistic
    regression, random forest and linear SVM, trained on a bootstrap of the
    meta-training rows. Final label is the committee majority, ties toward
    the lowest class index."""

    system_names: list[str]
    estimators: list[_VotingEstimator]

    def predict(self, bases: list[ProbMatrix]) -> tuple[list[str], np.ndarray]:
        ids, shares = self.predict_proba(bases)
        return ids, np.argmax(shares, axis=-1)

    def predict_proba(self, bases: list[ProbMatrix]) -> tuple[list[str], np.ndarray]:
        """Committee vote shares per class (not calibrated probabilities)."""
        if len(bases) != len(self.system_names):
            raise DataError(
                f"stacker trained on {len(self.system_names)} systems, got {len(bases)}"
            )
        meta = build_meta_features(bases)
        shares = np.zeros((len(meta.ids), N_CLASSES))
        for est in self.estimators:
            votes = est.predict(meta.matrix)
            shares[np.arange(len(votes)), votes] += 1.0
        return meta.ids, shares / len(self.estimators)


def stack_train_c2(bases: list[ProbMatrix], labels: dict[str, int],
                   n_bags: int = 10, seed: int = 0,
                   bootstrap: bool = True) -> StackerC2:
    meta = build_meta_features(bases)
    y = _labels_vector(meta.ids, labels)
    n = len(y)
    estimators = []
    for bag in range(n_bags):
        rng = RngStream(seed, bag)
        if bootstrap:
            idx = rng.integers(0, n, n)
            # A degenerate single-class bootstrap cannot train the voters.
            for _ in range(100):
                if len(np.unique(y[idx])) > 1:
                    break
                idx = rng.integers(0, n, n)
        else:
            idx = np.arange(n)
        bx, by = meta.matrix[idx], y[idx]
        estimators.append(_VotingEstimator(
            logreg=logreg_train(bx, by, l2=1e-3, epochs=300),
            forest=rf_train(bx, by, n_trees=100, seed=(seed * 1000 + bag)),
            svm=svm_train(bx, by, lambda_reg=0.01, epochs=100, seed=(seed * 1000 + bag)),
        ))
    return StackerC2(meta.system_names, estimators)
