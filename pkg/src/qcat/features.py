"""Feature assembly: sentence-embedding table, averaged word vectors and
per-category label statistics, concatenated into one 815-dim vector.

Layout is fixed: components [0, 512) sentence embedding, [512, 812) word
average, [812, 815) category statistics.
"""
from __future__ import annotations

import hashlib
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .corpus import Dataset, Question, concat_text, N_CLASSES
from .errors import DataError

SENT_DIM = 512
WORD_DIM = 300
CAT_DIM = N_CLASSES
FEATURE_DIM = SENT_DIM + WORD_DIM + CAT_DIM


@dataclass
class EmbeddingTable:
    dim: int
    rows: dict[str, np.ndarray]


@dataclass
class WordVecTable:
    dim: int
    vectors: dict[str, np.ndarray]


@dataclass
class CategoryStats:
    """Empirical label distribution per forum category, plus the global one."""

    per_category: dict[str, np.ndarray]
    global_dist: np.ndarray


def load_embedding_table(path: str | Path, expected_dim: int) -> EmbeddingTable:
    """Parse an embedding-table file: `#dim=<d>` header, then one
    `id<TAB>v1 v2 ... v_d` row per line. Values are read at single precision."""
    path = Path(path)
    rows: dict[str, np.ndarray] = {}
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("#dim="):
            raise DataError(f"{path}: missing #dim= header")
        try:
            dim = int(header[len("#dim="):])
        except ValueError:
            raise DataError(f"{path}: bad header {header!r}") from None
        if dim != expected_dim:
            raise DataError(f"{path}: dim {dim} != expected {expected_dim}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise DataError(f"{path}:{lineno}: expected id<TAB>values")
            qid, rest = line.split("\t", 1)
            if qid in rows:
                raise DataError(f"{path}:{lineno}: duplicate id {qid!r}")
            try:
                vec = np.array([float(v) for v in rest.split()], dtype=np.float32)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric value in row {qid!r}") from None
            if vec.shape[0] != dim:
                raise DataError(
                    f"{path}:{lineno}: row {qid!r} has {vec.shape[0]} values, expected {dim}"
                )
            if not np.all(np.isfinite(vec)):
                raise DataError(f"{path}:{lineno}: non-finite value in row {qid!r}")
            rows[qid] = vec
    return EmbeddingTable(dim, rows)


def write_embedding_table(path: str | Path, dim: int,
                          items: Iterable[tuple[str, np.ndarray]]) -> None:
    """Write rows in the embedding-table format, single-precision text."""
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"#dim={dim}\n")
        for qid, vec in items:
            vals = " ".join("%.9g" % float(v) for v in np.asarray(vec, dtype=np.float32))
            fh.write(f"{qid}\t{vals}\n")


def load_wordvecs(path: str | Path) -> WordVecTable:
    """Parse the standard text word-vector format: `count dim` header, then
    one `token v1 ... v_dim` row per line."""
    path = Path(path)
    vectors: dict[str, np.ndarray] = {}
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise DataError(f"{path}: expected 'count dim' header")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise DataError(f"{path}: non-numeric header") from None
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split()
            token, rest = parts[0], parts[1:]
            if token in vectors:
                raise DataError(f"{path}:{lineno}: duplicate token {token!r}")
            try:
                vec = np.array([float(v) for v in rest], dtype=np.float32)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric component") from None
            if vec.shape[0] != dim:
                raise DataError(
                    f"{path}:{lineno}: token {token!r} has {vec.shape[0]} values, expected {dim}"
                )
            vectors[token] = vec
    if len(vectors) != count:
        raise DataError(f"{path}: header declares {count} rows, found {len(vectors)}")
    return WordVecTable(dim, vectors)


def tokenize(text: str) -> list[str]:
    """Whitespace split, then peel leading/trailing punctuation characters
    off each chunk into separate tokens. Case is preserved."""
    tokens: list[str] = []
    for chunk in text.split():
        lead: list[str] = []
        trail: list[str] = []
        while chunk and _is_punct(chunk[0]):
            lead.append(chunk[0])
            chunk = chunk[1:]
        while chunk and _is_punct(chunk[-1]):
            trail.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(lead)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(trail))
    return tokens


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def avg_wordvecs(tokens: list[str], table: WordVecTable) -> np.ndarray:
    """Mean of the vectors of in-vocabulary tokens (exact match first, then
    lowercase). Tokens missing under both lookups are skipped; all-OOV input
    yields the zero vector."""
    hits = []
    for tok in tokens:
        vec = table.vectors.get(tok)
        if vec is None:
            vec = table.vectors.get(tok.lower())
        if vec is not None:
            hits.append(vec)
    if not hits:
        return np.zeros(table.dim, dtype=np.float64)
    return np.mean(np.stack(hits).astype(np.float64), axis=0)


def fit_category_stats(train: Dataset) -> CategoryStats:
    """Label-count ratios per category over the training split only."""
    if len(train) == 0:
        raise DataError("cannot fit category statistics on an empty dataset")
    per_cat_counts: dict[str, np.ndarray] = {}
    total = np.zeros(N_CLASSES, dtype=np.float64)
    for q in train:
        if q.label is None:
            raise DataError(f"question {q.id!r} has no label")
        counts = per_cat_counts.setdefault(q.category, np.zeros(N_CLASSES, dtype=np.float64))
        counts[int(q.label)] += 1
        total[int(q.label)] += 1
    per_category = {c: counts / counts.sum() for c, counts in per_cat_counts.items()}
    return CategoryStats(per_category, total / total.sum())


def category_vector(cs: CategoryStats, category: str) -> np.ndarray:
    """Distribution for a category; unseen categories fall back to global."""
    return cs.per_category.get(category, cs.global_dist)


def assemble(q: Question, emb: EmbeddingTable, wv: WordVecTable,
             cs: CategoryStats) -> np.ndarray:
    """Concatenate the three sources into the fixed 815-dim layout."""
    if emb.dim != SENT_DIM:
        raise DataError(f"embedding table dim {emb.dim} != {SENT_DIM}")
    if wv.dim != WORD_DIM:
        raise DataError(f"word-vector table dim {wv.dim} != {WORD_DIM}")
    sent = emb.rows.get(q.id)
    if sent is None:
        raise DataError(f"no embedding row for question id {q.id!r}")
    word = avg_wordvecs(tokenize(concat_text(q)), wv)
    cat = category_vector(cs, q.category)
    out = np.empty(FEATURE_DIM, dtype=np.float64)
    out[:SENT_DIM] = sent
    out[SENT_DIM:SENT_DIM + WORD_DIM] = word
    out[SENT_DIM + WORD_DIM:] = cat
    return out


def assemble_matrix(ds: Dataset, emb: EmbeddingTable, wv: WordVecTable,
                    cs: CategoryStats) -> np.ndarray:
    """Feature matrix for a whole dataset, rows in dataset order."""
    return np.stack([assemble(q, emb, wv, cs) for q in ds])


def random_embedding_table(ids: Iterable[str], dim: int = SENT_DIM,
                           seed: int = 0) -> EmbeddingTable:
    """Deterministic pseudo-random unit-norm vectors keyed by question id.

    Stand-in for a pretrained encoder in tests and pipelines that only need
    plausibly-shaped inputs. The draw for an id depends on (seed, sha256(id))
    only, so tables agree across runs and platforms.
    """
    rows = {}
    for qid in ids:
        digest = hashlib.sha256(qid.encode("utf-8")).digest()
        key = int.from_bytes(digest[:8], "little")
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, key])))
        vec = gen.standard_normal(dim)
        rows[qid] = (vec / np.linalg.norm(vec)).astype(np.float32)
    return EmbeddingTable(dim, rows)
