"""Question data model and ingestion of the line-delimited question format.

A question file is UTF-8 with one JSON object per line, fields ``id``,
``subject``, ``body``, ``category`` and an optional ``label``. Line order is
significant and preserved by loading.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

from .errors import DataError


class Label(IntEnum):
    """The three question classes. Index mapping is fixed everywhere."""

    FACTUAL = 0
    OPINION = 1
    SOCIALIZING = 2


LABEL_NAMES = tuple(l.name for l in Label)
N_CLASSES = len(Label)


@dataclass
class Question:
    id: str
    subject: str
    body: str
    category: str
    label: Label | None = None


@dataclass
class Dataset:
    """Ordered collection of questions; iteration follows file order."""

    questions: list[Question] = field(default_factory=list)
    name: str = ""

    def __iter__(self):
        return iter(self.questions)

    def __len__(self):
        return len(self.questions)

    def ids(self) -> list[str]:
        return [q.id for q in self.questions]

    def labels(self) -> list[Label]:
        """Gold labels in order; raises if any question is unlabeled."""
        out = []
        for q in self.questions:
            if q.label is None:
                raise DataError(f"question {q.id!r} has no label")
            out.append(q.label)
        return out


def parse_label(name: str) -> Label:
    try:
        return Label[name]
    except KeyError:
        raise DataError(f"unknown label {name!r}") from None


def load_questions(path: str | Path, name: str = "") -> Dataset:
    """Load a question file, preserving record order.

    Raises DataError on duplicate ids, unknown label strings or malformed
    lines, always naming the offending line or id.
    """
    path = Path(path)
    questions: list[Question] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed line: {exc}") from None
            if not isinstance(rec, dict):
                raise DataError(f"{path}:{lineno}: expected one object per line")
            try:
                qid = rec["id"]
                subject = rec.get("subject", "")
                body = rec.get("body", "")
                category = rec.get("category", "")
            except KeyError as exc:
                raise DataError(f"{path}:{lineno}: missing field {exc}") from None
            if not qid:
                raise DataError(f"{path}:{lineno}: empty id")
            if qid in seen:
                raise DataError(f"{path}:{lineno}: duplicate id {qid!r}")
            seen.add(qid)
            if not subject and not body:
                raise DataError(f"{path}:{lineno}: subject and body both empty ({qid!r})")
            label = None
            if "label" in rec and rec["label"] is not None:
                try:
                    label = parse_label(rec["label"])
                except DataError:
                    raise DataError(
                        f"{path}:{lineno}: unknown label {rec['label']!r}"
                    ) from None
            questions.append(Question(qid, subject, body, category, label))
    return Dataset(questions, name or path.stem)


def save_questions(ds: Dataset, path: str | Path) -> None:
    """Write a dataset back out in the line-delimited question format."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for q in ds:
            rec = {"id": q.id, "subject": q.subject, "body": q.body, "category": q.category}
            if q.label is not None:
                rec["label"] = q.label.name
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def concat_text(q: Question) -> str:
    """Subject and body joined with a single space; empty sides drop out."""
    if not q.subject:
        return q.body
    if not q.body:
        return q.subject
    return q.subject + " " + q.body


def load_label_file(path: str | Path) -> dict[str, Label]:
    """Read a prediction file: one `id<TAB>LABEL` per line."""
    out: dict[str, Label] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            if "\t" not in line:
                raise DataError(f"{path}:{lineno}: expected id<TAB>label")
            qid, name = line.split("\t", 1)
            if qid in out:
                raise DataError(f"{path}:{lineno}: duplicate id {qid!r}")
            try:
                out[qid] = parse_label(name)
            except DataError:
                raise DataError(f"{path}:{lineno}: unknown label {name!r}") from None
    return out


def save_label_file(items: list[tuple[str, Label]], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for qid, label in items:
            fh.write(f"{qid}\t{Label(label).name}\n")
