import json

import numpy as np
import pytest

from qcat.corpus import (
    Dataset,
    Label,
    Question,
    concat_text,
    load_label_file,
    load_questions,
    save_label_file,
    save_questions,
)
from qcat.errors import DataError

from conftest import make_dataset


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def test_load_basic_record(tmp_path):
    path = tmp_path / "q.jsonl"
    write_lines(path, [json.dumps({
        "id": "q1", "subject": "Visa", "body": "How long?",
        "category": "Visas and permits", "label": "FACTUAL"})])
    ds = load_questions(path)
    assert len(ds) == 1
    q = ds.questions[0]
    assert q.label is Label.FACTUAL
    assert q.subject == "Visa" and q.category == "Visas and permits"


def test_load_label_optional(tmp_path):
    path = tmp_path / "q.jsonl"
    write_lines(path, [json.dumps({"id": "q1", "subject": "s", "body": "b", "category": "c"})])
    assert load_questions(path).questions[0].label is None


def test_duplicate_id_named(tmp_path):
    path = tmp_path / "q.jsonl"
    rec = {"id": "q1", "subject": "s", "body": "b", "category": "c"}
    write_lines(path, [json.dumps(rec), json.dumps(rec)])
    with pytest.raises(DataError, match="q1"):
        load_questions(path)


def test_unknown_label_reports_line(tmp_path):
    path = tmp_path / "q.jsonl"
    write_lines(path, [
        json.dumps({"id": "q1", "subject": "s", "body": "b", "category": "c"}),
        json.dumps({"id": "q2", "subject": "s", "body": "b", "category": "c", "label": "FACT"}),
    ])
    with pytest.raises(DataError, match=":2"):
        load_questions(path)


def test_malformed_line_reports_line(tmp_path):
    path = tmp_path / "q.jsonl"
    write_lines(path, ['{"id": "q1", "subject": "s", "body": "b", "category": "c"}', "{nope"])
    with pytest.raises(DataError, match=":2"):
        load_questions(path)


def test_empty_subject_and_body_rejected(tmp_path):
    path = tmp_path / "q.jsonl"
    write_lines(path, [json.dumps({"id": "q1", "subject": "", "body": "", "category": "c"})])
    with pytest.raises(DataError, match="q1"):
        load_questions(path)


def test_load_preserves_count_and_order(tmp_path):
    rng = np.random.default_rng(7)
    for trial in range(5):
        n = int(rng.integers(1, 60))
        ds = make_dataset(n, seed=trial)
        path = tmp_path / f"round{trial}.jsonl"
        save_questions(ds, path)
        loaded = load_questions(path)
        assert loaded.ids() == ds.ids()
        assert [q.label for q in loaded] == [q.label for q in ds]


def test_label_values_fixed():
    assert [int(Label.FACTUAL), int(Label.OPINION), int(Label.SOCIALIZING)] == [0, 1, 2]


def test_concat_text():
    assert concat_text(Question("i", "Visa", "How long?", "c")) == "Visa How long?"
    assert concat_text(Question("i", "", "hello", "c")) == "hello"
    assert concat_text(Question("i", "hi", "", "c")) == "hi"


def test_concat_prefix_property():
    for i in range(20):
        q = Question("i", f"subj{i}", f"body{i}" if i % 2 else "", "c")
        assert concat_text(q).startswith(q.subject)


def test_label_file_roundtrip(tmp_path):
    items = [("a", Label.FACTUAL), ("b", Label.SOCIALIZING), ("c", Label.OPINION)]
    path = tmp_path / "labels.tsv"
    save_label_file(items, path)
    assert load_label_file(path) == dict(items)


def test_label_file_rejects_duplicates(tmp_path):
    path = tmp_path / "labels.tsv"
    path.write_text("a\tFACTUAL\na\tOPINION\n", encoding="utf-8")
    with pytest.raises(DataError, match="duplicate"):
        load_label_file(path)


def test_labels_requires_all_labeled():
    ds = Dataset([Question("a", "s", "b", "c", Label.FACTUAL),
                  Question("b", "s", "b", "c", None)])
    with pytest.raises(DataError, match="'b'"):
        ds.labels()
