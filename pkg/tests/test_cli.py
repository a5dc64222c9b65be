import json

import numpy as np
import pytest

from qcat import features
from qcat.cli import main
from qcat.corpus import Dataset, Label, Question, load_label_file, load_questions, save_questions
from qcat.stacking import load_prob_matrix, save_prob_matrix, make_prob_matrix

from conftest import make_dataset


def write_inputs(tmp_path, n=30, seed=0):
    """Question file + matching random embedding table + tiny word vectors."""
    ds = make_dataset(n, seed=seed)
    qfile = tmp_path / "questions.jsonl"
    save_questions(ds, qfile)

    table = features.random_embedding_table(ds.ids(), features.SENT_DIM, seed=seed)
    # plant a separable class signal in the first dimensions
    rng = np.random.default_rng(seed + 1)
    q, _ = np.linalg.qr(rng.normal(size=(16, 16)))
    centers = 0.9 * q[:, :3].T
    for i, question in enumerate(ds):
        vec = table.rows[question.id].astype(np.float64)
        vec[:16] += centers[int(question.label)]
        table.rows[question.id] = vec.astype(np.float32)
    efile = tmp_path / "embeddings.tsv"
    features.write_embedding_table(efile, features.SENT_DIM, table.rows.items())

    wfile = tmp_path / "words.vec"
    tokens = ["subject", "body", "text", "number", "asking"]
    rows = [f"{len(tokens)} {features.WORD_DIM}"]
    wv_rng = np.random.default_rng(seed + 2)
    for t in tokens:
        vals = " ".join("%.4f" % v for v in wv_rng.normal(size=features.WORD_DIM))
        rows.append(f"{t} {vals}")
    wfile.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return ds, qfile, efile, wfile


def featurize(tmp_path, qfile, efile, wfile, out="features.tsv"):
    ffile = tmp_path / out
    code = main(["featurize", "--questions", str(qfile), "--embeddings", str(efile),
                 "--wordvecs", str(wfile), "--output", str(ffile)])
    assert code == 0
    return ffile


TRAIN_FLAGS = ["--block-dim", "8", "--n-blocks", "2", "--max-epochs", "12",
               "--warmup-epochs", "12", "--input-dropout", "0.1",
               "--block-dropout", "0.05", "--l2-lambda", "0.001"]


def run_pipeline(tmp_path, jobs=1, seeds="0", outname="run"):
    ds, qfile, efile, wfile = write_inputs(tmp_path)
    ffile = featurize(tmp_path, qfile, efile, wfile)
    outdir = tmp_path / outname
    code = main(["train", "--questions", str(qfile), "--features", str(ffile),
                 "--outdir", str(outdir), "--seeds", seeds, "--folds", "5",
                 "--jobs", str(jobs), *TRAIN_FLAGS])
    assert code == 0
    probs = outdir / "probs.tsv"
    labels = outdir / "labels.tsv"
    code = main(["predict", "--manifest", str(outdir / "manifest.txt"),
                 "--features", str(ffile), "--out-probs", str(probs),
                 "--out-labels", str(labels)])
    assert code == 0
    return ds, qfile, ffile, outdir, probs, labels


def test_featurize_output_loads(tmp_path):
    ds, qfile, efile, wfile = write_inputs(tmp_path)
    ffile = featurize(tmp_path, qfile, efile, wfile)
    table = features.load_embedding_table(ffile, features.FEATURE_DIM)
    assert set(table.rows) == set(ds.ids())


def test_train_outputs(tmp_path):
    _, qfile, ffile, outdir, _, _ = run_pipeline(tmp_path)
    assert (outdir / "manifest.txt").exists()
    assert (outdir / "run_config.json").exists()
    assert (outdir / "splits_accuracy.png").exists()
    lines = (outdir / "splits.tsv").read_text().splitlines()
    assert len(lines) == 6  # header + 5 splits
    assert len(list((outdir / "checkpoints").glob("*.qc"))) == 5


def test_predict_and_evaluate(tmp_path):
    ds, qfile, ffile, outdir, probs, labels = run_pipeline(tmp_path)
    pm = load_prob_matrix(probs)
    assert set(pm.ids) == set(ds.ids())
    np.testing.assert_allclose(pm.rows.sum(axis=1), 1.0, atol=1e-4)

    evaldir = tmp_path / "eval"
    code = main(["evaluate", "--gold", str(qfile), "--labels", str(labels),
                 "--outdir", str(evaldir), "--per-category"])
    assert code == 0
    assert (evaldir / "report.txt").exists()
    assert (evaldir / "confusion.png").exists()
    records = dict(line.split("\t") for line in
                   (evaldir / "metrics.tsv").read_text().splitlines())
    assert 0.0 <= float(records["accuracy"]) <= 1.0


def test_evaluate_perfect_labels(tmp_path):
    ds, qfile, _, _ = write_inputs(tmp_path, n=12)
    labels = tmp_path / "gold_as_pred.tsv"
    labels.write_text("".join(f"{q.id}\t{q.label.name}\n" for q in ds), encoding="utf-8")
    evaldir = tmp_path / "eval"
    code = main(["evaluate", "--gold", str(qfile), "--labels", str(labels),
                 "--outdir", str(evaldir)])
    assert code == 0
    records = dict(line.split("\t") for line in
                   (evaldir / "metrics.tsv").read_text().splitlines())
    assert float(records["accuracy"]) == 1.0
    assert float(records["macro_f1"]) == 1.0
    assert float(records["avg_rec"]) == 1.0


def test_determinism_across_runs_and_jobs(tmp_path):
    for sub in ("a", "b", "c"):
        (tmp_path / sub).mkdir()
    _, _, _, _, probs1, labels1 = run_pipeline(tmp_path / "a", jobs=1)
    _, _, _, _, probs2, labels2 = run_pipeline(tmp_path / "b", jobs=1)
    _, _, _, _, probs3, labels3 = run_pipeline(tmp_path / "c", jobs=4)
    assert labels1.read_bytes() == labels2.read_bytes() == labels3.read_bytes()
    assert probs1.read_bytes() == probs2.read_bytes() == probs3.read_bytes()


def test_missing_file_exit_code(tmp_path, capsys):
    code = main(["featurize", "--questions", str(tmp_path / "nope.jsonl"),
                 "--embeddings", "e", "--wordvecs", "w", "--output", "o"])
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith("qcat: error: data:")
    assert "\n" not in err.strip()


def test_usage_error_exit_code(capsys):
    assert main(["train"]) == 1  # missing required options
    assert main(["frobnicate"]) == 1  # unknown subcommand
    assert "qcat: error: config:" in capsys.readouterr().err


def test_numeric_error_exit_code(tmp_path, capsys):
    ds, qfile, efile, wfile = write_inputs(tmp_path)
    ffile = featurize(tmp_path, qfile, efile, wfile)
    code = main(["train", "--questions", str(qfile), "--features", str(ffile),
                 "--outdir", str(tmp_path / "boom"), "--seeds", "0",
                 "--block-dim", "8", "--n-blocks", "2", "--max-epochs", "5",
                 "--base-lr", "1e18"])  # guaranteed overflow
    assert code == 3
    assert "qcat: error: numeric:" in capsys.readouterr().err


def test_config_file_with_flag_override(tmp_path):
    ds, qfile, efile, wfile = write_inputs(tmp_path)
    cfgfile = tmp_path / "cfg.json"
    cfgfile.write_text(json.dumps({
        "questions": str(qfile), "embeddings": str(efile),
        "wordvecs": str(wfile), "output": str(tmp_path / "from_config.tsv"),
    }), encoding="utf-8")
    override = tmp_path / "override.tsv"
    code = main(["featurize", "--config", str(cfgfile), "--output", str(override)])
    assert code == 0
    assert override.exists()
    assert not (tmp_path / "from_config.tsv").exists()


def test_config_unknown_key_rejected(tmp_path, capsys):
    cfgfile = tmp_path / "cfg.json"
    cfgfile.write_text(json.dumps({"nonsense": 1}), encoding="utf-8")
    code = main(["featurize", "--config", str(cfgfile)])
    assert code == 1
    assert "nonsense" in capsys.readouterr().err


def test_run_config_written(tmp_path):
    _, qfile, ffile, outdir, _, _ = run_pipeline(tmp_path)
    record = json.loads((outdir / "run_config.json").read_text())
    assert record["command"] == "train"
    assert record["folds"] == 5
    assert record["block_dim"] == 8


def test_preprocess_command(tmp_path):
    ds = Dataset([Question("q1", "CHECK http://x.y/z", "paid 500 qar", "c", Label.FACTUAL)])
    infile = tmp_path / "in.jsonl"
    save_questions(ds, infile)
    outfile = tmp_path / "out.jsonl"
    code = main(["preprocess", "--input", str(infile), "--output", str(outfile),
                 "--replace-urls", "--replace-numbers", "--jargon", "default"])
    assert code == 0
    out = load_questions(outfile)
    assert out.questions[0].subject == "CHECK url link"
    assert out.questions[0].body == "paid num Qatar currency"


def test_preprocess_default_off_is_identity(tmp_path):
    ds, qfile, _, _ = write_inputs(tmp_path, n=8)
    outfile = tmp_path / "same.jsonl"
    assert main(["preprocess", "--input", str(qfile), "--output", str(outfile)]) == 0
    assert outfile.read_bytes() == qfile.read_bytes()


def separable_text_dataset(tmp_path, n_per_class=12):
    words = {0: "visa permit embassy", 1: "advice suggestion opinions", 2: "hello cheers mates"}
    questions = []
    for c, vocab in words.items():
        for i in range(n_per_class):
            questions.append(Question(f"q{c}_{i}", vocab, f"sample {i}", "cat", Label(c)))
    ds = Dataset(questions)
    path = tmp_path / "textq.jsonl"
    save_questions(ds, path)
    return ds, path


@pytest.mark.parametrize("kind", ["tfidf-svm", "logreg", "forest"])
def test_baseline_command(tmp_path, kind):
    ds, qfile = separable_text_dataset(tmp_path)
    outdir = tmp_path / f"base-{kind}"
    code = main(["baseline", "--kind", kind, "--train", str(qfile),
                 "--eval", str(qfile), "--outdir", str(outdir),
                 "--ngram-max", "3", "--n-trees", "20"])
    assert code == 0
    assert (outdir / "model.qc").exists()
    predicted = load_label_file(outdir / "labels.tsv")
    acc = np.mean([predicted[q.id] == q.label for q in ds])
    assert acc == 1.0  # trivially separable text, held-in
    pm = load_prob_matrix(outdir / "probs.tsv")
    np.testing.assert_allclose(pm.rows.sum(axis=1), 1.0, atol=1e-4)


def test_stack_command_perfect_base(tmp_path):
    ds, qfile, _, _ = write_inputs(tmp_path, n=30)
    rows = np.full((30, 3), 1e-7)
    for i, q in enumerate(ds):
        rows[i, int(q.label)] = 1.0 - 2e-7
    base = make_prob_matrix("oracle", ds.ids(), rows)
    bfile = tmp_path / "base.tsv"
    save_prob_matrix(base, bfile)
    outdir = tmp_path / "stack"
    code = main(["stack", "--kind", "c1", "--bases", str(bfile),
                 "--gold", str(qfile), "--outdir", str(outdir)])
    assert code == 0
    predicted = load_label_file(outdir / "labels.tsv")
    assert all(predicted[q.id] == q.label for q in ds)


def test_hpo_command(tmp_path):
    ds, qfile, efile, wfile = write_inputs(tmp_path)
    ffile = featurize(tmp_path, qfile, efile, wfile)
    space = tmp_path / "space.json"
    space.write_text(json.dumps({"base_lr": ["log", 1e-3, 1e-2]}), encoding="utf-8")
    outdir = tmp_path / "hpo"
    code = main(["hpo", "--questions", str(qfile), "--features", str(ffile),
                 "--outdir", str(outdir), "--budget", "2", "--folds", "3",
                 "--space", str(space), *TRAIN_FLAGS])
    assert code == 0
    best = json.loads((outdir / "best_config.json").read_text())
    assert 0.0 <= best["cv_accuracy"] <= 1.0
    trials = (outdir / "trials.tsv").read_text().splitlines()
    assert len(trials) == 3  # header + 2 trials
    assert (outdir / "trials.png").exists()
