"""Command-line entry point: preprocess, featurize, train, predict, evaluate,
hpo, baseline and stack subcommands over the toolkit's file formats.

Every subcommand is a pure function of its input files and resolved
configuration (precedence: flags > --config file > defaults), and writes the
exact configuration it ran with into its output directory. Exit codes:
0 success, 1 usage/config, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import baselines, features, metrics, plots, preprocess, residual, stacking
from .corpus import (
    Dataset,
    Label,
    concat_text,
    load_label_file,
    load_questions,
    save_label_file,
    save_questions,
)
from .errors import ConfigError, DataError, NumericError, QcatError

HP_FIELDS = ("input_dim", "block_dim", "n_blocks", "input_dropout", "block_dropout",
             "base_lr", "warmup_epochs", "l2_lambda", "max_epochs")


def _resolve(defaults: dict, args: argparse.Namespace) -> dict:
    """Merge defaults, the optional --config JSON file and explicit flags."""
    cfg = dict(defaults)
    provided = dict(vars(args))
    provided.pop("command", None)
    config_path = provided.pop("config", None)
    if config_path is not None:
        try:
            file_cfg = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{config_path}: invalid JSON: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"{config_path}: config must be a JSON object")
        for key, value in file_cfg.items():
            if key not in cfg:
                raise ConfigError(f"{config_path}: unknown config key {key!r}")
            cfg[key] = value
    for key, value in provided.items():
        cfg[key] = value
    missing = [k for k, v in cfg.items() if v is REQUIRED]
    if missing:
        raise ConfigError(f"missing required options: {', '.join('--' + m.replace('_', '-') for m in missing)}")
    return cfg


class REQUIRED:
    """Sentinel for options that must come from a flag or the config file."""


def _outdir(cfg: dict, command: str) -> Path:
    out = Path(cfg["outdir"])
    out.mkdir(parents=True, exist_ok=True)
    record = {"command": command}
    record.update({k: v for k, v in cfg.items() if v is not REQUIRED})
    (out / "run_config.json").write_text(
        json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def _hyperparams(cfg: dict) -> residual.HyperParams:
    hp = residual.HyperParams(**{k: cfg[k] for k in HP_FIELDS})
    hp.validate()
    return hp


def _feature_matrix(ds: Dataset, table: features.EmbeddingTable) -> np.ndarray:
    rows = []
    for q in ds:
        vec = table.rows.get(q.id)
        if vec is None:
            raise DataError(f"no feature row for question id {q.id!r}")
        rows.append(vec)
    return np.stack(rows).astype(np.float64)


def _parse_seeds(value) -> tuple[int, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    return tuple(int(v) for v in str(value).split(","))


# --- subcommands ---------------------------------------------------------------

def cmd_preprocess(cfg: dict) -> int:
    rules = preprocess.RuleConfig(
        strip_emoji=cfg["strip_emoji"],
        replace_urls=cfg["replace_urls"],
        replace_datetimes=cfg["replace_datetimes"],
        replace_ordinals=cfg["replace_ordinals"],
        replace_numbers=cfg["replace_numbers"],
        lowercase_if_shouty=cfg["lowercase_shouty"],
    )
    if cfg["jargon"]:
        rules.jargon_dict = (preprocess.default_jargon() if cfg["jargon"] == "default"
                             else preprocess.load_jargon(cfg["jargon"]))
    ds = load_questions(cfg["input"])
    for q in ds:
        q.subject = preprocess.normalize(q.subject, rules)
        q.body = preprocess.normalize(q.body, rules)
    save_questions(ds, cfg["output"])
    return 0


def cmd_featurize(cfg: dict) -> int:
    ds = load_questions(cfg["questions"])
    train_ds = ds if cfg["train_questions"] is None else load_questions(cfg["train_questions"])
    emb = features.load_embedding_table(cfg["embeddings"], features.SENT_DIM)
    wv = features.load_wordvecs(cfg["wordvecs"])
    stats = features.fit_category_stats(train_ds)
    rows = ((q.id, features.assemble(q, emb, wv, stats)) for q in ds)
    features.write_embedding_table(cfg["output"], features.FEATURE_DIM, rows)
    return 0


def cmd_train(cfg: dict) -> int:
    out = _outdir(cfg, "train")
    hp = _hyperparams(cfg)
    ds = load_questions(cfg["questions"])
    table = features.load_embedding_table(cfg["features"], hp.input_dim)
    x = _feature_matrix(ds, table)
    seeds = _parse_seeds(cfg["seeds"])
    checkpoints = residual.train_ensemble(
        ds, x, hp, seeds=seeds, k=cfg["folds"],
        global_seed=cfg["seed"], jobs=cfg["jobs"])

    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    paths = []
    for ckpt in checkpoints:
        si, fi = ckpt.split_id
        path = ckpt_dir / f"ckpt_s{si}_f{fi}.qc"
        residual.save_checkpoint(ckpt, path)
        paths.append(path)
    residual.write_manifest(paths, out / "manifest.txt")

    with (out / "splits.tsv").open("w", encoding="utf-8") as fh:
        fh.write("split\tseed_index\tfold_index\tseed\tbest_epoch\tbest_val_acc\n")
        for i, ckpt in enumerate(checkpoints):
            si, fi = ckpt.split_id
            fh.write(f"{i}\t{si}\t{fi}\t{seeds[si]}\t{ckpt.best_epoch}\t"
                     f"{ckpt.best_val_acc:.10g}\n")
    plots.split_accuracy_figure([c.split_id for c in checkpoints],
                                [c.best_val_acc for c in checkpoints],
                                out / "splits_accuracy.png")
    return 0


def cmd_predict(cfg: dict) -> int:
    models = residual.load_ensemble(cfg["manifest"])
    table = features.load_embedding_table(cfg["features"], models[0].hp.input_dim)
    ids = list(table.rows)
    x = np.stack([table.rows[i] for i in ids]).astype(np.float64)
    labels, summed = residual.ensemble_predict(models, x)
    probs = stacking.make_prob_matrix(cfg["system_name"], ids, summed / len(models))
    stacking.save_prob_matrix(probs, cfg["out_probs"])
    save_label_file([(qid, Label(int(l))) for qid, l in zip(ids, labels)],
                    cfg["out_labels"])
    return 0


def cmd_evaluate(cfg: dict) -> int:
    out = _outdir(cfg, "evaluate")
    ds = load_questions(cfg["gold"])
    predicted = load_label_file(cfg["labels"])
    missing = [q.id for q in ds if q.id not in predicted]
    if missing:
        raise DataError(f"predictions missing for ids: {', '.join(missing[:10])}")
    gold = [int(l) for l in ds.labels()]
    pred = [int(predicted[q.id]) for q in ds]
    if cfg["per_category"]:
        report = metrics.evaluate_by_category(gold, pred, [q.category for q in ds])
    else:
        report = metrics.evaluate(gold, pred)
    metrics.write_report(report, out / "report.txt", out / "metrics.tsv")
    plots.confusion_figure(report.confusion, out / "confusion.png")
    print(metrics.format_report(report), end="")
    return 0


def cmd_hpo(cfg: dict) -> int:
    out = _outdir(cfg, "hpo")
    ds = load_questions(cfg["questions"])
    base_hp = _hyperparams(cfg)
    table = features.load_embedding_table(cfg["features"], base_hp.input_dim)
    x = _feature_matrix(ds, table)
    y = np.array([int(l) for l in ds.labels()])
    if cfg["space"] is not None:
        raw = json.loads(Path(cfg["space"]).read_text(encoding="utf-8"))
        space = {k: tuple(v) for k, v in raw.items()}
    else:
        space = dict(residual.DEFAULT_SEARCH_SPACE)
    best_hp, best_score, trials = residual.random_search(
        space, cfg["budget"], x, y, k=cfg["folds"], seed=cfg["seed"], base_hp=base_hp)

    with (out / "trials.tsv").open("w", encoding="utf-8") as fh:
        fh.write("trial\tscore\thyperparams\n")
        for i, (hp, score) in enumerate(trials):
            fh.write(f"{i}\t{score:.10g}\t{json.dumps(asdict(hp), sort_keys=True)}\n")
    (out / "best_config.json").write_text(
        json.dumps({"cv_accuracy": best_score, "hyperparams": asdict(best_hp)},
                   indent=2, sort_keys=True) + "\n", encoding="utf-8")
    plots.trial_scores_figure([s for _, s in trials], out / "trials.png")
    print(f"best cv_accuracy {best_score:.4f} after {len(trials)} trials")
    return 0


def cmd_baseline(cfg: dict) -> int:
    out = _outdir(cfg, "baseline")
    kind = cfg["kind"]
    if kind not in ("tfidf-svm", "logreg", "forest"):
        raise ConfigError(f"unknown baseline kind {kind!r}")
    train_ds = load_questions(cfg["train"])
    texts = [concat_text(q) for q in train_ds]
    y = np.array([int(l) for l in train_ds.labels()])
    tfidf = baselines.tfidf_fit(texts, cfg["ngram_min"], cfg["ngram_max"])
    x = baselines.tfidf_transform_corpus(tfidf, texts)
    if kind == "tfidf-svm":
        model = baselines.svm_train(x, y, lambda_reg=cfg["svm_lambda"],
                                    epochs=cfg["epochs"], seed=cfg["seed"])
        baselines.save_linear_model(model, out / "model.qc")
        predict_proba = model.predict_proba
    elif kind == "logreg":
        model = baselines.logreg_train(x, y, l2=cfg["l2"], epochs=cfg["epochs"])
        baselines.save_linear_model(model, out / "model.qc")
        predict_proba = model.predict_proba
    else:
        model = baselines.rf_train(x, y, n_trees=cfg["n_trees"], seed=cfg["seed"])
        baselines.save_forest(model, out / "model.qc")
        predict_proba = lambda rows: baselines.rf_predict_proba(model, rows)

    if cfg["eval"] is not None:
        eval_ds = load_questions(cfg["eval"])
        rows = baselines.tfidf_transform_corpus(tfidf, [concat_text(q) for q in eval_ds])
        probs = predict_proba(rows)
        pm = stacking.make_prob_matrix(kind, eval_ds.ids(), probs)
        stacking.save_prob_matrix(pm, out / "probs.tsv")
        save_label_file([(q.id, Label(int(np.argmax(p)))) for q, p in zip(eval_ds, probs)],
                        out / "labels.tsv")
    return 0


def cmd_stack(cfg: dict) -> int:
    out = _outdir(cfg, "stack")
    bases = [stacking.load_prob_matrix(p) for p in cfg["bases"]]
    gold_ds = load_questions(cfg["gold"])
    labels = {q.id: int(l) for q, l in zip(gold_ds, gold_ds.labels())}
    if cfg["kind"] == "c1":
        stacker = stacking.stack_train_c1(bases, labels, seed=cfg["seed"])
    elif cfg["kind"] == "c2":
        stacker = stacking.stack_train_c2(bases, labels, n_bags=cfg["n_bags"],
                                          seed=cfg["seed"])
    else:
        raise ConfigError(f"unknown stacker kind {cfg['kind']!r}")
    predict_bases = ([stacking.load_prob_matrix(p) for p in cfg["predict_bases"]]
                     if cfg["predict_bases"] else bases)
    ids, pred = stacker.predict(predict_bases)
    save_label_file([(qid, Label(int(l))) for qid, l in zip(ids, pred)],
                    out / "labels.tsv")
    _, proba = stacker.predict_proba(predict_bases)
    pm = stacking.make_prob_matrix(f"stack-{cfg['kind']}", ids,
                                   proba / proba.sum(axis=1, keepdims=True))
    stacking.save_prob_matrix(pm, out / "probs.tsv")
    return 0


# --- argument parsing -------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with status 2
        raise ConfigError(message)


_COMMANDS = {
    "preprocess": cmd_preprocess,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "hpo": cmd_hpo,
    "baseline": cmd_baseline,
    "stack": cmd_stack,
}

_DEFAULTS: dict[str, dict] = {
    "preprocess": {
        "input": REQUIRED, "output": REQUIRED, "strip_emoji": False,
        "replace_urls": False, "replace_datetimes": False,
        "replace_ordinals": False, "replace_numbers": False,
        "lowercase_shouty": False, "jargon": None,
    },
    "featurize": {
        "questions": REQUIRED, "embeddings": REQUIRED, "wordvecs": REQUIRED,
        "output": REQUIRED, "train_questions": None,
    },
    "train": {
        "questions": REQUIRED, "features": REQUIRED, "outdir": REQUIRED,
        "seeds": "0,1,2,3", "folds": 5, "seed": 0, "jobs": 1,
        **{k: getattr(residual.HyperParams(), k) for k in HP_FIELDS},
    },
    "predict": {
        "manifest": REQUIRED, "features": REQUIRED, "out_probs": REQUIRED,
        "out_labels": REQUIRED, "system_name": "ensemble",
    },
    "evaluate": {
        "gold": REQUIRED, "labels": REQUIRED, "outdir": REQUIRED,
        "per_category": False,
    },
    "hpo": {
        "questions": REQUIRED, "features": REQUIRED, "outdir": REQUIRED,
        "budget": REQUIRED, "folds": 5, "seed": 0, "space": None,
        **{k: getattr(residual.HyperParams(), k) for k in HP_FIELDS},
    },
    "baseline": {
        "kind": REQUIRED, "train": REQUIRED, "outdir": REQUIRED, "eval": None,
        "ngram_min": 2, "ngram_max": 5, "svm_lambda": 0.01, "l2": 1e-3,
        "epochs": 100, "n_trees": 100, "seed": 0,
    },
    "stack": {
        "kind": REQUIRED, "bases": REQUIRED, "gold": REQUIRED,
        "outdir": REQUIRED, "predict_bases": None, "n_bags": 10, "seed": 0,
    },
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="qcat", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, *specs):
        p = sub.add_parser(name, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file with option defaults")
        for flags, kwargs in specs:
            p.add_argument(*flags, **kwargs)
        return p

    flag = {"action": "store_true"}
    add("preprocess",
        (("--input",), {}), (("--output",), {}),
        (("--strip-emoji",), flag), (("--replace-urls",), flag),
        (("--replace-datetimes",), flag), (("--replace-ordinals",), flag),
        (("--replace-numbers",), flag), (("--lowercase-shouty",), flag),
        (("--jargon",), {"help": "jargon file path, or 'default'"}))
    add("featurize",
        (("--questions",), {}), (("--embeddings",), {}), (("--wordvecs",), {}),
        (("--output",), {}), (("--train-questions",), {}))
    hp_specs = [
        (("--input-dim",), {"type": int}), (("--block-dim",), {"type": int}),
        (("--n-blocks",), {"type": int}), (("--input-dropout",), {"type": float}),
        (("--block-dropout",), {"type": float}), (("--base-lr",), {"type": float}),
        (("--warmup-epochs",), {"type": int}), (("--l2-lambda",), {"type": float}),
        (("--max-epochs",), {"type": int}),
    ]
    add("train",
        (("--questions",), {}), (("--features",), {}), (("--outdir",), {}),
        (("--seeds",), {"help": "comma-separated split seeds"}),
        (("--folds",), {"type": int}), (("--seed",), {"type": int}),
        (("--jobs",), {"type": int}), *hp_specs)
    add("predict",
        (("--manifest",), {}), (("--features",), {}), (("--out-probs",), {}),
        (("--out-labels",), {}), (("--system-name",), {}))
    add("evaluate",
        (("--gold",), {}), (("--labels",), {}), (("--outdir",), {}),
        (("--per-category",), flag))
    add("hpo",
        (("--questions",), {}), (("--features",), {}), (("--outdir",), {}),
        (("--budget",), {"type": int}), (("--folds",), {"type": int}),
        (("--seed",), {"type": int}),
        (("--space",), {"help": "JSON file mapping field -> [kind, low, high]"}),
        *hp_specs)
    add("baseline",
        (("--kind",), {"choices": ["tfidf-svm", "logreg", "forest"]}),
        (("--train",), {}), (("--outdir",), {}), (("--eval",), {}),
        (("--ngram-min",), {"type": int}), (("--ngram-max",), {"type": int}),
        (("--svm-lambda",), {"type": float}), (("--l2",), {"type": float}),
        (("--epochs",), {"type": int}), (("--n-trees",), {"type": int}),
        (("--seed",), {"type": int}))
    add("stack",
        (("--kind",), {"choices": ["c1", "c2"]}),
        (("--bases",), {"nargs": "+"}), (("--gold",), {}), (("--outdir",), {}),
        (("--predict-bases",), {"nargs": "+"}), (("--n-bags",), {"type": int}),
        (("--seed",), {"type": int}))
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _resolve(_DEFAULTS[args.command], args)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        return _fail(1, "config", exc)
    except FileNotFoundError as exc:
        return _fail(2, "data", f"missing file: {exc.filename}")
    except DataError as exc:
        return _fail(2, "data", exc)
    except NumericError as exc:
        return _fail(3, "numeric", exc)
    except QcatError as exc:
        return _fail(2, "data", exc)


def _fail(code: int, category: str, exc) -> int:
    message = " ".join(str(exc).split())
    print(f"qcat: error: {category}: {message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
