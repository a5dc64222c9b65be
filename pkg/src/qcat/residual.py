"""Deep residual classifier over question feature vectors, trained as a
cross-validation ensemble.

The network: input dropout, a linear projection to the block width, a stack
of residual blocks (dense, ReLU, residual add, layer norm, dropout), and a
final projection to class logits. Training is full batch, one optimizer step
per epoch, keeping the parameter snapshot with the best validation accuracy.
The ensemble trains one model per (seed, fold) pair of a stratified k-fold
plan and predicts with the argmax of the summed per-model softmax.
"""
from __future__ import annotations

import concurrent.futures
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .corpus import Dataset, Label, N_CLASSES
from .container import load_container, save_container
from .errors import ConfigError, ContainerShapeError, DataError, NumericError
from .neural import (
    AdamState,
    LRSchedule,
    ParamArray,
    RngStream,
    adam_step,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    glorot_uniform,
    l2_penalty,
    layer_norm_backward,
    layer_norm_forward,
    lr_at,
    relu_backward,
    relu_forward,
    softmax,
    softmax_xent_batch,
)


@dataclass
class HyperParams:
    input_dim: int = 815
    block_dim: int = 81
    n_blocks: int = 12
    input_dropout: float = 0.73
    block_dropout: float = 0.17
    base_lr: float = 6e-3
    warmup_epochs: int = 500
    l2_lambda: float = 0.14
    max_epochs: int = 700
    n_classes: int = 3

    def validate(self) -> None:
        if min(self.input_dim, self.block_dim, self.n_blocks, self.n_classes) < 1:
            raise ConfigError("dimensions must be positive")
        if not (0.0 <= self.input_dropout < 1.0 and 0.0 <= self.block_dropout < 1.0):
            raise ConfigError("dropout rates must lie in [0, 1)")
        if self.base_lr <= 0 or self.l2_lambda < 0:
            raise ConfigError("base_lr must be positive and l2_lambda non-negative")
        if self.warmup_epochs < 1 or self.max_epochs < 0:
            raise ConfigError("warmup_epochs >= 1 and max_epochs >= 0 required")

    def schedule(self) -> LRSchedule:
        return LRSchedule(self.base_lr, self.warmup_epochs)


def parameter_count(hp: HyperParams) -> int:
    """Closed-form count of learnable scalars for the architecture."""
    d, b = hp.input_dim, hp.block_dim
    return (d * b + b
            + hp.n_blocks * (b * b + b + 2 * b)
            + b * hp.n_classes + hp.n_classes)


@dataclass
class ModelCheckpoint:
    hp: HyperParams
    params: dict[str, ParamArray]
    best_val_acc: float = 0.0
    best_epoch: int = 0
    split_id: tuple[int, int] = (0, 0)
    # Per-epoch validation accuracies recorded during training (index 0 is
    # the untrained model). Not serialized.
    val_acc_trace: list[float] = field(default_factory=list, repr=False)

    def param_list(self) -> list[ParamArray]:
        return list(self.params.values())


def build_model(hp: HyperParams, rng: RngStream) -> ModelCheckpoint:
    """Allocate and initialize all parameters. Weights draw from a
    uniform(-sqrt(6/(fan_in+fan_out)), +...) distribution in a fixed order,
    so identical streams give bit-identical models."""
    hp.validate()
    params: dict[str, ParamArray] = {}

    def add(name, values, is_weight=False):
        params[name] = ParamArray(name, values, is_weight=is_weight)

    add("input.W", glorot_uniform(rng, hp.input_dim, hp.block_dim), is_weight=True)
    add("input.b", np.zeros(hp.block_dim))
    for i in range(hp.n_blocks):
        add(f"block{i}.W", glorot_uniform(rng, hp.block_dim, hp.block_dim), is_weight=True)
        add(f"block{i}.b", np.zeros(hp.block_dim))
        add(f"block{i}.ln_gain", np.ones(hp.block_dim))
        add(f"block{i}.ln_bias", np.zeros(hp.block_dim))
    add("output.W", glorot_uniform(rng, hp.block_dim, hp.n_classes), is_weight=True)
    add("output.b", np.zeros(hp.n_classes))
    return ModelCheckpoint(hp=hp, params=params)


def count_params(m: ModelCheckpoint) -> int:
    return sum(p.values.size for p in m.params.values())


def _forward_cached(m: ModelCheckpoint, x: np.ndarray, training: bool,
                    rng: RngStream | None):
    hp = m.hp
    p = m.params
    if x.shape[-1] != hp.input_dim:
        raise ConfigError(f"input width {x.shape[-1]} != {hp.input_dim}")
    x0, in_mask = dropout_forward(x, hp.input_dropout, rng, training)
    h = dense_forward(x0, p["input.W"], p["input.b"])
    blocks = []
    for i in range(hp.n_blocks):
        w, b = p[f"block{i}.W"], p[f"block{i}.b"]
        gain, bias = p[f"block{i}.ln_gain"], p[f"block{i}.ln_bias"]
        pre = dense_forward(h, w, b)
        act = relu_forward(pre)
        res = h + act
        normed, ln_cache = layer_norm_forward(res, gain, bias)
        out, mask = dropout_forward(normed, hp.block_dropout, rng, training)
        blocks.append((h, pre, ln_cache, mask))
        h = out
    logits = dense_forward(h, p["output.W"], p["output.b"])
    return logits, (x0, in_mask, blocks, h)


def _backward(m: ModelCheckpoint, cache, dlogits: np.ndarray) -> None:
    hp = m.hp
    p = m.params
    x0, in_mask, blocks, h_last = cache
    dh = dense_backward(dlogits, h_last, p["output.W"], p["output.b"])
    for i in reversed(range(hp.n_blocks)):
        h_in, pre, ln_cache, mask = blocks[i]
        dnormed = dropout_backward(dh, mask)
        dres = layer_norm_backward(dnormed, ln_cache,
                                   p[f"block{i}.ln_gain"], p[f"block{i}.ln_bias"])
        dact = relu_backward(dres, pre)
        dh = dres + dense_backward(dact, h_in, p[f"block{i}.W"], p[f"block{i}.b"])
    dx0 = dense_backward(dh, x0, p["input.W"], p["input.b"])
    dropout_backward(dx0, in_mask)


def forward(m: ModelCheckpoint, x: np.ndarray, training: bool = False,
            rng: RngStream | None = None) -> np.ndarray:
    """Class logits for one feature vector or a batch."""
    logits, _ = _forward_cached(m, np.asarray(x, dtype=np.float64), training, rng)
    return logits


def loss_and_grads(m: ModelCheckpoint, x: np.ndarray, labels: np.ndarray,
                   training: bool = True, rng: RngStream | None = None) -> float:
    """Mean cross entropy plus the L2 penalty; gradients accumulate into the
    model's parameters."""
    logits, cache = _forward_cached(m, x, training, rng)
    loss, _probs, dlogits = softmax_xent_batch(logits, labels)
    _backward(m, cache, dlogits)
    return loss + l2_penalty(m.param_list(), m.hp.l2_lambda)


def predict_labels(m: ModelCheckpoint, x: np.ndarray) -> np.ndarray:
    return np.argmax(forward(m, x), axis=-1)


def accuracy(m: ModelCheckpoint, x: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(predict_labels(m, x) == labels))


# --- cross-validation splits -------------------------------------------------

@dataclass
class SplitPlan:
    """k validation folds per seed; pairs are enumerated seed-major."""

    pairs: list[tuple[list[str], list[str]]]
    seeds: tuple[int, ...]
    k: int


def stratified_folds(labels: np.ndarray, k: int, rng: RngStream) -> np.ndarray:
    """Fold index per sample. Each class is shuffled and dealt round-robin,
    so per-class fold counts differ by at most one."""
    labels = np.asarray(labels)
    folds = np.full(len(labels), -1, dtype=np.int64)
    for ci, cls in enumerate(np.unique(labels)):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < k:
            raise DataError(f"class {int(cls)} has {len(idx)} samples, fewer than k={k}")
        idx = idx[rng.permutation(len(idx))]
        for j, sample in enumerate(idx):
            folds[sample] = (j + ci) % k
    return folds


def make_splits(ds: Dataset, seeds: tuple[int, ...] = (0, 1, 2, 3), k: int = 5) -> SplitPlan:
    """Stratified k-fold learn/validation pairs for each seed."""
    if len(ds) < k:
        raise DataError(f"dataset of {len(ds)} questions cannot be split into {k} folds")
    ids = ds.ids()
    labels = np.array([int(l) for l in ds.labels()])
    pairs: list[tuple[list[str], list[str]]] = []
    for seed in seeds:
        folds = stratified_folds(labels, k, RngStream(seed))
        for fold in range(k):
            val = [ids[i] for i in np.flatnonzero(folds == fold)]
            learn = [ids[i] for i in np.flatnonzero(folds != fold)]
            pairs.append((learn, val))
    return SplitPlan(pairs, tuple(seeds), k)


# --- training ----------------------------------------------------------------

def train_single(learn_x: np.ndarray, learn_y: np.ndarray,
                 val_x: np.ndarray, val_y: np.ndarray,
                 hp: HyperParams, rng: RngStream | int,
                 split_id: tuple[int, int] = (0, 0)) -> ModelCheckpoint:
    """Full-batch training up to hp.max_epochs, returning the snapshot with
    the highest validation accuracy (ties go to the earlier epoch; epoch 0 is
    the untrained model)."""
    if isinstance(rng, int):
        rng = RngStream(rng)
    learn_x = np.asarray(learn_x, dtype=np.float64)
    val_x = np.asarray(val_x, dtype=np.float64)
    learn_y = np.asarray(learn_y, dtype=np.int64)
    val_y = np.asarray(val_y, dtype=np.int64)

    model = build_model(hp, rng)
    schedule = hp.schedule()
    adam = AdamState(model.param_list())

    best_acc = accuracy(model, val_x, val_y)
    best_epoch = 0
    best_values = {n: p.values.copy() for n, p in model.params.items()}
    trace = [best_acc]

    for epoch in range(hp.max_epochs):
        loss = loss_and_grads(model, learn_x, learn_y, training=True, rng=rng)
        if not np.isfinite(loss):
            raise NumericError(f"non-finite loss at epoch {epoch}")
        adam_step(adam, model.param_list(), lr_at(schedule, epoch))
        acc = accuracy(model, val_x, val_y)
        trace.append(acc)
        if acc > best_acc:
            best_acc = acc
            best_epoch = epoch + 1
            best_values = {n: p.values.copy() for n, p in model.params.items()}

    params = {n: ParamArray(n, v, is_weight=model.params[n].is_weight)
              for n, v in best_values.items()}
    return ModelCheckpoint(hp=hp, params=params, best_val_acc=best_acc,
                           best_epoch=best_epoch, split_id=split_id,
                           val_acc_trace=trace)


def _train_split(args) -> ModelCheckpoint:
    learn_x, learn_y, val_x, val_y, hp, keys, split_id = args
    try:
        return train_single(learn_x, learn_y, val_x, val_y, hp,
                            RngStream(*keys), split_id)
    except NumericError as exc:
        raise NumericError(f"split {split_id}: {exc}") from None


def train_ensemble(ds: Dataset, x: np.ndarray, hp: HyperParams,
                   seeds: tuple[int, ...] = (0, 1, 2, 3), k: int = 5,
                   global_seed: int = 0, jobs: int = 1) -> list[ModelCheckpoint]:
    """One train_single per (seed, fold) pair. Each run's random stream is
    derived from (global_seed, seed_index, fold_index), and results are
    ordered seed-major, so any degree of parallelism gives identical output."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != len(ds):
        raise DataError(f"feature matrix has {x.shape[0]} rows for {len(ds)} questions")
    plan = make_splits(ds, seeds, k)
    row = {qid: i for i, qid in enumerate(ds.ids())}
    y = np.array([int(l) for l in ds.labels()])

    tasks = []
    for si in range(len(seeds)):
        for fi in range(k):
            learn_ids, val_ids = plan.pairs[si * k + fi]
            li = np.array([row[q] for q in learn_ids])
            vi = np.array([row[q] for q in val_ids])
            tasks.append((x[li], y[li], x[vi], y[vi], hp,
                          (global_seed, si, fi), (si, fi)))

    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_train_split, tasks))
    return [_train_split(t) for t in tasks]


def ensemble_predict(models: list[ModelCheckpoint], x: np.ndarray):
    """Argmax of the summed per-model softmax. Returns (label(s),
    summed_probs); ties break toward the lowest class index."""
    if not models:
        raise ConfigError("ensemble_predict needs at least one model")
    dims = {m.hp.input_dim for m in models}
    if len(dims) != 1:
        raise ConfigError(f"models disagree on input_dim: {sorted(dims)}")
    x = np.asarray(x, dtype=np.float64)
    summed = np.zeros(x.shape[:-1] + (models[0].hp.n_classes,))
    for m in models:
        summed += softmax(forward(m, x))
    picked = np.argmax(summed, axis=-1)
    if x.ndim == 1:
        return Label(int(picked)), summed
    return picked, summed


# --- randomized hyperparameter search -----------------------------------------

# Field -> (kind, low, high); kind "log" samples log-uniformly, "uniform"
# linearly, "int" uniformly over the inclusive integer range.
DEFAULT_SEARCH_SPACE: dict[str, tuple] = {
    "base_lr": ("log", 1e-4, 1e-2),
    "l2_lambda": ("log", 1e-3, 1.0),
    "input_dropout": ("uniform", 0.0, 0.8),
    "block_dropout": ("uniform", 0.0, 0.8),
    "n_blocks": ("int", 2, 16),
    "block_dim": ("int", 32, 256),
}


def sample_hyperparams(space: dict[str, tuple], rng: RngStream,
                       base: HyperParams) -> HyperParams:
    values = {}
    for name in sorted(space):
        if not hasattr(base, name):
            raise ConfigError(f"unknown hyperparameter {name!r}")
        kind, lo, hi = space[name]
        if kind == "log":
            values[name] = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        elif kind == "uniform":
            values[name] = float(rng.uniform(lo, hi))
        elif kind == "int":
            values[name] = int(rng.integers(lo, hi + 1))
        else:
            raise ConfigError(f"unknown sampling kind {kind!r} for {name!r}")
    return replace(base, **values)


def random_search(space: dict[str, tuple], budget: int, x: np.ndarray,
                  y: np.ndarray, k: int = 5, seed: int = 0,
                  base_hp: HyperParams | None = None):
    """Sample `budget` hyperparameter points and score each by mean k-fold
    validation accuracy on a single fold plan. Returns (best_hp, best_score,
    trials) with ties resolved toward the earlier sample."""
    if budget < 1:
        raise ConfigError("search budget must be >= 1")
    if not space:
        raise ConfigError("empty search space")
    base_hp = base_hp or HyperParams()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    folds = stratified_folds(y, k, RngStream(seed))

    trials: list[tuple[HyperParams, float]] = []
    best_hp, best_score = None, -1.0
    for t in range(budget):
        hp = sample_hyperparams(space, RngStream(seed, t), base_hp)
        scores = []
        for fold in range(k):
            vi = folds == fold
            ckpt = train_single(x[~vi], y[~vi], x[vi], y[vi], hp,
                                RngStream(seed, t, fold), split_id=(t, fold))
            scores.append(ckpt.best_val_acc)
        score = float(np.mean(scores))
        trials.append((hp, score))
        if score > best_score:
            best_hp, best_score = hp, score
    return best_hp, best_score, trials


# --- checkpoint persistence ----------------------------------------------------

def save_checkpoint(m: ModelCheckpoint, path: str | Path) -> None:
    meta = {
        "hp": asdict(m.hp),
        "best_val_acc": m.best_val_acc,
        "best_epoch": m.best_epoch,
        "split_id": list(m.split_id),
        "weights": [n for n, p in m.params.items() if p.is_weight],
    }
    save_container(path, "checkpoint", meta, {n: p.values for n, p in m.params.items()})


def load_checkpoint(path: str | Path) -> ModelCheckpoint:
    _, meta, arrays = load_container(path, expected_kind="checkpoint")
    hp = HyperParams(**meta["hp"])
    reference = build_model(hp, RngStream(0))
    weights = set(meta.get("weights", ()))
    params: dict[str, ParamArray] = {}
    for name, ref in reference.params.items():
        if name not in arrays:
            raise ContainerShapeError(f"{path}: missing parameter {name!r}")
        if arrays[name].shape != ref.values.shape:
            raise ContainerShapeError(
                f"{path}: parameter {name!r} has shape {arrays[name].shape}, "
                f"expected {ref.values.shape}"
            )
        params[name] = ParamArray(name, arrays[name], is_weight=name in weights)
    return ModelCheckpoint(hp=hp, params=params,
                           best_val_acc=float(meta["best_val_acc"]),
                           best_epoch=int(meta["best_epoch"]),
                           split_id=tuple(meta["split_id"]))


def write_manifest(paths: list[str | Path], manifest_path: str | Path) -> None:
    """Ordered list of checkpoint paths, stored relative to the manifest."""
    manifest_path = Path(manifest_path)
    with manifest_path.open("w", encoding="utf-8") as fh:
        for p in paths:
            p = Path(p)
            try:
                rel = p.relative_to(manifest_path.parent)
            except ValueError:
                rel = p
            fh.write(str(rel) + "\n")


def read_manifest(manifest_path: str | Path) -> list[Path]:
    manifest_path = Path(manifest_path)
    out = []
    with manifest_path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            p = Path(line)
            out.append(p if p.is_absolute() else manifest_path.parent / p)
    return out


def load_ensemble(manifest_path: str | Path) -> list[ModelCheckpoint]:
    paths = read_manifest(manifest_path)
    if not paths:
        raise DataError(f"{manifest_path}: empty ensemble manifest")
    return [load_checkpoint(p) for p in paths]
