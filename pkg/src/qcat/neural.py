"""Minimal numerical engine: layers with exact analytic gradients, the Adam
optimizer, the warmup schedule and a finite-difference gradient checker.

All arrays are float64. Layer functions accept a single vector or a batch
(leading axis); parameter gradients accumulate into ParamArray.grad so a
full-batch step is one forward, one backward, one adam_step.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import ConfigError, NumericError


class RngStream:
    """Deterministic random stream backed by the Philox counter-based
    generator. Identical key material yields an identical draw sequence on
    every platform; `derive` builds independent child streams."""

    def __init__(self, *keys: int):
        self.keys = tuple(int(k) for k in keys) or (0,)
        self._gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(list(self.keys))))

    def derive(self, *keys: int) -> "RngStream":
        return RngStream(*(self.keys + tuple(int(k) for k in keys)))

    def random(self, shape=None) -> np.ndarray:
        return self._gen.random(shape)

    def uniform(self, low: float, high: float, shape=None) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def normal(self, shape=None) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = True) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)


@dataclass
class ParamArray:
    """One learnable array plus its gradient accumulator."""

    name: str
    values: np.ndarray
    grad: np.ndarray = field(default=None)  # type: ignore[assignment]
    is_weight: bool = False  # True for dense weight matrices (L2 applies)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.values)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


def glorot_uniform(rng: RngStream, n_in: int, n_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, (n_in, n_out))


# --- layers -----------------------------------------------------------------

def dense_forward(x: np.ndarray, w: ParamArray, b: ParamArray) -> np.ndarray:
    if x.shape[-1] != w.values.shape[0]:
        raise ConfigError(
            f"dense {w.name}: input width {x.shape[-1]} != {w.values.shape[0]}"
        )
    return x @ w.values + b.values


def dense_backward(dy: np.ndarray, x: np.ndarray, w: ParamArray, b: ParamArray) -> np.ndarray:
    """Accumulate dL/dW and dL/db, return dL/dx."""
    if x.ndim == 1:
        w.grad += np.outer(x, dy)
        b.grad += dy
    else:
        w.grad += x.T @ dy
        b.grad += dy.sum(axis=0)
    return dy @ w.values.T


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    # Gradient defined as 0 at x == 0.
    return dy * (x > 0.0)


def layer_norm_forward(x: np.ndarray, gain: ParamArray, bias: ParamArray,
                       eps: float = 1e-5):
    """Normalize the last axis to zero mean and unit (biased) variance, then
    scale and shift. Returns (y, cache) for the backward pass."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    y = gain.values * xhat + bias.values
    return y, (xhat, inv_std)


def layer_norm_backward(dy: np.ndarray, cache, gain: ParamArray, bias: ParamArray) -> np.ndarray:
    xhat, inv_std = cache
    if dy.ndim == 1:
        gain.grad += dy * xhat
        bias.grad += dy
    else:
        gain.grad += (dy * xhat).sum(axis=0)
        bias.grad += dy.sum(axis=0)
    dxhat = dy * gain.values
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    return (dxhat - m1 - xhat * m2) * inv_std


def dropout_forward(x: np.ndarray, p: float, rng: RngStream | None, training: bool):
    """Inverted dropout: survivors are scaled by 1/(1-p) at train time so
    inference is the identity. Returns (y, scaled_mask)."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability {p} outside [0, 1)")
    if not training or p == 0.0:
        return x, np.ones_like(x)
    if rng is None:
        raise ConfigError("training-mode dropout needs a random stream")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, mask


def dropout_backward(dy: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dy * mask


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Single-sample stable softmax cross entropy."""
    probs = softmax(logits)
    # A probability can underflow to exactly 0 for extreme logit gaps; the
    # resulting inf loss is caught by the training loop's finiteness check.
    with np.errstate(divide="ignore"):
        return float(-np.log(probs[label])), probs


def softmax_xent_backward(probs: np.ndarray, label: int) -> np.ndarray:
    d = probs.copy()
    d[label] -= 1.0
    return d


def softmax_xent_batch(logits: np.ndarray, labels: np.ndarray):
    """Mean cross entropy over a batch. Returns (loss, probs, dlogits) with
    dlogits already scaled for the mean."""
    probs = softmax(logits)
    n = logits.shape[0]
    picked = probs[np.arange(n), labels]
    with np.errstate(divide="ignore"):
        loss = float(-np.log(picked).mean())
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return loss, probs, dlogits / n


def l2_penalty(params: Iterable[ParamArray], lam: float) -> float:
    """lam * sum(w^2) over weight matrices only; adds 2*lam*w to each weight
    gradient. Biases and layer-norm parameters are excluded."""
    penalty = 0.0
    for p in params:
        if p.is_weight and lam != 0.0:
            penalty += lam * float((p.values * p.values).sum())
            p.grad += 2.0 * lam * p.values
    return penalty


# --- optimization -----------------------------------------------------------

@dataclass
class LRSchedule:
    base_lr: float = 6e-3
    warmup_epochs: int = 500

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ConfigError("base_lr must be positive")
        if self.warmup_epochs < 1:
            raise ConfigError("warmup_epochs must be >= 1")


def lr_at(schedule: LRSchedule, epoch: int) -> float:
    """Linear warmup to base_lr over warmup_epochs, constant afterward."""
    return schedule.base_lr * min(1.0, (epoch + 1) / schedule.warmup_epochs)


class AdamState:
    """Standard Adam moments with bias correction, one shared step counter."""

    def __init__(self, params: Iterable[ParamArray], beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step = 0
        self.m = {p.name: np.zeros_like(p.values) for p in params}
        self.v = {p.name: np.zeros_like(p.values) for p in params}


def adam_step(state: AdamState, params: Iterable[ParamArray], lr: float) -> None:
    """Apply one Adam update from the accumulated gradients, then zero them."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for p in params:
        g = p.grad
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {p.name!r}")
        m = state.m[p.name]
        v = state.v[p.name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.values -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
        p.zero_grad()


# --- verification -----------------------------------------------------------

def grad_check(loss_fn: Callable[[], float], params: list[ParamArray],
               h: float = 1e-4, max_coords: int = 1000,
               rng: RngStream | None = None) -> float:
    """Compare analytic gradients against central finite differences.

    `loss_fn` must be a deterministic function of the current parameter
    values (dropout off), and every p.grad must already hold the analytic
    gradient of loss_fn at the current point. Checks all coordinates when
    there are at most `max_coords`, otherwise a random subsample. Returns
    max |a - n| / max(|a|, |n|, 1e-8).
    """
    coords = [(p, i) for p in params for i in range(p.values.size)]
    if len(coords) > max_coords:
        rng = rng or RngStream(0)
        picked = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in sorted(picked)]
    analytic = {id(p): p.grad.copy() for p in params}
    worst = 0.0
    for p, i in coords:
        flat = p.values.reshape(-1)
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn()
        flat[i] = orig - h
        down = loss_fn()
        flat[i] = orig
        numeric = (up - down) / (2.0 * h)
        a = analytic[id(p)].reshape(-1)[i]
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst
