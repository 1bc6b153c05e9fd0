"""Fully connected binary classifier: ReLU hidden layers, dropout, sigmoid output."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import modelfile
from .adam import Adam
from .linear import TrainingError, sigmoid

DEFAULT_HIDDEN = (150, 75)
DROPOUT = 0.4
BATCH_SIZE = 50
EPOCHS = 200


@dataclass
class MLPParams:
    sizes: tuple[int, ...]
    weights: list[np.ndarray]  # weights[i]: sizes[i] x sizes[i+1]
    biases: list[np.ndarray]
    dropout: float = DROPOUT
    seed: int = 0
    in_mean: np.ndarray | None = None
    in_scale: np.ndarray | None = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        d = self.sizes[0]
        if self.in_mean is None:
            self.in_mean = np.zeros(d)
        if self.in_scale is None:
            self.in_scale = np.ones(d)

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        out = [("in_mean", self.in_mean), ("in_scale", self.in_scale)]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out += [(f"W{i}", w), (f"b{i}", b)]
        return out

    def trainable(self) -> list[np.ndarray]:
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def n_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def to_bytes(self) -> bytes:
        header = {"kind": "mlp", "sizes": list(self.sizes), "dropout": self.dropout,
                  "seed": self.seed, "config": self.config}
        return modelfile.dumps(header, self.arrays())

    @classmethod
    def from_header(cls, header: dict, arrays: dict) -> "MLPParams":
        n = len(header["sizes"]) - 1
        return cls(tuple(header["sizes"]), [arrays[f"W{i}"] for i in range(n)],
                   [arrays[f"b{i}"] for i in range(n)], header["dropout"], header["seed"],
                   arrays["in_mean"], arrays["in_scale"], header.get("config", {}))


def mlp_init(sizes, seed: int = 0, dropout: float = DROPOUT) -> MLPParams:
    """He-uniform hidden layers, Glorot-uniform output layer, zero biases."""
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2 or min(sizes) < 1 or sizes[-1] != 1:
        raise ValueError("sizes must be [d_in, ..., 1] with positive entries")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = i == len(sizes) - 2
        limit = np.sqrt(6.0 / (fan_in + fan_out)) if last else np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLPParams(sizes, weights, biases, dropout, seed)


def init_limits(sizes) -> list[float]:
    n = len(sizes) - 1
    return [np.sqrt(6.0 / (a + b)) if i == n - 1 else np.sqrt(6.0 / a)
            for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))]


def dropout_masks(p: MLPParams, batch: int, rng) -> list[np.ndarray]:
    keep = 1.0 - p.dropout
    return [(rng.random((batch, h)) < keep) / keep for h in p.sizes[1:-1]]


def mlp_forward(p: MLPParams, X, mode: str = "infer", rng=None, masks=None):
    """Return (P(y=1), cache). ``train`` mode applies inverted dropout.

    Masks come from ``masks`` if given, else are drawn from ``rng``.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    h = np.atleast_2d(X)
    h = (h - p.in_mean) / p.in_scale
    if mode == "train" and masks is None and p.dropout > 0:
        masks = dropout_masks(p, h.shape[0], rng if rng is not None else np.random.default_rng(p.seed))
    acts, pre = [h], []
    n = len(p.weights)
    for i in range(n - 1):
        z = h @ p.weights[i] + p.biases[i]
        h = np.maximum(z, 0.0)
        if mode == "train" and masks is not None:
            h = h * masks[i]
        pre.append(z)
        acts.append(h)
    logit = (h @ p.weights[-1] + p.biases[-1])[:, 0]
    prob = sigmoid(logit)
    cache = {"acts": acts, "pre": pre, "logit": logit,
             "masks": masks if mode == "train" else None}
    return (float(prob[0]) if single else prob), cache


def bce_from_logits(logit, y) -> float:
    return float(np.mean(np.logaddexp(0.0, logit) - y * logit))


def mlp_backward(p: MLPParams, cache, y):
    """(mean BCE loss, grads) with grads ordered like ``p.trainable()``."""
    y = np.asarray(y, dtype=np.float64).ravel()
    logit = cache["logit"]
    loss = bce_from_logits(logit, y)
    delta = ((sigmoid(logit) - y) / y.size)[:, None]
    acts, pre, masks = cache["acts"], cache["pre"], cache["masks"]
    grads = []
    for i in range(len(p.weights) - 1, -1, -1):
        grads.append(p.biases[i] * 0 + delta.sum(axis=0))
        grads.append(acts[i].T @ delta)
        if i == 0:
            break
        delta = delta @ p.weights[i].T
        if masks is not None:
            delta = delta * masks[i - 1]
        delta = delta * (pre[i - 1] > 0)
    grads.reverse()
    # reversed list is [W0, b0, W1, b1, ...]
    return loss, grads


def mlp_loss(p: MLPParams, X, y, masks=None) -> float:
    _, cache = mlp_forward(p, X, "train" if masks is not None else "infer", masks=masks)
    return bce_from_logits(cache["logit"], np.asarray(y, dtype=np.float64))


def fit_input_scaling(p: MLPParams, X) -> None:
    """Store per-column z-score parameters in ``p``; constant columns get scale 1."""
    X = np.asarray(X, dtype=np.float64)
    std = X.std(axis=0)
    p.in_mean = X.mean(axis=0)
    p.in_scale = np.where(std > 1e-12 * np.maximum(1.0, np.abs(p.in_mean)), std, 1.0)


def mlp_train(p: MLPParams, X, y, batch_size: int = BATCH_SIZE, epochs: int = EPOCHS,
              seed: int | None = None, alpha: float = 1e-3):
    """Minibatch Adam on mean BCE. Returns (p, per-epoch mean training loss)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size != X.shape[0]:
        raise ValueError("X and y disagree on sample count")
    if y.min() == y.max():
        raise TrainingError("training needs both classes present")
    rng = np.random.default_rng(p.seed if seed is None else seed)
    opt = Adam(p.trainable(), alpha=alpha)
    trace = []
    for _ in range(epochs):
        order = rng.permutation(y.size)
        total = 0.0
        for s in range(0, y.size, batch_size):
            idx = order[s:s + batch_size]
            _, cache = mlp_forward(p, X[idx], "train", rng=rng)
            loss, grads = mlp_backward(p, cache, y[idx])
            opt.step(grads)
            total += loss * idx.size
        trace.append(total / y.size)
    p.config.update({"batch_size": batch_size, "epochs": epochs, "alpha": alpha,
                     "train_seed": p.seed if seed is None else seed})
    return p, trace


def mlp_fit(X, y, hidden=DEFAULT_HIDDEN, dropout: float = DROPOUT, seed: int = 0,
            batch_size: int = BATCH_SIZE, epochs: int = EPOCHS):
    """Initialise, fit input scaling and train. Returns (params, loss trace)."""
    X = np.asarray(X, dtype=np.float64)
    p = mlp_init((X.shape[1], *hidden, 1), seed, dropout)
    fit_input_scaling(p, X)
    return mlp_train(p, X, y, batch_size, epochs)


def mlp_predict(p: MLPParams, X):
    return mlp_forward(p, X, "infer")[0]
