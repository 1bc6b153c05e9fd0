"""Time-axis convolutional network over log-CQT spectrograms.

Frequency bins are input channels; activations are laid out (batch, time,
channels). Each conv layer is a valid 1-D convolution along time, ReLU and
a temporal max-pool. Global pooling emits per-channel mean, max, l2-norm
and standard deviation, followed by dense ReLU layers with dropout and a
2-way softmax (class 1 = good).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import modelfile
from .adam import Adam
from .linear import TrainingError

PATCH_FRAMES = 431
N_PATCHES = 3
BATCH_SIZE = 64
EPOCHS = 14
STD_EPS = 1e-8

PROFILES = {
    "paper": {"filters": (1024, 1024, 2048, 2048), "dense": (2048, 2048)},
    "desk": {"filters": (32, 32, 64, 64), "dense": (128, 128)},
    "micro": {"filters": (2, 2, 2, 2), "dense": (4, 4)},
}
FILTER_LENGTHS = (4, 4, 4, 3)
POOLS = (8, 2, 2, 1)
DROPOUT = 0.5


@dataclass
class CNNParams:
    n_bins: int
    filters: tuple[int, ...]
    lengths: tuple[int, ...]
    pools: tuple[int, ...]
    dense: tuple[int, ...]
    dropout: float
    seed: int
    conv_w: list[np.ndarray]  # (K, C_in, C_out)
    conv_b: list[np.ndarray]
    dense_w: list[np.ndarray]  # includes the 2-way output layer last
    dense_b: list[np.ndarray]
    in_mean: np.ndarray = None
    in_scale: np.ndarray = None
    profile: str = ""
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.in_mean is None:
            self.in_mean = np.zeros(self.n_bins)
        if self.in_scale is None:
            self.in_scale = np.ones(self.n_bins)

    def trainable(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.conv_w, self.conv_b):
            out += [w, b]
        for w, b in zip(self.dense_w, self.dense_b):
            out += [w, b]
        return out

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        out = [("in_mean", self.in_mean), ("in_scale", self.in_scale)]
        for i, (w, b) in enumerate(zip(self.conv_w, self.conv_b)):
            out += [(f"conv{i}.W", w), (f"conv{i}.b", b)]
        for i, (w, b) in enumerate(zip(self.dense_w, self.dense_b)):
            out += [(f"dense{i}.W", w), (f"dense{i}.b", b)]
        return out

    def min_frames(self) -> int:
        return min_valid_length(self.lengths, self.pools)

    def to_bytes(self) -> bytes:
        header = {"kind": "cnn", "profile": self.profile, "n_bins": self.n_bins,
                  "filters": list(self.filters), "lengths": list(self.lengths),
                  "pools": list(self.pools), "dense": list(self.dense),
                  "dropout": self.dropout, "seed": self.seed, "config": self.config}
        return modelfile.dumps(header, self.arrays())

    @classmethod
    def from_header(cls, h: dict, a: dict) -> "CNNParams":
        nc, nd = len(h["filters"]), len(h["dense"]) + 1
        return cls(h["n_bins"], tuple(h["filters"]), tuple(h["lengths"]), tuple(h["pools"]),
                   tuple(h["dense"]), h["dropout"], h["seed"],
                   [a[f"conv{i}.W"] for i in range(nc)], [a[f"conv{i}.b"] for i in range(nc)],
                   [a[f"dense{i}.W"] for i in range(nd)], [a[f"dense{i}.b"] for i in range(nd)],
                   a["in_mean"], a["in_scale"], h.get("profile", ""), h.get("config", {}))


def min_valid_length(lengths, pools) -> int:
    """Smallest input length that leaves one frame after every conv and pool."""
    t = 1
    for k, p in zip(reversed(lengths), reversed(pools)):
        t = t * p + k - 1
    return t


def cnn_init(n_bins: int = 100, profile: str = "desk", seed: int = 0,
             filters=None, dense=None, lengths=FILTER_LENGTHS, pools=POOLS,
             dropout: float = DROPOUT) -> CNNParams:
    """He-uniform conv/dense ReLU layers, zero biases, symmetric Glorot-uniform output layer."""
    prof = PROFILES[profile]
    filters = tuple(filters or prof["filters"])
    dense = tuple(dense or prof["dense"])
    if not (len(filters) == len(lengths) == len(pools)):
        raise ValueError("filters, lengths and pools must have equal length")
    if not 0 <= dropout < 1:
        raise ValueError("dropout must be in [0, 1)")
    rng = np.random.default_rng(seed)
    conv_w, conv_b = [], []
    c_in = n_bins
    for c_out, k in zip(filters, lengths):
        lim = np.sqrt(6.0 / (k * c_in))
        conv_w.append(rng.uniform(-lim, lim, size=(k, c_in, c_out)))
        conv_b.append(np.zeros(c_out))
        c_in = c_out
    dense_w, dense_b = [], []
    d_in = 4 * c_in
    for d_out in dense:
        lim = np.sqrt(6.0 / d_in)
        dense_w.append(rng.uniform(-lim, lim, size=(d_in, d_out)))
        dense_b.append(np.zeros(d_out))
        d_in = d_out
    # both output columns share one Glorot draw, so an untrained net says 0.5
    lim = np.sqrt(6.0 / (d_in + 2))
    dense_w.append(np.repeat(rng.uniform(-lim, lim, size=(d_in, 1)), 2, axis=1))
    dense_b.append(np.zeros(2))
    return CNNParams(n_bins, filters, tuple(lengths), tuple(pools), dense, dropout, seed,
                     conv_w, conv_b, dense_w, dense_b, profile=profile)


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(B, T, C) -> (B, T-k+1, k*C) view."""
    b, t, c = x.shape
    s = x.strides
    return np.lib.stride_tricks.as_strided(x, (b, t - k + 1, k, c), (s[0], s[1], s[1], s[2]),
                                           writeable=False).reshape(b, t - k + 1, k * c)


def conv1d_forward(x, w, b):
    k, c_in, c_out = w.shape
    x = np.ascontiguousarray(x)
    cols = _im2col(x, k)
    return cols @ w.reshape(k * c_in, c_out) + b, cols


def conv1d_backward(dout, cols, w, x_shape):
    k, c_in, c_out = w.shape
    dw = np.tensordot(cols, dout, axes=([0, 1], [0, 1])).reshape(k, c_in, c_out)
    db = dout.sum(axis=(0, 1))
    dcols = (dout @ w.reshape(k * c_in, c_out).T).reshape(dout.shape[0], dout.shape[1], k, c_in)
    dx = np.zeros(x_shape)
    t_out = dout.shape[1]
    for j in range(k):
        dx[:, j:j + t_out, :] += dcols[:, :, j, :]
    return dx, dw, db


def maxpool_forward(x, p: int):
    if p == 1:
        return x, None
    b, t, c = x.shape
    t_out = t // p
    blocks = x[:, :t_out * p].reshape(b, t_out, p, c)
    arg = blocks.argmax(axis=2)
    return np.take_along_axis(blocks, arg[:, :, None, :], axis=2)[:, :, 0, :], (arg, x.shape)


def maxpool_backward(dout, cache, p: int):
    if p == 1:
        return dout
    arg, shape = cache
    b, t_out, c = dout.shape
    blocks = np.zeros((b, t_out, p, c))
    np.put_along_axis(blocks, arg[:, :, None, :], dout[:, :, None, :], axis=2)
    dx = np.zeros(shape)
    dx[:, :t_out * p] = blocks.reshape(b, t_out * p, c)
    return dx


def global_pool_forward(x):
    """(B, T, C) -> (B, 4C): [mean | max | l2 | std] per channel."""
    t = x.shape[1]
    mean = x.mean(axis=1)
    arg = x.argmax(axis=1)
    mx = np.take_along_axis(x, arg[:, None, :], axis=1)[:, 0, :]
    l2 = np.sqrt((x * x).sum(axis=1))
    centered = x - mean[:, None, :]
    std = np.sqrt((centered ** 2).mean(axis=1) + STD_EPS)
    cache = (x, mean, arg, l2, centered, std, t)
    return np.concatenate([mean, mx, l2, std], axis=1), cache


def global_pool_backward(dout, cache):
    x, mean, arg, l2, centered, std, t = cache
    c = x.shape[2]
    dm, dmax, dl2, dstd = (dout[:, i * c:(i + 1) * c] for i in range(4))
    dx = np.broadcast_to(dm[:, None, :] / t, x.shape).copy()
    np.put_along_axis(dx, arg[:, None, :],
                      np.take_along_axis(dx, arg[:, None, :], axis=1) + dmax[:, None, :], axis=1)
    safe = np.where(l2 > 0, l2, 1.0)
    dx += np.where(l2 > 0, dl2 / safe, 0.0)[:, None, :] * x
    dx += (dstd / (t * std))[:, None, :] * centered
    return dx


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# network
# ---------------------------------------------------------------------------


def _prepare(p: CNNParams, specs) -> np.ndarray:
    """Stack F x N spectrograms into a standardized (B, T, F) batch.

    Inputs shorter than the network's minimum length are zero-padded on the
    right (before standardization, so padding reads as silence).
    """
    if isinstance(specs, np.ndarray):
        specs = [specs] if specs.ndim == 2 else list(specs)
    specs = [np.asarray(s, dtype=np.float64) for s in specs]
    if not specs:
        raise ValueError("empty batch")
    for s in specs:
        if s.ndim != 2 or s.shape[0] != p.n_bins:
            raise ValueError(f"expected {p.n_bins} x N spectrogram, got {s.shape}")
    if len({s.shape[1] for s in specs}) > 1:
        raise ValueError("batched spectrograms must share a length")
    n = max(specs[0].shape[1], p.min_frames())
    out = np.zeros((len(specs), n, p.n_bins))
    for i, s in enumerate(specs):
        out[i, :s.shape[1]] = s.T
    return (out - p.in_mean) / p.in_scale


def dropout_masks(p: CNNParams, batch: int, rng) -> list[np.ndarray]:
    keep = 1.0 - p.dropout
    return [(rng.random((batch, d)) < keep) / keep for d in p.dense]


def cnn_forward(p: CNNParams, specs, mode: str = "infer", rng=None, masks=None):
    """Class probabilities (B, 2) for a batch of F x N spectrograms, plus caches."""
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = _prepare(p, specs)
    caches = {"conv": [], "pool": [], "relu": [], "dense_in": [], "dense_pre": []}
    h = x
    for w, b, pool in zip(p.conv_w, p.conv_b, p.pools):
        z, cols = conv1d_forward(h, w, b)
        caches["conv"].append((cols, h.shape))
        caches["relu"].append(z > 0)
        h, pc = maxpool_forward(np.maximum(z, 0.0), pool)
        caches["pool"].append(pc)
    h, caches["global"] = global_pool_forward(h)
    if mode == "train" and masks is None and p.dropout > 0:
        masks = dropout_masks(p, h.shape[0], rng if rng is not None else np.random.default_rng(p.seed))
    if mode == "infer":
        masks = None
    for i, (w, b) in enumerate(zip(p.dense_w[:-1], p.dense_b[:-1])):
        caches["dense_in"].append(h)
        z = h @ w + b
        caches["dense_pre"].append(z)
        h = np.maximum(z, 0.0)
        if masks is not None:
            h = h * masks[i]
    caches["dense_in"].append(h)
    logits = h @ p.dense_w[-1] + p.dense_b[-1]
    caches["logits"] = logits
    caches["masks"] = masks
    return softmax(logits), caches


def cross_entropy(logits, y) -> float:
    y = np.asarray(y, dtype=np.int64)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(y.size), y].mean())


def cnn_backward(p: CNNParams, caches, y):
    """(mean CE loss, grads) with grads ordered like ``p.trainable()``."""
    y = np.asarray(y, dtype=np.int64).ravel()
    logits = caches["logits"]
    loss = cross_entropy(logits, y)
    d = softmax(logits)
    d[np.arange(y.size), y] -= 1.0
    d /= y.size
    masks = caches["masks"]
    dense_grads = []
    n_dense = len(p.dense_w)
    for i in range(n_dense - 1, -1, -1):
        h_in = caches["dense_in"][i]
        dense_grads.append((h_in.T @ d, d.sum(axis=0)))
        d = d @ p.dense_w[i].T
        if i > 0:
            if masks is not None:
                d = d * masks[i - 1]
            d = d * (caches["dense_pre"][i - 1] > 0)
    dense_grads.reverse()
    d = global_pool_backward(d, caches["global"])
    conv_grads = []
    for i in range(len(p.conv_w) - 1, -1, -1):
        d = maxpool_backward(d, caches["pool"][i], p.pools[i])
        d = d * caches["relu"][i]
        cols, x_shape = caches["conv"][i]
        d, dw, db = conv1d_backward(d, cols, p.conv_w[i], x_shape)
        conv_grads.append((dw, db))
    conv_grads.reverse()
    grads = [g for pair in conv_grads for g in pair] + [g for pair in dense_grads for g in pair]
    return loss, grads


def cnn_loss(p: CNNParams, specs, y, masks=None) -> float:
    _, c = cnn_forward(p, specs, "train" if masks is not None else "infer", masks=masks)
    return cross_entropy(c["logits"], y)


# ---------------------------------------------------------------------------
# data, training, inference
# ---------------------------------------------------------------------------


@dataclass
class SpectrogramPatch:
    values: np.ndarray  # F x PATCH_FRAMES
    ad_id: str
    offset: int


def cqt_patch_sample(spec: np.ndarray, count: int = N_PATCHES, seed: int = 0, ad_id: str = "",
                     frames: int = PATCH_FRAMES) -> list[SpectrogramPatch]:
    """``count`` patches of ``frames`` columns at uniform random offsets.

    Spectrograms shorter than a patch are zero-padded on the right; every
    patch then starts at offset 0.
    """
    spec = np.asarray(spec, dtype=np.float64)
    n = spec.shape[1]
    if n < frames:
        spec = np.pad(spec, ((0, 0), (0, frames - n)))
        n = frames
    rng = np.random.default_rng(seed)
    offsets = rng.integers(0, n - frames + 1, size=count)
    return [SpectrogramPatch(spec[:, o:o + frames].copy(), ad_id, int(o)) for o in offsets]


def fit_input_scaling(p: CNNParams, patches) -> None:
    """Per-frequency-bin mean and std over all frames of the training patches."""
    stack = np.concatenate([np.asarray(s, dtype=np.float64) for s in patches], axis=1)
    mean = stack.mean(axis=1)
    std = stack.std(axis=1)
    p.in_mean = mean
    p.in_scale = np.where(std > 1e-12, std, 1.0)


def cnn_train(p: CNNParams, patches, labels, epochs: int = EPOCHS, batch_size: int = BATCH_SIZE,
              seed: int | None = None, alpha: float = 1e-3, fit_scaling: bool = True):
    """Minibatch Adam on cross-entropy. ``patches`` are equal-length F x N arrays.

    Returns (p, per-epoch mean training loss).
    """
    X = np.stack([np.asarray(getattr(s, "values", s), dtype=np.float64) for s in patches])
    y = np.asarray(labels, dtype=np.int64).ravel()
    if y.size != X.shape[0]:
        raise ValueError("patches and labels disagree in count")
    if np.unique(y).size < 2:
        raise TrainingError("training needs both classes present")
    if fit_scaling:
        fit_input_scaling(p, list(X))
    rng = np.random.default_rng(p.seed if seed is None else seed)
    opt = Adam(p.trainable(), alpha=alpha)
    trace = []
    for _ in range(epochs):
        order = rng.permutation(y.size)
        total = 0.0
        for s in range(0, y.size, batch_size):
            idx = order[s:s + batch_size]
            _, caches = cnn_forward(p, X[idx], "train", rng=rng)
            loss, grads = cnn_backward(p, caches, y[idx])
            opt.step(grads)
            total += loss * idx.size
        trace.append(total / y.size)
    p.config.update({"epochs": epochs, "batch_size": batch_size, "alpha": alpha,
                     "train_seed": p.seed if seed is None else seed})
    return p, trace


def cnn_predict_ad(p: CNNParams, spec: np.ndarray) -> float:
    """P(good) from one forward pass over the full-length spectrogram."""
    probs, _ = cnn_forward(p, [np.asarray(spec, dtype=np.float64)], "infer")
    return float(probs[0, 1])


def cnn_predict_patches(p: CNNParams, spec: np.ndarray, count: int = N_PATCHES, seed: int = 0) -> float:
    patches = cqt_patch_sample(spec, count, seed)
    probs, _ = cnn_forward(p, [q.values for q in patches], "infer")
    return float(probs[:, 1].mean())
