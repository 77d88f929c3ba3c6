"""ReLU MLP surrogates trained on one-hot encodings with minibatch Adam."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .domain import CategoricalDomain, Point


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for surrogate fitting.

    Defaults are the settings used throughout the experiments: one hidden
    layer of 16 units, Adam at lr 0.01 with betas (0.9, 0.999), 25000 epochs
    of minibatch size 64, squared error, no regularization.
    """

    hidden_sizes: tuple[int, ...] = (16,)
    learning_rate: float = 0.01
    adam_betas: tuple[float, float] = (0.9, 0.999)
    epochs: int = 25000
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ValueError(f"hidden_sizes must be positive, got {self.hidden_sizes}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        b1, b2 = self.adam_betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ValueError(f"adam betas must lie in [0, 1), got {self.adam_betas}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass(frozen=True)
class RewardScaler:
    """Affine map taking observed rewards into [-1, 1] and back."""

    offset: float
    scale: float

    def apply(self, y):
        return (np.asarray(y, dtype=float) - self.offset) / self.scale

    def inverse(self, y):
        return np.asarray(y, dtype=float) * self.scale + self.offset


def fit_scaler(rewards: Sequence[float]) -> RewardScaler:
    """Min/max scaler onto [-1, 1]; constant data maps to all zeros."""
    y = np.asarray(rewards, dtype=float)
    if y.size == 0:
        raise ValueError("cannot fit a scaler to an empty reward list")
    lo, hi = float(y.min()), float(y.max())
    if hi == lo:
        return RewardScaler(offset=lo, scale=1.0)
    return RewardScaler(offset=(hi + lo) / 2.0, scale=(hi - lo) / 2.0)


@dataclass
class Dataset:
    """Observed (point, raw reward) pairs."""

    points: list[Point] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.points) != len(self.rewards):
            raise ValueError("points and rewards must have equal length")

    def __len__(self):
        return len(self.points)

    def add(self, p: Point, r: float) -> None:
        self.points.append(tuple(p))
        self.rewards.append(float(r))


class MLPSurrogate:
    """Fully connected ReLU network with a scalar linear output.

    ``layers`` holds ``(W, b)`` pairs; ``W`` has shape (out, in).  All layers
    but the last apply ReLU.  ``forward`` accepts a single input vector or a
    batch of rows and is well defined on arbitrary real vectors, not just
    one-hot encodings.
    """

    def __init__(self, layers: Sequence[tuple[np.ndarray, np.ndarray]]):
        if not layers:
            raise ValueError("network needs at least one layer")
        self.layers = [(np.array(W, dtype=float), np.array(b, dtype=float)) for W, b in layers]
        for idx, (W, b) in enumerate(self.layers):
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ValueError(f"layer {idx} has inconsistent shapes {W.shape} / {b.shape}")
            if idx > 0 and W.shape[1] != self.layers[idx - 1][0].shape[0]:
                raise ValueError(f"layer {idx} input width does not match layer {idx - 1} output")
        if self.layers[-1][0].shape[0] != 1:
            raise ValueError("output layer must have a single unit")

    @property
    def input_width(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return tuple(W.shape[0] for W, _ in self.layers[:-1])

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Network output; returns scalar shape () for a single vector, (n,) for a batch."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = x[None, :] if single else x
        for W, b in self.layers[:-1]:
            h = np.maximum(h @ W.T + b, 0.0)
        W, b = self.layers[-1]
        out = (h @ W.T + b)[:, 0]
        return out[0] if single else out

    def hidden_activations(self, x: np.ndarray) -> list[np.ndarray]:
        """Post-ReLU activations per hidden layer for a batch of rows."""
        h = np.atleast_2d(np.asarray(x, dtype=float))
        acts = []
        for W, b in self.layers[:-1]:
            h = np.maximum(h @ W.T + b, 0.0)
            acts.append(h)
        return acts


def init_network(input_width: int, hidden_sizes: Sequence[int], rng: np.random.Generator) -> MLPSurrogate:
    """Glorot-uniform weights, zero biases."""
    sizes = [input_width, *hidden_sizes, 1]
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append((W, np.zeros(fan_out)))
    return MLPSurrogate(layers)


def loss_gradient(net: MLPSurrogate, X: np.ndarray, y: np.ndarray):
    """Gradient of mean squared error over the batch, as (dW, db) per layer."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n = X.shape[0]

    acts = [X]
    h = X
    for W, b in net.layers[:-1]:
        h = np.maximum(h @ W.T + b, 0.0)
        acts.append(h)
    W, b = net.layers[-1]
    pred = (h @ W.T + b)[:, 0]

    grads = [None] * len(net.layers)
    delta = (2.0 / n) * (pred - y)[:, None]  # d loss / d output, shape (n, 1)
    for idx in range(len(net.layers) - 1, -1, -1):
        W, _ = net.layers[idx]
        grads[idx] = (delta.T @ acts[idx], delta.sum(axis=0))
        if idx > 0:
            delta = (delta @ W) * (acts[idx] > 0)
    return grads


class _Adam:
    def __init__(self, net: MLPSurrogate, lr: float, betas: tuple[float, float], eps: float = 1e-8):
        self.lr, self.eps = lr, eps
        self.b1, self.b2 = betas
        self.t = 0
        self.m = [(np.zeros_like(W), np.zeros_like(b)) for W, b in net.layers]
        self.v = [(np.zeros_like(W), np.zeros_like(b)) for W, b in net.layers]

    def step(self, net: MLPSurrogate, grads) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for idx, (W, b) in enumerate(net.layers):
            for slot, (param, g) in enumerate(zip((W, b), grads[idx])):
                m = self.m[idx][slot]
                v = self.v[idx][slot]
                m *= self.b1
                m += (1 - self.b1) * g
                v *= self.b2
                v += (1 - self.b2) * g * g
                param -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def encode_dataset(domain: CategoricalDomain, points: Sequence[Point]) -> np.ndarray:
    """Stack one-hot encodings into a float (count, width) design matrix."""
    Z = np.zeros((len(points), domain.width))
    for r, p in enumerate(points):
        Z[r] = domain.encode(p).bits
    return Z


def fit(data: Dataset, cfg: TrainConfig, domain: CategoricalDomain) -> tuple[MLPSurrogate, RewardScaler]:
    """Train a fresh surrogate from scratch on the dataset.

    Weights are re-initialized from ``cfg.seed`` every call, and the same rng
    drives the per-epoch minibatch shuffle, so fitting is fully deterministic
    given (data, cfg).
    """
    if len(data) == 0:
        raise ValueError("cannot fit a surrogate to an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    net = init_network(domain.width, cfg.hidden_sizes, rng)
    scaler = fit_scaler(data.rewards)
    X = encode_dataset(domain, data.points)
    t = scaler.apply(data.rewards)

    opt = _Adam(net, cfg.learning_rate, cfg.adam_betas)
    n = len(data)
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            opt.step(net, loss_gradient(net, X[idx], t[idx]))
    return net, scaler


def predict(net: MLPSurrogate, scaler: RewardScaler, domain: CategoricalDomain, p: Point) -> float:
    """Surrogate prediction in raw reward units."""
    return float(scaler.inverse(net.forward(domain.encode(p).bits)))


def predict_scaled_batch(net: MLPSurrogate, Z: np.ndarray) -> np.ndarray:
    """Network outputs (scaled units) for a matrix of encoded rows."""
    return net.forward(np.atleast_2d(Z))


# -- checkpoints ----------------------------------------------------------


def save_checkpoint(net: MLPSurrogate, scaler: RewardScaler, path) -> None:
    blob = {
        "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in net.layers],
        "scaler": {"offset": scaler.offset, "scale": scaler.scale},
    }
    with open(path, "w") as fh:
        json.dump(blob, fh)
        fh.write("\n")


def load_checkpoint(path) -> tuple[MLPSurrogate, RewardScaler]:
    with open(path) as fh:
        blob = json.load(fh)
    try:
        layers = [(np.array(l["W"], dtype=float), np.array(l["b"], dtype=float)) for l in blob["layers"]]
        scaler = RewardScaler(float(blob["scaler"]["offset"]), float(blob["scaler"]["scale"]))
    except (KeyError, TypeError) as err:
        raise ValueError(f"{path}: malformed checkpoint ({err})") from None
    return MLPSurrogate(layers), scaler
