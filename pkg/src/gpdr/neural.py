"""Small feed-forward networks trained by backpropagation.

Two roles: the autoencoder whose bottleneck supplies the teacher latent,
and the standalone decoder used as the reconstruction-error evaluation
model. Training is plain SGD with momentum, fully deterministic under the
config seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 500
    batch_size: int = 32
    learning_rate: float = 0.01
    seed: int = 0
    momentum: float = 0.9

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("TrainConfig values must be positive")


@dataclass
class Mlp:
    weights: list        # W_i of shape (fan_in, fan_out)
    biases: list         # b_i of shape (fan_out,)
    activations: list    # 'tanh' or 'linear' per layer
    bottleneck_index: Optional[int] = None  # layer whose output is the latent
    final_loss: Optional[float] = None

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def forward_all(self, X: np.ndarray) -> list[np.ndarray]:
        """Activations after every layer (input excluded)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.weights[0].shape[0]:
            raise ValueError(
                f"input width {X.shape[1]} != layer size "
                f"{self.weights[0].shape[0]}"
            )
        outs = []
        a = X
        for W, b, act in zip(self.weights, self.biases, self.activations):
            z = a @ W + b
            a = np.tanh(z) if act == "tanh" else z
            outs.append(a)
        return outs

    def forward(self, X: np.ndarray) -> np.ndarray:
        return self.forward_all(X)[-1]


def latent(m: Mlp, X: np.ndarray) -> np.ndarray:
    """Bottleneck activations."""
    if m.bottleneck_index is None:
        raise ValueError("model has no bottleneck layer")
    return m.forward_all(X)[m.bottleneck_index]


def _init_mlp(sizes, activations, bottleneck_index, rng) -> Mlp:
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases, list(activations), bottleneck_index)


def _mse(pred: np.ndarray, Y: np.ndarray) -> float:
    return float(np.mean((pred - Y) ** 2))


def gradients(m: Mlp, X: np.ndarray, Y: np.ndarray):
    """Backprop gradients of the MSE loss w.r.t. every weight and bias."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    acts = m.forward_all(X)
    n_total = Y.size
    delta = 2.0 * (acts[-1] - Y) / n_total
    gw = [None] * len(m.weights)
    gb = [None] * len(m.biases)
    for i in range(len(m.weights) - 1, -1, -1):
        if m.activations[i] == "tanh":
            delta = delta * (1.0 - acts[i] ** 2)
        prev = X if i == 0 else acts[i - 1]
        gw[i] = prev.T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ m.weights[i].T
    return gw, gb


def grad_check(m: Mlp, X: np.ndarray, Y: np.ndarray, step: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences."""
    gw, gb = gradients(m, X, Y)
    worst = 0.0
    params = list(zip(m.weights, gw)) + list(zip(m.biases, gb))
    for arr, grad in params:
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + step
            up = _mse(m.forward(X), Y)
            arr[idx] = orig - step
            down = _mse(m.forward(X), Y)
            arr[idx] = orig
            numeric = (up - down) / (2.0 * step)
            denom = max(1e-8, abs(numeric) + abs(grad[idx]))
            worst = max(worst, abs(numeric - grad[idx]) / denom)
    return worst


def _train(m: Mlp, X: np.ndarray, Y: np.ndarray, cfg: TrainConfig,
           lr: float, rng: np.random.Generator) -> float:
    vel_w = [np.zeros_like(w) for w in m.weights]
    vel_b = [np.zeros_like(b) for b in m.biases]
    n = X.shape[0]
    loss = math.inf
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            gw, gb = gradients(m, X[idx], Y[idx])
            for i in range(len(m.weights)):
                vel_w[i] = cfg.momentum * vel_w[i] - lr * gw[i]
                vel_b[i] = cfg.momentum * vel_b[i] - lr * gb[i]
                m.weights[i] += vel_w[i]
                m.biases[i] += vel_b[i]
        loss = _mse(m.forward(X), Y)
        if not math.isfinite(loss):
            return loss
    return loss


def _fit(sizes, activations, bottleneck_index, X, Y, cfg: TrainConfig) -> Mlp:
    lr = cfg.learning_rate
    for attempt in range(2):
        rng = np.random.default_rng(cfg.seed)
        m = _init_mlp(sizes, activations, bottleneck_index, rng)
        loss = _train(m, X, Y, cfg, lr, rng)
        if math.isfinite(loss):
            m.final_loss = loss
            return m
        lr /= 2.0  # one-time retry on divergence
    raise TrainingError("training diverged even after halving the learning rate")


def hidden_width(k: int, p_out: int) -> int:
    return max(2 * k, math.ceil(p_out / 2))


def train_autoencoder(X: np.ndarray, k: int, cfg: TrainConfig) -> Mlp:
    """Encoder-decoder p' -> h -> k -> h -> p' minimizing reconstruction MSE.

    Hidden layers are tanh; the bottleneck and the output are linear.
    """
    X = np.asarray(X, dtype=np.float64)
    p = X.shape[1]
    if not 0 < k < p:
        raise ValueError(f"need 0 < k < p, got k={k}, p={p}")
    h = hidden_width(k, p)
    return _fit(
        [p, h, k, h, p],
        ["tanh", "linear", "tanh", "linear"],
        bottleneck_index=1,
        X=X, Y=X, cfg=cfg,
    )


def train_decoder(latent_data: np.ndarray, X_target: np.ndarray,
                  cfg: TrainConfig) -> Mlp:
    """Decoder k -> h -> p' minimizing MSE against the target features."""
    L = np.asarray(latent_data, dtype=np.float64)
    Y = np.asarray(X_target, dtype=np.float64)
    if L.shape[0] != Y.shape[0]:
        raise ValueError("latent and target row counts differ")
    h = hidden_width(L.shape[1], Y.shape[1])
    return _fit(
        [L.shape[1], h, Y.shape[1]],
        ["tanh", "linear"],
        bottleneck_index=None,
        X=L, Y=Y, cfg=cfg,
    )
