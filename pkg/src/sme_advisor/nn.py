"""Dense tanh layers, output heads and the minibatch loop.

The single-task MLP and the multi-task model both train through these
functions, so that with one task and one feature the two produce the same
floating-point operations in the same order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ContractError, make_rng, sigmoid, softmax, uniform_init

PROB_CLAMP = 1e-12

# sub-stream ids for make_rng(seed, stream)
INIT_STREAM = 11
SHUFFLE_STREAM = 12
ATTENTION_STREAM = 13


class TrainingDiverged(FloatingPointError):
    """Raised when a training loss becomes NaN or infinite."""


def init_dense(rng: np.random.Generator, d: int, hidden: int, n_out: int) -> dict[str, np.ndarray]:
    """Trunk ``W`` (hidden x d) then head ``V`` (n_out x hidden); zero biases."""
    W = uniform_init(rng, (hidden, d), d)
    V = uniform_init(rng, (n_out, hidden), hidden)
    return {"W": W, "b": np.zeros(hidden), "V": V, "c": np.zeros(n_out)}


def trunk_forward(X: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.tanh(X @ W.T + b)


def head_logits(H: np.ndarray, V: np.ndarray, c: np.ndarray) -> np.ndarray:
    return H @ V.T + c


def head_output(kind: str, Z: np.ndarray) -> np.ndarray:
    """Regression value, sigmoid probability (n,) or softmax rows (n, 3)."""
    if kind == "regression":
        return Z[:, 0]
    if kind == "binary":
        return sigmoid(Z[:, 0])
    return softmax(Z, axis=1)


def task_loss(kind: str, pred: np.ndarray, y: np.ndarray) -> float:
    """Mean per-instance loss of one task's predictions.

    Squared error for regression, logistic loss for binary heads and
    categorical cross-entropy (``y`` holds class indices) for exclusive heads.
    Probabilities are clamped to ``[1e-12, 1 - 1e-12]`` before the log.
    """
    if kind == "regression":
        r = pred - y
        return float(np.mean(r * r))
    if kind == "binary":
        p = np.clip(pred, PROB_CLAMP, 1.0 - PROB_CLAMP)
        return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
    p = np.clip(pred[np.arange(len(y)), y.astype(np.int64)], PROB_CLAMP, 1.0)
    return float(-np.mean(np.log(p)))


def head_grad(kind: str, Z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of the mean task loss with respect to the logits ``Z``."""
    n = Z.shape[0]
    if kind == "regression":
        return (2.0 / n) * (Z - y[:, None])
    if kind == "binary":
        return (sigmoid(Z) - y[:, None]) / n
    P = softmax(Z, axis=1)
    P[np.arange(n), y.astype(np.int64)] -= 1.0
    return P / n


@dataclass(frozen=True)
class TargetScaler:
    """Regression targets are trained in standardized units."""

    mean: float = 0.0
    scale: float = 1.0

    @classmethod
    def fit(cls, kind: str, y: np.ndarray) -> "TargetScaler":
        if kind != "regression":
            return cls()
        std = float(np.std(y))
        return cls(float(np.mean(y)), std if std > 0 else 1.0)

    def encode(self, y: np.ndarray) -> np.ndarray:
        return (y - self.mean) / self.scale

    def decode(self, v: np.ndarray) -> np.ndarray:
        return v * self.scale + self.mean


def check_targets(kind: str, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ContractError(f"targets must be 1-D, got shape {y.shape}")
    if kind == "binary" and not np.all((y == 0) | (y == 1)):
        raise ContractError("binary targets must be 0 or 1")
    if kind == "exclusive3" and not np.all(np.isin(y, (0, 1, 2))):
        raise ContractError("exclusive3 targets must be class indices 0, 1 or 2")
    if not np.all(np.isfinite(y)):
        raise ContractError("targets contain non-finite values")
    return y


def minibatches(m: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(m)
    for start in range(0, m, batch_size):
        yield perm[start:start + batch_size]


def check_finite(loss: float, epoch: int, what: str = "training loss") -> float:
    if not np.isfinite(loss):
        raise TrainingDiverged(f"{what} became non-finite at epoch {epoch}")
    return loss


def shuffle_rng(seed: int) -> np.random.Generator:
    return make_rng(seed, SHUFFLE_STREAM)


def init_rng(seed: int) -> np.random.Generator:
    return make_rng(seed, INIT_STREAM)
