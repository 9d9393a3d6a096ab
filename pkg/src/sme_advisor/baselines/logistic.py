"""Binary logistic regression trained by full-batch gradient descent."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numerics import ContractError, as_matrix, sigmoid
from ..nn import check_finite
from .config import TrainConfig


@dataclass
class LogisticModel:
    w: np.ndarray
    b: float = 0.0
    threshold: float = 0.5
    loss_trace: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ContractError("threshold must lie strictly between 0 and 1")

    def predict_proba(self, X) -> np.ndarray:
        X = as_matrix(X, "X")
        if X.shape[1] != self.w.size:
            raise ContractError(f"expected {self.w.size} features, got {X.shape[1]}")
        return sigmoid(X @ self.w + self.b)

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) > self.threshold).astype(np.int64)

    def to_json(self) -> dict:
        return {"weights": self.w.tolist(), "bias": self.b, "threshold": self.threshold}

    @classmethod
    def from_json(cls, doc: dict) -> "LogisticModel":
        return cls(np.asarray(doc["weights"], dtype=np.float64), float(doc["bias"]), float(doc["threshold"]))


def logistic_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float) -> float:
    z = X @ w + b
    # log(1 + e^z) - y z, the logistic loss written on logits
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + l2 * np.dot(w, w))


def logistic_gradient(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float) -> tuple[np.ndarray, float]:
    r = sigmoid(X @ w + b) - y
    return X.T @ r / len(y) + 2.0 * l2 * w, float(np.mean(r))


def train_logistic(X, y, cfg: TrainConfig = TrainConfig()) -> LogisticModel:
    """Fit ``sigmoid(w.x + b)`` to 0/1 labels.

    Minimizes mean logistic loss plus ``l2 * |w|^2`` from a zero start. The
    step is capped at ``1/L`` for the loss's gradient Lipschitz bound ``L``, so
    every iteration decreases the objective.
    """
    X = as_matrix(X, "X")
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] < 1 or y.shape != (X.shape[0],):
        raise ContractError("X and y must describe the same m >= 1 instances")
    if not np.all((y == 0) | (y == 1)):
        raise ContractError("logistic labels must be 0 or 1")
    m, d = X.shape
    lipschitz = (np.linalg.norm(X, 2) ** 2 + m) / (4.0 * m) + 2.0 * cfg.l2
    lr = min(cfg.learning_rate, 1.0 / lipschitz)

    w, b = np.zeros(d), 0.0
    trace = [logistic_objective(w, b, X, y, cfg.l2)]
    for epoch in range(1, cfg.epochs + 1):
        gw, gb = logistic_gradient(w, b, X, y, cfg.l2)
        w = w - lr * gw
        b = b - lr * gb
        trace.append(check_finite(logistic_objective(w, b, X, y, cfg.l2), epoch))
    return LogisticModel(w, b, loss_trace=trace)


def predict_logistic(model: LogisticModel, x) -> tuple[float, int]:
    """Probability of class 1 and the thresholded class (ties go to 0)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.w.shape:
        raise ContractError(f"expected {model.w.size} features, got {x.size}")
    p = float(sigmoid(float(np.dot(model.w, x)) + model.b))
    return p, int(p > model.threshold)
