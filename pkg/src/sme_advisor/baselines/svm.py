"""Linear SVMs trained in the primal by subgradient descent.

``train_svm`` is the hinge-loss classifier; ``train_svr`` is its
epsilon-insensitive regression counterpart, used where a task is scored by
RMSE.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import nn
from ..numerics import ContractError, as_matrix
from .config import SvmConfig


def svm_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, C: float) -> float:
    hinge = np.maximum(0.0, 1.0 - y * (X @ w + b))
    return float(np.mean(hinge) + np.dot(w, w) / (2.0 * C))


def svr_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, C: float, epsilon: float) -> float:
    slack = np.maximum(0.0, np.abs(X @ w + b - y) - epsilon)
    return float(np.mean(slack) + np.dot(w, w) / (2.0 * C))


@dataclass
class SvmModel:
    w: np.ndarray
    b: float
    C: float
    loss_trace: list[float] = field(default_factory=list, repr=False)

    def decision_function(self, X) -> np.ndarray:
        X = as_matrix(X, "X")
        if X.shape[1] != self.w.size:
            raise ContractError(f"expected {self.w.size} features, got {X.shape[1]}")
        return X @ self.w + self.b

    def predict(self, X) -> np.ndarray:
        """Labels in {-1, +1}; a zero score counts as -1."""
        return np.where(self.decision_function(X) > 0, 1, -1)

    def to_json(self) -> dict:
        return {"weights": self.w.tolist(), "bias": self.b, "C": self.C}

    @classmethod
    def from_json(cls, doc: dict) -> "SvmModel":
        return cls(np.asarray(doc["weights"], dtype=np.float64), float(doc["bias"]), float(doc["C"]))


@dataclass
class SvrModel:
    w: np.ndarray
    b: float
    C: float
    epsilon: float
    target: nn.TargetScaler = nn.TargetScaler()
    loss_trace: list[float] = field(default_factory=list, repr=False)

    def predict(self, X) -> np.ndarray:
        X = as_matrix(X, "X")
        if X.shape[1] != self.w.size:
            raise ContractError(f"expected {self.w.size} features, got {X.shape[1]}")
        return self.target.decode(X @ self.w + self.b)

    def to_json(self) -> dict:
        return {"weights": self.w.tolist(), "bias": self.b, "C": self.C, "epsilon": self.epsilon,
                "target": {"mean": self.target.mean, "scale": self.target.scale}}

    @classmethod
    def from_json(cls, doc: dict) -> "SvrModel":
        return cls(np.asarray(doc["weights"], dtype=np.float64), float(doc["bias"]), float(doc["C"]),
                   float(doc["epsilon"]), nn.TargetScaler(**doc["target"]))


def _subgradient_descent(objective, subgradient, d: int, cfg: SvmConfig):
    """Steps of size ``lr / sqrt(t)`` from zero; returns the best iterate seen."""
    w, b = np.zeros(d), 0.0
    best = (objective(w, b), w, b)
    trace = [best[0]]
    for t in range(1, cfg.epochs + 1):
        gw, gb = subgradient(w, b)
        step = cfg.learning_rate / np.sqrt(t)
        w, b = w - step * gw, b - step * gb
        value = nn.check_finite(objective(w, b), t, "SVM objective")
        trace.append(value)
        if value < best[0]:
            best = (value, w, b)
    return best[1], best[2], trace


def train_svm(X, y, cfg: SvmConfig = SvmConfig()) -> SvmModel:
    """Minimize ``mean(hinge(1 - y(w.x + b))) + |w|^2 / (2C)`` for y in {-1, +1}."""
    X = as_matrix(X, "X")
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (X.shape[0],):
        raise ContractError("X and y must describe the same instances")
    if not np.all((y == 1) | (y == -1)):
        raise ContractError("SVM labels must be -1 or +1")
    m = len(y)

    def subgradient(w, b):
        active = y * (X @ w + b) < 1.0
        ya = y[active]
        return -(X[active].T @ ya) / m + w / cfg.C, -float(np.sum(ya)) / m

    w, b, trace = _subgradient_descent(lambda w, b: svm_objective(w, b, X, y, cfg.C), subgradient, X.shape[1], cfg)
    return SvmModel(w, b, cfg.C, loss_trace=trace)


def train_svr(X, targets, cfg: SvmConfig = SvmConfig()) -> SvrModel:
    """Epsilon-insensitive linear regression on standardized targets."""
    X = as_matrix(X, "X")
    y_raw = nn.check_targets("regression", targets)
    if y_raw.shape != (X.shape[0],):
        raise ContractError("X and targets must describe the same instances")
    target = nn.TargetScaler.fit("regression", y_raw)
    y = target.encode(y_raw)
    m = len(y)

    def subgradient(w, b):
        r = X @ w + b - y
        s = np.where(np.abs(r) > cfg.epsilon, np.sign(r), 0.0)
        return X.T @ s / m + w / cfg.C, float(np.sum(s)) / m

    w, b, trace = _subgradient_descent(
        lambda w, b: svr_objective(w, b, X, y, cfg.C, cfg.epsilon), subgradient, X.shape[1], cfg
    )
    return SvrModel(w, b, cfg.C, cfg.epsilon, target, loss_trace=trace)


@dataclass
class OneVsRestSvm:
    """One binary SVM per class; the highest score wins (ties to the lower class)."""

    models: list[SvmModel]

    def scores(self, X) -> np.ndarray:
        return np.column_stack([mdl.decision_function(X) for mdl in self.models])

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.scores(X), axis=1)

    def to_json(self) -> dict:
        return {"models": [mdl.to_json() for mdl in self.models]}

    @classmethod
    def from_json(cls, doc: dict) -> "OneVsRestSvm":
        return cls([SvmModel.from_json(d) for d in doc["models"]])


def train_svm_ovr(X, classes, n_classes: int = 3, cfg: SvmConfig = SvmConfig()) -> OneVsRestSvm:
    classes = np.asarray(classes)
    if not np.all(np.isin(classes, np.arange(n_classes))):
        raise ContractError(f"class indices must lie in 0..{n_classes - 1}")
    return OneVsRestSvm([train_svm(X, np.where(classes == k, 1.0, -1.0), cfg) for k in range(n_classes)])
