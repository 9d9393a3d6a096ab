"""Single-task one-hidden-layer network: ``head(V tanh(W x + b) + c)``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import nn
from ..numerics import ContractError, as_matrix
from .config import TrainConfig


@dataclass
class MlpModel:
    W: np.ndarray
    b: np.ndarray
    V: np.ndarray
    c: np.ndarray
    head_kind: str
    target: nn.TargetScaler = nn.TargetScaler()
    activation: str = "tanh"
    loss_trace: list[float] = field(default_factory=list, repr=False)

    def params(self) -> dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b, "V": self.V, "c": self.c}

    def predict(self, X) -> np.ndarray:
        """Raw-unit values, P(y=1) or (n, 3) class probabilities by head kind."""
        X = as_matrix(X, "X")
        if X.shape[1] != self.W.shape[1]:
            raise ContractError(f"expected {self.W.shape[1]} features, got {X.shape[1]}")
        Z = nn.head_logits(nn.trunk_forward(X, self.W, self.b), self.V, self.c)
        out = nn.head_output(self.head_kind, Z)
        return self.target.decode(out) if self.head_kind == "regression" else out

    def predict_class(self, X) -> np.ndarray:
        out = self.predict(X)
        if self.head_kind == "binary":
            return (out > 0.5).astype(np.int64)
        if self.head_kind == "exclusive3":
            return np.argmax(out, axis=1)
        raise ContractError("regression heads have no classes")

    def to_json(self) -> dict:
        return {
            "weights": {"W": self.W.tolist(), "V": self.V.tolist()},
            "bias": {"b": self.b.tolist(), "c": self.c.tolist()},
            "head_kind": self.head_kind,
            "activation": self.activation,
            "target": {"mean": self.target.mean, "scale": self.target.scale},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MlpModel":
        arr = lambda v: np.asarray(v, dtype=np.float64)  # noqa: E731
        return cls(
            W=arr(doc["weights"]["W"]), b=arr(doc["bias"]["b"]),
            V=arr(doc["weights"]["V"]), c=arr(doc["bias"]["c"]),
            head_kind=doc["head_kind"], activation=doc.get("activation", "tanh"),
            target=nn.TargetScaler(**doc["target"]),
        )


def mlp_objective(params: dict[str, np.ndarray], X: np.ndarray, y: np.ndarray,
                  head_kind: str, l2: float) -> tuple[float, dict[str, np.ndarray]]:
    """Mean task loss plus weight decay, and its gradient.

    ``y`` is in training units (standardized values for regression).
    """
    W, b, V, c = params["W"], params["b"], params["V"], params["c"]
    H = nn.trunk_forward(X, W, b)
    Z = nn.head_logits(H, V, c)
    loss = nn.task_loss(head_kind, nn.head_output(head_kind, Z), y)
    if l2:
        loss = loss + l2 * (float(np.sum(W * W)) + float(np.sum(V * V)))

    dZ = nn.head_grad(head_kind, Z, y)
    dV = dZ.T @ H
    dc = dZ.sum(axis=0)
    dpre = (dZ @ V) * (1.0 - H * H)
    dW = dpre.T @ X
    db = dpre.sum(axis=0)
    if l2:
        dW = dW + 2.0 * l2 * W
        dV = dV + 2.0 * l2 * V
    return loss, {"W": dW, "b": db, "V": dV, "c": dc}


def train_mlp_single(X, targets, head_kind: str, cfg: TrainConfig = TrainConfig()) -> tuple[MlpModel, list[float]]:
    """Minibatch gradient descent on one task.

    Returns the model and the loss trace: entry 0 is the full-data objective
    at initialization, entry ``e`` the objective after epoch ``e``.
    """
    X = as_matrix(X, "X")
    y_raw = nn.check_targets(head_kind, targets)
    if y_raw.shape[0] != X.shape[0]:
        raise ContractError(f"{X.shape[0]} instances but {y_raw.shape[0]} targets")
    target = nn.TargetScaler.fit(head_kind, y_raw)
    y = target.encode(y_raw) if head_kind == "regression" else y_raw
    m, d = X.shape
    n_out = 3 if head_kind == "exclusive3" else 1

    params = nn.init_dense(nn.init_rng(cfg.seed), d, cfg.hidden_units, n_out)
    shuffler = nn.shuffle_rng(cfg.seed)
    lr = cfg.learning_rate

    trace = [nn.check_finite(mlp_objective(params, X, y, head_kind, cfg.l2)[0], 0)]
    for epoch in range(1, cfg.epochs + 1):
        for idx in nn.minibatches(m, cfg.batch_size, shuffler):
            _, grads = mlp_objective(params, X[idx], y[idx], head_kind, cfg.l2)
            for k in ("W", "b", "V", "c"):
                params[k] = params[k] - lr * grads[k]
        trace.append(nn.check_finite(mlp_objective(params, X, y, head_kind, cfg.l2)[0], epoch))

    model = MlpModel(params["W"], params["b"], params["V"], params["c"], head_kind, target, loss_trace=trace)
    return model, trace
