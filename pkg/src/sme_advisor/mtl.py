"""Multi-task network with per-task attention over the shared feature pool.

Every task ``t`` owns

* an additive attention scorer ``(A_t, u_t, q_t)``: feature ``j`` is lifted to
  the embedding ``x_j * A_t[j] + q_t[j]``, scored
  ``s_j = u_t . tanh(x_j * A_t[j] + q_t[j])`` and the weights are
  ``alpha_t = softmax(s)``. The offset ``q_t[j]`` starts at zero and lets a
  feature earn weight whatever the sign of its value;
* a tanh trunk ``(W_t, b_t)`` applied to the gated input ``d * alpha_t * x``
  (the factor ``d`` makes uniform attention an exact identity);
* a head: identity (regression), sigmoid (binary) or softmax over
  Low/Medium/High (exclusive3).

Trunks are soft-shared: the objective adds ``lambda_share`` times the summed
pairwise squared Frobenius distance between task trunks (weights and
biases). Training takes the penalty through its closed-form proximal step,
which stays stable for any ``lambda_share``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import nn
from .baselines.config import TrainConfig
from .dataset import Dataset, StandardizeParams, TaskSpec, default_tasks, fit_standardize
from .numerics import ContractError, as_matrix, make_rng, softmax, uniform_init


@dataclass(frozen=True)
class MtlConfig(TrainConfig):
    lambda_share: float = 0.1
    attention_dim: int = 8
    attention_init: float = 0.1
    task_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        super().__post_init__()
        if self.lambda_share < 0:
            raise ContractError("lambda_share must be non-negative")
        if self.attention_dim < 1:
            raise ContractError("attention_dim must be at least 1")
        if self.attention_init < 0:
            raise ContractError("attention_init must be non-negative")

    def to_json(self) -> dict:
        doc = asdict(self)
        if doc["task_weights"] is not None:
            doc["task_weights"] = list(doc["task_weights"])
        return doc


@dataclass(frozen=True)
class LossBreakdown:
    task_losses: dict[str, float]
    sharing_penalty: float
    weight_decay: float
    total: float


@dataclass
class MtlModel:
    tasks: tuple[TaskSpec, ...]
    A: np.ndarray  # (T, d, k) attention embeddings
    u: np.ndarray  # (T, k) attention scoring vectors
    q: np.ndarray  # (T, d, k) per-feature score offsets
    W: np.ndarray  # (T, h, d) trunk weights
    b: np.ndarray  # (T, h) trunk biases
    V: list[np.ndarray]  # per-task head weights (n_out, h)
    c: list[np.ndarray]  # per-task head biases (n_out,)
    lambda_share: float = 0.1
    task_weights: np.ndarray | None = None
    targets: list[nn.TargetScaler] | None = None
    input_scaler: StandardizeParams | None = None
    feature_names: tuple[str, ...] = ()
    loss_trace: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        T = len(self.tasks)
        if not (self.A.shape[0] == self.W.shape[0] == len(self.V) == len(self.c) == T):
            raise ContractError("task, trunk and head counts differ")
        if len({t.name for t in self.tasks}) != T:
            raise ContractError("task names must be unique")
        if self.task_weights is None:
            self.task_weights = np.ones(T)
        if self.targets is None:
            self.targets = [nn.TargetScaler() for _ in self.tasks]
        if not self.feature_names:
            self.feature_names = tuple(f"f{j}" for j in range(self.d))

    @property
    def d(self) -> int:
        return self.W.shape[2]

    @property
    def task_names(self) -> list[str]:
        return [t.name for t in self.tasks]

    def task_index(self, task: str | int) -> int:
        if isinstance(task, int):
            return task
        try:
            return self.task_names.index(task)
        except ValueError:
            raise ContractError(f"model has no task {task!r}") from None

    def params(self) -> dict[str, np.ndarray]:
        p = {"A": self.A, "u": self.u, "q": self.q, "W": self.W, "b": self.b}
        for t in range(len(self.tasks)):
            p[f"V{t}"] = self.V[t]
            p[f"c{t}"] = self.c[t]
        return p

    def set_params(self, p: dict[str, np.ndarray]) -> None:
        self.A, self.u, self.q, self.W, self.b = p["A"], p["u"], p["q"], p["W"], p["b"]
        self.V = [p[f"V{t}"] for t in range(len(self.tasks))]
        self.c = [p[f"c{t}"] for t in range(len(self.tasks))]

    def prepare(self, X) -> np.ndarray:
        """Validate raw feature rows and apply the stored input scaling."""
        X = as_matrix(np.atleast_2d(X), "X")
        if X.shape[1] != self.d:
            raise ContractError(f"expected {self.d} features, got {X.shape[1]}")
        return self.input_scaler.apply(X) if self.input_scaler is not None else X

    def predict(self, X) -> dict[str, np.ndarray]:
        """Per-task outputs for raw feature rows.

        Regression tasks come back in native units, binary tasks as P(y=1)
        and exclusive3 tasks as (n, 3) Low/Medium/High probabilities.
        """
        Xp = self.prepare(X)
        out = {}
        for t, task in enumerate(self.tasks):
            Z = _task_logits(self.params(), Xp, t)[0]
            y = nn.head_output(task.head_kind, Z)
            out[task.name] = self.targets[t].decode(y) if task.head_kind == "regression" else y
        return out

    def to_json(self) -> dict:
        return {
            "weights": {
                "attention": {"A": self.A.tolist(), "u": self.u.tolist(), "q": self.q.tolist()},
                "trunks": self.W.tolist(),
                "heads": [v.tolist() for v in self.V],
            },
            "bias": {"trunks": self.b.tolist(), "heads": [c.tolist() for c in self.c]},
            "tasks": [{"name": t.name, "head_kind": t.head_kind} for t in self.tasks],
            "task_weights": self.task_weights.tolist(),
            "lambda_share": self.lambda_share,
            "targets": [{"mean": s.mean, "scale": s.scale} for s in self.targets],
            "input_scaler": None if self.input_scaler is None else self.input_scaler.to_json(),
            "features": list(self.feature_names),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MtlModel":
        arr = lambda v: np.asarray(v, dtype=np.float64)  # noqa: E731
        w, bias = doc["weights"], doc["bias"]
        scaler = doc.get("input_scaler")
        return cls(
            tasks=tuple(TaskSpec(t["name"], t["head_kind"]) for t in doc["tasks"]),
            A=arr(w["attention"]["A"]), u=arr(w["attention"]["u"]), q=arr(w["attention"]["q"]),
            W=arr(w["trunks"]), b=arr(bias["trunks"]),
            V=[arr(v) for v in w["heads"]], c=[arr(c) for c in bias["heads"]],
            lambda_share=float(doc["lambda_share"]),
            task_weights=arr(doc["task_weights"]),
            targets=[nn.TargetScaler(**s) for s in doc["targets"]],
            input_scaler=None if scaler is None else StandardizeParams.from_json(scaler),
            feature_names=tuple(doc["features"]),
        )


# -- construction ------------------------------------------------------------

def init_model(d: int, tasks: Sequence[TaskSpec], cfg: MtlConfig = MtlConfig(), seed: int = 0,
               zero: bool = False) -> MtlModel:
    """Random model; task trunks and heads draw from the same stream the
    single-task MLP uses, attention from its own stream.

    ``zero=True`` gives all-zero parameters (uniform attention, constant
    outputs: 0 for regression, 0.5 for binary, 1/3 per class).
    """
    tasks = tuple(tasks)
    if not tasks:
        raise ContractError("at least one task is required")
    T, h, k = len(tasks), cfg.hidden_units, cfg.attention_dim
    rng = nn.init_rng(seed)
    dense = [nn.init_dense(rng, d, h, t.n_outputs) for t in tasks]
    arng = make_rng(seed, nn.ATTENTION_STREAM)
    A = arng.uniform(-1.0, 1.0, size=(T, d, k)) * cfg.attention_init
    u = uniform_init(arng, (T, k), k)
    q = np.zeros((T, d, k))
    W = np.stack([p["W"] for p in dense])
    b = np.stack([p["b"] for p in dense])
    V = [p["V"] for p in dense]
    c = [p["c"] for p in dense]
    if zero:
        A, u, q, W, b = (np.zeros_like(a) for a in (A, u, q, W, b))
        V = [np.zeros_like(v) for v in V]
        c = [np.zeros_like(v) for v in c]
    weights = np.ones(T) if cfg.task_weights is None else np.asarray(cfg.task_weights, dtype=np.float64)
    if weights.shape != (T,) or np.any(weights < 0):
        raise ContractError(f"need {T} non-negative task weights")
    if abs(weights.sum() - T) > 1e-9:
        raise ContractError(f"task weights must sum to the task count {T}")
    return MtlModel(tasks, A, u, q, W, b, V, c, cfg.lambda_share, weights)


# -- forward / backward ------------------------------------------------------

def _attention(X: np.ndarray, A: np.ndarray, u: np.ndarray, q: np.ndarray):
    Tanh = np.tanh(X[:, :, None] * A[None, :, :] + q)
    return softmax(Tanh @ u, axis=1), Tanh


def _task_logits(p: dict[str, np.ndarray], X: np.ndarray, t: int):
    alpha, Tanh = _attention(X, p["A"][t], p["u"][t], p["q"][t])
    Xg = X.shape[1] * (alpha * X)
    H = nn.trunk_forward(Xg, p["W"][t], p["b"][t])
    return nn.head_logits(H, p[f"V{t}"], p[f"c{t}"]), H, Xg, alpha, Tanh


def attention_weights(model: MtlModel, x, task: str | int) -> np.ndarray:
    """Attention distribution over the ``d`` features for one input row."""
    t = model.task_index(task)
    Xp = model.prepare(np.asarray(x, dtype=np.float64).reshape(1, -1))
    return _attention(Xp, model.A[t], model.u[t], model.q[t])[0][0]


def forward(model: MtlModel, x) -> dict[str, np.ndarray | float]:
    """Per-task outputs for a single raw input row."""
    out = model.predict(np.asarray(x, dtype=np.float64).reshape(1, -1))
    return {name: (v[0] if v.ndim == 2 else float(v[0])) for name, v in out.items()}


def soft_sharing_penalty(model_or_params, lambda_share: float | None = None) -> float:
    """``lambda * sum_{t<t'} (|W_t - W_t'|_F^2 + |b_t - b_t'|^2)``; zero for one task."""
    if isinstance(model_or_params, MtlModel):
        W, b = model_or_params.W, model_or_params.b
        lam = model_or_params.lambda_share if lambda_share is None else lambda_share
    else:
        W, b = model_or_params["W"], model_or_params["b"]
        lam = lambda_share
    T = W.shape[0]
    if T < 2 or lam == 0:
        return 0.0
    total = 0.0
    for t in range(T):
        for s in range(t + 1, T):
            dW = W[t] - W[s]
            db = b[t] - b[s]
            total += float(np.sum(dW * dW)) + float(np.sum(db * db))
    return lam * total


def mtl_loss(predictions: dict[str, np.ndarray], labels: dict[str, np.ndarray], model: MtlModel) -> LossBreakdown:
    """Weighted per-task losses plus the sharing penalty.

    Binary tasks use the mean logistic loss, exclusive3 tasks the mean
    categorical cross-entropy over class indices, regression tasks the mean
    squared error of the values exactly as given.
    """
    task_losses = {}
    data = 0.0
    for t, task in enumerate(model.tasks):
        pred = np.asarray(predictions[task.name], dtype=np.float64)
        y = np.asarray(labels[task.name], dtype=np.float64)
        if pred.shape[0] != y.shape[0] or y.shape[0] < 1:
            raise ContractError(f"prediction/label shapes differ for task {task.name}")
        task_losses[task.name] = nn.task_loss(task.head_kind, pred, y)
        data += model.task_weights[t] * task_losses[task.name]
    penalty = soft_sharing_penalty(model)
    return LossBreakdown(task_losses, penalty, 0.0, data + penalty)


def mtl_objective(p: dict[str, np.ndarray], X: np.ndarray, Y: Sequence[np.ndarray], tasks: Sequence[TaskSpec],
                  weights: np.ndarray, lambda_share: float, l2: float = 0.0, grad: bool = True):
    """Total training objective on (already scaled) inputs and training-unit targets.

    Returns ``(LossBreakdown, gradients)``; the gradient dict mirrors
    ``MtlModel.params()`` and is None when ``grad`` is False.
    """
    n, d = X.shape
    T = len(tasks)
    task_losses = {}
    data = 0.0
    decay = 0.0
    g = None
    if grad:
        g = {k: np.zeros_like(v) for k, v in p.items()}
    for t, task in enumerate(tasks):
        Z, H, Xg, alpha, Tanh = _task_logits(p, X, t)
        loss_t = nn.task_loss(task.head_kind, nn.head_output(task.head_kind, Z), Y[t])
        task_losses[task.name] = loss_t
        data += weights[t] * loss_t
        V, W = p[f"V{t}"], p["W"][t]
        if l2:
            decay += l2 * (float(np.sum(W * W)) + float(np.sum(V * V)))
        if not grad:
            continue
        dZ = weights[t] * nn.head_grad(task.head_kind, Z, Y[t])
        dV = dZ.T @ H
        dc = dZ.sum(axis=0)
        dpre = (dZ @ V) * (1.0 - H * H)
        dW = dpre.T @ Xg
        db = dpre.sum(axis=0)
        if l2:
            dW = dW + 2.0 * l2 * W
            dV = dV + 2.0 * l2 * V
        g[f"V{t}"], g[f"c{t}"] = dV, dc
        g["W"][t], g["b"][t] = dW, db
        # back through the gate x~ = d * alpha * x and the softmax scorer
        dalpha = (d * X) * (dpre @ W)
        dS = alpha * (dalpha - np.sum(alpha * dalpha, axis=1, keepdims=True))
        dE = dS[:, :, None] * p["u"][t] * (1.0 - Tanh * Tanh)
        g["A"][t] = np.einsum("njk,nj->jk", dE, X)
        g["q"][t] = dE.sum(axis=0)
        g["u"][t] = np.einsum("nj,njk->k", dS, Tanh)

    penalty = soft_sharing_penalty(p, lambda_share) if T > 1 else 0.0
    if grad and penalty:
        g["W"] = g["W"] + 2.0 * lambda_share * (T * p["W"] - p["W"].sum(axis=0))
        g["b"] = g["b"] + 2.0 * lambda_share * (T * p["b"] - p["b"].sum(axis=0))
    total = data + penalty
    if l2:
        total = total + decay
    return LossBreakdown(task_losses, penalty, decay, total), g


def _sharing_prox(p: dict[str, np.ndarray], step: float, lambda_share: float) -> None:
    """Exact proximal step of the pairwise penalty: shrink trunk deviations
    from the task mean by ``1 / (1 + 2 * step * lambda * T)``."""
    T = p["W"].shape[0]
    shrink = 1.0 / (1.0 + 2.0 * step * lambda_share * T)
    for key in ("W", "b"):
        mean = p[key].mean(axis=0, keepdims=True)
        p[key] = mean + (p[key] - mean) * shrink


# -- training ----------------------------------------------------------------

def training_targets(dataset: Dataset, tasks: Sequence[TaskSpec]) -> tuple[list[np.ndarray], list[nn.TargetScaler]]:
    Y, scalers = [], []
    for task in tasks:
        y = nn.check_targets(task.head_kind, dataset.target(task))
        scaler = nn.TargetScaler.fit(task.head_kind, y)
        Y.append(scaler.encode(y) if task.head_kind == "regression" else y)
        scalers.append(scaler)
    return Y, scalers


def train_mtl(dataset: Dataset, cfg: MtlConfig = MtlConfig(), seed: int = 0,
              tasks: Sequence[TaskSpec] | None = None, standardize: bool = False) -> tuple[MtlModel, list[float]]:
    """Joint minibatch gradient descent over attention, trunks and heads.

    The loss trace holds the full-data total objective at initialization
    followed by its value after every epoch. With ``standardize`` the
    feature scaling is fitted here and stored on the model.
    """
    if tasks is None:
        tasks = default_tasks(survival=dataset.has_survival)
    tasks = tuple(tasks)
    X = dataset.X
    scaler = None
    if standardize:
        scaler = fit_standardize(X)
        X = scaler.apply(X)
    Y, target_scalers = training_targets(dataset, tasks)

    model = init_model(dataset.d, tasks, cfg, seed)
    weights, lam = model.task_weights, cfg.lambda_share
    p = model.params()
    m = dataset.m
    lr = cfg.learning_rate
    shuffler = nn.shuffle_rng(seed)
    share = lam > 0 and len(tasks) > 1

    def objective(batch_X, batch_Y, with_grad):
        # the sharing penalty enters training through its proximal step
        return mtl_objective(p, batch_X, batch_Y, tasks, weights, lam if not with_grad else 0.0, cfg.l2, with_grad)

    trace = [float(nn.check_finite(mtl_objective(p, X, Y, tasks, weights, lam, cfg.l2, False)[0].total, 0))]
    for epoch in range(1, cfg.epochs + 1):
        for idx in nn.minibatches(m, cfg.batch_size, shuffler):
            _, g = objective(X[idx], [y[idx] for y in Y], True)
            for k in p:
                p[k] = p[k] - lr * g[k]
            if share:
                _sharing_prox(p, lr, lam)
        trace.append(float(nn.check_finite(mtl_objective(p, X, Y, tasks, weights, lam, cfg.l2, False)[0].total, epoch)))

    model.set_params(p)
    model.targets = target_scalers
    model.input_scaler = scaler
    model.feature_names = tuple(dataset.feature_names)
    model.loss_trace = trace
    return model, trace


# -- attention-based feature ranking ------------------------------------------

@dataclass(frozen=True)
class FeatureImportance:
    feature: str
    index: int
    per_task: dict[str, float]
    overall: float


def mean_attention(model: MtlModel, X) -> np.ndarray:
    """(T, d) mean attention weights over the rows of raw ``X``."""
    Xp = model.prepare(X)
    return np.stack([
        _attention(Xp, model.A[t], model.u[t], model.q[t])[0].mean(axis=0)
        for t in range(len(model.tasks))
    ])


def feature_importance(model: MtlModel, dataset: Dataset | np.ndarray) -> list[FeatureImportance]:
    """Features ranked by task-weighted mean attention, ties by column index."""
    X = dataset.X if isinstance(dataset, Dataset) else dataset
    per_task = mean_attention(model, X)
    overall = model.task_weights @ per_task / model.task_weights.sum()
    order = sorted(range(model.d), key=lambda j: (-overall[j], j))
    return [
        FeatureImportance(
            feature=model.feature_names[j], index=j,
            per_task={name: float(per_task[t, j]) for t, name in enumerate(model.task_names)},
            overall=float(overall[j]),
        )
        for j in order
    ]
