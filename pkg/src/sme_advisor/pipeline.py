"""Fit any learner on a dataset, predict every task, and save/load models.

All learners see features standardized on their own training data. The
baselines fit one model per task; the multi-task model fits all tasks at
once. Criterion values are regressed in native units and turned into
Low/Medium/High classes with tertile cuts taken from the training values.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import mtl
from .baselines import (
    ForestConfig, ForestModel, LogisticModel, MlpModel, SvmConfig, SvmModel, SvrModel, TrainConfig,
    train_forest, train_logistic, train_mlp_single, train_svm, train_svr,
)
from .dataset import CRITERIA, SURVIVAL, Dataset, StandardizeParams, TaskSpec, fit_standardize, schema_hash, tertile_cuts
from .evaluation import Predictions, class_predictions
from .numerics import ContractError

MODEL_FORMAT_VERSION = 1
KINDS = ("rf", "svm", "ann", "mtl", "lr")


class SchemaMismatch(ContractError):
    """A model was applied to data with a different feature schema."""


@dataclass(frozen=True)
class Hyperparams:
    """Flat hyperparameters for every learner kind."""

    learning_rate: float = 0.05
    epochs: int = 300
    batch_size: int = 16
    l2: float = 0.0
    hidden_units: int = 16
    lambda_share: float = 0.1
    attention_dim: int = 8
    attention_init: float = 0.1
    n_trees: int = 50
    max_depth: int = 8
    svm_C: float = 1.0
    svm_learning_rate: float = 0.5
    svm_epochs: int = 1000
    svm_epsilon: float = 0.1

    def __post_init__(self):
        # building each sub-config runs its validation
        self.mtl_config(0)
        self.forest_config(0)
        self.svm_config(0)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.epochs, self.batch_size, self.l2, seed, self.hidden_units)

    def mtl_config(self, seed: int) -> mtl.MtlConfig:
        return mtl.MtlConfig(self.learning_rate, self.epochs, self.batch_size, self.l2, seed, self.hidden_units,
                             lambda_share=self.lambda_share, attention_dim=self.attention_dim,
                             attention_init=self.attention_init)

    def forest_config(self, seed: int) -> ForestConfig:
        return ForestConfig(n_trees=self.n_trees, max_depth=self.max_depth, seed=seed)

    def svm_config(self, seed: int) -> SvmConfig:
        return SvmConfig(C=self.svm_C, learning_rate=self.svm_learning_rate, epochs=self.svm_epochs,
                         epsilon=self.svm_epsilon, seed=seed)

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def task_list(names, has_survival: bool) -> tuple[TaskSpec, ...]:
    """Regression criteria plus a binary survival task, in the given order."""
    if names is None:
        names = [*CRITERIA, SURVIVAL] if has_survival else list(CRITERIA)
    out = []
    for name in names:
        if name in CRITERIA:
            out.append(TaskSpec(name, "regression"))
        elif name == SURVIVAL:
            out.append(TaskSpec(SURVIVAL, "binary"))
        else:
            raise ContractError(f"unknown task {name!r}")
    if not out:
        raise ContractError("task list is empty")
    return tuple(out)


# -- member models ------------------------------------------------------------

_MEMBER_TYPES = {"mlp": MlpModel, "forest": ForestModel, "svr": SvrModel, "svm": SvmModel, "logistic": LogisticModel}


def _member_type(model) -> str:
    for name, cls in _MEMBER_TYPES.items():
        if isinstance(model, cls):
            return name
    raise ContractError(f"cannot serialize {type(model).__name__}")


def _fit_member(kind: str, task: TaskSpec, X: np.ndarray, y: np.ndarray, hp: Hyperparams, seed: int):
    regression = task.head_kind == "regression"
    if kind == "ann":
        return train_mlp_single(X, y, task.head_kind, hp.train_config(seed))[0]
    if kind == "rf":
        return train_forest(X, y, task.head_kind, hp.forest_config(seed))
    if kind == "svm":
        if regression:
            return train_svr(X, y, hp.svm_config(seed))
        return train_svm(X, np.where(y > 0.5, 1.0, -1.0), hp.svm_config(seed))
    if kind == "lr":
        if regression:
            raise ContractError("logistic regression only fits the survival task")
        return train_logistic(X, y, hp.train_config(seed))
    raise ContractError(f"unknown model kind {kind!r}")


def _member_output(model, task: TaskSpec, X: np.ndarray) -> np.ndarray:
    """Native-unit values for regression tasks, P(survives) for survival."""
    if task.head_kind == "regression":
        return model.predict(X)
    if isinstance(model, ForestModel):
        return model.predict_proba(X)
    if isinstance(model, SvmModel):
        # a hard classifier: probability 1 on the positive side, 0 otherwise
        return (model.decision_function(X) > 0).astype(np.float64)
    if isinstance(model, LogisticModel):
        return model.predict_proba(X)
    return model.predict(X)


# -- fitted model -------------------------------------------------------------

@dataclass
class FittedModel:
    """A trained learner of one kind covering a list of tasks."""

    kind: str
    tasks: tuple[TaskSpec, ...]
    features: tuple[str, ...]
    seed: int
    config: dict
    cuts: dict[str, tuple[float, float]]
    scaler: StandardizeParams | None = None
    members: dict[str, object] = field(default_factory=dict)
    mtl_model: mtl.MtlModel | None = None

    @property
    def schema_hash(self) -> str:
        return schema_hash(self.features)

    @property
    def task_names(self) -> list[str]:
        return [t.name for t in self.tasks]

    def check_schema(self, data: Dataset) -> None:
        if data.schema_hash != self.schema_hash:
            raise SchemaMismatch(f"schema mismatch: model expects {self.schema_hash}, data has {data.schema_hash}")

    def raw_outputs(self, X) -> dict[str, np.ndarray]:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.features):
            raise SchemaMismatch(f"expected {len(self.features)} features, got shape {X.shape}")
        if self.mtl_model is not None:
            return self.mtl_model.predict(X)
        Xs = self.scaler.apply(X)
        return {t.name: _member_output(self.members[t.name], t, Xs) for t in self.tasks}

    def predict(self, X) -> Predictions:
        out = self.raw_outputs(X)
        values = {c: out[c] for c in CRITERIA if c in out}
        return Predictions(values, class_predictions(values, self.cuts), out.get(SURVIVAL))

    def to_document(self) -> dict:
        doc = {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": self.kind,
            "schema_hash": self.schema_hash,
            "features": list(self.features),
            "seed": self.seed,
            "config": dict(self.config),
            "tasks": [{"name": t.name, "head_kind": t.head_kind} for t in self.tasks],
            "class_cuts": {t: list(c) for t, c in self.cuts.items()},
        }
        if self.mtl_model is not None:
            body = self.mtl_model.to_json()
            doc["weights"], doc["bias"] = body.pop("weights"), body.pop("bias")
            body.pop("tasks")
            body.pop("features")
            doc["mtl"] = body
            return doc
        doc["standardize"] = self.scaler.to_json()
        doc["members"] = {}
        doc["weights"], doc["bias"] = {}, {}
        for name, model in self.members.items():
            body = model.to_json()
            doc["bias"][name] = body.pop("bias", None)
            doc["members"][name] = _member_type(model)
            doc["weights"][name] = body
        return doc

    @classmethod
    def from_document(cls, doc: dict) -> "FittedModel":
        if doc.get("format_version") != MODEL_FORMAT_VERSION:
            raise ContractError(f"unsupported model format version {doc.get('format_version')!r}")
        tasks = tuple(TaskSpec(t["name"], t["head_kind"]) for t in doc["tasks"])
        common = dict(
            kind=doc["kind"], tasks=tasks, features=tuple(doc["features"]), seed=int(doc["seed"]),
            config=dict(doc["config"]), cuts={t: (float(c[0]), float(c[1])) for t, c in doc["class_cuts"].items()},
        )
        if doc["kind"] == "mtl":
            body = {**doc["mtl"], "weights": doc["weights"], "bias": doc["bias"],
                    "tasks": doc["tasks"], "features": doc["features"]}
            model = cls(**common, mtl_model=mtl.MtlModel.from_json(body))
        else:
            members = {}
            for name, typ in doc["members"].items():
                body = dict(doc["weights"][name])
                if doc["bias"][name] is not None:
                    body["bias"] = doc["bias"][name]
                members[name] = _MEMBER_TYPES[typ].from_json(body)
            model = cls(**common, scaler=StandardizeParams.from_json(doc["standardize"]), members=members)
        if model.schema_hash != doc["schema_hash"]:
            raise SchemaMismatch("stored schema_hash does not match the stored feature names")
        return model


def fit_model(kind: str, data: Dataset, hp: Hyperparams = Hyperparams(), seed: int = 0,
              tasks=None, config: dict | None = None) -> FittedModel:
    """Train learner ``kind`` on ``data``.

    ``tasks`` is a list of task names (default: the three criteria plus
    survival when every row has a survival label). Logistic regression
    covers only survival. ``config`` is echoed into the saved model.
    """
    if kind not in KINDS:
        raise ContractError(f"unknown model kind {kind!r}; expected one of {', '.join(KINDS)}")
    if kind == "lr" and tasks is None:
        tasks = [SURVIVAL]
    specs = task_list(tasks, data.has_survival)
    cuts = {t.name: tertile_cuts(data.values[t.name]) for t in specs if t.name in CRITERIA}
    echo = dict(config) if config is not None else {**asdict(hp), "seed": seed}
    common = dict(kind=kind, tasks=specs, features=tuple(data.feature_names), seed=seed, config=echo, cuts=cuts)
    if kind == "mtl":
        model, _ = mtl.train_mtl(data, hp.mtl_config(seed), seed=seed, tasks=specs, standardize=True)
        return FittedModel(**common, mtl_model=model)
    scaler = fit_standardize(data.X)
    Xs = scaler.apply(data.X)
    members = {t.name: _fit_member(kind, t, Xs, data.target(t), hp, seed) for t in specs}
    return FittedModel(**common, scaler=scaler, members=members)


def trainer(kind: str, hp: Hyperparams = Hyperparams(), tasks=None):
    """A ``(train_data, seed) -> predictor`` callable for cross-validation."""
    return lambda data, seed: fit_model(kind, data, hp, seed, tasks)


# -- files --------------------------------------------------------------------

def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def save_model(model: FittedModel, path) -> None:
    Path(path).write_text(dumps(model.to_document()), encoding="utf-8")


def load_model(path) -> FittedModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ContractError(f"{path}: not a JSON model document ({exc})") from None
    try:
        return FittedModel.from_document(doc)
    except KeyError as exc:
        raise ContractError(f"{path}: model document lacks field {exc}") from None
