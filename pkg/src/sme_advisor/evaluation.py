"""Metrics, the k-fold harness and the RMSE comparison table.

Survival is scored with the positive class meaning "unsuccessful": a
business that does not last five years. Metrics whose denominator is zero
raise :class:`UndefinedMetricError` instead of returning a placeholder.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol

import numpy as np

from .dataset import CRITERIA, Dataset, bin_with_cuts, kfold
from .numerics import ContractError

POSITIVE_CLASS = "unsuccessful (fails within 5 years)"

TASK_TITLES = {"demand": "Demand", "buyers": "Number of Buyers", "competitors": "Competitors"}
TABLE_TASK_ORDER = ("demand", "buyers", "competitors")
MODEL_TITLES = {
    "rf": "Random Forest",
    "svm": "Support Vector Machine",
    "ann": "ANN",
    "mtl": "Multi-task learning",
    "lr": "Logistic Regression",
}


class UndefinedMetricError(ArithmeticError):
    """A rate was requested whose denominator is zero."""


class FoldError(RuntimeError):
    """Training or scoring failed inside one cross-validation fold."""


def rmse(predicted, actual) -> float:
    p = np.asarray(predicted, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if p.shape != a.shape:
        raise ContractError(f"rmse length mismatch: {p.shape} vs {a.shape}")
    if p.size == 0:
        raise ContractError("rmse of empty vectors")
    r = p - a
    return float(np.sqrt(np.mean(r * r)))


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int
    positive_class_meaning: str = POSITIVE_CLASS

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ContractError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_json(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


def confusion(predicted, actual) -> ConfusionMatrix:
    """Count outcomes of 0/1 predictions, where 1 means unsuccessful."""
    p = np.asarray(predicted)
    a = np.asarray(actual)
    if p.shape != a.shape:
        raise ContractError(f"confusion length mismatch: {p.shape} vs {a.shape}")
    if not (np.all(np.isin(p, (0, 1))) and np.all(np.isin(a, (0, 1)))):
        raise ContractError("confusion inputs must be 0/1")
    p, a = p.astype(bool), a.astype(bool)
    return ConfusionMatrix(
        tp=int(np.sum(p & a)), fp=int(np.sum(p & ~a)),
        tn=int(np.sum(~p & ~a)), fn=int(np.sum(~p & a)),
    )


def _ratio(num: int, den: int, what: str) -> float:
    if den == 0:
        raise UndefinedMetricError(f"{what} is undefined: zero denominator")
    return num / den


def accuracy(cm: ConfusionMatrix) -> float:
    return _ratio(cm.tp + cm.tn, cm.total, "accuracy")


def paper_specificity(cm: ConfusionMatrix) -> float:
    """Share of actually-unsuccessful businesses flagged as such: tp / (tp + fn)."""
    return _ratio(cm.tp, cm.tp + cm.fn, "paper specificity (no actual unsuccessful cases)")


def standard_specificity(cm: ConfusionMatrix) -> float:
    """tn / (tn + fp)."""
    return _ratio(cm.tn, cm.tn + cm.fp, "standard specificity (no actual successful cases)")


# -- predictions and per-split reports ---------------------------------------

@dataclass
class Predictions:
    """Model outputs for a batch of instances.

    ``values`` are criterion predictions in native units, ``classes`` their
    Low/Medium/High codes, ``survival_prob`` P(survives five years).
    """

    values: dict[str, np.ndarray] = field(default_factory=dict)
    classes: dict[str, np.ndarray] = field(default_factory=dict)
    survival_prob: np.ndarray | None = None

    @property
    def unsuccessful(self) -> np.ndarray:
        """1 where the model predicts failure; P = 0.5 counts as failure."""
        return (~(self.survival_prob > 0.5)).astype(np.int64)


class Predictor(Protocol):
    def predict(self, X: np.ndarray) -> Predictions: ...


def metric_or_none(fn, *args):
    try:
        return fn(*args)
    except UndefinedMetricError:
        return None


@dataclass(frozen=True)
class MetricReport:
    """Scores on one evaluation split.

    Survival rates that are undefined on the split (for example no failed
    business in a small fold) are ``None``.
    """

    rmse: dict[str, float]
    class_accuracy: dict[str, float] = field(default_factory=dict)
    confusion: ConfusionMatrix | None = None
    accuracy: float | None = None
    paper_specificity: float | None = None
    standard_specificity: float | None = None

    def scalars(self) -> dict[str, float | None]:
        out: dict[str, float | None] = {f"rmse_{t}": v for t, v in self.rmse.items()}
        out.update({f"class_accuracy_{t}": v for t, v in self.class_accuracy.items()})
        out["accuracy"] = self.accuracy
        out["paper_specificity"] = self.paper_specificity
        out["standard_specificity"] = self.standard_specificity
        return out

    def to_json(self) -> dict:
        return {
            "rmse": dict(self.rmse),
            "class_accuracy": dict(self.class_accuracy),
            "confusion": None if self.confusion is None else self.confusion.to_json(),
            "accuracy": self.accuracy,
            "paper_specificity": self.paper_specificity,
            "standard_specificity": self.standard_specificity,
        }


def score(pred: Predictions, data: Dataset) -> MetricReport:
    rmses = {t: rmse(v, data.values[t]) for t, v in pred.values.items()}
    class_acc = {t: float(np.mean(c == data.classes[t])) for t, c in pred.classes.items()}
    if pred.survival_prob is None or not data.has_survival:
        return MetricReport(rmses, class_acc)
    cm = confusion(pred.unsuccessful, (data.survived == 0).astype(np.int64))
    return MetricReport(
        rmses, class_acc, cm,
        accuracy=metric_or_none(accuracy, cm),
        paper_specificity=metric_or_none(paper_specificity, cm),
        standard_specificity=metric_or_none(standard_specificity, cm),
    )


def class_predictions(values: Mapping[str, np.ndarray], cuts: Mapping[str, tuple[float, float]]) -> dict[str, np.ndarray]:
    return {t: bin_with_cuts(v, cuts[t]) for t, v in values.items() if t in cuts}


# -- cross-validation ---------------------------------------------------------

Trainer = Callable[[Dataset, int], Predictor]


@dataclass(frozen=True)
class CvResult:
    k: int
    folds: list[MetricReport]
    test_ids: list[tuple[str, ...]]
    mean: dict[str, float | None]
    std: dict[str, float | None]

    def per_fold(self) -> dict[str, list[float | None]]:
        keys = self.folds[0].scalars().keys()
        return {key: [f.scalars()[key] for f in self.folds] for key in keys}

    def to_json(self) -> dict:
        return {"k": self.k, "folds": self.per_fold(), "mean": self.mean, "std": self.std,
                "confusion": [None if f.confusion is None else f.confusion.to_json() for f in self.folds]}


def _aggregate(folds: list[MetricReport]):
    mean, std = {}, {}
    for key in folds[0].scalars():
        vals = [f.scalars()[key] for f in folds if f.scalars()[key] is not None]
        mean[key] = float(np.mean(vals)) if vals else None
        std[key] = float(np.std(vals)) if vals else None
    return mean, std


def cross_validate(trainer: Trainer, dataset: Dataset, k: int = 5, seed: int = 0) -> CvResult:
    """Train on each fold's complement and score on the fold.

    ``trainer(train_dataset, seed)`` must return a predictor. Means and
    (population) standard deviations skip folds where a metric is undefined.
    """
    plan = kfold(dataset.m, k, seed)
    folds, test_ids = [], []
    for f in range(k):
        train = dataset.subset(plan.train_indices(f))
        test = dataset.subset(plan.test_indices(f))
        try:
            predictor = trainer(train, seed)
            folds.append(score(predictor.predict(test.X), test))
        except Exception as exc:
            raise FoldError(f"fold {f}: {type(exc).__name__}: {exc}") from exc
        test_ids.append(test.ids)
    mean, std = _aggregate(folds)
    return CvResult(k, folds, test_ids, mean, std)


# -- comparison table ---------------------------------------------------------

def emit_comparison_table(results: Mapping[str, Mapping[str, float]]) -> str:
    """Fixed-layout RMSE table, one row per model in insertion order.

    Columns follow the order Demand, Number of Buyers, Competitors for the
    tasks present; every model must report every one of those tasks.
    """
    if not results:
        raise ContractError("no models to tabulate")
    present = {t for row in results.values() for t in row}
    unknown = present - set(TABLE_TASK_ORDER)
    if unknown:
        raise ContractError(f"unknown task column {sorted(unknown)[0]!r}")
    tasks = [t for t in TABLE_TASK_ORDER if t in present]
    for model, row in results.items():
        for t in tasks:
            if t not in row:
                raise ContractError(f"missing cell: model {model!r}, task {t!r}")

    header = ["Model", *(TASK_TITLES[t] for t in tasks)]
    rows = [[MODEL_TITLES.get(m, m), *(f"{float(row[t]):.1f}" for t in tasks)] for m, row in results.items()]
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]

    def line(cells, numeric):
        out = [cells[0].ljust(widths[0])]
        out += [(c.rjust(w) if numeric else c.ljust(w)) for c, w in zip(cells[1:], widths[1:])]
        return " | ".join(out).rstrip()

    return "\n".join([line(header, False), *(line(r, True) for r in rows)]) + "\n"


def comparison_document(rmse_grid: Mapping[str, Mapping[str, float]],
                        classification: Mapping[str, dict] | None = None,
                        cv: Mapping[str, dict] | None = None, **extra) -> dict:
    models = list(dict.fromkeys([*rmse_grid, *(classification or {}), *(cv or {})]))
    tasks = [t for t in CRITERIA if any(t in row for row in rmse_grid.values())]
    return {
        "models": models,
        "tasks": tasks,
        "rmse": {m: dict(row) for m, row in rmse_grid.items()},
        "classification": dict(classification or {}),
        "cv": dict(cv or {}),
        **extra,
    }


def classification_summary(report: MetricReport) -> dict:
    out = {t: {"accuracy": a} for t, a in report.class_accuracy.items()}
    if report.confusion is not None:
        out["survival"] = {
            "accuracy": report.accuracy,
            "confusion": report.confusion.to_json(),
            "paper_specificity": report.paper_specificity,
            "standard_specificity": report.standard_specificity,
        }
    return out
