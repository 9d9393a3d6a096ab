"""Instance/label data model, CSV ingestion, encoding, splitting and synthesis.

A dataset holds one feature row per candidate business location plus three
criteria measured in native units (buyers in persons, demand in
transactions, competitors in businesses), each carrying a Low/Medium/High
class, and an optional five-year survival flag.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .numerics import ContractError, make_rng, sigmoid

CRITERIA = ("buyers", "demand", "competitors")
SURVIVAL = "survival"

HEAD_KINDS = ("regression", "exclusive3", "binary")


class DataError(ValueError):
    """Malformed input data (CSV layout, labels, values)."""


class ValueClass(enum.IntEnum):
    LOW = 0
    MEDIUM = 1
    HIGH = 2

    @property
    def code(self) -> str:
        return "LMH"[self]

    @classmethod
    def from_code(cls, code: str) -> "ValueClass":
        try:
            return cls("LMH".index(code))
        except ValueError:
            raise DataError(f"unknown class code {code!r}; expected L, M or H") from None


CLASS_ORDER = (ValueClass.LOW, ValueClass.MEDIUM, ValueClass.HIGH)


@dataclass(frozen=True)
class TaskSpec:
    name: str
    head_kind: str = "regression"
    class_order: tuple = CLASS_ORDER

    def __post_init__(self):
        if self.head_kind not in HEAD_KINDS:
            raise ContractError(f"unknown head kind {self.head_kind!r}")
        if self.head_kind == "exclusive3" and len(self.class_order) != 3:
            raise ContractError("exclusive3 tasks need exactly three classes")

    @property
    def n_outputs(self) -> int:
        return 3 if self.head_kind == "exclusive3" else 1


def default_tasks(head_kind: str = "regression", survival: bool = True) -> list[TaskSpec]:
    tasks = [TaskSpec(name, head_kind) for name in CRITERIA]
    if survival:
        tasks.append(TaskSpec(SURVIVAL, "binary"))
    return tasks


@dataclass(frozen=True)
class Column:
    name: str
    provenance: str  # "bank" | "external"


@dataclass(frozen=True)
class Instance:
    id: str
    features: np.ndarray
    task_values: dict
    task_classes: dict
    survived_5yr: bool | None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-major view of the instances.

    ``values[c]`` / ``classes[c]`` are aligned with ``ids`` for each criterion
    ``c``; ``survived`` uses NaN for unlabeled rows.
    """

    ids: tuple[str, ...]
    columns: tuple[Column, ...]
    X: np.ndarray
    values: dict[str, np.ndarray]
    classes: dict[str, np.ndarray]
    survived: np.ndarray

    def __post_init__(self):
        m = len(self.ids)
        if m < 1:
            raise ContractError("a dataset needs at least one instance")
        if self.X.shape != (m, len(self.columns)):
            raise ContractError(f"feature matrix shape {self.X.shape} does not match {m} ids x {len(self.columns)} columns")
        if len(set(self.ids)) != m:
            raise ContractError("instance ids must be unique")
        for c in CRITERIA:
            if self.values[c].shape != (m,) or self.classes[c].shape != (m,):
                raise ContractError(f"labels for {c} are not aligned with the instances")
        if self.survived.shape != (m,):
            raise ContractError("survival flags are not aligned with the instances")

    @property
    def m(self) -> int:
        return len(self.ids)

    @property
    def d(self) -> int:
        return len(self.columns)

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def has_survival(self) -> bool:
        return bool(np.all(np.isfinite(self.survived)))

    @property
    def schema_hash(self) -> str:
        return schema_hash(self.feature_names)

    def labels(self) -> np.ndarray:
        """The 3 x m label matrix (buyers, demand, competitors per column)."""
        return np.vstack([self.values[c] for c in CRITERIA])

    def target(self, task: TaskSpec) -> np.ndarray:
        if task.name == SURVIVAL:
            if not self.has_survival:
                raise DataError("survival labels are missing for some instances")
            return self.survived.copy()
        if task.head_kind == "regression":
            return self.values[task.name].copy()
        if task.head_kind == "exclusive3":
            return self.classes[task.name].copy()
        raise ContractError(f"criterion {task.name} cannot have a binary head")

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            ids=tuple(self.ids[i] for i in idx),
            columns=self.columns,
            X=self.X[idx],
            values={c: v[idx] for c, v in self.values.items()},
            classes={c: v[idx] for c, v in self.classes.items()},
            survived=self.survived[idx],
        )

    def with_features(self, X: np.ndarray) -> "Dataset":
        return replace(self, X=np.asarray(X, dtype=np.float64))

    def instances(self) -> list[Instance]:
        out = []
        for i, ident in enumerate(self.ids):
            s = self.survived[i]
            out.append(Instance(
                id=ident,
                features=self.X[i].copy(),
                task_values={c: float(self.values[c][i]) for c in CRITERIA},
                task_classes={c: ValueClass(int(self.classes[c][i])) for c in CRITERIA},
                survived_5yr=None if np.isnan(s) else bool(s),
            ))
        return out


def schema_hash(feature_names: Sequence[str]) -> str:
    return hashlib.sha256("\n".join(feature_names).encode("utf-8")).hexdigest()[:16]


# -- labels ------------------------------------------------------------------

_LABELED = re.compile(r"^\s*([+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)-([LMH])\s*$")


def parse_labeled_value(text: str) -> tuple[float, ValueClass]:
    """Parse the combined ``<number>-<L|M|H>`` form, e.g. ``"361-H"``."""
    match = _LABELED.match(text)
    if match is None:
        raise DataError(f"cannot parse labeled value {text!r}")
    return float(match.group(1)), ValueClass.from_code(match.group(2))


def one_hot(cls, order: Sequence = CLASS_ORDER) -> np.ndarray:
    order = list(order)
    if cls not in order:
        raise ContractError(f"class {cls!r} is not in {order!r}")
    out = np.zeros(len(order))
    out[order.index(cls)] = 1.0
    return out


@dataclass(frozen=True)
class BinningRule:
    """Fixed ``(low, high)`` cut points, or tertile cuts when ``cuts`` is None."""

    cuts: tuple[float, float] | None = None

    def __post_init__(self):
        if self.cuts is not None and self.cuts[0] > self.cuts[1]:
            raise ContractError("low cut must not exceed high cut")


def tertile_cuts(values) -> tuple[float, float]:
    """Cut points putting ``ceil(n/3)`` sorted values below ``low`` and the
    ``ceil(2n/3)``-th value at ``high`` (needs at least two values)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = v.size
    if n < 2:
        raise ContractError("tertile cuts need at least two values")
    return float(v[int(np.ceil(n / 3))]), float(v[int(np.ceil(2 * n / 3)) - 1])


def bin_with_cuts(values, cuts: tuple[float, float]) -> np.ndarray:
    """Class codes: below ``low`` is Low, above ``high`` is High."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = cuts
    return np.where(v < lo, 0, np.where(v <= hi, 1, 2)).astype(np.int64)


def bin_values(values, rule: BinningRule = BinningRule()) -> list[ValueClass]:
    """Map raw values to Low/Medium/High.

    Tertile mode derives the cuts from the data itself; if every value is
    equal the whole batch is Medium.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ContractError("bin_values needs at least one value")
    if rule.cuts is None:
        if np.all(v == v[0]):
            return [ValueClass.MEDIUM] * v.size
        cuts = tertile_cuts(v)
    else:
        cuts = rule.cuts
    return [ValueClass(int(c)) for c in bin_with_cuts(v, cuts)]


# -- standardization ---------------------------------------------------------

@dataclass(frozen=True)
class StandardizeParams:
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.mean.size:
            raise ContractError(f"expected {self.mean.size} features, got {X.shape[-1]}")
        return (X - self.mean) / self.scale

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "StandardizeParams":
        return cls(np.asarray(doc["mean"], dtype=np.float64), np.asarray(doc["scale"], dtype=np.float64))


def fit_standardize(X) -> StandardizeParams:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        raise ContractError("standardize needs at least two instances")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    # constant columns: x - mean is exactly zero, so any scale leaves them at 0
    scale = np.where(std > 0, std, 1.0)
    return StandardizeParams(mean, scale)


def standardize(dataset: Dataset) -> tuple[Dataset, StandardizeParams]:
    params = fit_standardize(dataset.X)
    return dataset.with_features(params.apply(dataset.X)), params


# -- splitting ---------------------------------------------------------------

def largest_remainder(m: int, ratios: Sequence[float]) -> list[int]:
    """Apportion ``m`` items by ``ratios``; ties go to the earlier slot."""
    exact = [m * r for r in ratios]
    sizes = [int(np.floor(e)) for e in exact]
    short = m - sum(sizes)
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[:short]:
        sizes[i] += 1
    return sizes


def split(m: int, ratios=(0.6, 0.2, 0.2), seed: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shuffle ``range(m)`` and cut it into train/dev/test index sets."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) <= 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ContractError(f"split ratios must be three positives summing to 1, got {ratios}")
    n_train, n_dev, _ = largest_remainder(m, ratios)
    perm = make_rng(seed, 1).permutation(m)
    return perm[:n_train], perm[n_train:n_train + n_dev], perm[n_train + n_dev:]


@dataclass(frozen=True)
class FoldPlan:
    k: int
    fold_membership: np.ndarray

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_membership == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_membership != fold)


def kfold(m: int, k: int, seed: int = 0) -> FoldPlan:
    if not 2 <= k <= m:
        raise ContractError(f"k must satisfy 2 <= k <= m (k={k}, m={m})")
    perm = make_rng(seed, 2).permutation(m)
    sizes = [m // k + (1 if f < m % k else 0) for f in range(k)]
    membership = np.empty(m, dtype=np.int64)
    pos = 0
    for f, size in enumerate(sizes):
        membership[perm[pos:pos + size]] = f
        pos += size
    return FoldPlan(k, membership)


# -- CSV ---------------------------------------------------------------------

TASK_COLUMNS = (
    "buyers_value", "buyers_class",
    "demand_value", "demand_class",
    "competitors_value", "competitors_class",
    "survived_5yr",
)


def _provenance(name: str) -> str | None:
    if name.startswith("bank_"):
        return "bank"
    if name.startswith("ext_"):
        return "external"
    return None


def _number(text: str, row: int, col: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"row {row}: column {col!r} has unparseable number {text!r}") from None
    if not np.isfinite(value):
        raise DataError(f"row {row}: column {col!r} is not finite")
    return value


def read_csv(source: str | io.TextIOBase, schema: Sequence[str] | None = None,
             require_labels: bool = True) -> Dataset:
    """Parse a dataset from a CSV text stream or string.

    ``schema`` optionally pins the exact feature columns. With
    ``require_labels=False`` the criteria columns may be absent (candidate
    sites to be scored); their values are then NaN with class Medium.
    """
    stream = io.StringIO(source) if isinstance(source, str) else source
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("empty CSV file") from None
    if not header or header[0] != "id":
        raise DataError("first column must be 'id'")
    features = [h for h in header[1:] if _provenance(h)]
    unknown = [h for h in header[1:] if not _provenance(h) and h not in TASK_COLUMNS and h not in CRITERIA]
    if unknown:
        raise DataError(f"unknown column {unknown[0]!r}")
    if schema is not None and list(schema) != features:
        missing = [c for c in schema if c not in features]
        what = f"missing feature column {missing[0]!r}" if missing else "feature columns differ from the schema"
        raise DataError(what)
    pos = {h: i for i, h in enumerate(header)}
    if require_labels:
        for c in CRITERIA:
            if c in pos:
                continue
            for suffix in ("_value", "_class"):
                if c + suffix not in pos:
                    raise DataError(f"missing column {c + suffix!r}")

    ids, rows = [], []
    values = {c: [] for c in CRITERIA}
    classes = {c: [] for c in CRITERIA}
    survived = []
    for rownum, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise DataError(f"row {rownum}: expected {len(header)} fields, got {len(row)}")
        ids.append(row[0].strip())
        rows.append([_number(row[pos[f]], rownum, f) for f in features])
        for c in CRITERIA:
            if c in pos:
                try:
                    v, k = parse_labeled_value(row[pos[c]])
                except DataError as exc:
                    raise DataError(f"row {rownum}: {exc}") from None
            elif c + "_value" in pos:
                v = _number(row[pos[c + "_value"]], rownum, c + "_value")
                try:
                    k = ValueClass.from_code(row[pos[c + "_class"]].strip())
                except (DataError, KeyError) as exc:
                    raise DataError(f"row {rownum}: {exc}") from None
            else:
                v, k = np.nan, ValueClass.MEDIUM
            values[c].append(v)
            classes[c].append(int(k))
        if "survived_5yr" in pos:
            flag = row[pos["survived_5yr"]].strip()
            if flag not in ("0", "1", ""):
                raise DataError(f"row {rownum}: survived_5yr must be 0, 1 or empty, got {flag!r}")
            survived.append(float(flag) if flag else np.nan)
        else:
            survived.append(np.nan)
    if not ids:
        raise DataError("CSV has no data rows")
    d = len(features)
    return Dataset(
        ids=tuple(ids),
        columns=tuple(Column(f, _provenance(f)) for f in features),
        X=np.asarray(rows, dtype=np.float64).reshape(len(ids), d),
        values={c: np.asarray(values[c], dtype=np.float64) for c in CRITERIA},
        classes={c: np.asarray(classes[c], dtype=np.int64) for c in CRITERIA},
        survived=np.asarray(survived, dtype=np.float64),
    )


def load_csv(path, schema: Sequence[str] | None = None, require_labels: bool = True) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        try:
            return read_csv(fh, schema, require_labels)
        except DataError as exc:
            raise DataError(f"{path}: {exc}") from None


def _fmt(x: float) -> str:
    return repr(float(x))


def to_csv(dataset: Dataset) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["id", *dataset.feature_names, *TASK_COLUMNS])
    for i, ident in enumerate(dataset.ids):
        row = [ident, *(_fmt(x) for x in dataset.X[i])]
        for c in CRITERIA:
            row += [_fmt(dataset.values[c][i]), ValueClass(int(dataset.classes[c][i])).code]
        s = dataset.survived[i]
        row.append("" if np.isnan(s) else str(int(s)))
        writer.writerow(row)
    return out.getvalue()


def save_csv(dataset: Dataset, path) -> None:
    Path(path).write_text(to_csv(dataset), encoding="utf-8")


# -- synthetic data ----------------------------------------------------------

# offset and spread of each criterion in native units, roughly Table-5 sized
_TASK_SCALES = {"buyers": (12000.0, 2500.0), "demand": (250.0, 60.0), "competitors": (120.0, 30.0)}


@dataclass(frozen=True)
class SyntheticConfig:
    m: int = 200
    d_bank: int = 6
    d_external: int = 6
    latent_dim: int = 3
    noise_stddev: float = 0.2
    seed: int = 0
    planted_features: tuple[int, ...] | None = None

    def __post_init__(self):
        for name in ("m", "d_bank", "d_external", "latent_dim"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be at least 1")
        if self.noise_stddev < 0:
            raise ContractError("noise_stddev must be non-negative")
        if self.planted_features is not None:
            d = self.d_bank + self.d_external
            if not self.planted_features or any(not 0 <= j < d for j in self.planted_features):
                raise ContractError(f"planted features must index the {d} feature columns")


def instance_ids(m: int) -> list[str]:
    """Spreadsheet-style ids: A..Z, AA, AB, ..."""
    out = []
    for i in range(m):
        n, s = i + 1, ""
        while n:
            n, r = divmod(n - 1, 26)
            s = chr(ord("A") + r) + s
        out.append(s)
    return out


def _signal_weights(rng: np.random.Generator, n: int) -> np.ndarray:
    w = rng.uniform(0.5, 1.5, size=n)
    return w / np.linalg.norm(w)


def generate_synthetic(config: SyntheticConfig) -> Dataset:
    """Latent-factor dataset with signal shared across the criteria.

    Each instance draws ``latent_dim`` standard normal factors ``z``. Features
    are random linear mixes of ``z`` plus noise. Criterion ``t`` is a
    positive-affine function of the latent pair ``{t, t+1} mod latent_dim``
    (so neighbouring criteria overlap) plus noise, in native units.
    Survival is ``sigmoid(beta . z) > 0.5``.

    With ``planted_features`` every criterion (and survival) is instead
    driven by those feature columns only.
    """
    rng = make_rng(config.seed, 7)
    m, L = config.m, config.latent_dim
    d = config.d_bank + config.d_external
    noise = config.noise_stddev

    Z = rng.standard_normal((m, L))
    mix = rng.standard_normal((L, d)) / np.sqrt(L)
    X = Z @ mix + noise * rng.standard_normal((m, d))

    if config.planted_features is None:
        drivers = Z
        subsets = [sorted({t % L, (t + 1) % L}) for t in range(len(CRITERIA))]
    else:
        drivers = X
        subsets = [list(config.planted_features)] * len(CRITERIA)

    values, classes = {}, {}
    for t, c in enumerate(CRITERIA):
        offset, spread = _TASK_SCALES[c]
        w = _signal_weights(rng, len(subsets[t]))
        signal = drivers[:, subsets[t]] @ w
        values[c] = offset + spread * (signal + noise * rng.standard_normal(m))
        classes[c] = np.asarray([int(k) for k in bin_values(values[c])], dtype=np.int64)

    if config.planted_features is None:
        beta = rng.standard_normal(L)
        survival_score = Z @ beta
    else:
        beta = _signal_weights(rng, len(config.planted_features))
        survival_score = X[:, list(config.planted_features)] @ beta - 0.25
    survived = (sigmoid(survival_score) > 0.5).astype(np.float64)

    names = [f"bank_{j}" for j in range(config.d_bank)] + [f"ext_{j}" for j in range(config.d_external)]
    return Dataset(
        ids=tuple(instance_ids(m)),
        columns=tuple(Column(n, _provenance(n)) for n in names),
        X=X,
        values=values,
        classes=classes,
        survived=survived,
    )


def concat_ids(datasets: Iterable[Dataset]) -> list[str]:
    return [i for ds in datasets for i in ds.ids]
