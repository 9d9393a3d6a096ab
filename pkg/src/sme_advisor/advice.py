"""Score candidate business sites with a trained multi-task model and rank them.

The ranking sorts by predicted survival probability, then by predicted
demand, then by site id, so it is a strict total order for any input.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Sequence

import numpy as np

from .dataset import CRITERIA, SURVIVAL, Dataset, schema_hash
from .mtl import FeatureImportance, MtlModel, feature_importance
from .numerics import ContractError
from .pipeline import FittedModel, SchemaMismatch, dumps

REPORT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class CandidateSite:
    id: str
    features: np.ndarray
    schema_hash: str
    label: str = ""


@dataclass(frozen=True)
class SiteScore:
    """Per-task predictions for one site.

    Criterion entries are native-unit values (regression heads) or
    Low/Medium/High probability lists (exclusive3 heads); criteria the
    model does not cover are None.
    """

    site_id: str
    survival_probability: float
    predictions: dict[str, float | list[float] | None]
    label: str = ""

    @property
    def demand_key(self) -> float:
        """Demand as a sortable number; class distributions use the expected class index."""
        v = self.predictions.get("demand")
        if v is None:
            return 0.0
        if isinstance(v, list):
            return float(np.dot(v, np.arange(len(v))))
        return float(v)


def sites_from_dataset(data: Dataset, labels: Sequence[str] | None = None) -> list[CandidateSite]:
    h = data.schema_hash
    labels = labels or [""] * data.m
    return [CandidateSite(i, data.X[k].copy(), h, labels[k]) for k, i in enumerate(data.ids)]


def _as_mtl(model: FittedModel | MtlModel) -> MtlModel:
    if isinstance(model, FittedModel):
        if model.mtl_model is None:
            raise ContractError(f"site scoring needs a multi-task model, got kind {model.kind!r}")
        return model.mtl_model
    return model


def score_site(model: FittedModel | MtlModel, site: CandidateSite) -> SiteScore:
    """Run every task head on one site; the model must have a survival task."""
    m = _as_mtl(model)
    expected = schema_hash(m.feature_names)
    if site.schema_hash != expected:
        raise SchemaMismatch(f"schema mismatch: model expects {expected}, site {site.id!r} has {site.schema_hash}")
    if SURVIVAL not in m.task_names or m.tasks[m.task_index(SURVIVAL)].head_kind != "binary":
        raise ContractError("model has no binary survival task")
    out = m.predict(np.asarray(site.features, dtype=np.float64).reshape(1, -1))
    preds: dict[str, float | list[float] | None] = {}
    for c in CRITERIA:
        v = out.get(c)
        preds[c] = None if v is None else (v[0].tolist() if v.ndim == 2 else float(v[0]))
    return SiteScore(site.id, float(out[SURVIVAL][0]), preds, site.label)


def rank_sites(scores: Sequence[SiteScore]) -> list[SiteScore]:
    """Survival probability descending, then demand descending, then id ascending."""
    if not scores:
        raise ContractError("no sites to rank")
    return sorted(scores, key=lambda s: (-s.survival_probability, -s.demand_key, s.site_id))


def model_id(model: FittedModel) -> str:
    """Content hash of the saved model document."""
    return hashlib.sha256(dumps(model.to_document()).encode("utf-8")).hexdigest()[:16]


def render_report(ranking: Sequence[SiteScore], importances: Sequence[FeatureImportance],
                  metadata: dict, generated_at: str | None = None) -> dict:
    """Advice document for a ranked list of sites.

    ``metadata`` must carry ``model_id`` and ``schema_hash``; any other keys
    are copied under ``metadata``. Importances are emitted by overall
    weight, descending.
    """
    if not ranking:
        raise ContractError("ranking is empty")
    if generated_at is None:
        generated_at = datetime.now(timezone.utc).replace(microsecond=0).isoformat()
    extra = {k: v for k, v in metadata.items() if k not in ("model_id", "schema_hash")}
    ordered = sorted(importances, key=lambda f: (-f.overall, f.index))
    return {
        "format_version": REPORT_FORMAT_VERSION,
        "generated_at": generated_at,
        "model_id": metadata["model_id"],
        "schema_hash": metadata["schema_hash"],
        "metadata": extra,
        "ranking": [
            {
                "rank": r + 1,
                "site_id": s.site_id,
                "label": s.label,
                "survival_probability": s.survival_probability,
                **{c: s.predictions.get(c) for c in CRITERIA},
            }
            for r, s in enumerate(ranking)
        ],
        "feature_importance": [
            {"feature": f.feature, "overall": f.overall, "per_task": dict(f.per_task)} for f in ordered
        ],
    }


def advise(model: FittedModel, sites: Dataset, top_k: int | None = None,
           generated_at: str | None = None, metadata: dict | None = None) -> dict:
    """Score, rank and report on every site in ``sites``."""
    m = _as_mtl(model)
    ranking = rank_sites([score_site(m, s) for s in sites_from_dataset(sites)])
    importances = feature_importance(m, sites)
    if top_k is not None:
        importances = importances[:top_k]
    meta = {"model_id": model_id(model), "schema_hash": model.schema_hash, **(metadata or {})}
    return render_report(ranking, importances, meta, generated_at)
