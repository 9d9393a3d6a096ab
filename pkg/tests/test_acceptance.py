"""Acceptance suite: one block per criterion, each with its runtime budget.

A criterion passes when every test tagged with its number passes; the
terminal summary prints one PASS/FAIL line per criterion.
"""

import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from sme_advisor import cli, mtl, nn, pipeline
from sme_advisor.baselines import TrainConfig, logistic_gradient, logistic_objective, mlp_objective, train_mlp_single
from sme_advisor.dataset import (
    CRITERIA, SyntheticConfig, TaskSpec, default_tasks, generate_synthetic, kfold, largest_remainder, split,
)
from sme_advisor.evaluation import (
    ConfusionMatrix, Predictions, accuracy, confusion, cross_validate, emit_comparison_table, paper_specificity, rmse,
    standard_specificity,
)
from sme_advisor.numerics import flatten_params, grad_check, make_rng, unflatten_params

GOLDEN = Path(__file__).parent / "golden"


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.1f}s, budget {self.seconds}s"


# -- 1 -----------------------------------------------------------------------

def _double_sum(P, Y):
    total = 0.0
    for j in range(P.shape[0]):
        acc = 0.0
        for i in range(P.shape[1]):
            p = min(max(P[j, i], 1e-12), 1 - 1e-12)
            acc += Y[j, i] * math.log(p) + (1 - Y[j, i]) * math.log(1 - p)
        total -= acc / P.shape[1]
    return total


@pytest.mark.acceptance(1, "vectorized multi-task loss equals the literal double sum")
def test_c1_loss_oracle():
    tasks = tuple(TaskSpec(f"t{j}", "binary") for j in range(3))
    model = mtl.init_model(2, tasks, mtl.MtlConfig(lambda_share=0.0), zero=True)
    names = [t.name for t in tasks]
    with Budget(1.0):
        rng = make_rng(2024)
        worst = 0.0
        for _ in range(100):
            m = int(rng.integers(1, 21))
            P = rng.uniform(0, 1, (3, m))
            Y = rng.integers(0, 2, (3, m)).astype(float)
            got = mtl.mtl_loss(dict(zip(names, P)), dict(zip(names, Y)), model).total
            worst = max(worst, abs(got - _double_sum(P, Y)))
        half = mtl.mtl_loss({n: np.array([0.5]) for n in names}, {n: np.array([1.0]) for n in names}, model).total
    assert worst <= 1e-12
    assert abs(half - 3 * math.log(2)) <= 1e-12


# -- 2 -----------------------------------------------------------------------

def _check(f, g, theta):
    return grad_check(f, g, theta, eps=1e-5).max_rel_error


@pytest.mark.acceptance(2, "logistic, MLP and full MTL gradients match central differences")
def test_c2_gradients():
    errors = {}
    with Budget(30.0):
        for seed in (0, 1, 2):
            rng = make_rng(seed, 500)
            X = rng.standard_normal((15, 4))
            yb = (rng.uniform(size=15) > 0.5).astype(float)

            theta = rng.standard_normal(5)
            errors[("logistic", seed)] = _check(
                lambda t: logistic_objective(t[:-1], t[-1], X, yb, 0.05),
                lambda t: np.append(*logistic_gradient(t[:-1], t[-1], X, yb, 0.05)), theta)

            params = nn.init_dense(make_rng(seed), 4, 5, 1)
            params["b"] = rng.standard_normal(5) * 0.1
            errors[("mlp", seed)] = _check(
                lambda v: mlp_objective(unflatten_params(v, params), X, yb, "binary", 0.01)[0],
                lambda v: flatten_params(mlp_objective(unflatten_params(v, params), X, yb, "binary", 0.01)[1]),
                flatten_params(params))

            tasks = (TaskSpec("buyers"), TaskSpec("demand", "exclusive3"), TaskSpec("survived_5yr", "binary"))
            model = mtl.init_model(4, tasks, mtl.MtlConfig(hidden_units=5, attention_dim=3), seed)
            model.A = rng.standard_normal(model.A.shape)
            model.q = rng.standard_normal(model.q.shape) * 0.5
            model.b = rng.standard_normal(model.b.shape) * 0.1
            p = model.params()
            Y = [X[:, 0] - X[:, 2], rng.integers(0, 3, 15).astype(float), yb]

            def objective(v, grad):
                return mtl.mtl_objective(unflatten_params(v, p), X, Y, tasks, model.task_weights, 0.4, 0.01, grad)

            errors[("mtl", seed)] = _check(lambda v: objective(v, False)[0].total,
                                           lambda v: flatten_params(objective(v, True)[1]), flatten_params(p))
    bad = {k: v for k, v in errors.items() if not v < 1e-4}
    assert not bad, bad


# -- 3 -----------------------------------------------------------------------

@pytest.mark.acceptance(3, "d=1, one task, no sharing: MTL replays the MLP loss trace bitwise")
def test_c3_reduction_law():
    full = generate_synthetic(SyntheticConfig(m=80, d_bank=1, d_external=1, seed=9))
    data = replace(full, columns=full.columns[:1], X=full.X[:, :1])
    with Budget(10.0):
        for task in CRITERIA:
            cfg = mtl.MtlConfig(epochs=100, lambda_share=0.0, seed=5)
            _, trace = mtl.train_mtl(data, cfg, seed=5, tasks=[TaskSpec(task)])
            _, ref = train_mlp_single(data.X, data.values[task], "regression", TrainConfig(epochs=100, seed=5))
            assert trace == ref, task


# -- 4 -----------------------------------------------------------------------

@pytest.mark.acceptance(4, "MTL beats single-task ANN on at least 2 of 3 tasks (5 seeds, k=5)")
def test_c4_mtl_benefit():
    hp = pipeline.Hyperparams()
    tasks = list(CRITERIA)
    totals = {"mtl": np.zeros(3), "ann": np.zeros(3)}
    with Budget(180.0):
        for seed in range(5):
            data = generate_synthetic(SyntheticConfig(m=300, d_bank=6, d_external=6, latent_dim=3,
                                                      noise_stddev=0.2, seed=seed))
            for kind in totals:
                result = cross_validate(pipeline.trainer(kind, hp, tasks), data, k=5, seed=seed)
                totals[kind] += [result.mean[f"rmse_{c}"] for c in CRITERIA]
    mtl_mean, ann_mean = totals["mtl"] / 5, totals["ann"] / 5
    print(f"mean test RMSE {CRITERIA}: mtl {np.round(mtl_mean, 2)} ann {np.round(ann_mean, 2)}")
    assert int(np.sum(mtl_mean <= ann_mean)) >= 2


# -- 5 -----------------------------------------------------------------------

@pytest.mark.acceptance(5, "attention ranks the planted features {0,1} in its top 3 on >= 4 of 5 seeds")
def test_c5_attention_selects_planted_features():
    hits = 0
    with Budget(120.0):
        for seed in range(5):
            data = generate_synthetic(SyntheticConfig(m=300, d_bank=6, d_external=6, seed=seed, planted_features=(0, 1)))
            model, _ = mtl.train_mtl(data, mtl.MtlConfig(), seed=seed, tasks=default_tasks(), standardize=True)
            top = [f.index for f in mtl.feature_importance(model, data)[:3]]
            print(f"seed {seed}: top features {top}")
            hits += {0, 1} <= set(top)
    assert hits >= 4


# -- 6 -----------------------------------------------------------------------

@pytest.mark.acceptance(6, "metric identities match hand-computed fixtures")
def test_c6_metric_identities():
    cm = ConfusionMatrix(tp=8, fp=1, tn=9, fn=2)
    assert paper_specificity(cm) == 0.8
    assert standard_specificity(cm) == 0.9
    assert accuracy(cm) == 17 / 20
    half = confusion([1] * 10, [1] * 5 + [0] * 5)
    assert (half.tp, half.fp, half.tn, half.fn) == (5, 5, 0, 0)
    inverted = confusion([0, 1, 1, 0], [1, 0, 0, 1])
    assert (inverted.tp, inverted.tn) == (0, 0)
    assert paper_specificity(ConfusionMatrix(0, 0, 3, 5)) == 0.0
    assert standard_specificity(ConfusionMatrix(2, 4, 0, 0)) == 0.0
    assert abs(rmse([0, 0], [3, 4]) - 3.53553) <= 1e-5
    assert rmse([5.0], [2.0]) == 3.0


# -- 7 -----------------------------------------------------------------------

class _Zero:
    def predict(self, X):
        return Predictions({c: np.zeros(len(X)) for c in CRITERIA})


@pytest.mark.acceptance(7, "split/kfold partition laws and CV scores every instance once")
def test_c7_harness_laws():
    rng = make_rng(77)
    for _ in range(50):
        m = int(rng.integers(3, 400))
        k = int(rng.integers(2, m + 1))
        raw = rng.uniform(0.05, 1.0, 3)
        ratios = tuple(raw / raw.sum())
        seed = int(rng.integers(0, 2**31))

        parts = split(m, ratios, seed)
        assert sorted(np.concatenate(parts).tolist()) == list(range(m))
        assert [len(p) for p in parts] == largest_remainder(m, ratios)

        plan = kfold(m, k, seed)
        tests = [plan.test_indices(f) for f in range(k)]
        assert sorted(np.concatenate(tests).tolist()) == list(range(m))
        assert max(map(len, tests)) - min(map(len, tests)) <= 1
        for f in range(k):
            assert len(np.intersect1d(plan.train_indices(f), tests[f])) == 0
            assert len(plan.train_indices(f)) + len(tests[f]) == m

    data = generate_synthetic(SyntheticConfig(m=37, seed=1))
    for k in (2, 5, 37):
        result = cross_validate(lambda train, seed: _Zero(), data, k=k, seed=k)
        seen = [i for ids in result.test_ids for i in ids]
        assert sorted(seen) == sorted(data.ids) and len(seen) == data.m


# -- 8 -----------------------------------------------------------------------

@pytest.mark.acceptance(8, "comparison table reproduces the golden file byte for byte")
def test_c8_table_golden():
    grid = {
        "rf": {"demand": 1111.6, "buyers": 2513, "competitors": 173.2},
        "svm": {"demand": 1985.5, "buyers": 2113.6, "competitors": 104.3},
        "ann": {"demand": 1843.2, "buyers": 2364.2, "competitors": 149.3},
        "mtl": {"demand": 1680.3, "buyers": 1760.3, "competitors": 236.2},
    }
    golden = (GOLDEN / "comparison_table.txt").read_bytes()
    assert emit_comparison_table(grid).encode("utf-8") == golden
    assert emit_comparison_table(dict(grid)).encode("utf-8") == golden


# -- 9 -----------------------------------------------------------------------

def _pipeline_run(root: Path) -> dict[str, bytes]:
    root.mkdir()
    steps = [
        ["gen-data", "--seed", "7", "--out", root / "data.csv"],
        ["train", "--model", "mtl", "--data", root / "data.csv", "--seed", "7", "--out", root / "model.json"],
        ["evaluate", "--models", "rf,svm,ann,mtl", "--data", root / "data.csv", "--seed", "7",
         "--out", root / "table.txt"],
    ]
    for argv in steps:
        assert cli.run([str(a) for a in argv]) == 0, argv
    return {p.name: p.read_bytes() for p in sorted(root.iterdir())}


@pytest.mark.acceptance(9, "gen-data -> train -> evaluate is byte-identical across two runs")
def test_c9_end_to_end_determinism(tmp_path, monkeypatch):
    monkeypatch.delenv(cli.SEED_ENV, raising=False)
    with Budget(120.0):
        first = _pipeline_run(tmp_path / "one")
        second = _pipeline_run(tmp_path / "two")
    assert sorted(first) == ["data.csv", "data.csv.meta.json", "model.json", "table.txt", "table.txt.json"]
    assert first == second
    assert len(first["table.txt"].decode().splitlines()) == 5
