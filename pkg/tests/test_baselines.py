import math

import numpy as np
import pytest

from sme_advisor import nn
from sme_advisor.baselines import (
    ForestConfig, ForestModel, LogisticModel, MlpModel, SvmConfig, SvmModel, SvrModel, TrainConfig,
    logistic_gradient, logistic_objective, mlp_objective, predict_logistic, svm_objective, train_forest,
    train_logistic, train_mlp_single, train_svm, train_svm_ovr, train_svr,
)
from sme_advisor.baselines.svm import OneVsRestSvm
from sme_advisor.numerics import ContractError, flatten_params, grad_check, make_rng, unflatten_params


def _blobs(seed, m=40, d=3):
    rng = make_rng(seed, 99)
    X = rng.standard_normal((m, d))
    y = (X @ rng.standard_normal(d) + 0.3 * rng.standard_normal(m) > 0).astype(float)
    return X, y


# -- logistic ----------------------------------------------------------------

def test_logistic_separable_1d():
    model = train_logistic([[-1.0], [1.0]], [0, 1], TrainConfig(l2=0.01, epochs=200))
    assert model.predict([[-1.0], [1.0]]).tolist() == [0, 1]


def test_logistic_zero_model_and_predict_examples():
    zero = LogisticModel(np.zeros(2))
    assert np.all(zero.predict_proba(np.random.default_rng(0).standard_normal((5, 2))) == 0.5)
    assert predict_logistic(zero, [3.0, -1.0]) == (0.5, 0)
    p, c = predict_logistic(LogisticModel(np.array([1.0])), [math.log(3)])
    assert p == pytest.approx(0.75, abs=1e-15) and c == 1
    with pytest.raises(ContractError):
        predict_logistic(zero, [1.0])


def test_logistic_probability_open_interval():
    model = LogisticModel(np.array([2.0, -3.0]), 0.5)
    p = model.predict_proba(np.random.default_rng(1).uniform(-5, 5, (50, 2)))
    assert np.all((p > 0) & (p < 1))


def test_logistic_threshold_validated():
    with pytest.raises(ContractError):
        LogisticModel(np.zeros(1), threshold=1.0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_logistic_gradient_matches_finite_differences(seed):
    X, y = _blobs(seed)
    theta = make_rng(seed).standard_normal(X.shape[1] + 1)

    def f(t):
        return logistic_objective(t[:-1], t[-1], X, y, 0.05)

    def g(t):
        gw, gb = logistic_gradient(t[:-1], t[-1], X, y, 0.05)
        return np.append(gw, gb)

    assert grad_check(f, g, theta).max_rel_error < 1e-4


def test_logistic_loss_monotone_even_with_large_rate():
    X, y = _blobs(4)
    model = train_logistic(X * 10, y, TrainConfig(learning_rate=100.0, epochs=50))
    assert all(b <= a + 1e-15 for a, b in zip(model.loss_trace, model.loss_trace[1:]))
    assert model.loss_trace[-1] <= model.loss_trace[0]


def test_logistic_rejects_nonbinary():
    with pytest.raises(ContractError):
        train_logistic([[0.0], [1.0]], [0, 2])


def test_logistic_duplicated_column_equals_sqrt2_scaling():
    # repeating column j splits its weight evenly between the copies, which is
    # the same ridge problem as keeping one copy scaled by sqrt(2)
    X, y = _blobs(5, m=30, d=3)
    dup = np.column_stack([X, X[:, 1]])
    scaled = X.copy()
    scaled[:, 1] *= math.sqrt(2)
    cfg = TrainConfig(l2=0.1, epochs=300)
    a, b = train_logistic(dup, y, cfg), train_logistic(scaled, y, cfg)
    assert np.max(np.abs(a.predict_proba(dup) - b.predict_proba(scaled))) < 1e-10
    assert a.w[1] == pytest.approx(a.w[3], abs=1e-12)


def test_logistic_json_roundtrip():
    X, y = _blobs(6)
    model = train_logistic(X, y)
    back = LogisticModel.from_json(model.to_json())
    assert np.array_equal(back.predict_proba(X), model.predict_proba(X))


# -- MLP ---------------------------------------------------------------------

def test_mlp_fits_line():
    x = np.linspace(-1, 1, 100)[:, None]
    model, trace = train_mlp_single(x, 2 * x[:, 0] + 1, "regression", TrainConfig(epochs=200))
    rmse = np.sqrt(np.mean((model.predict(x) - (2 * x[:, 0] + 1)) ** 2))
    assert rmse < 0.05
    assert len(trace) == 201 and trace[-1] < trace[0]


def test_mlp_exclusive3_outputs_are_distributions():
    X, _ = _blobs(1, m=30)
    y = np.arange(30) % 3
    model, _ = train_mlp_single(X, y, "exclusive3", TrainConfig(epochs=20))
    P = model.predict(X)
    assert np.allclose(P.sum(axis=1), 1, atol=1e-12)
    assert set(model.predict_class(X).tolist()) <= {0, 1, 2}


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("kind", ["regression", "binary", "exclusive3"])
def test_mlp_gradient_matches_finite_differences(seed, kind):
    X, yb = _blobs(seed, m=12, d=3)
    y = {"regression": X[:, 0] - X[:, 1], "binary": yb, "exclusive3": np.arange(12) % 3}[kind]
    n_out = 3 if kind == "exclusive3" else 1
    params = nn.init_dense(make_rng(seed), 3, 4, n_out)
    params["b"] = make_rng(seed, 5).standard_normal(4) * 0.1

    def f(flat):
        return mlp_objective(unflatten_params(flat, params), X, y, kind, 0.01)[0]

    def g(flat):
        return flatten_params(mlp_objective(unflatten_params(flat, params), X, y, kind, 0.01)[1])

    assert grad_check(f, g, flatten_params(params)).max_rel_error < 1e-4


def test_mlp_replay_is_identical():
    X, y = _blobs(2)
    a, ta = train_mlp_single(X, y, "binary", TrainConfig(epochs=10, seed=3))
    b, tb = train_mlp_single(X, y, "binary", TrainConfig(epochs=10, seed=3))
    assert ta == tb and np.array_equal(a.predict(X), b.predict(X))


def test_mlp_shape_errors():
    with pytest.raises(ContractError):
        train_mlp_single(np.zeros((4, 2)), np.zeros(3), "regression")
    with pytest.raises(ContractError):
        train_mlp_single(np.zeros((4, 2)), np.array([0, 1, 2, 1]), "binary")


def test_mlp_divergence_is_an_error():
    X = np.random.default_rng(0).standard_normal((20, 2)) * 100
    y = np.random.default_rng(1).standard_normal(20)
    with pytest.raises(nn.TrainingDiverged, match="epoch"):
        with np.errstate(all="ignore"):
            train_mlp_single(X, y * 1e3, "regression", TrainConfig(learning_rate=1e8, epochs=50, hidden_units=2))


def test_mlp_json_roundtrip():
    X, y = _blobs(3)
    model, _ = train_mlp_single(X, X[:, 0] * 5 + 100, "regression", TrainConfig(epochs=5))
    back = MlpModel.from_json(model.to_json())
    assert np.array_equal(back.predict(X), model.predict(X))


# -- forest ------------------------------------------------------------------

def test_forest_single_tree_memorizes():
    x = np.random.default_rng(0).permutation(30).astype(float)[:, None]
    y = np.sin(x[:, 0])
    cfg = ForestConfig(n_trees=1, max_depth=None, bootstrap=False)
    assert np.array_equal(train_forest(x, y, "regression", cfg).predict(x), y)


def test_forest_depth_zero_predicts_global_summary():
    X, y = _blobs(0)
    reg = train_forest(X, X[:, 0], "regression", ForestConfig(n_trees=3, max_depth=0, bootstrap=False))
    assert np.allclose(reg.predict(X), X[:, 0].mean())
    y3 = np.array([0] * 5 + [2] * 9 + [1] * 6)
    cls = train_forest(X[:20], y3, "exclusive3", ForestConfig(n_trees=3, max_depth=0, bootstrap=False))
    assert set(cls.predict(X).tolist()) == {2}


def test_forest_deterministic_and_depth_bounded():
    X, y = _blobs(1, m=60)
    cfg = ForestConfig(n_trees=5, max_depth=3, seed=4)
    a, b = train_forest(X, y, "binary", cfg), train_forest(X, y, "binary", cfg)
    assert np.array_equal(a.predict_proba(X), b.predict_proba(X))
    assert all(t.depth <= 3 for t in a.trees)


def test_forest_vote_tie_goes_to_lower_class():
    X, y = _blobs(2, m=20)
    stump = train_forest(X, np.arange(20) % 2, "binary", ForestConfig(n_trees=2, max_depth=0, bootstrap=False))
    assert stump.predict(X[:1]).tolist() == [0]


def test_forest_json_roundtrip():
    X, y = _blobs(3)
    model = train_forest(X, X[:, 1], "regression", ForestConfig(n_trees=4))
    assert np.array_equal(ForestModel.from_json(model.to_json()).predict(X), model.predict(X))


# -- SVM ---------------------------------------------------------------------

def test_svm_separable_pair():
    model = train_svm([[-2.0], [2.0]], [-1, 1], SvmConfig(C=100.0))
    assert model.predict([[-2.0], [2.0]]).tolist() == [-1, 1]


def test_svm_zero_start_objective_is_one():
    X, y = _blobs(0)
    assert svm_objective(np.zeros(3), 0.0, X, 2 * y - 1, 1.0) == 1.0
    model = train_svm(X, 2 * y - 1, SvmConfig(epochs=100))
    assert model.loss_trace[0] == 1.0
    assert svm_objective(model.w, model.b, X, 2 * y - 1, 1.0) <= 1.0


def test_svm_rejects_bad_labels():
    with pytest.raises(ContractError):
        train_svm([[0.0], [1.0]], [0, 1])
    with pytest.raises(ContractError):
        SvmConfig(C=0.0)


def test_ovr_argmax_and_ties():
    tie = OneVsRestSvm([SvmModel(np.zeros(1), 0.0, 1.0)] * 3)
    assert tie.predict([[5.0]]).tolist() == [0]
    X = np.array([[-3.0], [-2.5], [0.0], [0.2], [3.0], [2.6]])
    model = train_svm_ovr(np.column_stack([X, X**2]), [0, 0, 1, 1, 2, 2], cfg=SvmConfig(C=50.0, epochs=3000))
    preds = model.predict(np.column_stack([X, X**2]))
    assert preds.shape == (6,) and set(preds.tolist()) <= {0, 1, 2}


def test_svr_tracks_linear_target():
    X = np.random.default_rng(0).standard_normal((80, 2))
    y = 3 * X[:, 0] - X[:, 1] + 50
    model = train_svr(X, y, SvmConfig(C=100.0, epochs=2000, epsilon=0.01))
    assert np.sqrt(np.mean((model.predict(X) - y) ** 2)) < 0.3
    assert np.array_equal(SvrModel.from_json(model.to_json()).predict(X), model.predict(X))
