"""Single-task reference learners: logistic regression, MLP, random forest, linear SVM."""

from .config import ForestConfig, SvmConfig, TrainConfig
from .forest import ForestModel, Tree, train_forest
from .logistic import LogisticModel, logistic_gradient, logistic_objective, predict_logistic, train_logistic
from .mlp import MlpModel, mlp_objective, train_mlp_single
from .svm import OneVsRestSvm, SvmModel, SvrModel, svm_objective, train_svm, train_svm_ovr, train_svr

__all__ = [
    "ForestConfig", "SvmConfig", "TrainConfig",
    "ForestModel", "Tree", "train_forest",
    "LogisticModel", "logistic_gradient", "logistic_objective", "predict_logistic", "train_logistic",
    "MlpModel", "mlp_objective", "train_mlp_single",
    "OneVsRestSvm", "SvmModel", "SvrModel", "svm_objective", "train_svm", "train_svm_ovr", "train_svr",
]
