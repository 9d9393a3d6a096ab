"""Multi-task prediction of small-business success criteria from tabular features."""

from .dataset import CRITERIA, SURVIVAL, Dataset, DataError, SyntheticConfig, TaskSpec, generate_synthetic, load_csv
from .evaluation import ConfusionMatrix, MetricReport, UndefinedMetricError, cross_validate, emit_comparison_table, rmse
from .mtl import MtlConfig, MtlModel, feature_importance, train_mtl
from .numerics import ContractError
from .pipeline import FittedModel, Hyperparams, fit_model, load_model, save_model

__version__ = "0.1.0"

__all__ = [
    "CRITERIA", "SURVIVAL", "Dataset", "DataError", "SyntheticConfig", "TaskSpec", "generate_synthetic", "load_csv",
    "ConfusionMatrix", "MetricReport", "UndefinedMetricError", "cross_validate", "emit_comparison_table", "rmse",
    "MtlConfig", "MtlModel", "feature_importance", "train_mtl",
    "ContractError",
    "FittedModel", "Hyperparams", "fit_model", "load_model", "save_model",
]
