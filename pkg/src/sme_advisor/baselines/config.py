"""Hyperparameter records for the single-task learners."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from ..numerics import ContractError


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 300
    batch_size: int = 16
    l2: float = 0.0
    seed: int = 0
    hidden_units: int = 16

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ContractError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise ContractError(f"epochs must be at least 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.hidden_units < 1:
            raise ContractError(f"hidden_units must be at least 1, got {self.hidden_units}")
        if self.l2 < 0:
            raise ContractError(f"l2 must be non-negative, got {self.l2}")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 50
    max_depth: int | None = 8
    max_features: str | int | None = "sqrt"
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ContractError("n_trees must be at least 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ContractError("max_depth must be non-negative")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    learning_rate: float = 0.5
    epochs: int = 1000
    epsilon: float = 0.1  # insensitive-zone half width for regression, in target stddevs
    seed: int = 0

    def __post_init__(self):
        if not self.C > 0:
            raise ContractError(f"C must be positive, got {self.C}")
        if not self.learning_rate > 0:
            raise ContractError("learning_rate must be positive")
        if self.epochs < 1:
            raise ContractError("epochs must be at least 1")
        if self.epsilon < 0:
            raise ContractError("epsilon must be non-negative")

    def to_json(self) -> dict:
        return asdict(self)
