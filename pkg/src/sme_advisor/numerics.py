"""Dense numerics shared by every learner.

Vectors and matrices are plain float64 numpy arrays; the helpers here only
add the contract checks (shape agreement, finiteness) the learners rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class ContractError(ValueError):
    """A precondition of a numerics or model operation was violated."""


def as_vector(values, name: str = "vector") -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ContractError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ContractError(f"{name} contains non-finite entries")
    return v


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    a = np.asarray(values, dtype=np.float64)
    if a.ndim != 2:
        raise ContractError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractError(f"{name} contains non-finite entries")
    return a


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit shape check."""
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ContractError(
            f"matmul shape mismatch: {a.shape[0]}x{a.shape[1]} @ {b.shape[0]}x{b.shape[1]}"
        )
    return a @ b


def sigmoid(z):
    """Logistic function, stable for any finite input.

    Works on scalars and arrays. Negative inputs go through ``e^z / (1 + e^z)``
    so ``exp`` never sees a large positive argument.
    """
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    if out.ndim == 0:
        return float(out)
    return out


def softmax(v, axis: int = -1) -> np.ndarray:
    """Softmax along ``axis`` after max-subtraction."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0 or v.shape[axis] == 0:
        raise ContractError("softmax of an empty vector")
    shifted = v - np.max(v, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def finite_diff_grad(f: Callable[[np.ndarray], float], x, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    if eps <= 0:
        raise ContractError("eps must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    for j in range(x.size):
        step = np.zeros_like(x)
        step.flat[j] = eps
        hi = float(f(x + step))
        lo = float(f(x - step))
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise FloatingPointError(f"non-finite function value at coordinate {j}")
        grad.flat[j] = (hi - lo) / (2.0 * eps)
    return grad


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    rel_errors: np.ndarray = field(repr=False)

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def relative_errors(analytic, numeric, floor: float = 1e-8) -> np.ndarray:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def grad_check(
    f: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    x,
    eps: float = 1e-5,
) -> GradCheckReport:
    """Compare an analytic gradient against central differences at ``x``."""
    x = np.array(x, dtype=np.float64)
    numeric = finite_diff_grad(f, x, eps)
    errs = relative_errors(grad(x), numeric)
    return GradCheckReport(max_rel_error=float(errs.max(initial=0.0)), rel_errors=errs)


# -- parameter packing for gradient checks ---------------------------------

def flatten_params(params: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([np.ravel(params[k]) for k in sorted(params)])


def unflatten_params(flat: np.ndarray, template: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    out = {}
    pos = 0
    for k in sorted(template):
        shape = np.shape(template[k])
        n = int(np.prod(shape))
        out[k] = np.asarray(flat[pos:pos + n], dtype=np.float64).reshape(shape)
        pos += n
    return out


# -- seeded randomness ------------------------------------------------------

def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 generator for ``seed``, optionally on an independent sub-stream.

    Sub-streams are how parallel pieces (trees, folds, init vs. shuffling)
    get their own generator without sharing one.
    """
    if seed < 0 or seed >= 2**64:
        raise ContractError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))


def gaussian(rng: np.random.Generator, mean: float = 0.0, stddev: float = 1.0) -> float:
    if stddev < 0:
        raise ContractError(f"stddev must be non-negative, got {stddev}")
    if stddev == 0:
        return float(mean)
    return float(mean + stddev * rng.standard_normal())


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    r = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-r, r, size=shape)
