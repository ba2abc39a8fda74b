"""Adam optimizer with dense parameters and row-sparse lookup tables.

Lookup tables (target/context embeddings) are updated lazily: only rows
touched by the current batch have their moments decayed and applied, so
untouched rows are bit-identical after the step. Bias correction uses the
shared global step count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError
from .autograd import Tensor


@dataclass
class AdamState:
    """Moment buffers and hyperparameters for one parameter."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, shape, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8, dtype=np.float64) -> "AdamState":
        return cls(np.zeros(shape, dtype=dtype), np.zeros(shape, dtype=dtype),
                   0, lr, beta1, beta2, eps)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState) -> np.ndarray:
    """Standard bias-corrected Adam update, applied in place."""
    if param.shape != grad.shape or param.shape != state.m.shape:
        raise ShapeError(f"adam shapes disagree: param {param.shape}, grad {grad.shape}")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    param -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return param


def adam_step_rows(table: np.ndarray, rows: np.ndarray, grad_rows: np.ndarray,
                   state: AdamState) -> np.ndarray:
    """Lazy Adam on the given (unique) rows only; other rows are untouched."""
    state.step += 1
    state.m[rows] = state.beta1 * state.m[rows] + (1.0 - state.beta1) * grad_rows
    state.v[rows] = state.beta2 * state.v[rows] + (1.0 - state.beta2) * grad_rows * grad_rows
    m_hat = state.m[rows] / (1.0 - state.beta1 ** state.step)
    v_hat = state.v[rows] / (1.0 - state.beta2 ** state.step)
    table[rows] -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return table


@dataclass
class Adam:
    """Coordinates per-parameter Adam states for a model.

    Dense slots hold graph Tensors and consume their .grad; table slots
    hold raw arrays and receive (rows, grads) per step.
    """

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    dense: dict = field(default_factory=dict)   # name -> (Tensor, AdamState)
    tables: dict = field(default_factory=dict)  # name -> (ndarray, AdamState)

    def register_dense(self, name: str, tensor: Tensor) -> None:
        self.dense[name] = (tensor, AdamState.fresh(
            tensor.data.shape, self.lr, self.beta1, self.beta2, self.eps, tensor.data.dtype))

    def register_table(self, name: str, table: np.ndarray) -> None:
        self.tables[name] = (table, AdamState.fresh(
            table.shape, self.lr, self.beta1, self.beta2, self.eps, table.dtype))

    @property
    def step_count(self) -> int:
        for _, state in self.dense.values():
            return state.step
        for _, state in self.tables.values():
            return state.step
        return 0

    def step(self, table_updates: dict | None = None,
             grad_map: dict | None = None, clip_norm: float | None = None) -> None:
        """Apply one update. table_updates maps table name -> (rows, grad_rows);
        grad_map (from backward) overrides dense tensors' .grad attributes.
        """
        table_updates = table_updates or {}
        dense_grads = {}
        for name, (tensor, _) in self.dense.items():
            grad = grad_map.get(id(tensor)) if grad_map is not None else tensor.grad
            if grad is not None:
                dense_grads[name] = grad

        if clip_norm is not None:
            total = 0.0
            for grad in dense_grads.values():
                total += float((grad * grad).sum())
            for _, grad_rows in table_updates.values():
                total += float((grad_rows * grad_rows).sum())
            norm = np.sqrt(total)
            if norm > clip_norm:
                scale = clip_norm / norm
                dense_grads = {k: g * scale for k, g in dense_grads.items()}
                table_updates = {k: (r, g * scale) for k, (r, g) in table_updates.items()}

        for name, grad in dense_grads.items():
            tensor, state = self.dense[name]
            adam_step(tensor.data, grad, state)
        for name, (rows, grad_rows) in table_updates.items():
            table, state = self.tables[name]
            adam_step_rows(table, rows, grad_rows, state)
        # keep step counts aligned for slots that saw no gradient this batch
        target = max((s.step for _, s in list(self.dense.values()) + list(self.tables.values())),
                     default=0)
        for _, state in list(self.dense.values()) + list(self.tables.values()):
            state.step = target

    def zero_grad(self) -> None:
        for tensor, _ in self.dense.values():
            tensor.grad = None
