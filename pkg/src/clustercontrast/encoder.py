"""Linear + L2-normalization encoder, its backward pass, Adam and the LR schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import DegenerateVector


@dataclass
class Encoder:
    weights: np.ndarray  # (D, D_in)
    bias: np.ndarray  # (D,)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    @property
    def d_in(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> Encoder:
        return Encoder(self.weights.copy(), self.bias.copy())

    def params(self) -> list[np.ndarray]:
        return [self.weights, self.bias]


def init_encoder(d_in: int, dim: int, rng: np.random.Generator) -> Encoder:
    bound = 1.0 / math.sqrt(d_in)
    return Encoder(rng.uniform(-bound, bound, size=(dim, d_in)), np.zeros(dim))


def _pre_activation(enc: Encoder, raw) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(raw, dtype=np.float64) @ enc.weights.T + enc.bias
    norm = np.linalg.norm(y, axis=-1, keepdims=True)
    if np.any(norm == 0.0) or not np.all(np.isfinite(norm)):
        raise DegenerateVector("encoder output has zero norm")
    return y, norm


def forward(enc: Encoder, raw) -> np.ndarray:
    """``l2_normalize(W @ raw + b)`` for one vector or a (B, D_in) batch."""
    y, norm = _pre_activation(enc, raw)
    return y / norm


def backward(enc: Encoder, raw, grad_q) -> tuple[np.ndarray, np.ndarray]:
    """Chain ``dL/dq`` through the normalization and the affine map.

    For a batch the parameter gradients are summed over rows.
    """
    raw = np.asarray(raw, dtype=np.float64)
    y, norm = _pre_activation(enc, raw)
    q = y / norm
    grad_q = np.asarray(grad_q, dtype=np.float64)
    # (I - q q^T) / ||y|| applied to grad_q
    grad_y = (grad_q - q * np.sum(q * grad_q, axis=-1, keepdims=True)) / norm
    if raw.ndim == 1:
        return np.outer(grad_y, raw), grad_y
    return grad_y.T @ raw, grad_y.sum(axis=0)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def zeros_like(cls, params, weight_decay: float = 0.0, **kw) -> AdamState:
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params],
                   weight_decay=weight_decay, **kw)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, lr: float) -> None:
    """One Adam step with decoupled weight decay; updates params and state in place."""
    state.step += 1
    b1, b2 = state.betas
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if state.weight_decay:
            p -= lr * state.weight_decay * p
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float = 3.5e-4
    warmup_epochs: int = 10
    decay_every: int = 20
    decay_factor: float = 0.1
    total_epochs: int = 50

    def __post_init__(self):
        if not self.base_lr > 0:
            raise ValueError("base_lr must be positive")
        if not 0 <= self.warmup_epochs <= self.total_epochs:
            raise ValueError("warmup_epochs must lie in [0, total_epochs]")
        if self.decay_every < 1:
            raise ValueError("decay_every must be >= 1")


def lr_at(schedule: LrSchedule, epoch: int) -> float:
    """Linear warmup to ``base_lr``, then step decay counted from epoch 0."""
    if epoch < schedule.warmup_epochs:
        return schedule.base_lr * (epoch + 1) / schedule.warmup_epochs
    return schedule.base_lr * schedule.decay_factor ** (epoch // schedule.decay_every)
