"""ClusterNCE and centroid InfoNCE with analytic gradients w.r.t. the query.

Memory entries are treated as constants: no gradient flows into them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import NoClusters
from .memory import ClusterMemory, InstanceMemory, centroids


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.05

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")


@dataclass(frozen=True)
class LossResult:
    value: float
    grad_q: np.ndarray


def softmax_nce(queries, keys, positives, tau: float):
    """Per-query ``-log softmax(q.k / tau)[positive]`` and its gradient in q.

    ``queries`` is (B, D), ``keys`` (K, D), ``positives`` (B,). Returns
    ``(values (B,), grads (B, D))``.
    """
    keys = np.asarray(keys, dtype=np.float64)
    if len(keys) == 0:
        raise NoClusters("cannot contrast against an empty memory")
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    positives = np.atleast_1d(np.asarray(positives, dtype=np.int64))
    if np.any(positives < 0) or np.any(positives >= len(keys)):
        raise IndexError(f"positive cluster out of range for K={len(keys)}")
    logits = queries @ keys.T / tau
    rows = np.arange(len(queries))
    # logits relative to the positive; top >= 0 is the max-logit shift
    rel = logits - logits[rows, positives][:, None]
    top = rel.max(axis=1)
    e = np.exp(rel - top[:, None])
    total = e.sum(axis=1)
    # when the positive is the max, log1p of the negatives keeps tiny losses
    # accurate instead of rounding log(1 + x) at machine epsilon
    others = np.where(np.arange(len(keys))[None, :] == positives[:, None], 0.0, e).sum(axis=1)
    values = np.where(top == 0.0, np.log1p(others), top + np.log(total))
    p = e / total[:, None]
    grads = (p @ keys - keys[positives]) / tau
    return values, grads


def cluster_nce(q, mem: ClusterMemory, positive: int, cfg: LossConfig = LossConfig()) -> LossResult:
    values, grads = softmax_nce(q, mem.reps, [positive], cfg.tau)
    return LossResult(float(values[0]), grads[0])


def centroid_nce(q, mem: InstanceMemory, positive: int, cfg: LossConfig = LossConfig()) -> LossResult:
    """Baseline loss: centroids are recomputed from the live instance bank."""
    values, grads = softmax_nce(q, centroids(mem), [positive], cfg.tau)
    return LossResult(float(values[0]), grads[0])
