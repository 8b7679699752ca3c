"""Cluster-level momentum memory and the instance-level baseline bank.

Every stored vector is kept at unit norm: each momentum blend is followed by
re-normalization so that query/memory dot products stay on cosine scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np

from .clustering import PseudoLabeling
from .core import DegenerateVector, l2_normalize


def _check_momentum(m: float) -> None:
    if not 0.0 <= m <= 1.0:
        raise ValueError(f"momentum must lie in [0, 1], got {m}")


def _cluster_means(features: np.ndarray, clusters: np.ndarray, k: int) -> np.ndarray:
    sums = np.zeros((k, features.shape[1]))
    np.add.at(sums, clusters, features)
    return sums / np.bincount(clusters, minlength=k)[:, None]


@dataclass
class ClusterMemory:
    """One representation per pseudo-label cluster, shape (K, D)."""

    reps: np.ndarray
    momentum: float

    def __post_init__(self):
        _check_momentum(self.momentum)

    @property
    def k(self) -> int:
        return len(self.reps)

    def copy(self) -> ClusterMemory:
        return ClusterMemory(self.reps.copy(), self.momentum)


@dataclass
class InstanceMemory:
    """Baseline bank: one stored feature per clustered instance.

    ``ids[j]`` is the instance stored in row ``j`` and ``owner[j]`` its cluster.
    """

    feats: np.ndarray
    ids: np.ndarray
    owner: np.ndarray
    k: int
    momentum: float

    def __post_init__(self):
        _check_momentum(self.momentum)
        self._row = {int(i): j for j, i in enumerate(self.ids)}

    @property
    def owner_cluster(self) -> dict[int, int]:
        return {int(i): int(c) for i, c in zip(self.ids, self.owner)}

    def row(self, instance_id: int) -> int:
        try:
            return self._row[int(instance_id)]
        except KeyError:
            raise KeyError(f"instance {instance_id} is not in the memory bank") from None

    def copy(self) -> InstanceMemory:
        return InstanceMemory(self.feats.copy(), self.ids.copy(), self.owner.copy(), self.k, self.momentum)


def init_cluster_memory(features, labeling: PseudoLabeling, m: float) -> ClusterMemory:
    features = np.asarray(features, dtype=np.float64)
    ids = labeling.clustered_ids
    means = _cluster_means(features[ids], labeling.labels[ids], labeling.k)
    reps = l2_normalize(means) if labeling.k else np.zeros((0, features.shape[1]))
    return ClusterMemory(reps, m)


def _blend(old: np.ndarray, q: np.ndarray, m: float) -> np.ndarray:
    # the degenerate momenta are exact: renormalising a unit vector can move it by an ulp
    if m == 1.0:
        return old.copy()
    if m == 0.0:
        return q.copy()
    v = m * old + (1.0 - m) * q
    norm = math.sqrt(v @ v)
    if norm == 0.0 or not math.isfinite(norm):
        raise DegenerateVector("momentum update produced a zero vector")
    return v / norm


def momentum_update(mem: ClusterMemory, q, cluster: int) -> ClusterMemory:
    """Return a new memory with ``reps[cluster]`` moved toward ``q``."""
    out = mem.copy()
    _update_in_place(out, np.asarray(q, dtype=np.float64), cluster)
    return out


def _update_in_place(mem: ClusterMemory, q: np.ndarray, cluster: int) -> None:
    if not 0 <= cluster < mem.k:
        raise IndexError(f"cluster id {cluster} out of range for K={mem.k}")
    mem.reps[cluster] = _blend(mem.reps[cluster], q, mem.momentum)


def batch_update(mem: ClusterMemory, queries, clusters) -> ClusterMemory:
    """Apply momentum updates one query at a time, in the given order."""
    out = mem.copy()
    queries = np.asarray(queries, dtype=np.float64)
    for q, c in zip(queries, clusters):
        _update_in_place(out, q, int(c))
    return out


def init_instance_memory(features, labeling: PseudoLabeling, m: float) -> InstanceMemory:
    features = np.asarray(features, dtype=np.float64)
    ids = labeling.clustered_ids
    return InstanceMemory(features[ids].copy(), ids, labeling.labels[ids].copy(), labeling.k, m)


def instance_update(mem: InstanceMemory, instance_id: int, q) -> InstanceMemory:
    out = mem.copy()
    j = out.row(instance_id)
    out.feats[j] = _blend(out.feats[j], np.asarray(q, dtype=np.float64), out.momentum)
    return out


def instance_batch_update(mem: InstanceMemory, queries, instance_ids) -> InstanceMemory:
    out = mem.copy()
    queries = np.asarray(queries, dtype=np.float64)
    for q, i in zip(queries, instance_ids):
        j = out.row(i)
        out.feats[j] = _blend(out.feats[j], q, out.momentum)
    return out


def centroids(mem: InstanceMemory) -> np.ndarray:
    """Normalized mean of the live bank for every cluster, shape (K, D)."""
    if mem.k == 0:
        return np.zeros((0, mem.feats.shape[1]))
    return l2_normalize(_cluster_means(mem.feats, mem.owner, mem.k))


def centroid(mem: InstanceMemory, cluster: int) -> np.ndarray:
    if not 0 <= cluster < mem.k:
        raise IndexError(f"cluster id {cluster} out of range for K={mem.k}")
    return l2_normalize(mem.feats[mem.owner == cluster].mean(axis=0))
