"""Identity-balanced P x Z batches over pseudo labels, and cluster-size capping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .clustering import OUTLIER, PseudoLabeling
from .core import TooFewClusters


@dataclass(frozen=True)
class SamplerConfig:
    p: int = 16
    z: int = 16
    cluster_cap: int | None = None
    iterations_per_epoch: int | None = None  # None: ceil(N_clustered / (p * z))
    cluster_draw: str = "uniform"  # or "size": proportional to cluster size

    def __post_init__(self):
        if self.p < 1 or self.z < 1:
            raise ValueError("p and z must be >= 1")
        if self.cluster_cap is not None and self.cluster_cap < 1:
            raise ValueError("cluster_cap must be >= 1")
        if self.cluster_draw not in ("uniform", "size"):
            raise ValueError(f"unknown cluster_draw {self.cluster_draw!r}")

    @property
    def batch_size(self) -> int:
        return self.p * self.z

    def iterations(self, n_clustered: int) -> int:
        if self.iterations_per_epoch is not None:
            return self.iterations_per_epoch
        return max(1, math.ceil(n_clustered / self.batch_size))


@dataclass(frozen=True)
class Batch:
    """Ordered (instance id, cluster id) pairs; cluster slices are contiguous."""

    instance_ids: np.ndarray
    clusters: np.ndarray

    def __len__(self) -> int:
        return len(self.instance_ids)

    @property
    def entries(self) -> list[tuple[int, int]]:
        return list(zip(self.instance_ids.tolist(), self.clusters.tolist()))


def sample_batch(labeling: PseudoLabeling, cfg: SamplerConfig, rng: np.random.Generator) -> Batch:
    k = labeling.k
    if k < cfg.p:
        raise TooFewClusters(f"need {cfg.p} clusters per batch, have {k}", k=k, needed=cfg.p)
    members = _members(labeling)
    if cfg.cluster_draw == "size":
        sizes = np.array([len(m) for m in members], dtype=np.float64)
        chosen = rng.choice(k, size=cfg.p, replace=False, p=sizes / sizes.sum())
    else:
        chosen = rng.choice(k, size=cfg.p, replace=False)
    ids, clusters = [], []
    for c in chosen:
        pool = members[c]
        ids.append(rng.choice(pool, size=cfg.z, replace=len(pool) < cfg.z))
        clusters.append(np.full(cfg.z, c))
    return Batch(np.concatenate(ids), np.concatenate(clusters))


def _members(labeling: PseudoLabeling) -> list[np.ndarray]:
    order = np.argsort(labeling.labels, kind="stable")
    bounds = np.searchsorted(labeling.labels[order], np.arange(labeling.k + 1))
    return [order[bounds[c]:bounds[c + 1]] for c in range(labeling.k)]


def cap_clusters(labeling: PseudoLabeling, cap: int, rng: np.random.Generator) -> PseudoLabeling:
    """Keep a uniform random subset of at most ``cap`` members per cluster.

    Dropped members become outliers for the epoch.
    """
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    labels = labeling.labels.copy()
    for c, pool in enumerate(_members(labeling)):
        if len(pool) > cap:
            keep = rng.choice(pool, size=cap, replace=False)
            labels[np.setdiff1d(pool, keep)] = OUTLIER
    return PseudoLabeling(labels)
