"""DBSCAN pseudo-labelling on cosine distance, plus cluster purity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .core import EmptyInput

OUTLIER = -1


@dataclass(frozen=True)
class DbscanParams:
    eps: float = 0.5
    min_pts: int = 4

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.min_pts < 1:
            raise ValueError(f"min_pts must be >= 1, got {self.min_pts}")


@dataclass(frozen=True)
class PseudoLabeling:
    """Cluster assignment per instance; ``labels[i] == -1`` marks an outlier.

    Position ``i`` in ``labels`` is instance id ``i``.
    """

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        k = int(labels.max()) + 1 if labels.size else 0
        if labels.size and labels.min() < OUTLIER:
            raise ValueError("labels must be >= -1")
        if k and np.any(np.bincount(labels[labels >= 0], minlength=k) == 0):
            raise ValueError("every cluster id in [0, k) needs at least one member")

    @property
    def k(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def assignments(self) -> dict[int, int]:
        return {int(i): int(c) for i, c in enumerate(self.labels) if c >= 0}

    @property
    def outliers(self) -> set[int]:
        return set(np.flatnonzero(self.labels == OUTLIER).tolist())

    @property
    def clustered_ids(self) -> np.ndarray:
        return np.flatnonzero(self.labels >= 0)

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels[self.labels >= 0], minlength=self.k)


def canonical_relabel(labels) -> np.ndarray:
    """Renumber clusters by ascending smallest member id; -1 stays -1."""
    labels = np.asarray(labels, dtype=np.int64)
    out = np.full_like(labels, OUTLIER)
    mapping: dict[int, int] = {}
    for i, c in enumerate(labels):
        if c < 0:
            continue
        if c not in mapping:
            mapping[c] = len(mapping)
        out[i] = mapping[c]
    return out


def cosine_distances(features: np.ndarray) -> np.ndarray:
    return 1.0 - features @ features.T


def dbscan(features, params: DbscanParams = DbscanParams(), ids=None) -> PseudoLabeling:
    """Cluster unit-norm features with DBSCAN under ``d(a, b) = 1 - a.b``.

    A point is core when its closed eps-ball (itself included) holds at least
    ``min_pts`` points. Core points within eps of each other share a cluster;
    a border point joins the first cluster, in ascending-id scan order, that
    reaches it. ``ids`` gives the instance id of each row (default
    ``arange(n)``); the result is indexed by row like the input, but every
    tie-break and the cluster numbering follow ``ids``, so permuting rows
    together with their ids permutes the output the same way.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or len(features) == 0:
        raise EmptyInput("dbscan needs at least one feature")
    n = len(features)
    ids = np.arange(n) if ids is None else np.asarray(ids, dtype=np.int64)
    order = np.argsort(ids, kind="stable")
    # work in id order so scans below are canonical
    f = features[order]

    neighbors = cosine_distances(f) <= params.eps
    core = neighbors.sum(axis=1) >= params.min_pts
    core_idx = np.flatnonzero(core)
    labels = np.full(n, OUTLIER, dtype=np.int64)
    if core_idx.size:
        sub = neighbors[np.ix_(core_idx, core_idx)]
        _, comp = connected_components(csr_matrix(sub), directed=False)
        # the sequential scan opens clusters in order of their smallest core id
        opened = canonical_relabel(comp)
        labels[core_idx] = opened
        border = np.flatnonzero(~core & neighbors[:, core_idx].any(axis=1))
        if border.size:
            cand = np.where(neighbors[np.ix_(border, core_idx)], opened[None, :], np.iinfo(np.int64).max)
            labels[border] = cand.min(axis=1)
    labels = canonical_relabel(labels)
    out = np.empty(n, dtype=np.int64)
    out[order] = labels
    return PseudoLabeling(out)


def cluster_purity(labeling: PseudoLabeling, identities) -> list[tuple[int, float]]:
    """Fraction of each cluster held by its most common ground-truth identity.

    ``identities`` may be a Dataset or an array indexed by instance id.
    """
    identities = np.asarray(getattr(identities, "identities", identities))
    if len(identities) != len(labeling.labels):
        raise ValueError("labeling and identities refer to different instance sets")
    out = []
    for c in range(labeling.k):
        members = identities[labeling.labels == c]
        _, counts = np.unique(members, return_counts=True)
        out.append((c, counts.max() / len(members)))
    return out
