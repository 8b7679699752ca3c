"""Shared types, errors, RNG construction and small vector helpers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

RNG_ALGORITHM = "PCG64"


class ClusterContrastError(Exception):
    """Base class for every error raised by this package."""


class DegenerateVector(ClusterContrastError, ValueError):
    """A zero (or non-finite) vector cannot be L2-normalized."""


class EmptyInput(ClusterContrastError, ValueError):
    """An operation received no data to work on."""


class NoClusters(ClusterContrastError, ValueError):
    """A loss was asked to contrast against an empty memory."""


class TooFewClusters(ClusterContrastError, RuntimeError):
    """Clustering produced fewer clusters than a batch needs."""

    def __init__(self, message: str, *, k: int, needed: int, epoch: int | None = None):
        super().__init__(message)
        self.k = k
        self.needed = needed
        self.epoch = epoch


class NoCrossCameraRelevants(ClusterContrastError, ValueError):
    """A retrieval split leaves some query without a valid relevant gallery item."""


class ParseError(ClusterContrastError, ValueError):
    """Malformed dataset file; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic generator used for every stochastic step of a run."""
    return np.random.Generator(np.random.PCG64(seed))


def dot(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a, b))


def l2_normalize(v) -> np.ndarray:
    """Return ``v / ||v||``; works row-wise on 2-D input.

    Raises DegenerateVector if any row has zero or non-finite norm.
    """
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if not np.all(np.isfinite(norm)) or np.any(norm == 0.0):
        raise DegenerateVector("cannot normalize a zero or non-finite vector")
    return v / norm


@dataclass(frozen=True)
class Instance:
    id: int
    raw: np.ndarray
    identity: int
    camera: int


@dataclass
class Dataset:
    """Instances in id order. ``raw`` is the (N, d_in) input matrix.

    Only ``raw`` is meant for training code; identities and cameras are for
    evaluation and data generation.
    """

    raw: np.ndarray
    identities: np.ndarray
    cameras: np.ndarray
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.raw = np.asarray(self.raw, dtype=np.float64)
        self.identities = np.asarray(self.identities, dtype=np.int64)
        self.cameras = np.asarray(self.cameras, dtype=np.int64)
        if self.raw.ndim != 2 or len(self.raw) == 0:
            raise EmptyInput("dataset must contain at least one instance")
        n = len(self.raw)
        if self.identities.shape != (n,) or self.cameras.shape != (n,):
            raise ValueError("identities/cameras must have one entry per instance")

    @property
    def n(self) -> int:
        return len(self.raw)

    @property
    def d_in(self) -> int:
        return self.raw.shape[1]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> Instance:
        return Instance(i, self.raw[i], int(self.identities[i]), int(self.cameras[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.raw, other.raw)
            and np.array_equal(self.identities, other.identities)
            and np.array_equal(self.cameras, other.cameras)
        )
