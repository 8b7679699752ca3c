"""Synthetic identity datasets, TSV dataset files and query/gallery splits."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core import Dataset, EmptyInput, NoCrossCameraRelevants, ParseError, make_rng

MAX_PROTOTYPE_SIMILARITY = 0.95


@dataclass(frozen=True)
class GenParams:
    n_ids: int = 32
    per_id: int = 20
    d_in: int = 32
    noise_sigma: float = 0.05
    n_cameras: int = 2
    camera_shift_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_ids", "per_id", "d_in", "n_cameras"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.noise_sigma < 0 or self.camera_shift_sigma < 0:
            raise ValueError("sigmas must be non-negative")

    @classmethod
    def from_json(cls, text: str) -> GenParams:
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError("generator params must be a JSON object")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown generator params: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class RetrievalSplit:
    query: np.ndarray
    gallery: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "query", np.asarray(self.query, dtype=np.int64))
        object.__setattr__(self, "gallery", np.asarray(self.gallery, dtype=np.int64))
        if np.intersect1d(self.query, self.gallery).size:
            raise ValueError("query and gallery must be disjoint")

    def to_json(self) -> str:
        return json.dumps({"query": self.query.tolist(), "gallery": self.gallery.tolist()})

    @classmethod
    def from_json(cls, text: str) -> RetrievalSplit:
        data = json.loads(text)
        return cls(data["query"], data["gallery"])


MAX_PROTOTYPE_DRAWS = 1000


def _prototypes(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    protos = np.empty((n, d))
    i = draws = 0
    while i < n:
        draws += 1
        if draws > MAX_PROTOTYPE_DRAWS * n:
            raise ValueError(f"cannot place {n} prototypes in {d} dimensions with cosine "
                             f"similarity <= {MAX_PROTOTYPE_SIMILARITY}")
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        if i and np.max(protos[:i] @ v) > MAX_PROTOTYPE_SIMILARITY:
            continue
        protos[i] = v
        i += 1
    return protos


def generate(params: GenParams) -> Dataset:
    """Gaussian blobs around unit-norm identity prototypes, shifted per camera.

    Camera ``j % n_cameras`` is assigned to the j-th instance of each identity.
    Instance order is shuffled so ids carry no identity information.
    """
    rng = make_rng(params.seed)
    protos = _prototypes(params.n_ids, params.d_in, rng)
    offsets = rng.normal(0.0, params.camera_shift_sigma, size=(params.n_cameras, params.d_in))
    identities = np.repeat(np.arange(params.n_ids), params.per_id)
    cameras = np.tile(np.arange(params.per_id) % params.n_cameras, params.n_ids)
    noise = rng.normal(0.0, params.noise_sigma, size=(len(identities), params.d_in))
    raw = protos[identities] + offsets[cameras] + noise
    order = rng.permutation(len(identities))
    return Dataset(raw[order], identities[order], cameras[order], metadata=asdict(params))


def save_dataset(dataset: Dataset, path) -> None:
    header = ["id", "identity", "camera"] + [f"f{j}" for j in range(dataset.d_in)]
    lines = ["\t".join(header)]
    for i in range(dataset.n):
        values = "\t".join(format(x, ".17g") for x in dataset.raw[i])
        lines.append(f"{i}\t{dataset.identities[i]}\t{dataset.cameras[i]}\t{values}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path) -> Dataset:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].strip():
        raise EmptyInput(f"{path}: empty dataset file")
    header = lines[0].split("\t")
    if header[:3] != ["id", "identity", "camera"] or len(header) < 4:
        raise ParseError("header must start with id, identity, camera and list features", 1)
    d_in = len(header) - 3
    if header[3:] != [f"f{j}" for j in range(d_in)]:
        raise ParseError("feature columns must be named f0..f{D-1}", 1)
    ids, identities, cameras, raw = [], [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        cols = line.split("\t")
        if len(cols) != len(header):
            raise ParseError(f"expected {len(header)} columns, got {len(cols)}", lineno)
        try:
            ids.append(int(cols[0]))
            identities.append(int(cols[1]))
            cameras.append(int(cols[2]))
            raw.append([float(x) for x in cols[3:]])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    if not ids:
        raise EmptyInput(f"{path}: no instances")
    if sorted(ids) != list(range(len(ids))):
        raise ParseError("instance ids must be exactly 0..N-1", 2)
    order = np.argsort(ids)
    return Dataset(np.array(raw)[order], np.array(identities)[order], np.array(cameras)[order])


def make_split(dataset: Dataset, query_fraction: float, rng: np.random.Generator,
               junk_rule: bool = True) -> RetrievalSplit:
    """Send ``ceil(query_fraction * n)`` random instances of each identity to the query set.

    Every query must keep a relevant gallery item; with ``junk_rule`` that item
    must come from another camera.
    """
    if not 0 < query_fraction <= 1:
        raise ValueError(f"query_fraction must lie in (0, 1], got {query_fraction}")
    query, gallery = [], []
    for ident in np.unique(dataset.identities):
        members = np.flatnonzero(dataset.identities == ident)
        members = members[rng.permutation(len(members))]
        nq = math.ceil(query_fraction * len(members))
        q, g = members[:nq], members[nq:]
        for i in q:
            ok = dataset.cameras[g] != dataset.cameras[i] if junk_rule else np.ones(len(g), bool)
            if not ok.any():
                raise NoCrossCameraRelevants(
                    f"query {i} (identity {ident}) has no relevant gallery item"
                    + (" from another camera" if junk_rule else ""))
        query.extend(q.tolist())
        gallery.extend(g.tolist())
    return RetrievalSplit(np.sort(query), np.sort(gallery))
