"""The unsupervised training loop: extract, cluster, initialise memory, then
iterate loss -> memory update -> encoder step."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .clustering import DbscanParams, PseudoLabeling, dbscan
from .core import TooFewClusters, make_rng
from .encoder import AdamState, Encoder, LrSchedule, adam_step, backward, forward, init_encoder, lr_at
from .loss import LossConfig, softmax_nce
from .memory import (
    ClusterMemory,
    InstanceMemory,
    batch_update,
    centroids,
    init_cluster_memory,
    init_instance_memory,
    instance_batch_update,
)
from .sampler import Batch, SamplerConfig, cap_clusters, sample_batch

log = logging.getLogger(__name__)

VARIANTS = ("cluster_contrast", "instance_baseline")


@dataclass(frozen=True)
class TrainConfig:
    loss: LossConfig = LossConfig()
    momentum: float = 0.1
    dbscan: DbscanParams = DbscanParams()
    sampler: SamplerConfig = SamplerConfig()
    schedule: LrSchedule = LrSchedule()
    epochs: int = 50
    seed: int = 0
    variant: str = "cluster_contrast"
    weight_decay: float = 5e-4
    embed_dim: int | None = None  # None: same as the input dimension

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not 0.0 <= self.momentum <= 1.0:
            raise ValueError("momentum must lie in [0, 1]")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> TrainConfig:
        """Build a config from a (possibly partial) nested dict; missing keys take defaults."""
        data = dict(data)
        nested = {"loss": LossConfig, "dbscan": DbscanParams, "sampler": SamplerConfig, "schedule": LrSchedule}
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key, typ in nested.items():
            sub = data.get(key, {})
            if isinstance(sub, typ):
                continue
            if not isinstance(sub, dict):
                raise ValueError(f"config section {key!r} must be an object")
            bad = set(sub) - {f.name for f in dataclasses.fields(typ)}
            if bad:
                raise ValueError(f"unknown keys in {key!r}: {sorted(bad)}")
            if key == "schedule" and "total_epochs" not in sub:
                sub = {**sub, "total_epochs": max(data.get("epochs", cls.epochs), sub.get("warmup_epochs", 10))}
            data[key] = typ(**sub)
        return cls(**data)

    def replace(self, **changes) -> TrainConfig:
        return dataclasses.replace(self, **changes)


@dataclass
class EpochReport:
    epoch: int
    k: int
    n_outliers: int
    mean_loss: float
    lr: float
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "k": self.k, "n_outliers": self.n_outliers,
                "mean_loss": self.mean_loss, "lr": self.lr, **self.extra}


@dataclass
class TrainResult:
    encoder: Encoder
    reports: list[EpochReport]
    losses: list[float]
    rng_state: dict


class TrainingAborted(TooFewClusters):
    """Clustering left too few clusters to build a batch.

    Carries the reports so far and the encoder as it stood at the abort.
    """

    def __init__(self, message, *, k, needed, epoch, reports, encoder=None):
        super().__init__(message, k=k, needed=needed, epoch=epoch)
        self.reports = reports
        self.encoder = encoder


Memory = ClusterMemory | InstanceMemory
Monitor = Callable[[int, np.ndarray, PseudoLabeling], dict]


def init_memory(cfg: TrainConfig, features: np.ndarray, labeling: PseudoLabeling) -> Memory:
    if cfg.variant == "cluster_contrast":
        return init_cluster_memory(features, labeling, cfg.momentum)
    return init_instance_memory(features, labeling, cfg.momentum)


def train_step(enc: Encoder, adam: AdamState, mem: Memory, raw: np.ndarray, batch: Batch,
               tau: float, lr: float) -> tuple[float, Memory]:
    """One iteration. The loss sees the memory as it was before this batch;
    the memory is then updated with this iteration's (pre-step) query
    features, and only afterwards does the optimizer move the encoder.
    """
    x = raw[batch.instance_ids]
    q = forward(enc, x)
    keys = mem.reps if isinstance(mem, ClusterMemory) else centroids(mem)
    values, grad_q = softmax_nce(q, keys, batch.clusters, tau)
    grad_w, grad_b = backward(enc, x, grad_q / len(batch))
    if isinstance(mem, ClusterMemory):
        mem = batch_update(mem, q, batch.clusters)
    else:
        mem = instance_batch_update(mem, q, batch.instance_ids)
    adam_step(enc.params(), [grad_w, grad_b], adam, lr)
    return float(values.mean()), mem


def train(raw, cfg: TrainConfig, monitor: Monitor | None = None) -> TrainResult:
    """Run the full unsupervised pipeline on an (N, d_in) input matrix.

    ``raw`` may also be a Dataset; only its input matrix is read.
    """
    raw = np.asarray(getattr(raw, "raw", raw), dtype=np.float64)
    rng = make_rng(cfg.seed)
    enc = init_encoder(raw.shape[1], cfg.embed_dim or raw.shape[1], rng)
    adam = AdamState.zeros_like(enc.params(), weight_decay=cfg.weight_decay)
    reports: list[EpochReport] = []
    losses: list[float] = []

    for epoch in range(cfg.epochs):
        features = forward(enc, raw)
        labeling = dbscan(features, cfg.dbscan)
        if cfg.sampler.cluster_cap is not None:
            labeling = cap_clusters(labeling, cfg.sampler.cluster_cap, rng)
        if labeling.k < cfg.sampler.p:
            raise TrainingAborted(
                f"epoch {epoch}: clustering found K={labeling.k} clusters, batches need {cfg.sampler.p}",
                k=labeling.k, needed=cfg.sampler.p, epoch=epoch, reports=reports, encoder=enc)
        mem = init_memory(cfg, features, labeling)
        lr = lr_at(cfg.schedule, epoch)
        epoch_losses = []
        for _ in range(cfg.sampler.iterations(len(labeling.clustered_ids))):
            batch = sample_batch(labeling, cfg.sampler, rng)
            loss, mem = train_step(enc, adam, mem, raw, batch, cfg.loss.tau, lr)
            epoch_losses.append(loss)
        losses.extend(epoch_losses)
        report = EpochReport(epoch, labeling.k, len(labeling.outliers), float(np.mean(epoch_losses)), lr)
        if monitor is not None:
            report.extra.update(monitor(epoch, features, labeling))
        log.info("epoch %d: K=%d outliers=%d loss=%.4f lr=%.3g", epoch, report.k,
                 report.n_outliers, report.mean_loss, lr)
        reports.append(report)

    return TrainResult(enc, reports, losses, rng.bit_generator.state)
