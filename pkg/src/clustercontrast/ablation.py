"""Sweeps mirroring the ablation tables: momentum, batch size, cluster cap, components."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import Dataset
from .datagen import RetrievalSplit
from .evaluation import evaluate
from .trainer import TrainConfig, train

MOMENTUM_GRID = (0.0, 0.1, 0.3, 0.5, 0.7, 0.8, 0.9, 0.99)
BATCH_SIZE_GRID = (16, 32, 64, 128)
CLUSTER_CAP_GRID = (20, 8, 4)
SUITES = ("momentum", "batch-size", "cluster-cap", "variant")


@dataclass
class Row:
    setting: str
    map: float
    top1: float
    per_seed_map: list[float]

    def as_csv(self) -> list:
        return [self.setting, f"{self.map:.6f}", f"{self.top1:.6f}", len(self.per_seed_map)]


def run_seeds(dataset: Dataset, split: RetrievalSplit, cfg: TrainConfig, seeds, setting: str,
              junk_rule: bool = True) -> Row:
    """Train once per seed and average the final retrieval metrics."""
    maps, top1s = [], []
    for seed in seeds:
        result = train(dataset, cfg.replace(seed=seed))
        report = evaluate(result.encoder, dataset, split, junk_rule)
        maps.append(report.map)
        top1s.append(report.top(1))
    return Row(setting, float(np.mean(maps)), float(np.mean(top1s)), maps)


def momentum_suite(dataset, split, cfg: TrainConfig, seeds=(0,), grid=MOMENTUM_GRID, **kw) -> list[Row]:
    return [run_seeds(dataset, split, cfg.replace(momentum=m), seeds, f"m={m:g}", **kw) for m in grid]


def batch_size_suite(dataset, split, cfg: TrainConfig, seeds=(0,), grid=BATCH_SIZE_GRID, **kw) -> list[Row]:
    """Vary the batch size at a fixed number of clusters per batch (``z = size // p``)."""
    rows = []
    for size in grid:
        z = size // cfg.sampler.p
        if z < 1 or z * cfg.sampler.p != size:
            raise ValueError(f"batch size {size} is not a multiple of p={cfg.sampler.p}")
        sampler = _replace(cfg.sampler, z=z)
        rows.append(run_seeds(dataset, split, cfg.replace(sampler=sampler), seeds,
                              f"{cfg.variant}/batch={size}", **kw))
    return rows


def cluster_cap_suite(dataset, split, cfg: TrainConfig, seeds=(0,), grid=CLUSTER_CAP_GRID, **kw) -> list[Row]:
    """Instance-memory baseline with clusters capped; the updated fraction is z / cap."""
    base = cfg.replace(variant="instance_baseline")
    rows = []
    for cap in grid:
        sampler = _replace(base.sampler, cluster_cap=cap)
        label = f"cap={cap}/fraction={min(1.0, base.sampler.z / cap):g}"
        rows.append(run_seeds(dataset, split, base.replace(sampler=sampler), seeds, label, **kw))
    return rows


def variant_suite(dataset, split, cfg: TrainConfig, seeds=(0,), **kw) -> list[Row]:
    """Instance baseline, cluster memory with direct replacement, cluster memory with momentum."""
    return [
        run_seeds(dataset, split, cfg.replace(variant="instance_baseline"), seeds, "baseline", **kw),
        run_seeds(dataset, split, cfg.replace(variant="cluster_contrast", momentum=0.0), seeds,
                  "+cluster memory", **kw),
        run_seeds(dataset, split, cfg.replace(variant="cluster_contrast"), seeds,
                  "+cluster memory+momentum", **kw),
    ]


def run_suite(name: str, dataset, split, cfg: TrainConfig, seeds=(0,), **kw) -> list[Row]:
    if name == "momentum":
        return momentum_suite(dataset, split, cfg, seeds, **kw)
    if name == "batch-size":
        return (batch_size_suite(dataset, split, cfg.replace(variant="instance_baseline"), seeds, **kw)
                + batch_size_suite(dataset, split, cfg.replace(variant="cluster_contrast"), seeds, **kw))
    if name == "cluster-cap":
        return cluster_cap_suite(dataset, split, cfg, seeds, **kw)
    if name == "variant":
        return variant_suite(dataset, split, cfg, seeds, **kw)
    raise ValueError(f"unknown suite {name!r}; choose from {SUITES}")


def write_csv(rows: list[Row], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["setting", "mAP", "top1", "n_seeds"])
        for row in rows:
            writer.writerow(row.as_csv())


def _replace(obj, **changes):
    import dataclasses

    return dataclasses.replace(obj, **changes)
