"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line (also collected for the
pytest terminal summary by ``conftest.py``) and then asserts. Run just this
file with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import time

import numpy as np
import pytest

from clustercontrast import cli
from clustercontrast.clustering import DbscanParams, PseudoLabeling, dbscan
from clustercontrast.core import Dataset, l2_normalize, make_rng
from clustercontrast.datagen import GenParams, RetrievalSplit, generate, make_split, save_dataset
from clustercontrast.encoder import Encoder, backward, forward, init_encoder
from clustercontrast.evaluation import NoValidQueries, evaluate, evaluate_features, purity_summary
from clustercontrast.loss import LossConfig, cluster_nce
from clustercontrast.memory import (
    ClusterMemory,
    batch_update,
    centroids,
    init_cluster_memory,
    init_instance_memory,
    instance_batch_update,
    momentum_update,
)
from clustercontrast.trainer import TrainConfig, TrainingAborted, train

from oracles import central_difference, max_relative_error, ref_dbscan, ref_ranking_metrics

RESULTS: list[str] = []

SEEDS = (0, 1, 2, 3, 4)

# Separable fixture: ground truth is exactly what DBSCAN recovers at epoch 0.
SEPARABLE_GEN = dict(n_ids=32, per_id=20, d_in=32, noise_sigma=0.05, seed=0)
SEPARABLE_CFG = {
    "epochs": 20, "momentum": 0.1, "loss": {"tau": 0.05},
    "sampler": {"p": 16, "z": 4},
    "schedule": {"base_lr": 3.5e-3, "warmup_epochs": 4, "decay_every": 8},
    "dbscan": {"eps": 0.2, "min_pts": 4},
}

# Harder fixture: per-camera offsets make the initial clusters mix identities.
HARD_GEN = dict(n_ids=32, per_id=20, d_in=32, noise_sigma=0.053, n_cameras=4,
                camera_shift_sigma=0.124, seed=1)
HARD_CFG = {
    "epochs": 20, "momentum": 0.1, "loss": {"tau": 0.05},
    "sampler": {"p": 8, "z": 4},
    "schedule": {"base_lr": 3.5e-4, "warmup_epochs": 4, "decay_every": 8},
    "dbscan": {"eps": 0.25, "min_pts": 4},
}
MOMENTUM_SWEEP = (0.1, 0.3, 0.5, 0.7, 0.8)
BATCH_SIZES = (16, 32, 64)


def verdict(criterion: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# 1. gradient fidelity


def _gradient_instance(seed: int, tau: float) -> float:
    rng = make_rng(seed)
    d_in, dim, k = int(rng.integers(2, 9)), int(rng.integers(2, 8)), int(rng.integers(1, 8))
    enc = init_encoder(d_in, dim, rng)
    enc.bias[:] = 0.1 * rng.standard_normal(dim)
    mem = ClusterMemory(l2_normalize(rng.standard_normal((k, dim))), 0.1)
    raw = rng.standard_normal(d_in)
    pos = int(rng.integers(0, k))
    cfg = LossConfig(tau)
    gw, gb = backward(enc, raw, cluster_nce(forward(enc, raw), mem, pos, cfg).grad_q)
    nw = central_difference(
        lambda w: cluster_nce(forward(Encoder(w, enc.bias), raw), mem, pos, cfg).value, enc.weights, h=1e-6)
    nb = central_difference(
        lambda b: cluster_nce(forward(Encoder(enc.weights, b), raw), mem, pos, cfg).value, enc.bias, h=1e-6)
    return max_relative_error(np.r_[gw.ravel(), gb], np.r_[nw.ravel(), nb])


def test_criterion_1_gradient_fidelity():
    start = time.perf_counter()
    errors = [_gradient_instance(seed, tau) for tau in (0.05, 1.0) for seed in range(100)]
    elapsed = time.perf_counter() - start
    worst = max(errors)
    verdict(1, worst <= 1e-5 and elapsed < 10,
            f"{len(errors)} instances, max rel err {worst:.2e} (<= 1e-5), {elapsed:.1f}s (< 10s)")


# 2. oracle equivalence


def _dbscan_instance(seed: int):
    rng = make_rng(seed)
    n, d = int(rng.integers(1, 201)), int(rng.integers(2, 9))
    centers = l2_normalize(rng.standard_normal((int(rng.integers(1, 8)), d)))
    spread = float(rng.choice([0.05, 0.2, 0.5]))
    feats = l2_normalize(centers[rng.integers(0, len(centers), n)] + spread * rng.standard_normal((n, d)))
    return feats, float(rng.uniform(0.01, 0.6)), int(rng.integers(1, 8))


def _eval_instance(seed: int):
    rng = make_rng(seed)
    n = int(rng.integers(2, 501))
    n_q = int(rng.integers(1, max(2, n // 4)))
    d = int(rng.integers(2, 9))
    n_ids = int(rng.integers(1, 30))
    feats = l2_normalize(rng.standard_normal((n, d)))
    if seed % 3 == 0:
        feats = l2_normalize(np.round(feats, 1) + 1e-3)  # many exact ties
    ident = rng.integers(0, n_ids, n)
    cams = rng.integers(0, 4, n)
    perm = rng.permutation(n)
    return feats, ident, cams, RetrievalSplit(perm[:n_q], perm[n_q:]), seed % 5 != 0


def test_criterion_2_oracle_equivalence():
    start = time.perf_counter()
    db_bad = 0
    for seed in range(200):
        feats, eps, min_pts = _dbscan_instance(seed)
        if dbscan(feats, DbscanParams(eps, min_pts)).labels.tolist() != ref_dbscan(feats, eps, min_pts):
            db_bad += 1
    ev_bad = 0
    for seed in range(100):
        feats, ident, cams, split, junk = _eval_instance(seed)
        q, g = split.query, split.gallery
        ref = ref_ranking_metrics(feats[q] @ feats[g].T, ident[q], ident[g], cams[q], cams[g], g, junk)
        try:
            rep = evaluate_features(feats, Dataset(feats, ident, cams), split, junk)
        except NoValidQueries:
            ev_bad += ref is not None
            continue
        if ref is None or (rep.map, rep.cmc.tolist(), rep.n_skipped) != ref:
            ev_bad += 1
    elapsed = time.perf_counter() - start
    verdict(2, db_bad == 0 and ev_bad == 0 and elapsed < 60,
            f"dbscan mismatches {db_bad}/200, evaluation mismatches {ev_bad}/100, {elapsed:.1f}s (< 60s)")


# 3. memory invariants


def test_criterion_3_memory_invariants():
    failures = []
    for seed in range(200):
        rng = make_rng(seed)
        k, d = int(rng.integers(1, 6)), int(rng.integers(2, 8))
        m = float(rng.uniform())
        mem = ClusterMemory(l2_normalize(rng.standard_normal((k, d))), m)
        qs = l2_normalize(rng.standard_normal((30, d)))
        cl = rng.integers(0, k, 30)
        updated = batch_update(mem, qs, cl)
        if not np.allclose(np.linalg.norm(updated.reps, axis=1), 1.0, atol=1e-12):
            failures.append(f"unit norm seed {seed}")
        c = int(cl[0])
        frozen = momentum_update(dataclasses.replace(mem, momentum=1.0), qs[0], c)
        if not np.array_equal(frozen.reps, mem.reps):
            failures.append(f"m=1 seed {seed}")
        replaced = momentum_update(dataclasses.replace(mem, momentum=0.0), qs[0], c)
        if not np.array_equal(replaced.reps[c], qs[0]):
            failures.append(f"m=0 seed {seed}")
        # singleton clusters: both memories hold the same vectors after the same updates
        lab = PseudoLabeling(rng.permutation(k))
        feats = l2_normalize(rng.standard_normal((k, d)))
        ids = rng.integers(0, k, 30)
        cmem = batch_update(init_cluster_memory(feats, lab, m), qs, lab.labels[ids])
        imem = instance_batch_update(init_instance_memory(feats, lab, m), qs, ids)
        if not np.allclose(centroids(imem), cmem.reps, rtol=0, atol=1e-12):
            failures.append(f"singleton seed {seed}")
    verdict(3, not failures, f"200 instances x 4 invariants, failures: {failures[:5] or 'none'}")


# 4. pipeline sanity on the separable fixture


def test_criterion_4_separable_pipeline():
    start = time.perf_counter()
    ds = generate(GenParams(**SEPARABLE_GEN))
    split = make_split(ds, 0.1, make_rng(0))
    result = train(ds, TrainConfig.from_dict(SEPARABLE_CFG))
    report = evaluate(result.encoder, ds, split)
    labeling = dbscan(forward(result.encoder, ds.raw), DbscanParams(0.2, 4))
    purity = purity_summary(labeling, ds.identities)
    elapsed = time.perf_counter() - start
    verdict(4, report.map >= 0.95 and purity["min"] == 1.0 and elapsed < 120,
            f"final mAP {report.map:.4f} (>= 0.95), min cluster purity {purity['min']:.3f} (= 1.0), "
            f"K={labeling.k}, {elapsed:.1f}s (< 120s)")


# 5-7. directional ablations on the harder fixture


@functools.lru_cache(maxsize=None)
def _hard_data():
    ds = generate(GenParams(**HARD_GEN))
    return ds, make_split(ds, 0.1, make_rng(HARD_GEN["seed"]))


@functools.lru_cache(maxsize=None)
def _seed_maps(variant: str, momentum: float, z: int) -> tuple[float | None, ...]:
    """Final mAP per seed; None marks a run that aborted (K < P) and produced no model."""
    ds, split = _hard_data()
    cfg = TrainConfig.from_dict(HARD_CFG)
    cfg = cfg.replace(variant=variant, momentum=momentum, sampler=dataclasses.replace(cfg.sampler, z=z))
    maps = []
    for seed in SEEDS:
        try:
            maps.append(evaluate(train(ds, cfg.replace(seed=seed)).encoder, ds, split).map)
        except TrainingAborted:
            maps.append(None)
    return tuple(maps)


def _mean_map(variant: str, momentum: float, z: int) -> float:
    # an aborted run has no final model and scores zero
    return float(np.mean([m or 0.0 for m in _seed_maps(variant, momentum, z)]))


def _aborts(variant: str, momentum: float, z: int) -> int:
    return sum(m is None for m in _seed_maps(variant, momentum, z))


def _epoch0_purity() -> float:
    ds, _ = _hard_data()
    cfg = TrainConfig.from_dict(HARD_CFG)
    values = []
    for seed in SEEDS:
        feats = forward(init_encoder(ds.d_in, ds.d_in, make_rng(seed)), ds.raw)
        values.append(purity_summary(dbscan(feats, cfg.dbscan), ds.identities)["weighted"])
    return float(np.mean(values))


def test_criterion_5_memory_ordering():
    z = HARD_CFG["sampler"]["z"]
    pur0 = _epoch0_purity()
    base = _mean_map("instance_baseline", HARD_CFG["momentum"], z)
    m0 = _mean_map("cluster_contrast", 0.0, z)
    m01 = _mean_map("cluster_contrast", 0.1, z)
    verdict(5, pur0 < 0.8 and m0 > base and m01 >= m0,
            f"epoch-0 purity {pur0:.3f} (< 0.8); mean mAP baseline {base:.4f}, m=0 {m0:.4f}, m=0.1 {m01:.4f}; "
            f"m=0 > baseline: {m0 > base}, m=0.1 >= m=0: {m01 >= m0}")


def test_criterion_6_momentum_sweep():
    z = HARD_CFG["sampler"]["z"]
    sweep = {m: _mean_map("cluster_contrast", m, z) for m in MOMENTUM_SWEEP}
    high = _mean_map("cluster_contrast", 0.99, z)
    spread = max(sweep.values()) - min(sweep.values())
    gap = max(sweep.values()) - high
    shown = ", ".join(f"m={m:g}: {v:.4f}" for m, v in sweep.items())
    verdict(6, spread <= 0.05 and gap > 0.05,
            f"{shown}; spread {spread:.4f} (<= 0.05); m=0.99 {high:.4f}, gap {gap:.4f} (> 0.05)")


def test_criterion_7_batch_size_robustness():
    p = HARD_CFG["sampler"]["p"]
    ranges = {}
    for variant in ("instance_baseline", "cluster_contrast"):
        means = [_mean_map(variant, HARD_CFG["momentum"], size // p) for size in BATCH_SIZES]
        aborts = [_aborts(variant, HARD_CFG["momentum"], size // p) for size in BATCH_SIZES]
        ranges[variant] = (max(means) - min(means), means, aborts)
    cc, base = ranges["cluster_contrast"], ranges["instance_baseline"]
    verdict(7, cc[0] < base[0],
            f"mAP range over batch {BATCH_SIZES}: cluster {cc[0]:.4f} {np.round(cc[1], 4).tolist()} "
            f"(aborted runs {cc[2]}) < baseline {base[0]:.4f} {np.round(base[1], 4).tolist()} "
            f"(aborted runs {base[2]})")


# 8. determinism of the train command


def test_criterion_8_cli_determinism(tmp_path):
    data = tmp_path / "ds.tsv"
    save_dataset(generate(GenParams(n_ids=8, per_id=10, d_in=16, noise_sigma=0.02, n_cameras=2, seed=7)), data)
    config = json.dumps({"epochs": 5, "sampler": {"p": 4, "z": 4},
                         "schedule": {"base_lr": 1e-3, "warmup_epochs": 1, "decay_every": 4},
                         "dbscan": {"eps": 0.2, "min_pts": 4}})
    codes = [cli.main(["train", "--data", str(data), "--config", config, "--out", str(tmp_path / run)])
             for run in ("a", "b")]
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
               for f in ("epochs.jsonl", "checkpoint.json"))
    verdict(8, codes == [0, 0] and same,
            f"exit codes {codes}, epochs.jsonl and checkpoint.json byte-identical: {same}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
