"""Retrieval metrics (mAP, CMC) with the same-identity same-camera junk rule,
cluster purity summaries and intra/inter-class distance statistics."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clustering import PseudoLabeling, cluster_purity
from .core import ClusterContrastError, Dataset, make_rng
from .datagen import RetrievalSplit
from .encoder import Encoder, forward

EXACT_PAIR_LIMIT = 2000
SAMPLED_PAIRS = 200_000


class NoValidQueries(ClusterContrastError, ValueError):
    """Every query was skipped, so mAP is undefined."""


@dataclass
class EvalReport:
    map: float
    cmc: np.ndarray
    n_queries: int
    n_skipped: int
    intra_mean: float = math.nan
    inter_mean: float = math.nan

    def top(self, r: int) -> float:
        return float(self.cmc[min(r, len(self.cmc)) - 1])

    def to_dict(self) -> dict:
        return {
            "mAP": self.map,
            "top1": self.top(1),
            "top5": self.top(5),
            "top10": self.top(10),
            "n_queries": self.n_queries,
            "n_skipped": self.n_skipped,
            "intra_mean": self.intra_mean,
            "inter_mean": self.inter_mean,
        }


@dataclass
class _Ranked:
    order: list[np.ndarray] = field(default_factory=list)
    hits: list[np.ndarray] = field(default_factory=list)


def _rank(scores, q_ident, g_ident, q_cam, g_cam, g_ids, junk_rule) -> _Ranked:
    out = _Ranked()
    for i in range(len(scores)):
        # descending score, ties by ascending gallery id
        order = np.lexsort((g_ids, -scores[i]))
        same_id = g_ident[order] == q_ident[i]
        keep = ~(same_id & (g_cam[order] == q_cam[i])) if junk_rule else np.ones(len(order), bool)
        out.order.append(order[keep])
        out.hits.append(same_id[keep])
    return out


def rank_metrics(scores, q_ident, g_ident, q_cam, g_cam, g_ids=None,
                 junk_rule: bool = True, max_rank: int | None = None) -> EvalReport:
    """mAP and CMC from a (n_query, n_gallery) score matrix, higher = more similar.

    With ``junk_rule``, gallery items sharing both identity and camera with the
    query are dropped from its ranking. Queries left without a relevant item
    are skipped and counted in ``n_skipped``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n_gallery = scores.shape[1]
    g_ids = np.arange(n_gallery) if g_ids is None else np.asarray(g_ids)
    ranked = _rank(scores, np.asarray(q_ident), np.asarray(g_ident),
                   np.asarray(q_cam), np.asarray(g_cam), g_ids, junk_rule)
    max_rank = max_rank or n_gallery
    aps = []
    first_hit = []
    for hits in ranked.hits:
        pos = np.flatnonzero(hits)
        if pos.size == 0:
            continue
        precisions = (np.arange(1, pos.size + 1) / (pos + 1)).tolist()
        aps.append(math.fsum(precisions) / pos.size)
        first_hit.append(pos[0])
    n = len(scores)
    if not aps:
        raise NoValidQueries(f"all {n} queries lack a relevant gallery item")
    first_hit = np.array(first_hit)
    cmc = np.array([(first_hit < r).sum() for r in range(1, max_rank + 1)]) / len(aps)
    return EvalReport(math.fsum(aps) / len(aps), cmc, n, n - len(aps))


def retrieval_metrics(q_feats, g_feats, q_ident, g_ident, q_cam, g_cam, g_ids=None,
                      junk_rule: bool = True, max_rank: int | None = None) -> EvalReport:
    """Cosine-similarity ranking of unit-norm gallery features for each query."""
    scores = np.asarray(q_feats, dtype=np.float64) @ np.asarray(g_feats, dtype=np.float64).T
    return rank_metrics(scores, q_ident, g_ident, q_cam, g_cam, g_ids, junk_rule, max_rank)


def evaluate_features(features, dataset: Dataset, split: RetrievalSplit,
                      junk_rule: bool = True, max_rank: int | None = None) -> EvalReport:
    features = np.asarray(features, dtype=np.float64)
    q, g = split.query, split.gallery
    report = retrieval_metrics(features[q], features[g], dataset.identities[q], dataset.identities[g],
                               dataset.cameras[q], dataset.cameras[g], g_ids=g,
                               junk_rule=junk_rule, max_rank=max_rank)
    report.intra_mean, report.inter_mean = distance_stats(features, dataset.identities)
    return report


def evaluate(enc: Encoder, dataset: Dataset, split: RetrievalSplit,
             junk_rule: bool = True, max_rank: int | None = None) -> EvalReport:
    return evaluate_features(forward(enc, dataset.raw), dataset, split, junk_rule, max_rank)


def distance_stats(features, identities, seed: int = 0) -> tuple[float, float]:
    """Mean cosine distance over same-identity and different-identity pairs.

    Exact below ``EXACT_PAIR_LIMIT`` instances, otherwise estimated from a
    fixed-seed sample of pairs. A pair type with no members gives NaN.
    """
    features = np.asarray(features, dtype=np.float64)
    identities = np.asarray(identities)
    n = len(features)
    if n <= EXACT_PAIR_LIMIT:
        dist = 1.0 - features @ features.T
        upper = np.triu(np.ones((n, n), dtype=bool), k=1)
        same = identities[:, None] == identities[None, :]
        intra, inter = dist[upper & same], dist[upper & ~same]
    else:
        rng = make_rng(seed)
        i = rng.integers(0, n, SAMPLED_PAIRS)
        j = rng.integers(0, n, SAMPLED_PAIRS)
        keep = i != j
        i, j = i[keep], j[keep]
        dist = 1.0 - np.einsum("ij,ij->i", features[i], features[j])
        same = identities[i] == identities[j]
        intra, inter = dist[same], dist[~same]
    return (float(intra.mean()) if intra.size else math.nan,
            float(inter.mean()) if inter.size else math.nan)


def class_distance_stats(enc: Encoder, dataset: Dataset) -> tuple[float, float]:
    return distance_stats(forward(enc, dataset.raw), dataset.identities)


def purity_summary(labeling: PseudoLabeling, identities) -> dict:
    """Per-cluster purity aggregates. ``weighted`` is the fraction of clustered
    instances that carry their cluster's dominant identity."""
    purities = np.array([p for _, p in cluster_purity(labeling, identities)])
    if purities.size == 0:
        return {"mean": math.nan, "weighted": math.nan, "min": math.nan, "pure_fraction": math.nan}
    sizes = labeling.sizes()
    return {
        "mean": float(purities.mean()),
        "weighted": float((purities * sizes).sum() / sizes.sum()),
        "min": float(purities.min()),
        "pure_fraction": float(np.mean(purities == 1.0)),
    }


def make_monitor(dataset: Dataset, split: RetrievalSplit | None = None,
                 eval_every: int = 0, junk_rule: bool = True):
    """Per-epoch callback for the trainer that reports purity and, every
    ``eval_every`` epochs (0 disables), retrieval metrics.

    Ground truth stays on this side; the trainer only sees the returned dict.
    """

    def monitor(epoch: int, features: np.ndarray, labeling: PseudoLabeling) -> dict:
        out = {"purity": purity_summary(labeling, dataset.identities)}
        if split is not None and eval_every and (epoch + 1) % eval_every == 0:
            out["eval"] = evaluate_features(features, dataset, split, junk_rule).to_dict()
        return out

    return monitor


def write_eval_json(report: EvalReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2) + "\n")


def write_rankings(path, enc: Encoder, dataset: Dataset, split: RetrievalSplit,
                   top_k: int = 10, junk_rule: bool = True) -> None:
    """Per-query top-k gallery list with correctness flags."""
    feats = forward(enc, dataset.raw)
    q, g = split.query, split.gallery
    ranked = _rank(feats[q] @ feats[g].T, dataset.identities[q], dataset.identities[g],
                   dataset.cameras[q], dataset.cameras[g], g, junk_rule)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query_id", "rank", "gallery_id", "similarity", "correct"])
        for qi, order, hits in zip(q, ranked.order, ranked.hits):
            for r, (gi, hit) in enumerate(zip(order[:top_k], hits[:top_k]), start=1):
                sim = float(feats[qi] @ feats[g[gi]])
                writer.writerow([int(qi), r, int(g[gi]), f"{sim:.6f}", int(hit)])
