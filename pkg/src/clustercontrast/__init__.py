"""Cluster-level contrastive memory for unsupervised re-identification, at desk scale."""

__version__ = "0.1.0"

from .clustering import DbscanParams, PseudoLabeling, cluster_purity, dbscan
from .core import (
    Dataset,
    DegenerateVector,
    EmptyInput,
    NoClusters,
    NoCrossCameraRelevants,
    TooFewClusters,
    dot,
    l2_normalize,
    make_rng,
)
from .datagen import GenParams, RetrievalSplit, generate, load_dataset, make_split, save_dataset
from .encoder import AdamState, Encoder, LrSchedule, adam_step, backward, forward, init_encoder, lr_at
from .evaluation import EvalReport, class_distance_stats, evaluate
from .loss import LossConfig, LossResult, centroid_nce, cluster_nce
from .memory import (
    ClusterMemory,
    InstanceMemory,
    batch_update,
    centroid,
    init_cluster_memory,
    init_instance_memory,
    instance_update,
    momentum_update,
)
from .sampler import Batch, SamplerConfig, cap_clusters, sample_batch
from .trainer import EpochReport, TrainConfig, train
