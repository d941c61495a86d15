"""Temporal knowledge-graph embeddings: HyTE with TransE and TransH baselines."""

__version__ = "0.1.0"

from .estimator import HyTEEmbedding
from .evaluator import RankingReport, evaluate, rank_of
from .kg_data import Quadruple, RawQuadruple, TemporalKG, Vocabulary
from .model import EmbeddingStore, ModelKind, init_embeddings, project
from .time_bins import TimeBins, build_time_bins
from .trainer import TrainConfig, TrainReport, train

__all__ = [
    "EmbeddingStore",
    "HyTEEmbedding",
    "ModelKind",
    "Quadruple",
    "RankingReport",
    "RawQuadruple",
    "TemporalKG",
    "TimeBins",
    "TrainConfig",
    "TrainReport",
    "Vocabulary",
    "build_time_bins",
    "evaluate",
    "init_embeddings",
    "project",
    "rank_of",
    "train",
]
