"""Toolkit for aligning class-name embeddings with visual prototypes and
scoring few-shot episodes with decoupled visual + textual similarity."""

from .cem import AlignmentConfig, ProjectionPair, fit, load_pair, project_text, project_visual, save_pair
from .data import ClassSplit, EmbeddingTable, VisualFeatureStore, load_embeddings, write_embeddings
from .episodes import (
    DataBundle,
    Episode,
    EvalConfig,
    EvalReport,
    confidence_interval,
    evaluate,
    gen_synthetic,
    load_bundle,
    sample_episode,
    sweep,
)
from .errors import (
    DataError,
    FormatError,
    NotPSDError,
    NumericalError,
    ProtoAlignError,
    RankError,
)
from .mapnet import MapNet, forward, init_adam, init_mapnet, train, train_step
from .prototypes import PrototypeSet, episode_prototypes, global_prototypes
from .scoring import classify, score_s1, score_s2, score_s3, softmax_ce

__all__ = [
    "AlignmentConfig",
    "ClassSplit",
    "DataBundle",
    "DataError",
    "EmbeddingTable",
    "Episode",
    "EvalConfig",
    "EvalReport",
    "FormatError",
    "MapNet",
    "NotPSDError",
    "NumericalError",
    "ProjectionPair",
    "ProtoAlignError",
    "PrototypeSet",
    "RankError",
    "VisualFeatureStore",
    "classify",
    "confidence_interval",
    "episode_prototypes",
    "evaluate",
    "fit",
    "forward",
    "gen_synthetic",
    "global_prototypes",
    "init_adam",
    "init_mapnet",
    "load_bundle",
    "load_embeddings",
    "load_pair",
    "project_text",
    "project_visual",
    "sample_episode",
    "save_pair",
    "score_s1",
    "score_s2",
    "score_s3",
    "softmax_ce",
    "sweep",
    "train",
    "train_step",
    "write_embeddings",
]
