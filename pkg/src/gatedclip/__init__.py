"""Training and evaluation for gated fusion classification heads over
precomputed, frozen-encoder image/text embedding pairs."""

from .embedding_store import (
    Batch,
    Dataset,
    EmbeddingRecord,
    MetaTag,
    SyntheticConfig,
    generate_synthetic,
    make_batches,
    read_embedding_file,
    write_embedding_file,
)
from .model import BASELINE, GATEDCLIP, ModelConfig, param_count
from .trainer import TrainConfig, TrainResult, evaluate, load_checkpoint, save_checkpoint, train

__all__ = [
    "BASELINE",
    "Batch",
    "Dataset",
    "EmbeddingRecord",
    "GATEDCLIP",
    "MetaTag",
    "ModelConfig",
    "SyntheticConfig",
    "TrainConfig",
    "TrainResult",
    "evaluate",
    "generate_synthetic",
    "load_checkpoint",
    "make_batches",
    "param_count",
    "read_embedding_file",
    "save_checkpoint",
    "train",
    "write_embedding_file",
]

__version__ = "0.1.0"
