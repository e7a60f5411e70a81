"""Hybrid word-character neural machine translation."""

from hnmt._core import (
    HnmtError,
    HybridModel,
    ModelConfig,
    ModelMode,
    SeedPath,
    Vocabulary,
    bleu,
    chrf3,
    grad_check_softmax_xent,
    load_checkpoint,
    matmul,
    perplexity,
    rare_word_similarity,
    softmax_rows,
    spearman_rho,
    train,
)

__all__ = [
    "HnmtError",
    "HybridModel",
    "ModelConfig",
    "ModelMode",
    "SeedPath",
    "Vocabulary",
    "bleu",
    "chrf3",
    "grad_check_softmax_xent",
    "load_checkpoint",
    "matmul",
    "perplexity",
    "rare_word_similarity",
    "softmax_rows",
    "spearman_rho",
    "train",
]
