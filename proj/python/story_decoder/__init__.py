"""Paralleled-LSTM story decoder: training, decoding and evaluation on image-sequence features."""

from ._core import (
    BOS,
    EOS,
    PAD,
    UNK,
    Model,
    StoryError,
    Vocabulary,
    bleu,
    build_vocab,
    generate_synthetic,
    grad_check,
    lcs_length,
    meteor,
    read_features,
    rouge_l,
    run_cli,
    tokenize,
    write_features,
)

__all__ = [
    "BOS",
    "EOS",
    "PAD",
    "UNK",
    "Model",
    "StoryError",
    "Vocabulary",
    "bleu",
    "build_vocab",
    "generate_synthetic",
    "grad_check",
    "lcs_length",
    "meteor",
    "read_features",
    "rouge_l",
    "run_cli",
    "tokenize",
    "write_features",
]
