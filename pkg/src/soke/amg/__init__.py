"""Autoregressive generator: integrated vocabulary, micro encoder-decoder,
three decoding factorizations."""

from .decoding import (
    DecodeResult,
    PartTokenTriple,
    decode_multihead,
    decode_parallel,
    decode_sequential,
    encode_prompt,
    flatten,
    generate_triples,
    unflatten,
)
from .model import HEAD_PARTS, MODES, AmgConfig, GeneratorModel, fuse_embeddings
from .training import (
    AmgTrainConfig,
    TrainPair,
    exact_match_rate,
    generator_loss,
    load_generator,
    save_generator,
    train_generator,
    triples_from_tokens,
)
from .vocab import LANGUAGES, Vocabulary, load_vocab, save_vocab

__all__ = [
    "AmgConfig",
    "AmgTrainConfig",
    "DecodeResult",
    "GeneratorModel",
    "HEAD_PARTS",
    "LANGUAGES",
    "MODES",
    "PartTokenTriple",
    "TrainPair",
    "Vocabulary",
    "decode_multihead",
    "decode_parallel",
    "decode_sequential",
    "encode_prompt",
    "exact_match_rate",
    "flatten",
    "fuse_embeddings",
    "generate_triples",
    "generator_loss",
    "load_generator",
    "load_vocab",
    "save_generator",
    "save_vocab",
    "train_generator",
    "triples_from_tokens",
    "unflatten",
]
