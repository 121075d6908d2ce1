"""Decoupled tokenizer: three per-part VQ autoencoders."""

from .codebook import Codebook, TokenSeq, nearest_code_ids, quantize
from .tokenizer import (
    PARTS,
    SUPPORTED_CODEBOOK_SIZES,
    DecoupledTokenizer,
    DetoConfig,
    PartTokenizer,
    frozen_vq_loss_fn,
    vq_loss_terms,
)
from .training import (
    CHECKPOINT_NAME,
    SIDECAR_NAME,
    DetoTrainConfig,
    load_deto,
    save_deto,
    train_tokenizer,
)

__all__ = [
    "CHECKPOINT_NAME",
    "Codebook",
    "DecoupledTokenizer",
    "DetoConfig",
    "DetoTrainConfig",
    "PARTS",
    "PartTokenizer",
    "SIDECAR_NAME",
    "SUPPORTED_CODEBOOK_SIZES",
    "TokenSeq",
    "frozen_vq_loss_fn",
    "load_deto",
    "nearest_code_ids",
    "quantize",
    "save_deto",
    "train_tokenizer",
    "vq_loss_terms",
]
