"""Codebooks and nearest-neighbor quantization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from ..grad import Tensor
from ..motion import Part


@dataclass(frozen=True)
class TokenSeq:
    """Discrete code indices for one body part."""

    part: Part
    ids: tuple[int, ...]

    def __post_init__(self):
        if len(self.ids) == 0:
            raise InputError("token sequence must be nonempty")

    def __len__(self) -> int:
        return len(self.ids)


class Codebook:
    """A learnable N x C matrix of latent prototypes for one part."""

    def __init__(self, part: Part, codes: np.ndarray):
        codes = np.asarray(codes)
        if codes.ndim != 2 or codes.shape[0] < 1:
            raise InputError("codebook must be a nonempty N x C matrix")
        if not np.all(np.isfinite(codes)):
            raise InputError("codebook contains non-finite entries")
        self.part = part
        self.codes = Tensor(codes, requires_grad=True)

    @property
    def num_codes(self) -> int:
        return self.codes.shape[0]

    @property
    def code_dim(self) -> int:
        return self.codes.shape[1]


def nearest_code_ids(latent: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """Index of the nearest codebook row per latent row (squared Euclidean,
    ties broken by lowest index)."""
    latent = np.asarray(latent, dtype=np.float64)
    codes = np.asarray(codes, dtype=np.float64)
    if latent.ndim != 2 or latent.shape[0] < 1:
        raise InputError("latent must be a nonempty T_f x C matrix")
    if latent.shape[1] != codes.shape[1]:
        raise InputError(f"latent dim {latent.shape[1]} != code dim {codes.shape[1]}")
    diff = latent[:, None, :] - codes[None, :, :]
    d2 = (diff * diff).sum(axis=-1)
    return d2.argmin(axis=1)


def quantize(latent: np.ndarray, codebook: Codebook) -> TokenSeq:
    """Nearest-neighbor token ids for a T_f x C latent matrix."""
    ids = nearest_code_ids(latent, codebook.codes.data)
    return TokenSeq(part=codebook.part, ids=tuple(int(i) for i in ids))
