"""Per-part VQ autoencoders over motion slices.

Each part tokenizer is a strided 1D-CNN encoder (temporal downsample factor
F), a codebook, and a mirrored upsampling decoder. Inputs are edge-padded to
a multiple of F so the encoder emits exactly ceil(T / F) latents.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, InputError
from ..grad import Tensor, conv1d, gather_rows, straight_through, upsample_repeat
from ..motion import MotionSequence, Part, PartLayout, PartMotion, merge_parts, split_parts
from .codebook import Codebook, TokenSeq, nearest_code_ids, quantize

PARTS = (Part.BODY, Part.LEFT_HAND, Part.RIGHT_HAND)

# Codebook size grid the configuration study covers.
SUPPORTED_CODEBOOK_SIZES = (64, 96, 128, 192, 256)


@dataclass(frozen=True)
class DetoConfig:
    code_dim: int = 512  # C
    codebook_sizes: tuple[int, int, int] = (96, 192, 192)  # N_Z for B / LH / RH
    hidden_channels: int = 128
    downsample: int = 4  # F; two stride-2 conv blocks
    w_emb: float = 1.0
    w_com: float = 0.25

    def __post_init__(self):
        if self.downsample != 4:
            raise ConfigError("the encoder stack realizes a fixed downsample factor of 4")
        if any(n < 1 for n in self.codebook_sizes):
            raise ConfigError("codebook sizes must be positive")
        if self.code_dim < 1 or self.hidden_channels < 1:
            raise ConfigError("channel widths must be positive")

    def size_for(self, part: Part) -> int:
        return self.codebook_sizes[PARTS.index(part)]


class PartTokenizer:
    """Encoder, decoder, and codebook for one body part."""

    def __init__(self, part: Part, width: int, config: DetoConfig, rng: np.random.Generator):
        self.part = part
        self.width = width
        self.config = config
        h, c = config.hidden_channels, config.code_dim
        k_down, k_up = 4, 3

        def init(shape, fan_in):
            return Tensor(
                (rng.standard_normal(shape) * np.sqrt(1.0 / fan_in)).astype(np.float32),
                requires_grad=True,
            )

        self.enc_w1 = init((h, width, k_down), width * k_down)
        self.enc_b1 = Tensor(np.zeros(h, dtype=np.float32), requires_grad=True)
        self.enc_w2 = init((c, h, k_down), h * k_down)
        self.enc_b2 = Tensor(np.zeros(c, dtype=np.float32), requires_grad=True)
        self.dec_w1 = init((h, c, k_up), c * k_up)
        self.dec_b1 = Tensor(np.zeros(h, dtype=np.float32), requires_grad=True)
        self.dec_w2 = init((width, h, k_up), h * k_up)
        self.dec_b2 = Tensor(np.zeros(width, dtype=np.float32), requires_grad=True)
        self.codebook = Codebook(
            part, (rng.standard_normal((config.size_for(part), c)) * 0.5).astype(np.float32)
        )

    # -- parameter plumbing ---------------------------------------------------

    def parameters(self) -> list[tuple[str, Tensor]]:
        named = [
            ("enc_w1", self.enc_w1), ("enc_b1", self.enc_b1),
            ("enc_w2", self.enc_w2), ("enc_b2", self.enc_b2),
            ("dec_w1", self.dec_w1), ("dec_b1", self.dec_b1),
            ("dec_w2", self.dec_w2), ("dec_b2", self.dec_b2),
            ("codebook", self.codebook.codes),
        ]
        return [(f"{self.part.value}.{name}", p) for name, p in named]

    # -- forward passes ----------------------------------------------------------

    def _padded(self, frames: np.ndarray) -> np.ndarray:
        f = self.config.downsample
        T = frames.shape[0]
        pad = (-T) % f
        if pad:
            frames = np.pad(frames, ((0, pad), (0, 0)), mode="edge")
        return frames

    def encode_latents(self, frames: np.ndarray) -> Tensor:
        """(T, width) motion slice -> (ceil(T/F), C) latents."""
        x = Tensor(self._padded(frames))
        h = conv1d(x, self.enc_w1, self.enc_b1, stride=2, padding=1).relu()
        return conv1d(h, self.enc_w2, self.enc_b2, stride=2, padding=1)

    def decode_latents(self, latents: Tensor) -> Tensor:
        """(T_f, C) latents -> (F * T_f, width) motion slice."""
        h = conv1d(upsample_repeat(latents, 2), self.dec_w1, self.dec_b1, padding=1).relu()
        return conv1d(upsample_repeat(h, 2), self.dec_w2, self.dec_b2, padding=1)

    def num_tokens(self, T: int) -> int:
        f = self.config.downsample
        return -(-T // f)

    def encode(self, motion: PartMotion) -> TokenSeq:
        if motion.part is not self.part:
            raise InputError(f"tokenizer for {self.part.value} got a {motion.part.value} motion")
        if motion.num_frames < self.config.downsample:
            raise InputError(
                f"motion of {motion.num_frames} frames is shorter than one "
                f"downsample window ({self.config.downsample})"
            )
        latents = self.encode_latents(motion.frames)
        return quantize(latents.data, self.codebook)

    def decode(self, tokens: TokenSeq, num_frames: int | None = None) -> PartMotion:
        if tokens.part is not self.part:
            raise InputError(f"tokenizer for {self.part.value} got {tokens.part.value} tokens")
        ids = np.asarray(tokens.ids)
        if ids.min() < 0 or ids.max() >= self.codebook.num_codes:
            raise InputError(
                f"token id out of range [0, {self.codebook.num_codes}) for part {self.part.value}"
            )
        codes = gather_rows(self.codebook.codes, ids)
        frames = self.decode_latents(codes).data.astype(np.float32)
        if num_frames is not None:
            if frames.shape[0] >= num_frames:
                frames = frames[:num_frames]
            else:
                pad = num_frames - frames.shape[0]
                frames = np.concatenate([frames, np.repeat(frames[-1:], pad, axis=0)])
        return PartMotion(self.part, frames)

    def vq_loss(self, motion: PartMotion) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        """(total, rec, emb, com) for one part motion; see vq_loss_terms."""
        if motion.num_frames < self.config.downsample:
            raise InputError("motion shorter than one downsample window")
        x = motion.frames
        latents = self.encode_latents(x)
        ids = nearest_code_ids(latents.data, self.codebook.codes.data)
        codes = gather_rows(self.codebook.codes, ids)
        recon = self.decode_latents(straight_through(latents, codes))[: x.shape[0]]
        return vq_loss_terms(latents, codes, recon, x, self.config.w_emb, self.config.w_com)


def frozen_vq_loss_fn(tok: PartTokenizer, motion: PartMotion):
    """Total VQ loss with every stop-gradient operand frozen at the current
    operating point.

    The quantizer becomes latents + const(codes0 - latents0) and the detached
    sides of the embedding/commitment terms become constants, which is
    exactly the surrogate whose true gradient the straight-through estimator
    computes. Its finite differences are therefore comparable to backward()
    on the live loss at this point.
    """
    latents0 = tok.encode_latents(motion.frames).data.copy()
    ids0 = nearest_code_ids(latents0, tok.codebook.codes.data)
    codes0 = tok.codebook.codes.data[ids0].copy()
    delta0 = codes0 - latents0
    T = motion.frames.shape[0]
    cfg = tok.config

    def loss_fn() -> Tensor:
        latents = tok.encode_latents(motion.frames)
        st = latents + Tensor(delta0)
        recon = tok.decode_latents(st)[:T]
        rec = ((recon - Tensor(motion.frames)) ** 2).mean()
        codes = gather_rows(tok.codebook.codes, ids0)
        emb = ((codes - Tensor(latents0)) ** 2).mean() * cfg.w_emb
        com = ((latents - Tensor(codes0)) ** 2).mean() * cfg.w_com
        return rec + emb + com

    return loss_fn


def vq_loss_terms(
    latents: Tensor,
    codes: Tensor,
    recon: Tensor,
    target: np.ndarray,
    w_emb: float,
    w_com: float,
) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """The VQ training objective split into its three reported components.

    rec: MSE between reconstruction and target.
    emb: w_emb * MSE pulling codes toward detached latents.
    com: w_com * MSE pulling latents toward detached codes.
    total = rec + emb + com.
    """
    rec = ((recon - Tensor(np.asarray(target))) ** 2).mean()
    emb = ((codes - latents.detach()) ** 2).mean() * w_emb
    com = ((latents - codes.detach()) ** 2).mean() * w_com
    total = rec + emb + com
    return total, rec, emb, com


class DecoupledTokenizer:
    """Three independent part tokenizers sharing a layout and downsample F."""

    def __init__(self, layout: PartLayout, config: DetoConfig, seed: int = 0):
        self.layout = layout
        self.config = config
        rng = np.random.default_rng(seed)
        self.parts: dict[Part, PartTokenizer] = {
            part: PartTokenizer(part, layout.part_width(part), config, rng) for part in PARTS
        }

    def __getitem__(self, part: Part) -> PartTokenizer:
        return self.parts[part]

    @property
    def downsample(self) -> int:
        return self.config.downsample

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [pair for part in PARTS for pair in self.parts[part].parameters()]

    def encode_sequence(self, seq: MotionSequence) -> dict[Part, TokenSeq]:
        body, left, right = split_parts(seq)
        return {pm.part: self.parts[pm.part].encode(pm) for pm in (body, left, right)}

    def decode_tokens(
        self,
        tokens: dict[Part, TokenSeq],
        num_frames: int | None = None,
        fps: float = 25.0,
        language_tag: str = "ASL",
    ) -> MotionSequence:
        decoded = {part: self.parts[part].decode(tokens[part], num_frames) for part in PARTS}
        lengths = {pm.num_frames for pm in decoded.values()}
        if len(lengths) > 1:
            cut = min(lengths)
            decoded = {p: PartMotion(p, pm.frames[:cut]) for p, pm in decoded.items()}
        return merge_parts(
            decoded[Part.BODY], decoded[Part.LEFT_HAND], decoded[Part.RIGHT_HAND],
            layout=self.layout, fps=fps, language_tag=language_tag,
        )

    def round_trip(self, seq: MotionSequence) -> MotionSequence:
        tokens = self.encode_sequence(seq)
        return self.decode_tokens(
            tokens, num_frames=seq.num_frames, fps=seq.fps, language_tag=seq.language_tag
        )
