"""Micro encoder-decoder sequence model with per-part output heads.

Pre-LN transformer, learned absolute positions, three affine heads sharing
the decoder trunk. Heads are zero-initialized so the masked softmax starts
exactly uniform over each part's support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ModeError
from ..grad import Tensor, gather_rows, layer_norm, softmax
from ..motion import Part
from .vocab import Vocabulary

MODES = ("sequential", "parallel", "multihead")
HEAD_PARTS = (Part.BODY, Part.LEFT_HAND, Part.RIGHT_HAND)


@dataclass(frozen=True)
class AmgConfig:
    d_model: int = 64
    num_heads: int = 4
    enc_layers: int = 2
    dec_layers: int = 2
    ffn_dim: int = 256
    fuse_lambda: float = 1.0 / 3.0
    k_max: int = 24  # maximum decoded triples
    enc_max_len: int = 96

    def __post_init__(self):
        if not 0.0 < self.fuse_lambda < 0.5:
            raise ConfigError("fusion weight must lie in the open interval (0, 0.5)")
        if self.d_model % self.num_heads != 0:
            raise ConfigError("d_model must be divisible by num_heads")
        if self.k_max < 1 or self.enc_max_len < 1:
            raise ConfigError("sequence length limits must be positive")


def fuse_embeddings(e_body: Tensor, e_left: Tensor, e_right: Tensor, fuse_lambda: float) -> Tensor:
    """(1 - 2*lambda) * body + lambda * left + lambda * right; weights sum to 1."""
    if not 0.0 < fuse_lambda < 0.5:
        raise ConfigError("fusion weight must lie in the open interval (0, 0.5)")
    if not (e_body.shape == e_left.shape == e_right.shape):
        raise ConfigError("fused embeddings must share a shape")
    return e_body * (1.0 - 2.0 * fuse_lambda) + e_left * fuse_lambda + e_right * fuse_lambda


class GeneratorModel:
    """One trained decoding mode over an integrated vocabulary."""

    def __init__(self, vocab: Vocabulary, config: AmgConfig, mode: str, seed: int = 0):
        if mode not in MODES:
            raise ModeError(f"unknown decoding mode {mode!r}; expected one of {MODES}")
        self.vocab = vocab
        self.config = config
        self.mode = mode
        self.dec_max_len = 3 * config.k_max + 2 if mode == "sequential" else config.k_max + 2
        rng = np.random.default_rng(seed)
        d, ffn, v = config.d_model, config.ffn_dim, len(vocab)

        def init(shape, scale):
            return Tensor((rng.standard_normal(shape) * scale).astype(np.float32),
                          requires_grad=True)

        def zeros(shape):
            return Tensor(np.zeros(shape, dtype=np.float32), requires_grad=True)

        def ones(shape):
            return Tensor(np.ones(shape, dtype=np.float32), requires_grad=True)

        def attn_params():
            s = 1.0 / math.sqrt(d)
            return {
                "wq": init((d, d), s), "bq": zeros(d),
                "wk": init((d, d), s), "bk": zeros(d),
                "wv": init((d, d), s), "bv": zeros(d),
                "wo": init((d, d), s), "bo": zeros(d),
            }

        def ffn_params():
            return {
                "w1": init((d, ffn), 1.0 / math.sqrt(d)), "b1": zeros(ffn),
                "w2": init((ffn, d), 1.0 / math.sqrt(ffn)), "b2": zeros(d),
            }

        self.emb = init((v, d), 0.1)
        self.enc_pos = init((config.enc_max_len, d), 0.1)
        self.dec_pos = init((self.dec_max_len, d), 0.1)
        self.enc_layers = [
            {"ln1_g": ones(d), "ln1_b": zeros(d), "attn": attn_params(),
             "ln2_g": ones(d), "ln2_b": zeros(d), "ffn": ffn_params()}
            for _ in range(config.enc_layers)
        ]
        self.dec_layers = [
            {"ln1_g": ones(d), "ln1_b": zeros(d), "self": attn_params(),
             "lnc_g": ones(d), "lnc_b": zeros(d), "cross": attn_params(),
             "ln2_g": ones(d), "ln2_b": zeros(d), "ffn": ffn_params()}
            for _ in range(config.dec_layers)
        ]
        self.enc_ln_g, self.enc_ln_b = ones(d), zeros(d)
        self.dec_ln_g, self.dec_ln_b = ones(d), zeros(d)
        # zero-init heads: the initial masked softmax is exactly uniform
        self.heads = {part: {"w": zeros((d, v)), "b": zeros(v)} for part in HEAD_PARTS}

    # -- parameters --------------------------------------------------------

    def parameters(self) -> list[tuple[str, Tensor]]:
        named: list[tuple[str, Tensor]] = [
            ("emb", self.emb), ("enc_pos", self.enc_pos), ("dec_pos", self.dec_pos),
            ("enc_ln_g", self.enc_ln_g), ("enc_ln_b", self.enc_ln_b),
            ("dec_ln_g", self.dec_ln_g), ("dec_ln_b", self.dec_ln_b),
        ]
        for i, layer in enumerate(self.enc_layers):
            named.extend(_layer_params(f"enc{i}", layer))
        for i, layer in enumerate(self.dec_layers):
            named.extend(_layer_params(f"dec{i}", layer))
        for part in HEAD_PARTS:
            named.append((f"head_{part.value}.w", self.heads[part]["w"]))
            named.append((f"head_{part.value}.b", self.heads[part]["b"]))
        return named

    # -- forward pieces ---------------------------------------------------------

    def _mha(self, x_q: Tensor, x_kv: Tensor, p: dict, mask: np.ndarray | None) -> Tensor:
        cfg = self.config
        b, tq, d = x_q.shape
        tk = x_kv.shape[1]
        h, dh = cfg.num_heads, d // cfg.num_heads
        q = (x_q @ p["wq"] + p["bq"]).reshape(b, tq, h, dh).transpose((0, 2, 1, 3))
        k = (x_kv @ p["wk"] + p["bk"]).reshape(b, tk, h, dh).transpose((0, 2, 1, 3))
        v = (x_kv @ p["wv"] + p["bv"]).reshape(b, tk, h, dh).transpose((0, 2, 1, 3))
        scores = (q @ k.transpose((0, 1, 3, 2))) * (1.0 / math.sqrt(dh))
        probs = softmax(scores, mask=mask)
        ctx = (probs @ v).transpose((0, 2, 1, 3)).reshape(b, tq, d)
        return ctx @ p["wo"] + p["bo"]

    def _ffn(self, x: Tensor, p: dict) -> Tensor:
        return (x @ p["w1"] + p["b1"]).relu() @ p["w2"] + p["b2"]

    def _embed(self, ids: np.ndarray, pos_table: Tensor) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        pos = gather_rows(pos_table, np.arange(ids.shape[1]))
        return gather_rows(self.emb, ids) + pos

    def encode(self, prompt_ids: np.ndarray) -> tuple[Tensor, np.ndarray]:
        """Prompt ids (B, S) -> (h_en (B, S, d), key mask (B, S)).

        Prompts longer than enc_max_len must be truncated by the caller.
        """
        prompt_ids = np.asarray(prompt_ids, dtype=np.int64)
        if prompt_ids.shape[1] > self.config.enc_max_len:
            raise ConfigError(
                f"prompt length {prompt_ids.shape[1]} exceeds encoder budget "
                f"{self.config.enc_max_len}"
            )
        key_mask = prompt_ids != self.vocab.pad_id
        attn_mask = key_mask[:, None, None, :]
        x = self._embed(prompt_ids, self.enc_pos)
        for layer in self.enc_layers:
            normed = layer_norm(x, layer["ln1_g"], layer["ln1_b"])
            x = x + self._mha(normed, normed, layer["attn"], attn_mask)
            x = x + self._ffn(layer_norm(x, layer["ln2_g"], layer["ln2_b"]), layer["ffn"])
        return layer_norm(x, self.enc_ln_g, self.enc_ln_b), key_mask

    def decode_hidden(self, dec_emb: Tensor, h_en: Tensor, enc_key_mask: np.ndarray) -> Tensor:
        """Decoder trunk over already-embedded inputs (B, K, d)."""
        b, k, _ = dec_emb.shape
        causal = np.tril(np.ones((k, k), dtype=bool))[None, None, :, :]
        cross_mask = enc_key_mask[:, None, None, :]
        pos = gather_rows(self.dec_pos, np.arange(k))
        x = dec_emb + pos
        for layer in self.dec_layers:
            normed = layer_norm(x, layer["ln1_g"], layer["ln1_b"])
            x = x + self._mha(normed, normed, layer["self"], causal)
            x = x + self._mha(
                layer_norm(x, layer["lnc_g"], layer["lnc_b"]), h_en, layer["cross"], cross_mask
            )
            x = x + self._ffn(layer_norm(x, layer["ln2_g"], layer["ln2_b"]), layer["ffn"])
        return layer_norm(x, self.dec_ln_g, self.dec_ln_b)

    def head_logits(self, hidden: Tensor, part: Part) -> Tensor:
        p = self.heads[part]
        return hidden @ p["w"] + p["b"]

    def token_embeddings(self, ids: np.ndarray) -> Tensor:
        return gather_rows(self.emb, np.asarray(ids, dtype=np.int64))


def _layer_params(prefix: str, layer: dict) -> list[tuple[str, Tensor]]:
    named = []
    for key, value in layer.items():
        if isinstance(value, dict):
            named.extend((f"{prefix}.{key}.{sub}", p) for sub, p in value.items())
        else:
            named.append((f"{prefix}.{key}", value))
    return named
