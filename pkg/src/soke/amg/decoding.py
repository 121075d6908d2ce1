"""Greedy decoding in three factorizations, with instrumented step counts.

step_count is the number of decoder forward passes attributable to kept
output: 3K for sequential decoding of K triples, K for parallel and
multi-head. forward_passes additionally counts the pass that produced EOS.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError, ModeError
from ..grad import Tensor, concat, log_softmax_array
from ..motion import Part
from .model import HEAD_PARTS, GeneratorModel, fuse_embeddings
from .vocab import Vocabulary


@dataclass(frozen=True)
class PartTokenTriple:
    """One decoding step's motion token per part (vocabulary ids)."""

    body: int
    left: int
    right: int

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.body, self.left, self.right)


@dataclass(frozen=True)
class DecodeResult:
    triples: tuple[PartTokenTriple, ...]
    step_count: int
    forward_passes: int
    wall_ms: float
    # per kept step, per head log-probabilities (multi-head mode only)
    step_logprobs: tuple[tuple[float, float, float], ...] | None = None

    @property
    def joint_logprob(self) -> float | None:
        if self.step_logprobs is None:
            return None
        return float(sum(sum(s) for s in self.step_logprobs))


def flatten(triples: list[PartTokenTriple], vocab: Vocabulary | None = None) -> list[int]:
    """(y_1^B, y_1^LH, y_1^RH, ..., y_K^RH) as one flat list; 3K tokens."""
    flat: list[int] = []
    for triple in triples:
        if vocab is not None:
            _check_slot(vocab, triple.body, Part.BODY)
            _check_slot(vocab, triple.left, Part.LEFT_HAND)
            _check_slot(vocab, triple.right, Part.RIGHT_HAND)
        flat.extend(triple.as_tuple())
    return flat


def unflatten(flat: list[int], vocab: Vocabulary | None = None) -> list[PartTokenTriple]:
    """Inverse of flatten; rejects lengths not divisible by 3 and tokens in
    the wrong part slot."""
    if len(flat) % 3 != 0:
        raise InputError(f"flat token list of length {len(flat)} is not divisible by 3")
    triples = []
    for k in range(len(flat) // 3):
        body, left, right = flat[3 * k: 3 * k + 3]
        if vocab is not None:
            _check_slot(vocab, body, Part.BODY)
            _check_slot(vocab, left, Part.LEFT_HAND)
            _check_slot(vocab, right, Part.RIGHT_HAND)
        triples.append(PartTokenTriple(body, left, right))
    return triples


def _check_slot(vocab: Vocabulary, token_id: int, part: Part) -> None:
    lo, hi = vocab.part_range(part)
    if not lo <= token_id < hi:
        raise InputError(
            f"token {token_id} does not belong to the {part.value} sub-vocabulary slot"
        )


_SLOT_CYCLE = (Part.BODY, Part.LEFT_HAND, Part.RIGHT_HAND)


def _masked_pick(logits_row: np.ndarray, support: np.ndarray) -> tuple[int, float]:
    """Greedy argmax over a support mask; ties go to the lowest token id.

    Returns (token id, log-probability under the masked softmax).
    """
    masked = np.where(support, logits_row.astype(np.float64), -np.inf)
    token = int(np.argmax(masked))
    logp = float(log_softmax_array(logits_row, support)[token])
    return token, logp


def encode_prompt(model: GeneratorModel, prompt_ids: list[int]) -> tuple[Tensor, np.ndarray]:
    """Run the encoder over a single prompt; returns (h_en, key mask)."""
    ids = np.asarray([prompt_ids], dtype=np.int64)
    return model.encode(ids)


def decode_sequential(
    model: GeneratorModel, h_en: Tensor, enc_mask: np.ndarray, k_max: int | None = None
) -> DecodeResult:
    """Flat greedy decode over the single motion stream; 3K decoder passes
    for K emitted triples. Position slots mask logits to the matching part
    sub-vocabulary (plus EOS)."""
    if model.mode != "sequential":
        raise ModeError(f"model was trained for {model.mode!r}, not sequential decoding")
    vocab = model.vocab
    k_max = model.config.k_max if k_max is None else k_max
    start = time.perf_counter()
    supports = [vocab.part_support_mask(part) for part in _SLOT_CYCLE]
    ids = [vocab.bos_id]
    emitted: list[int] = []
    passes = 0
    for t in range(3 * k_max):
        hidden = model.decode_hidden(
            model.token_embeddings(np.asarray([ids])), h_en, enc_mask
        )
        logits = model.head_logits(hidden, Part.BODY).data[0, -1]
        passes += 1
        token, _ = _masked_pick(logits, supports[t % 3])
        if token == vocab.eos_id:
            break
        emitted.append(token)
        ids.append(token)
    kept = 3 * (len(emitted) // 3)
    triples = unflatten(emitted[:kept], vocab)
    wall_ms = (time.perf_counter() - start) * 1e3
    return DecodeResult(
        triples=tuple(triples), step_count=3 * len(triples), forward_passes=passes,
        wall_ms=wall_ms,
    )


def decode_parallel(
    model: GeneratorModel,
    h_en: Tensor,
    enc_mask: np.ndarray,
    lang: str,
    k_max: int | None = None,
) -> DecodeResult:
    """Three independent greedy streams seeded by <Lang_p> start tokens.

    All streams are truncated at the earliest EOS position; step_count is the
    truncated length K (streams run concurrently in principle)."""
    if model.mode != "parallel":
        raise ModeError(f"model was trained for {model.mode!r}, not parallel decoding")
    vocab = model.vocab
    k_max = model.config.k_max if k_max is None else k_max
    start = time.perf_counter()
    streams: dict[Part, list[int]] = {}
    passes = 0
    for part in HEAD_PARTS:
        support = vocab.part_support_mask(part)
        ids = [vocab.lang_part_id(lang, part)]
        tokens: list[int] = []
        for _ in range(k_max):
            hidden = model.decode_hidden(
                model.token_embeddings(np.asarray([ids])), h_en, enc_mask
            )
            logits = model.head_logits(hidden, Part.BODY).data[0, -1]
            passes += 1
            token, _ = _masked_pick(logits, support)
            if token == vocab.eos_id:
                break
            tokens.append(token)
            ids.append(token)
        streams[part] = tokens
    k = min(len(tokens) for tokens in streams.values())
    triples = tuple(
        PartTokenTriple(
            streams[Part.BODY][i], streams[Part.LEFT_HAND][i], streams[Part.RIGHT_HAND][i]
        )
        for i in range(k)
    )
    wall_ms = (time.perf_counter() - start) * 1e3
    return DecodeResult(triples=triples, step_count=k, forward_passes=passes, wall_ms=wall_ms)


def decode_multihead(
    model: GeneratorModel, h_en: Tensor, enc_mask: np.ndarray, k_max: int | None = None
) -> DecodeResult:
    """One decoder pass per triple: the shared trunk feeds three part heads;
    the next input embedding is the fused average of the three emitted token
    embeddings. Terminates at the first step any head emits EOS (that step
    excluded)."""
    if model.mode != "multihead":
        raise ModeError(f"model was trained for {model.mode!r}, not multi-head decoding")
    vocab = model.vocab
    cfg = model.config
    k_max = cfg.k_max if k_max is None else k_max
    start = time.perf_counter()
    supports = {part: vocab.part_support_mask(part) for part in HEAD_PARTS}
    embs: list[Tensor] = [model.token_embeddings(np.asarray([[vocab.bos_id]]))]
    triples: list[PartTokenTriple] = []
    logprobs: list[tuple[float, float, float]] = []
    passes = 0
    for _ in range(k_max):
        dec_emb = embs[0] if len(embs) == 1 else concat(embs, axis=1)
        hidden = model.decode_hidden(dec_emb, h_en, enc_mask)
        passes += 1
        picks: dict[Part, int] = {}
        lps: list[float] = []
        for part in HEAD_PARTS:
            logits = model.head_logits(hidden, part).data[0, -1]
            token, lp = _masked_pick(logits, supports[part])
            picks[part] = token
            lps.append(lp)
        if any(tok == vocab.eos_id for tok in picks.values()):
            break
        triples.append(
            PartTokenTriple(picks[Part.BODY], picks[Part.LEFT_HAND], picks[Part.RIGHT_HAND])
        )
        logprobs.append(tuple(lps))
        fused = fuse_embeddings(
            model.token_embeddings(np.asarray([[picks[Part.BODY]]])),
            model.token_embeddings(np.asarray([[picks[Part.LEFT_HAND]]])),
            model.token_embeddings(np.asarray([[picks[Part.RIGHT_HAND]]])),
            cfg.fuse_lambda,
        )
        embs.append(fused)
    wall_ms = (time.perf_counter() - start) * 1e3
    return DecodeResult(
        triples=tuple(triples), step_count=len(triples), forward_passes=passes,
        wall_ms=wall_ms, step_logprobs=tuple(logprobs),
    )


def generate_triples(model: GeneratorModel, prompt_ids: list[int], lang: str) -> DecodeResult:
    """Encode a prompt and decode with the model's trained strategy."""
    h_en, enc_mask = encode_prompt(model, prompt_ids)
    if model.mode == "sequential":
        return decode_sequential(model, h_en, enc_mask)
    if model.mode == "parallel":
        return decode_parallel(model, h_en, enc_mask, lang)
    return decode_multihead(model, h_en, enc_mask)
