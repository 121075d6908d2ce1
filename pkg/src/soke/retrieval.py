"""Retrieval-enhanced prompting from a word-level sign dictionary.

Dictionary entries are (lemma, per-part token sequences, reconstruction
error) quadruples; when a word has several recorded instances, the one with
the lowest tokenizer round-trip PA-MPJPE wins. Prompts are the language tag,
the text tokens, then each matched word's motion tokens appended in sentence
order as contiguous per-part blocks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .amg import Vocabulary
from .deto import DecoupledTokenizer, TokenSeq
from .errors import InputError
from .metrics import reconstruction_pa_mpjpe
from .motion import KinematicChain, MotionSequence, Part
from .textproc import lemmatize, tokenize_words

_PART_ORDER = (Part.BODY, Part.LEFT_HAND, Part.RIGHT_HAND)


@dataclass(frozen=True)
class DictionaryEntry:
    word: str  # lemmatized
    tokens: dict  # Part -> TokenSeq
    recon_error: float

    def __post_init__(self):
        lengths = {len(self.tokens[p]) for p in _PART_ORDER}
        if len(lengths) != 1:
            raise InputError(f"entry {self.word!r}: part token sequences differ in length")
        if self.recon_error < 0:
            raise InputError(f"entry {self.word!r}: negative reconstruction error")


class SignDictionary:
    """language tag -> lemma -> best DictionaryEntry."""

    def __init__(self):
        self._entries: dict[str, dict[str, DictionaryEntry]] = {}

    def offer(self, lang: str, entry: DictionaryEntry) -> bool:
        """Insert unless an existing entry for (lang, word) has lower or equal
        error (ties keep the first occurrence). Returns True if stored."""
        table = self._entries.setdefault(lang, {})
        current = table.get(entry.word)
        if current is not None and current.recon_error <= entry.recon_error:
            return False
        table[entry.word] = entry
        return True

    def lookup(self, lang: str, word: str) -> DictionaryEntry | None:
        return self._entries.get(lang, {}).get(word)

    def words(self, lang: str) -> list[str]:
        return sorted(self._entries.get(lang, {}))

    def __len__(self) -> int:
        return sum(len(table) for table in self._entries.values())

    # -- persistence ---------------------------------------------------------

    def to_json(self) -> dict:
        payload: dict = {}
        for lang, table in sorted(self._entries.items()):
            payload[lang] = {
                word: {
                    "B": list(entry.tokens[Part.BODY].ids),
                    "LH": list(entry.tokens[Part.LEFT_HAND].ids),
                    "RH": list(entry.tokens[Part.RIGHT_HAND].ids),
                    "err": entry.recon_error,
                }
                for word, entry in sorted(table.items())
            }
        return payload

    @classmethod
    def from_json(cls, payload: dict) -> "SignDictionary":
        out = cls()
        for lang, table in payload.items():
            for word, rec in table.items():
                entry = DictionaryEntry(
                    word=word,
                    tokens={
                        Part.BODY: TokenSeq(Part.BODY, tuple(rec["B"])),
                        Part.LEFT_HAND: TokenSeq(Part.LEFT_HAND, tuple(rec["LH"])),
                        Part.RIGHT_HAND: TokenSeq(Part.RIGHT_HAND, tuple(rec["RH"])),
                    },
                    recon_error=float(rec["err"]),
                )
                out.offer(lang, entry)
        return out


def build_dictionary(
    instances: list[tuple[str, MotionSequence]],
    deto: DecoupledTokenizer,
    chain: KinematicChain,
    lemmatizer: Callable[[str], str] = lemmatize,
) -> tuple[SignDictionary, list[dict]]:
    """Tokenize word-level recordings and keep the best instance per word.

    Instances too short to tokenize are skipped; skips are returned as
    warning records alongside the dictionary.
    """
    dictionary = SignDictionary()
    warnings: list[dict] = []
    for word, seq in instances:
        if seq.num_frames < deto.downsample:
            warnings.append({
                "warning": "instance_too_short", "word": word,
                "frames": seq.num_frames, "required": deto.downsample,
            })
            continue
        tokens = deto.encode_sequence(seq)
        recon = deto.decode_tokens(tokens, num_frames=seq.num_frames, fps=seq.fps,
                                   language_tag=seq.language_tag)
        error = reconstruction_pa_mpjpe(recon, seq, chain)
        entry = DictionaryEntry(word=lemmatizer(word), tokens=tokens, recon_error=error)
        dictionary.offer(seq.language_tag, entry)
    return dictionary, warnings


def build_prompt(
    text: str,
    lang: str,
    dictionary: SignDictionary | None,
    vocab: Vocabulary,
    lemmatizer: Callable[[str], str] = lemmatize,
    block_separator: bool = False,
) -> list[int]:
    """[lang token] ++ text tokens ++ matched words' motion-token blocks.

    Each matched word contributes its B, LH, RH token ids contiguously, in
    sentence order; unmatched words contribute nothing. block_separator
    inserts a <SEP> between word blocks (off by default; ablation flag).
    """
    prompt = [vocab.lang_id(lang)] + vocab.encode_text(text)
    if dictionary is None:
        return prompt
    first_block = True
    for word in tokenize_words(text):
        entry = dictionary.lookup(lang, lemmatizer(word))
        if entry is None:
            continue
        if block_separator and not first_block:
            prompt.append(vocab.sep_id)
        first_block = False
        for part in _PART_ORDER:
            prompt.extend(vocab.motion_ids(part, entry.tokens[part].ids))
    return prompt


def save_dictionary(path: str | Path, dictionary: SignDictionary) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(dictionary.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dictionary(path: str | Path) -> SignDictionary:
    with open(path) as fh:
        return SignDictionary.from_json(json.load(fh))
