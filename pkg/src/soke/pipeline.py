"""End-to-end pipeline: synth -> train-deto -> build-dict -> train-amg ->
generate -> eval, with every stage resumable from its on-disk artifact.

A run directory looks like:
    run_config.json
    data/train.jsonl, data/test.jsonl, data/dict_instances.jsonl
    deto/              trained tokenizer
    dict.json          sign dictionary
    amg/               trained generator (single mode per run)
    report.json        EvalReport
    manifest.json      config hash + artifact hashes, written last
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .amg import (
    AmgTrainConfig,
    GeneratorModel,
    TrainPair,
    Vocabulary,
    generate_triples,
    load_generator,
    save_generator,
    train_generator,
    triples_from_tokens,
)
from .config import RunConfig, run_config_to_dict, save_run_config
from .deto import TokenSeq, load_deto, save_deto, train_tokenizer
from .errors import SokeError
from .metrics import EvalReport, evaluate_split, save_report
from .motion import (
    MotionSequence,
    Part,
    build_sign_chain,
    load_motions,
    save_motions,
    sign_instances,
    synthesize_dataset,
)
from .retrieval import SignDictionary, build_dictionary, build_prompt, load_dictionary, save_dictionary


class StageError(SokeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


def config_hash(config: RunConfig) -> str:
    blob = json.dumps(run_config_to_dict(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def file_hash(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


# -- stages -------------------------------------------------------------------


def stage_data(config: RunConfig, out_dir: Path) -> None:
    data_dir = out_dir / "data"
    train = synthesize_dataset(config.synth, seed=config.seed)
    test_cfg = replace(config.synth, num_sentences=config.eval_sentences)
    test = synthesize_dataset(test_cfg, seed=config.seed + config.eval_seed_offset)
    instances = sign_instances(
        config.synth, seed=config.seed,
        instances_per_word=config.dict_instances_per_word,
        instance_noise_std=config.dict_instance_noise,
    )
    save_motions(data_dir / "train.jsonl", train)
    save_motions(data_dir / "test.jsonl", test)
    save_motions(data_dir / "dict_instances.jsonl", instances)


def stage_deto(config: RunConfig, out_dir: Path) -> None:
    corpus = [seq for _, seq in load_motions(out_dir / "data" / "train.jsonl",
                                             layout=config.synth.layout)]
    deto, log = train_tokenizer(corpus, config=config.deto, train_config=config.deto_train,
                                seed=config.seed, layout=config.synth.layout)
    save_deto(out_dir / "deto", deto, log)


def stage_dict(config: RunConfig, out_dir: Path) -> None:
    deto = load_deto(out_dir / "deto")
    instances = load_motions(out_dir / "data" / "dict_instances.jsonl",
                             layout=config.synth.layout)
    chain = build_sign_chain(config.synth.layout)
    dictionary, warnings = build_dictionary(instances, deto, chain)
    save_dictionary(out_dir / "dict.json", dictionary)
    if warnings:
        with open(out_dir / "dict_warnings.jsonl", "w") as fh:
            for record in warnings:
                fh.write(json.dumps(record) + "\n")


def build_train_pairs(
    dataset: list[tuple[str, MotionSequence]],
    deto,
    vocab: Vocabulary,
    dictionary: SignDictionary | None,
) -> list[TrainPair]:
    pairs = []
    for text, seq in dataset:
        prompt = build_prompt(text, seq.language_tag, dictionary, vocab)
        triples = triples_from_tokens(deto.encode_sequence(seq), vocab)
        pairs.append(TrainPair(tuple(prompt), triples, seq.language_tag))
    return pairs


def stage_amg(config: RunConfig, out_dir: Path) -> None:
    deto = load_deto(out_dir / "deto")
    train = load_motions(out_dir / "data" / "train.jsonl", layout=config.synth.layout)
    dictionary = load_dictionary(out_dir / "dict.json") if config.retrieval else None
    vocab = Vocabulary.from_corpus([t for t, _ in train], config.deto.codebook_sizes)
    model = GeneratorModel(vocab, config.amg, config.mode, seed=config.seed)
    pairs = build_train_pairs(train, deto, vocab, dictionary)
    _, log = train_generator(pairs, model, config.amg_train)
    save_generator(out_dir / "amg", model, log)


def make_generate_fn(model: GeneratorModel, deto, dictionary: SignDictionary | None,
                     fps: float = 25.0):
    """text -> decoded motion plus step count, via prompt construction and
    the tokenizer's part decoders."""

    def generate(text: str, lang: str):
        prompt = build_prompt(text, lang, dictionary, model.vocab)
        prompt = prompt[: model.config.enc_max_len]
        result = generate_triples(model, prompt, lang)
        tokens = _triples_to_tokens(result.triples, model.vocab)
        if tokens is None:  # empty decode: hold a single rest frame
            import numpy as np

            frames = np.zeros((1, deto.layout.total_dims), dtype=np.float32)
            return MotionSequence(frames, fps=fps, layout=deto.layout,
                                  language_tag=lang), result.step_count
        motion = deto.decode_tokens(tokens, fps=fps, language_tag=lang)
        return motion, result.step_count

    return generate


def _triples_to_tokens(triples, vocab: Vocabulary):
    from .deto import TokenSeq

    if not triples:
        return None
    by_part = {Part.BODY: [], Part.LEFT_HAND: [], Part.RIGHT_HAND: []}
    for triple in triples:
        for part, token_id in zip(
            (Part.BODY, Part.LEFT_HAND, Part.RIGHT_HAND), triple.as_tuple()
        ):
            _, code = vocab.code_of(token_id)
            by_part[part].append(code)
    return {part: TokenSeq(part, tuple(codes)) for part, codes in by_part.items()}


def stage_eval(config: RunConfig, out_dir: Path) -> EvalReport:
    deto = load_deto(out_dir / "deto")
    model = load_generator(out_dir / "amg")
    dictionary = load_dictionary(out_dir / "dict.json") if config.retrieval else None
    test = load_motions(out_dir / "data" / "test.jsonl", layout=config.synth.layout)
    chain = build_sign_chain(config.synth.layout)
    generate = make_generate_fn(model, deto, dictionary, fps=config.synth.fps)
    report = evaluate_split(generate, test, chain, split="test")
    save_report(out_dir / "report.json", report)
    return report


STAGES = (
    ("data", stage_data, ("data/train.jsonl", "data/test.jsonl", "data/dict_instances.jsonl")),
    ("deto", stage_deto, ("deto/deto.ckpt", "deto/deto.json")),
    ("dict", stage_dict, ("dict.json",)),
    ("amg", stage_amg, ("amg/amg.ckpt", "amg/amg.json", "amg/vocab.json")),
    ("eval", stage_eval, ("report.json",)),
)


def run_pipeline(config: RunConfig, out_dir: str | Path, force: bool = False) -> dict:
    """Run all stages, skipping any whose artifacts already exist.

    Returns the manifest. Stage failures raise StageError tagged with the
    stage name.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_run_config(out_dir / "run_config.json", config)
    started = time.time()
    ran: list[str] = []
    for name, fn, artifacts in STAGES:
        complete = all((out_dir / rel).exists() for rel in artifacts)
        if complete and not force:
            continue
        try:
            fn(config, out_dir)
        except SokeError as exc:
            raise StageError(name, exc) from exc
        ran.append(name)
    manifest = write_manifest(config, out_dir, started, ran)
    return manifest


def write_manifest(config: RunConfig, out_dir: Path, started: float, ran: list[str]) -> dict:
    artifacts = {}
    for _, _, rels in STAGES:
        for rel in rels:
            path = out_dir / rel
            if path.exists():
                artifacts[rel] = file_hash(path)
    manifest = {
        "version": __version__,
        "config_hash": config_hash(config),
        "artifacts": artifacts,
        "stages_run": ran,
        "started": started,
        "finished": time.time(),
    }
    tmp = out_dir / "manifest.json.tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, out_dir / "manifest.json")
    return manifest


def verify_manifest(out_dir: str | Path) -> bool:
    """Re-hash artifacts and compare against the stored manifest."""
    out_dir = Path(out_dir)
    with open(out_dir / "manifest.json") as fh:
        manifest = json.load(fh)
    for rel, digest in manifest["artifacts"].items():
        path = out_dir / rel
        if not path.exists() or file_hash(path) != digest:
            return False
    return True
