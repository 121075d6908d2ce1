"""Training, persistence, and dead-code maintenance for the decoupled tokenizer."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError, InputError, NonFiniteError, TrainingDivergedError
from ..grad import Adam, CosineSchedule, load_checkpoint, save_checkpoint
from ..motion import MotionSequence, Part, PartLayout, PartMotion, split_parts
from .codebook import nearest_code_ids
from .tokenizer import PARTS, DecoupledTokenizer, DetoConfig, PartTokenizer

SIDECAR_NAME = "deto.json"
CHECKPOINT_NAME = "deto.ckpt"


@dataclass(frozen=True)
class DetoTrainConfig:
    steps: int = 2000
    lr: float = 2e-3
    min_lr: float = 1e-4
    warmup_sequences: int = 4

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError("training needs at least one step")


def _warm_start_codebook(tok: PartTokenizer, motions: list[PartMotion], rng: np.random.Generator):
    """Initialize codebook rows from encoder outputs so no code starts dead."""
    latents = np.concatenate([tok.encode_latents(m.frames).data for m in motions], axis=0)
    n = tok.codebook.num_codes
    picks = rng.integers(0, latents.shape[0], size=n)
    jitter = rng.normal(0.0, 0.01, size=(n, latents.shape[1]))
    tok.codebook.codes.data = (latents[picks] + jitter).astype(np.float32)


def _train_one_part(
    tok: PartTokenizer,
    motions: list[PartMotion],
    train_cfg: DetoTrainConfig,
    rng: np.random.Generator,
    log: list[dict],
) -> None:
    _warm_start_codebook(tok, motions[: max(1, min(train_cfg.warmup_sequences, len(motions)))], rng)
    opt = Adam(
        [p for _, p in tok.parameters()],
        schedule=CosineSchedule(train_cfg.lr, train_cfg.steps, train_cfg.min_lr),
    )
    epoch_len = len(motions)
    used = np.zeros(tok.codebook.num_codes, dtype=bool)
    latent_pool = tok.encode_latents(motions[0].frames).data
    epoch_losses: list[tuple[float, float, float, float]] = []
    order = rng.permutation(epoch_len)

    for step in range(train_cfg.steps):
        motion = motions[order[step % epoch_len]]
        try:
            total, rec, emb, com = tok.vq_loss(motion)
            opt.zero_grad()
            total.backward()
        except NonFiniteError as exc:
            raise TrainingDivergedError(
                f"part {tok.part.value} diverged at step {step}: {exc}"
            ) from exc
        opt.step()

        latents = tok.encode_latents(motion.frames).data
        used[nearest_code_ids(latents, tok.codebook.codes.data)] = True
        latent_pool = latents
        epoch_losses.append((total.item(), rec.item(), emb.item(), com.item()))

        if (step + 1) % epoch_len == 0 or step + 1 == train_cfg.steps:
            dead = np.flatnonzero(~used)
            for code_idx in dead:
                row = latent_pool[rng.integers(0, latent_pool.shape[0])]
                tok.codebook.codes.data[code_idx] = row + rng.normal(0.0, 0.01, size=row.shape)
            arr = np.asarray(epoch_losses)
            log.append(
                {
                    "part": tok.part.value,
                    "epoch": (step + 1) // epoch_len,
                    "step": step + 1,
                    "total": float(arr[:, 0].mean()),
                    "rec": float(arr[:, 1].mean()),
                    "emb": float(arr[:, 2].mean()),
                    "com": float(arr[:, 3].mean()),
                    "lr": opt.current_lr(),
                    "reseeded_codes": int(dead.size),
                }
            )
            epoch_losses.clear()
            used[:] = False
            order = rng.permutation(epoch_len)


def train_tokenizer(
    corpus: list[MotionSequence],
    config: DetoConfig | None = None,
    train_config: DetoTrainConfig | None = None,
    seed: int = 0,
    layout: PartLayout | None = None,
) -> tuple[DecoupledTokenizer, list[dict]]:
    """Train three part tokenizers on a motion corpus.

    Returns the trained DecoupledTokenizer and a per-epoch loss log.
    Deterministic given (corpus, configs, seed).
    """
    if not corpus:
        raise InputError("training corpus is empty")
    config = config or DetoConfig()
    train_config = train_config or DetoTrainConfig()
    layout = layout or corpus[0].layout
    deto = DecoupledTokenizer(layout, config, seed=seed)

    by_part: dict[Part, list[PartMotion]] = {part: [] for part in PARTS}
    for seq in corpus:
        for pm in split_parts(seq):
            by_part[pm.part].append(pm)

    log: list[dict] = []
    for offset, part in enumerate(PARTS):
        rng = np.random.default_rng(seed * 1013 + offset + 1)
        _train_one_part(deto[part], by_part[part], train_config, rng, log)
    return deto, log


def save_deto(out_dir: str | Path, deto: DecoupledTokenizer, log: list[dict] | None = None) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / CHECKPOINT_NAME, {name: p.data for name, p in deto.parameters()})
    sidecar = {
        "layout": {
            "body_joints": deto.layout.body_joints,
            "hand_joints_per_hand": deto.layout.hand_joints_per_hand,
            "expression_dims": deto.layout.expression_dims,
        },
        "part_widths": {part.value: deto.layout.part_width(part) for part in PARTS},
        "downsample": deto.config.downsample,
        "codebook_sizes": list(deto.config.codebook_sizes),
        "code_dim": deto.config.code_dim,
        "hidden_channels": deto.config.hidden_channels,
        "w_emb": deto.config.w_emb,
        "w_com": deto.config.w_com,
    }
    (out_dir / SIDECAR_NAME).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    if log is not None:
        with open(out_dir / "train_log.jsonl", "w") as fh:
            for entry in log:
                fh.write(json.dumps(entry) + "\n")


def load_deto(out_dir: str | Path) -> DecoupledTokenizer:
    out_dir = Path(out_dir)
    sidecar = json.loads((out_dir / SIDECAR_NAME).read_text())
    layout = PartLayout(**sidecar["layout"])
    config = DetoConfig(
        code_dim=sidecar["code_dim"],
        codebook_sizes=tuple(sidecar["codebook_sizes"]),
        hidden_channels=sidecar["hidden_channels"],
        downsample=sidecar["downsample"],
        w_emb=sidecar["w_emb"],
        w_com=sidecar["w_com"],
    )
    deto = DecoupledTokenizer(layout, config, seed=0)
    params = load_checkpoint(out_dir / CHECKPOINT_NAME)
    for name, tensor in deto.parameters():
        if name not in params:
            raise InputError(f"checkpoint missing parameter {name}")
        if params[name].shape != tensor.shape:
            raise InputError(f"checkpoint shape mismatch for {name}")
        tensor.data = params[name].astype(np.float32)
    return deto
