"""Joint-position metrics and split-level evaluation reports.

DTW metrics run one alignment per cost family (raw / Procrustes-aligned);
the DP cost is the mean error over body+hand joints jointly, and per-subset
numbers are read off along the chosen path. PA alignment is solved per frame
pair on the union joint set (config tag `pa_scope = per_frame_pair_union`).
Reported DTW values are path-length-normalized (`dtw_normalization = path`).
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..errors import InputError
from ..motion import (
    KinematicChain,
    MotionSequence,
    body_joint_indices,
    forward_kinematics_sequence,
    hand_joint_indices,
)
from .dtw import dtw
from .procrustes import procrustes_align

REPORT_SCHEMA_VERSION = 1
METRIC_CONVENTIONS = {"dtw_normalization": "path", "pa_scope": "per_frame_pair_union", "units": "mm"}


def frame_jpe(gen_joints: np.ndarray, ref_joints: np.ndarray) -> float:
    """Mean Euclidean distance over corresponding joints of one frame pair."""
    gen_joints = np.asarray(gen_joints, dtype=np.float64)
    ref_joints = np.asarray(ref_joints, dtype=np.float64)
    if gen_joints.shape != ref_joints.shape:
        raise InputError(f"joint sets differ: {gen_joints.shape} vs {ref_joints.shape}")
    return float(np.linalg.norm(gen_joints - ref_joints, axis=-1).mean())


def frame_pa_jpe(gen_joints: np.ndarray, ref_joints: np.ndarray) -> float:
    """frame_jpe after Procrustes-aligning the generated joints to the reference."""
    aligned, _ = procrustes_align(gen_joints, ref_joints)
    return frame_jpe(aligned, ref_joints)


@dataclass(frozen=True)
class DtwJpeSummary:
    jpe_body: float
    jpe_hand: float
    pa_jpe_body: float
    pa_jpe_hand: float


def dtw_joint_metrics(
    gen_track: np.ndarray, ref_track: np.ndarray, body_idx: np.ndarray, hand_idx: np.ndarray
) -> DtwJpeSummary:
    """DTW-JPE and DTW-PA-JPE for body and hand subsets of paired joint tracks."""
    raw = dtw(gen_track, ref_track, frame_jpe)
    raw_body, raw_hand = _path_subset_means(gen_track, ref_track, raw.path, body_idx, hand_idx, aligned=False)
    pa = dtw(gen_track, ref_track, frame_pa_jpe)
    pa_body, pa_hand = _path_subset_means(gen_track, ref_track, pa.path, body_idx, hand_idx, aligned=True)
    return DtwJpeSummary(jpe_body=raw_body, jpe_hand=raw_hand, pa_jpe_body=pa_body, pa_jpe_hand=pa_hand)


def _path_subset_means(gen_track, ref_track, path, body_idx, hand_idx, aligned: bool):
    body_sum = hand_sum = 0.0
    for i, j in path:
        gen_frame = gen_track[i]
        if aligned:
            gen_frame, _ = procrustes_align(gen_frame, ref_track[j])
        err = np.linalg.norm(gen_frame - ref_track[j], axis=-1)
        body_sum += err[body_idx].mean()
        hand_sum += err[hand_idx].mean()
    return body_sum / len(path), hand_sum / len(path)


def reconstruction_pa_mpjpe(
    gen_seq: MotionSequence, ref_seq: MotionSequence, chain: KinematicChain
) -> float:
    """Per-frame Procrustes-aligned mean per-joint position error; sequences
    must be frame-aligned (same T)."""
    if gen_seq.num_frames != ref_seq.num_frames:
        raise InputError("reconstruction PA-MPJPE requires equal frame counts")
    gen_joints = forward_kinematics_sequence(gen_seq.frames, chain)
    ref_joints = forward_kinematics_sequence(ref_seq.frames, chain)
    return float(np.mean([frame_pa_jpe(g, r) for g, r in zip(gen_joints, ref_joints)]))


@dataclass(frozen=True)
class SampleEval:
    index: int
    text: str
    lang: str
    gen_frames: int
    ref_frames: int
    dtw_jpe_body: float
    dtw_jpe_hand: float
    dtw_pa_jpe_body: float
    dtw_pa_jpe_hand: float
    step_count: int
    wall_ms: float


@dataclass(frozen=True)
class EvalReport:
    split: str
    conventions: dict
    samples: list
    aggregates: dict
    timing: dict

    def to_json(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "split": self.split,
            "conventions": dict(self.conventions),
            "samples": [asdict(s) for s in self.samples],
            "aggregates": dict(self.aggregates),
            "timing": dict(self.timing),
        }


def max_workers() -> int:
    value = os.environ.get("SOKE_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


GenerateFn = Callable[[str, str], tuple[MotionSequence, int]]


def evaluate_split(
    generate: GenerateFn,
    dataset: list[tuple[str, MotionSequence]],
    chain: KinematicChain,
    split: str = "test",
) -> EvalReport:
    """Run `generate` over a dataset split and compute DTW joint metrics.

    `generate(text, lang)` returns (motion, decoder step count). Sample
    metrics may be computed on SOKE_THREADS workers; aggregation always runs
    in dataset order so aggregates are order-independent and deterministic.
    """
    body_idx = body_joint_indices(chain)
    hand_idx = hand_joint_indices(chain)

    def one(index_pair):
        index, (text, ref) = index_pair
        start = time.perf_counter()
        gen_seq, steps = generate(text, ref.language_tag)
        wall_ms = (time.perf_counter() - start) * 1e3
        gen_track = forward_kinematics_sequence(gen_seq.frames, chain)
        ref_track = forward_kinematics_sequence(ref.frames, chain)
        summary = dtw_joint_metrics(gen_track, ref_track, body_idx, hand_idx)
        return SampleEval(
            index=index,
            text=text,
            lang=ref.language_tag,
            gen_frames=gen_seq.num_frames,
            ref_frames=ref.num_frames,
            dtw_jpe_body=summary.jpe_body,
            dtw_jpe_hand=summary.jpe_hand,
            dtw_pa_jpe_body=summary.pa_jpe_body,
            dtw_pa_jpe_hand=summary.pa_jpe_hand,
            step_count=steps,
            wall_ms=wall_ms,
        )

    workers = max_workers()
    items = list(enumerate(dataset))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(one, items))
    else:
        samples = [one(item) for item in items]
    samples.sort(key=lambda s: s.index)

    aggregates = _aggregate(samples)
    timing = {
        "mean_wall_ms": float(np.mean([s.wall_ms for s in samples])) if samples else 0.0,
    }
    return EvalReport(
        split=split,
        conventions=METRIC_CONVENTIONS,
        samples=samples,
        aggregates=aggregates,
        timing=timing,
    )


def _aggregate(samples: list) -> dict:
    if not samples:
        return {}

    def mean(attr: str) -> float:
        return float(np.mean([getattr(s, attr) for s in samples]))

    pa_body = mean("dtw_pa_jpe_body")
    pa_hand = mean("dtw_pa_jpe_hand")
    return {
        "num_samples": len(samples),
        "dtw_jpe_body": mean("dtw_jpe_body"),
        "dtw_jpe_hand": mean("dtw_jpe_hand"),
        "dtw_pa_jpe_body": pa_body,
        "dtw_pa_jpe_hand": pa_hand,
        "dtw_pa_jpe_avg": (pa_body + pa_hand) / 2.0,
        "mean_step_count": mean("step_count"),
    }


def save_report(path: str | Path, report: EvalReport) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_report(path: str | Path) -> dict:
    with open(path) as fh:
        return json.load(fh)
