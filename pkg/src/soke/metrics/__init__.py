"""DTW joint-position metrics, Procrustes alignment, and eval reports."""

from .dtw import DtwResult, dtw, dtw_brute_force
from .evaluate import (
    EvalReport,
    METRIC_CONVENTIONS,
    SampleEval,
    dtw_joint_metrics,
    evaluate_split,
    frame_jpe,
    frame_pa_jpe,
    load_report,
    max_workers,
    reconstruction_pa_mpjpe,
    save_report,
)
from .procrustes import SimilarityTransform, aligned_residual, procrustes_align

__all__ = [
    "DtwResult",
    "EvalReport",
    "METRIC_CONVENTIONS",
    "SampleEval",
    "SimilarityTransform",
    "aligned_residual",
    "dtw",
    "dtw_brute_force",
    "dtw_joint_metrics",
    "evaluate_split",
    "frame_jpe",
    "frame_pa_jpe",
    "load_report",
    "max_workers",
    "procrustes_align",
    "reconstruction_pa_mpjpe",
    "save_report",
]
