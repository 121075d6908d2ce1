"""Similarity-transform Procrustes alignment (rotation + uniform scale +
translation, reflections disallowed)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateAlignmentError


@dataclass(frozen=True)
class SimilarityTransform:
    rotation: np.ndarray  # 3x3, det +1
    scale: float
    translation: np.ndarray  # (3,)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * points @ self.rotation.T + self.translation


def procrustes_align(A: np.ndarray, B: np.ndarray) -> tuple[np.ndarray, SimilarityTransform]:
    """Least-squares s*R*A + t onto B over rotations (det +1), scale > 0,
    and translation.

    Returns (aligned A, transform). Raises DegenerateAlignmentError for
    fewer than 3 points or a collinear point set.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape or A.ndim != 2 or A.shape[1] != 3:
        raise DegenerateAlignmentError(f"point sets must both be N x 3, got {A.shape} vs {B.shape}")
    n = A.shape[0]
    if n < 3:
        raise DegenerateAlignmentError("need at least 3 points")

    mu_a = A.mean(axis=0)
    mu_b = B.mean(axis=0)
    A0 = A - mu_a
    B0 = B - mu_b
    var_a = (A0 * A0).sum() / n
    if var_a < 1e-18:
        raise DegenerateAlignmentError("source points are coincident")

    cov = B0.T @ A0 / n
    U, S, Vt = np.linalg.svd(cov)
    if S[1] < 1e-12 * max(S[0], 1e-30):
        raise DegenerateAlignmentError("points are collinear; rotation is underdetermined")
    sign = np.sign(np.linalg.det(U @ Vt))
    D = np.diag([1.0, 1.0, sign])
    R = U @ D @ Vt
    scale = float((S * np.diag(D)).sum() / var_a)
    if scale <= 0:
        raise DegenerateAlignmentError("non-positive optimal scale")
    t = mu_b - scale * R @ mu_a
    transform = SimilarityTransform(rotation=R, scale=scale, translation=t)
    return transform.apply(A), transform


def aligned_residual(A: np.ndarray, B: np.ndarray) -> float:
    """Mean per-point Euclidean error after Procrustes alignment of A to B."""
    aligned, _ = procrustes_align(A, B)
    return float(np.linalg.norm(aligned - np.asarray(B, dtype=np.float64), axis=1).mean())
