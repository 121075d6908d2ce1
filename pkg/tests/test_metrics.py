import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soke.errors import DegenerateAlignmentError, InputError
from soke.metrics import (
    aligned_residual,
    dtw,
    dtw_brute_force,
    dtw_joint_metrics,
    evaluate_split,
    frame_jpe,
    frame_pa_jpe,
    procrustes_align,
    reconstruction_pa_mpjpe,
)
from soke.motion import (
    MotionSequence,
    SynthConfig,
    build_sign_chain,
    body_joint_indices,
    forward_kinematics_sequence,
    hand_joint_indices,
    synthesize_dataset,
)


def random_rotation(rng):
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


class TestProcrustes:
    def test_self_alignment_is_identity(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(8, 3))
        aligned, tf = procrustes_align(A, A)
        assert np.allclose(aligned, A, atol=1e-10)
        assert np.allclose(tf.rotation, np.eye(3), atol=1e-10)
        assert tf.scale == pytest.approx(1.0)
        assert np.allclose(tf.translation, 0.0, atol=1e-10)

    @pytest.mark.parametrize("seed", range(8))
    def test_similarity_transform_recovery(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(10, 3))
        R = random_rotation(rng)
        t = rng.normal(size=3)
        B = 2.0 * A @ R.T + t
        aligned, tf = procrustes_align(A, B)
        assert np.linalg.norm(aligned - B, axis=1).max() < 1e-8
        assert tf.scale == pytest.approx(2.0)
        assert np.linalg.det(tf.rotation) == pytest.approx(1.0)

    def test_reflection_is_disallowed(self):
        rng = np.random.default_rng(3)
        A = rng.normal(size=(12, 3))
        B = A.copy()
        B[:, 0] = -B[:, 0]  # mirror; only a reflection matches exactly
        aligned, tf = procrustes_align(A, B)
        assert np.linalg.det(tf.rotation) == pytest.approx(1.0)
        assert np.linalg.norm(aligned - B, axis=1).mean() > 1e-3

    def test_residual_invariant_under_source_similarity(self):
        rng = np.random.default_rng(4)
        A = rng.normal(size=(9, 3))
        B = rng.normal(size=(9, 3))
        base = aligned_residual(A, B)
        R = random_rotation(rng)
        A2 = 0.7 * A @ R.T + rng.normal(size=3)
        assert aligned_residual(A2, B) == pytest.approx(base, abs=1e-8)

    def test_collinear_points_rejected(self):
        A = np.outer(np.arange(5.0), np.array([1.0, 2.0, 3.0]))
        B = np.random.default_rng(0).normal(size=(5, 3))
        with pytest.raises(DegenerateAlignmentError):
            procrustes_align(A, B)

    def test_too_few_points_rejected(self):
        with pytest.raises(DegenerateAlignmentError):
            procrustes_align(np.zeros((2, 3)), np.zeros((2, 3)))


class TestFrameJpe:
    def test_identical_frames(self):
        J = np.random.default_rng(0).normal(size=(5, 3))
        assert frame_jpe(J, J) == 0.0

    def test_pythagorean_offset(self):
        a = np.zeros((1, 3))
        b = np.array([[3.0, 4.0, 0.0]])
        assert frame_jpe(a, b) == pytest.approx(5.0)

    def test_pa_variant_removes_similarity(self):
        rng = np.random.default_rng(1)
        J = rng.normal(size=(8, 3))
        moved = 1.5 * J @ random_rotation(rng).T + rng.normal(size=3)
        assert frame_pa_jpe(moved, J) < 1e-8

    def test_subset_mismatch(self):
        with pytest.raises(InputError):
            frame_jpe(np.zeros((4, 3)), np.zeros((5, 3)))


def abs_cost(a, b):
    return abs(float(a) - float(b))


class TestDtw:
    def test_identical_sequences_cost_zero(self):
        x = [0.0, 1.0, 2.0, 1.0]
        result = dtw(x, x, abs_cost)
        assert result.total == 0.0
        assert result.path == tuple((i, i) for i in range(4))

    def test_worked_example(self):
        # A=[0,1,2], B=[0,2]: optimal total 1 over path length 3
        result = dtw([0.0, 1.0, 2.0], [0.0, 2.0], abs_cost)
        assert result.total == pytest.approx(1.0)
        assert len(result.path) == 3
        assert result.normalized == pytest.approx(1.0 / 3.0)

    def test_empty_sequence_rejected(self):
        with pytest.raises(InputError):
            dtw([], [1.0], abs_cost)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_brute_force_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n, m = rng.integers(1, 7, size=2)
        a = rng.normal(size=n)
        b = rng.normal(size=m)
        assert dtw(a, b, abs_cost).total == pytest.approx(dtw_brute_force(a, b, abs_cost))

    @given(
        st.lists(st.integers(min_value=-4, max_value=4), min_size=1, max_size=6),
        st.lists(st.integers(min_value=-4, max_value=4), min_size=1, max_size=6),
    )
    @settings(max_examples=120, deadline=None)
    def test_oracle_property(self, a, b):
        assert dtw(a, b, abs_cost).total == pytest.approx(dtw_brute_force(a, b, abs_cost))

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=5)
        b = rng.normal(size=7)
        assert dtw(a, b, abs_cost).total == pytest.approx(dtw(b, a, abs_cost).total)


@pytest.fixture(scope="module")
def chain():
    return build_sign_chain()


@pytest.fixture(scope="module")
def toy_pairs():
    cfg = SynthConfig(lexicon_size=6, num_sentences=4, sentence_words=(1, 2))
    return synthesize_dataset(cfg, seed=5)


class TestDtwJointMetrics:
    def test_translated_track_pa_zero_raw_positive(self, chain, toy_pairs):
        _, seq = toy_pairs[0]
        track = forward_kinematics_sequence(seq.frames, chain)
        shifted = track + np.array([500.0, 0.0, 0.0])
        body_idx, hand_idx = body_joint_indices(chain), hand_joint_indices(chain)
        summary = dtw_joint_metrics(shifted, track, body_idx, hand_idx)
        assert summary.pa_jpe_body < 1e-8
        assert summary.pa_jpe_hand < 1e-8
        # diagonal alignment: raw error equals the constant per-frame offset
        assert summary.jpe_body == pytest.approx(500.0, rel=1e-9)
        assert summary.jpe_hand == pytest.approx(500.0, rel=1e-9)

    def test_identical_tracks_are_zero(self, chain, toy_pairs):
        _, seq = toy_pairs[1]
        track = forward_kinematics_sequence(seq.frames, chain)
        summary = dtw_joint_metrics(track, track, body_joint_indices(chain), hand_joint_indices(chain))
        assert summary.jpe_body == 0.0
        assert summary.pa_jpe_hand < 1e-9  # SVD noise only


class TestEvaluateSplit:
    def test_oracle_pipeline_scores_zero(self, chain, toy_pairs):
        lookup = {text: seq for text, seq in toy_pairs}

        def oracle(text, lang):
            return lookup[text], 3 * len(lookup[text].frames)

        report = evaluate_split(oracle, toy_pairs, chain, split="train")
        agg = report.aggregates
        assert agg["dtw_jpe_body"] == 0.0
        assert agg["dtw_pa_jpe_hand"] < 1e-9  # SVD noise only
        assert agg["num_samples"] == len(toy_pairs)

    def test_aggregates_match_sample_recomputation(self, chain, toy_pairs):
        rng = np.random.default_rng(0)
        lookup = {text: seq for text, seq in toy_pairs}

        def noisy(text, lang):
            ref = lookup[text]
            frames = ref.frames + rng.normal(0, 0.05, size=ref.frames.shape).astype(np.float32)
            return MotionSequence(frames, fps=ref.fps, layout=ref.layout,
                                  language_tag=ref.language_tag), 7

        report = evaluate_split(noisy, toy_pairs, chain)
        recomputed = float(np.mean([s.dtw_pa_jpe_body for s in report.samples]))
        assert report.aggregates["dtw_pa_jpe_body"] == pytest.approx(recomputed)
        assert report.aggregates["mean_step_count"] == pytest.approx(7.0)

    def test_reconstruction_pa_mpjpe_zero_for_identity(self, chain, toy_pairs):
        _, seq = toy_pairs[2]
        assert reconstruction_pa_mpjpe(seq, seq, chain) < 1e-9

    def test_reconstruction_requires_equal_lengths(self, chain, toy_pairs):
        _, seq = toy_pairs[2]
        shorter = MotionSequence(seq.frames[:-1], fps=seq.fps, layout=seq.layout)
        with pytest.raises(InputError):
            reconstruction_pa_mpjpe(shorter, seq, chain)
