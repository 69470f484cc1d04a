import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from markerperm.core import DataError, LabelledFrameResult, MarkerFrame, Permutation
from markerperm.trajlabel import (ScoringConfig, Trajectory, attach_labels, confidence,
                                  confidences, normalize_confidence, relabel_sequence,
                                  relabel_trajectory, score_label, segment_trajectories,
                                  threshold_filter)


def column_matrix(col):
    d = np.zeros((len(col), 2))
    d[:, 0] = col
    d[:, 1] = col[::-1]
    return d


def traj_with(labels_conf):
    t = Trajectory(0, 0, len(labels_conf) - 1, np.zeros((len(labels_conf), 3)),
                   rows=np.zeros(len(labels_conf), dtype=np.int64))
    t.per_frame_labels = list(labels_conf)
    return t


def frames_with_gaps(n_frames, n_markers, gaps=()):
    out = []
    for t in range(n_frames):
        occ = np.zeros(n_markers, dtype=bool)
        for m, a, b in gaps:
            if a <= t <= b:
                occ[m] = True
        out.append(MarkerFrame(np.full((n_markers, 3), float(t)), occ, t))
    return out


# -- confidence -----------------------------------------------------------------

def test_confidence_examples():
    d = column_matrix([0.7, 0.2, 0.1])
    assert confidence(d, 0, 0) == pytest.approx(0.5, abs=1e-15)
    assert confidence(d, 1, 0) == pytest.approx(-0.5, abs=1e-15)
    onehot = np.eye(3)
    assert confidence(onehot, 1, 1) == 1.0


def test_confidence_errors():
    with pytest.raises(ValueError):
        confidence(np.ones((1, 1)), 0, 0)
    with pytest.raises(IndexError):
        confidence(np.eye(3), 3, 0)


def test_vectorized_matches_scalar(rng):
    for _ in range(50):
        d = rng.random((6, 6))
        labels = rng.permutation(6)
        expected = [confidence(d, labels[j], j) for j in range(6)]
        np.testing.assert_allclose(confidences(d, labels), expected, rtol=0, atol=0)


def test_vectorized_ties():
    d = np.array([[0.4, 0.1], [0.4, 0.9]])
    np.testing.assert_array_equal(confidences(d, [0, 1]), [0.0, 0.8])


def test_normalize_confidence():
    assert normalize_confidence(0.5) == 0.75
    assert normalize_confidence(-0.5) == 0.25
    assert normalize_confidence(1.0) == 1.0
    assert normalize_confidence(-1.0) == 0.0
    with pytest.raises(ValueError):
        normalize_confidence(1.5)
    with pytest.raises(ValueError):
        normalize_confidence(float("nan"))


# -- threshold filter -------------------------------------------------------------

def make_result(conf):
    n = len(conf)
    return LabelledFrameResult(Permutation.identity(n), np.eye(n), np.asarray(conf, float))


def test_threshold_filter():
    r = make_result([0.2, 1.0, 0.6, 0.0])
    np.testing.assert_array_equal(threshold_filter(r, 0.0), [0, 1, 2, 3])
    np.testing.assert_array_equal(threshold_filter(r, 1.0), [-1, 1, -1, -1])
    fractions = [(threshold_filter(r, th) >= 0).mean() for th in np.linspace(0, 1, 101)]
    assert all(b <= a for a, b in zip(fractions, fractions[1:]))


# -- segmentation -------------------------------------------------------------------

def test_no_occlusion_one_trajectory_per_marker():
    trajs = segment_trajectories(frames_with_gaps(100, 5))
    assert len(trajs) == 5
    assert all(len(t) == 100 and t.start_frame == 0 for t in trajs)


def test_interior_gap_splits():
    trajs = segment_trajectories(frames_with_gaps(100, 4, [(2, 40, 49)]))
    runs = [(t.start_frame, t.end_frame) for t in trajs if t.source_id == 2]
    assert runs == [(0, 39), (50, 99)]
    assert len(trajs) == 5


def test_gap_at_first_frame():
    trajs = segment_trajectories(frames_with_gaps(30, 3, [(1, 0, 0)]))
    runs = [(t.start_frame, t.end_frame) for t in trajs if t.source_id == 1]
    assert runs == [(1, 29)]


def test_track_ids_follow_rows():
    frames = frames_with_gaps(3, 3)
    ids = np.array([[0, 1, 2], [2, 0, 1], [1, 2, 0]])
    trajs = segment_trajectories(frames, ids)
    by_sid = {t.source_id: t for t in trajs}
    np.testing.assert_array_equal(by_sid[0].rows, [0, 1, 2])
    np.testing.assert_array_equal(by_sid[2].rows, [2, 0, 1])


def test_duplicate_track_ids_rejected():
    frames = frames_with_gaps(2, 3)
    with pytest.raises(DataError):
        segment_trajectories(frames, np.array([[0, 0, 1], [0, 1, 2]]))


# -- scoring ----------------------------------------------------------------------

def test_voting_score():
    t = traj_with([(4, 0.3)] * 5)
    assert score_label(t, 4, ScoringConfig(0, 0)) == 5.0


def test_p2_qm05_worked_example():
    t = traj_with([(1, 0.9), (1, 0.8)])
    s = score_label(t, 1, ScoringConfig(2, -0.5))
    # exact oracle: 2**(-1/2) * sqrt(0.81 + 0.64) = sqrt(1.45 / 2) = sqrt(0.725)
    exact = math.sqrt(float(Fraction(145, 100) / 2))
    assert abs(s - exact) <= 1e-12
    assert s == pytest.approx(0.8514, abs=1e-4)


def test_p1_qm1_is_mean():
    t = traj_with([(0, 0.6), (0, 0.8)])
    assert abs(score_label(t, 0, ScoringConfig(1, -1)) - 0.7) <= 1e-12


def test_score_unassigned_label_errors():
    with pytest.raises(ValueError):
        score_label(traj_with([(0, 0.5)]), 3)


def test_relabel_single_candidate():
    t = traj_with([(7, c) for c in (0.1, 0.5, 0.9)])
    for cfg in (ScoringConfig(0, 0), ScoringConfig(1, 0), ScoringConfig(1, -1), ScoringConfig(2, -0.5)):
        assert relabel_trajectory(t, cfg)[0] == 7


def test_count_versus_confidence():
    t = traj_with([(0, 0.55)] * 3 + [(1, 0.99)])
    lab, s = relabel_trajectory(t, ScoringConfig(1, 0))
    assert lab == 0 and abs(s - 1.65) <= 1e-12
    lab, s = relabel_trajectory(t, ScoringConfig(1, -1))
    assert lab == 1 and abs(s - 0.99) <= 1e-12


def test_tie_goes_to_smaller_label():
    t = traj_with([(5, 0.5), (2, 0.5)])
    assert relabel_trajectory(t, ScoringConfig(0, 0))[0] == 2


def test_empty_trajectory_errors():
    with pytest.raises(ValueError):
        relabel_trajectory(traj_with([]))


def test_majority_voting_recovers_label():
    # 60% of frames correct: voting picks the majority
    t = traj_with([(3, 0.5)] * 6 + [(1, 0.9), (2, 0.9), (4, 0.9), (1, 0.9)])
    assert relabel_trajectory(t, ScoringConfig(0, 0))[0] == 3


def test_relabel_sequence_and_collisions():
    frames = frames_with_gaps(4, 2, [(1, 2, 2)])
    trajs = segment_trajectories(frames)
    results = [make_result([0.9, 0.9]) for _ in range(4)]
    # marker 1 is labelled 0 in its second run, colliding with marker 0
    results[3] = LabelledFrameResult(Permutation([1, 0]), np.eye(2), np.array([0.2, 0.9]))
    attach_labels(trajs, results)
    labels, collisions = relabel_sequence(trajs, 4, 2)
    np.testing.assert_array_equal(labels[:, 0], [0, 0, 0, 0])
    np.testing.assert_array_equal(labels[:, 1], [1, 1, -1, 0])
    assert collisions == 1


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.floats(0.01, 1.0)), min_size=1, max_size=30),
       st.floats(0.05, 1.0), st.sampled_from([(1, 0), (1, -1), (2, -0.5), (3, 0.5)]))
def test_property_scaling_keeps_winner(pairs, k, pq):
    cfg = ScoringConfig(*pq)
    a = relabel_trajectory(traj_with(pairs), cfg)
    b = relabel_trajectory(traj_with([(lab, k * c) for lab, c in pairs]), cfg)
    # homogeneity: S(k c) = k S(c)
    assert b[1] == pytest.approx(k * a[1], rel=1e-9)
    scores = sorted({score_label(traj_with(pairs), lab, cfg) for lab, _ in pairs}, reverse=True)
    if len(scores) == 1 or scores[0] - scores[1] > 1e-9 * scores[0]:
        assert a[0] == b[0]
