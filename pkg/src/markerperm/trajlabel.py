"""Confidence scores and trajectory-level relabelling.

A trajectory is a maximal gap-free run of one tracked marker.  Each frame
of the run carries the label predicted for that marker and a normalized
confidence; the trajectory is relabelled with the candidate label of
highest score ``|T_i|**q * (sum_t c_t**p) ** (1/p)``.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .core import DataError, LabelledFrameResult, MarkerFrame


@dataclass(frozen=True)
class ScoringConfig:
    p: float = 2.0
    q: float = -0.5

    def __post_init__(self):
        if not (math.isfinite(self.p) and math.isfinite(self.q)):
            raise ValueError("p and q must be finite")


@dataclass
class Trajectory:
    track_id: int
    start_frame: int
    end_frame: int
    positions: np.ndarray
    # identity of the tracked marker as given by the capture system
    source_id: int = -1
    # row of the marker inside each frame of the run
    rows: np.ndarray = None
    per_frame_labels: list = field(default_factory=list)

    def __len__(self):
        return self.end_frame - self.start_frame + 1

    @property
    def frames(self) -> range:
        return range(self.start_frame, self.end_frame + 1)


# -- confidences -------------------------------------------------------------

def confidence(d, label_i: int, marker_j: int) -> float:
    """``D[i, j]`` minus the largest competing entry in column ``j``."""
    d = np.asarray(d, dtype=np.float64)
    n = d.shape[0]
    if n < 2:
        raise ValueError("confidence needs at least two labels")
    if not (0 <= label_i < n and 0 <= marker_j < d.shape[1]):
        raise IndexError(f"index ({label_i}, {marker_j}) out of range for N={n}")
    col = d[:, marker_j]
    rival = max(np.max(col[:label_i], initial=-np.inf), np.max(col[label_i + 1:], initial=-np.inf))
    return float(col[label_i] - rival)


def confidences(d, labels) -> np.ndarray:
    """Vectorized :func:`confidence` for every marker ``j`` with label ``labels[j]``."""
    d = np.asarray(d, dtype=np.float64)
    n = d.shape[0]
    if n < 2:
        raise ValueError("confidence needs at least two labels")
    labels = np.asarray(labels)
    cols = np.arange(d.shape[1])
    chosen = d[labels, cols]
    top2 = np.partition(d, n - 2, axis=0)[n - 2:]
    second, first = top2[0], top2[1]
    # when the chosen entry is the (unique or tied) maximum the rival is the runner-up
    rival = np.where(chosen >= first, second, first)
    return chosen - rival


def normalize_confidence(c) -> float | np.ndarray:
    """Map a confidence from [-1, 1] to [0, 1]."""
    arr = np.asarray(c, dtype=np.float64)
    if ((arr < -1.0) | (arr > 1.0) | np.isnan(arr)).any():
        raise ValueError(f"confidence outside [-1, 1]: {c}")
    out = (arr + 1.0) / 2.0
    return float(out) if out.ndim == 0 else out


def threshold_filter(result: LabelledFrameResult, threshold: float) -> np.ndarray:
    """Labels with ``-1`` for markers whose confidence is below ``threshold``."""
    labels = np.array(result.permutation.mapping, dtype=np.int64)
    labels[np.asarray(result.confidences) < threshold] = -1
    return labels


# -- trajectories ------------------------------------------------------------

def segment_trajectories(frames, track_ids=None) -> list[Trajectory]:
    """Split a sequence of frames into maximal gap-free trajectories.

    Row ``k`` of every frame is tracked identity ``k`` unless ``track_ids``
    (shape ``(T, N)``) gives the capture system's identity for each row.
    Occluded rows are gaps.  Trajectories come out sorted by
    ``(start_frame, source_id)``.
    """
    frames = list(frames)
    if not frames:
        return []
    n = frames[0].n_markers
    if track_ids is None:
        ids = np.broadcast_to(np.arange(n), (len(frames), n))
    else:
        ids = np.asarray(track_ids, dtype=np.int64)
        if ids.shape != (len(frames), n):
            raise DataError(f"track_ids shape {ids.shape} != {(len(frames), n)}")

    open_runs: dict[int, dict] = {}
    finished = []

    def close(sid):
        run = open_runs.pop(sid)
        finished.append(run)

    for t, frame in enumerate(frames):
        if frame.n_markers != n:
            raise DataError(f"frame {t} has {frame.n_markers} markers, expected {n}")
        visible = ~frame.occluded
        vis_ids = ids[t][visible]
        if len(np.unique(vis_ids)) != len(vis_ids):
            raise DataError(f"duplicate track id in frame {t}")
        seen = set()
        for row in np.flatnonzero(visible):
            sid = int(ids[t][row])
            seen.add(sid)
            run = open_runs.get(sid)
            if run is None:
                run = open_runs[sid] = {"sid": sid, "start": t, "rows": [], "pos": []}
            run["rows"].append(row)
            run["pos"].append(frame.positions[row])
        for sid in [s for s in open_runs if s not in seen]:
            close(sid)
    for sid in list(open_runs):
        close(sid)

    finished.sort(key=lambda r: (r["start"], r["sid"]))
    return [
        Trajectory(track_id=k, start_frame=r["start"],
                   end_frame=r["start"] + len(r["rows"]) - 1,
                   positions=np.array(r["pos"]), source_id=r["sid"],
                   rows=np.array(r["rows"], dtype=np.int64))
        for k, r in enumerate(finished)
    ]


def attach_labels(trajectories, results) -> None:
    """Fill ``per_frame_labels`` from per-frame labelling results (in place).

    ``results[t]`` labels the rows of frame ``t``.
    """
    for traj in trajectories:
        traj.per_frame_labels = [
            (int(results[t].labels[row]), float(results[t].confidences[row]))
            for t, row in zip(traj.frames, traj.rows)
        ]


def score_label(traj: Trajectory, label_i: int, cfg: ScoringConfig = ScoringConfig()) -> float:
    conf = [c for lab, c in traj.per_frame_labels if lab == label_i]
    return _score(conf, cfg)


def _score(conf, cfg: ScoringConfig) -> float:
    count = len(conf)
    if count == 0:
        raise ValueError("label never assigned within the trajectory")
    if cfg.p == 0:
        norm = float(count)
    else:
        norm = math.fsum(c ** cfg.p for c in conf) ** (1.0 / cfg.p)
    return count ** cfg.q * norm


def relabel_trajectory(traj: Trajectory, cfg: ScoringConfig = ScoringConfig()) -> tuple[int, float]:
    """Winner-takes-all label for the trajectory; ties go to the smaller label."""
    if not traj.per_frame_labels:
        raise ValueError("trajectory has no labelled frames")
    grouped = defaultdict(list)
    for lab, c in traj.per_frame_labels:
        grouped[lab].append(c)
    best_label, best_score = None, -math.inf
    for lab in sorted(grouped):
        s = _score(grouped[lab], cfg)
        if s > best_score:
            best_label, best_score = lab, s
    return best_label, best_score


def relabel_sequence(trajectories, n_frames: int, n_markers: int,
                     cfg: ScoringConfig = ScoringConfig()):
    """Relabel every trajectory and spread the result back over frames.

    Returns ``(labels, collisions)``: ``labels[t, row]`` is the trajectory
    label (``-1`` for gaps) and ``collisions`` counts frames in which two
    trajectories claim the same label.
    """
    labels = np.full((n_frames, n_markers), -1, dtype=np.int64)
    for traj in trajectories:
        lab, _ = relabel_trajectory(traj, cfg)
        labels[np.arange(traj.start_frame, traj.end_frame + 1), traj.rows] = lab
    collisions = 0
    for row in labels:
        assigned = row[row >= 0]
        if len(np.unique(assigned)) != len(assigned):
            collisions += 1
    return labels, collisions
