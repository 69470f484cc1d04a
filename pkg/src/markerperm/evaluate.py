"""Frame and trajectory metrics, accuracy-precision curves and JSON reports.

Any object with ``predict_dsm(positions) -> (F, N, N)`` can be evaluated;
:class:`NetworkModel` adapts a trained checkpoint.  Accuracy counts every
marker (occluded ones included) unless stated otherwise; precision counts
only markers that survived confidence thresholding.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import DataError, MarkerFrame
from .permnet import ModelCheckpoint, label_frame, predict_dsm, result_from_dsm
from .preprocess import normalize_frame
from .sinkhorn import dsm_residual
from .synthdata import FrameSet, SequenceFile, occlude_frameset
from .trajlabel import ScoringConfig, attach_labels, relabel_sequence, segment_trajectories

#: reference numbers of the original experiments, reported for context only
REFERENCE = {
    "frame_accuracy_occlusion_trained": [0.9711, 0.9656, 0.9613, 0.9587, 0.9575, 0.949],
    "frame_accuracy_clean_trained": [0.9872, 0.9441, 0.9215, 0.8875, 0.8654, 0.850],
    "trajectory_best_p2_qm0.5": [0.9985, 0.9954, 0.9947, 0.9925, 0.9907, 0.9876],
    "trajectory_baseline": [0.9713, 0.9655, 0.9617, 0.9591, 0.9568, 0.9482],
    "error_free_labelled_fraction": 0.89,
}


class NetworkModel:
    def __init__(self, checkpoint: ModelCheckpoint):
        self.checkpoint = checkpoint

    @property
    def train_subjects(self) -> set:
        return set(self.checkpoint.training_meta.get("train_subjects", []))

    def predict_dsm(self, positions) -> np.ndarray:
        positions = np.asarray(positions)
        return predict_dsm(positions.reshape(len(positions), -1), self.checkpoint.weights,
                           self.checkpoint.config, self.checkpoint.sinkhorn)


def as_model(model):
    return NetworkModel(model) if isinstance(model, ModelCheckpoint) else model


def _check_subjects(model, subjects) -> None:
    seen = set(getattr(model, "train_subjects", set()) or set())
    overlap = seen & (set(map(str, subjects)) - {""})
    if overlap:
        raise DataError(f"test subjects were used for training: {sorted(overlap)}")


def decode_all(dsms) -> tuple[np.ndarray, np.ndarray]:
    """Labels and normalized confidences for a stack of DSMs."""
    labels, conf = [], []
    for d in dsms:
        r = result_from_dsm(d)
        labels.append(r.labels)
        conf.append(r.confidences)
    return np.array(labels), np.array(conf)


def eval_frames(model, frames: FrameSet, occlusion_counts=range(6),
                rng: np.random.Generator | None = None) -> dict:
    """Accuracy per number of occluded markers (placeholder occlusion).

    ``frames`` are normalized, shuffled, unoccluded test frames.  For count
    ``k`` every frame gets exactly ``k`` markers occluded.
    """
    model = as_model(model)
    _check_subjects(model, frames.subjects)
    rng = rng or np.random.default_rng(0)
    out = {}
    for k in occlusion_counts:
        fs = _occlude_exactly(frames, k, rng)
        labels, _ = decode_all(model.predict_dsm(fs.positions))
        out[int(k)] = float((labels == fs.targets).mean())
    return out


def _occlude_exactly(fs: FrameSet, k: int, rng) -> FrameSet:
    if k == 0:
        return fs
    pos = fs.positions.copy()
    occ = fs.occluded.copy()
    pick = np.argsort(rng.random((len(fs), fs.n_markers)), axis=1)[:, :k]
    rows = np.arange(len(fs))[:, None]
    pos[rows, pick] = 0.5
    occ[rows, pick] = True
    return FrameSet(pos, occ, fs.targets, fs.subjects)


def accuracy_precision_curve(model, frames: FrameSet, thresholds) -> list[dict]:
    """Accuracy, precision and labelled fraction per confidence threshold.

    Precision of an empty labelling is reported as 1.0 (no wrong labels).
    """
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if (np.diff(thresholds) < 0).any():
        raise ValueError("thresholds must be sorted ascending")
    model = as_model(model)
    labels, conf = decode_all(model.predict_dsm(frames.positions))
    return curve_from_predictions(labels, conf, frames.targets, thresholds)


def curve_from_predictions(labels, conf, targets, thresholds) -> list[dict]:
    correct = labels == targets
    total = correct.size
    out = []
    for th in thresholds:
        kept = conf >= th
        n_kept = int(kept.sum())
        n_ok = int((correct & kept).sum())
        out.append({"threshold": float(th),
                    "labelled_fraction": n_kept / total,
                    "accuracy": n_ok / total,
                    "precision": n_ok / n_kept if n_kept else 1.0})
    return out


def best_error_free_fraction(curve: list[dict]) -> float:
    """Largest labelled fraction among thresholds with perfect precision."""
    fr = [c["labelled_fraction"] for c in curve if c["precision"] == 1.0]
    return max(fr) if fr else 0.0


def label_sequence(model, seq: SequenceFile, rng: np.random.Generator):
    """Per-frame labelling of a gapped sequence as a capture system would see it.

    Each frame's visible markers arrive in random order; occluded ones are
    fed as placeholders.  Returns per-row ``(labels, confidences)`` arrays of
    shape ``(T, N)`` in the sequence's own row order.
    """
    model = as_model(model)
    n_t, n = seq.n_frames, seq.n_markers
    pos = np.empty((n_t, n, 3))
    perms = np.empty((n_t, n), dtype=np.int64)
    for t, frame in enumerate(seq.frames()):
        p = rng.permutation(n)
        shuffled = MarkerFrame(frame.positions[p], frame.occluded[p], t)
        pos[t] = normalize_frame(shuffled)[0].positions
        perms[t] = p
    labels_s, conf_s = decode_all(model.predict_dsm(pos))
    labels = np.empty_like(labels_s)
    conf = np.empty_like(conf_s)
    rows = np.arange(n_t)[:, None]
    labels[rows, perms] = labels_s
    conf[rows, perms] = conf_s
    return labels, conf


class _RowResult:
    __slots__ = ("labels", "confidences")

    def __init__(self, labels, confidences):
        self.labels = labels
        self.confidences = confidences


def eval_trajectories(model, sequences, scoring_configs, rng: np.random.Generator | None = None) -> dict:
    """Marker-frame accuracy before and after trajectory relabelling.

    Accuracy is measured over visible samples, the ones that belong to a
    trajectory.  Returns ``{"baseline": acc, "configs": {"p=..,q=..": acc},
    "collisions": {...}}``.
    """
    model = as_model(model)
    rng = rng or np.random.default_rng(0)
    sequences = list(sequences)
    _check_subjects(model, [s.subject for s in sequences])
    base_ok = base_n = 0
    ok = {c: 0 for c in scoring_configs}
    collisions = {c: 0 for c in scoring_configs}
    for seq in sequences:
        labels, conf = label_sequence(model, seq, rng)
        visible = ~seq.occluded
        truth = np.broadcast_to(seq.labels, labels.shape)
        base_ok += int(((labels == truth) & visible).sum())
        base_n += int(visible.sum())
        trajs = segment_trajectories(seq.frames())
        attach_labels(trajs, [_RowResult(labels[t], conf[t]) for t in range(seq.n_frames)])
        for c in scoring_configs:
            relab, coll = relabel_sequence(trajs, seq.n_frames, seq.n_markers, c)
            ok[c] += int(((relab == truth) & visible).sum())
            collisions[c] += coll
    return {
        "baseline": base_ok / base_n if base_n else 1.0,
        "configs": {config_key(c): ok[c] / base_n if base_n else 1.0 for c in scoring_configs},
        "collisions": {config_key(c): collisions[c] for c in scoring_configs},
        "samples": base_n,
    }


def config_key(c: ScoringConfig) -> str:
    return f"p={c.p:g},q={c.q:g}"


TABLE_CONFIGS = (ScoringConfig(0, 0), ScoringConfig(1, 0), ScoringConfig(1, -1), ScoringConfig(2, -0.5))


def measure_throughput(checkpoint: ModelCheckpoint, frames, repeat: int = 1) -> dict:
    """Single-frame ``label_frame`` timing over ``frames`` (MarkerFrame list)."""
    frames = list(frames)
    label_frame(frames[0], checkpoint)  # warm the cached inference weights
    times = []
    for _ in range(repeat):
        for f in frames:
            t0 = time.perf_counter()
            label_frame(f, checkpoint)
            times.append(time.perf_counter() - t0)
    times = np.array(times)
    return {"frames": int(len(times)), "mean_ms": float(times.mean() * 1e3),
            "p95_ms": float(np.percentile(times, 95) * 1e3),
            "frames_per_second": float(1.0 / times.mean())}


@dataclass
class EvalReport:
    frame_accuracy: dict = field(default_factory=dict)
    trajectory_accuracy: dict = field(default_factory=dict)
    curve: list = field(default_factory=list)
    dsm_residual: dict = field(default_factory=dict)
    label_collisions: int = 0
    runtime: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    reference: dict = field(default_factory=lambda: dict(REFERENCE))
    notes: dict = field(default_factory=lambda: {
        "frame_accuracy_denominator": "all markers, occluded included",
        "trajectory_accuracy_denominator": "visible marker-frame samples",
    })

    def to_json(self) -> str:
        d = asdict(self)
        d["frame_accuracy"] = {str(k): v for k, v in d["frame_accuracy"].items()}
        return json.dumps(d, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(**json.loads(text))


def residual_stats(dsms) -> dict:
    r = np.atleast_1d(dsm_residual(np.asarray(dsms)))
    return {"max": float(r.max()), "mean": float(r.mean()), "count": int(r.size)}
