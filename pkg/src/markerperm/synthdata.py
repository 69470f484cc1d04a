"""Synthetic labelled marker sequences and training augmentations.

Bodies are small skeleton trees posed by closed-form joint-angle curves
(walk, jog, sit, jump) and carried through forward kinematics.  Markers are
rigidly attached to segments, so labels are ground truth by construction.
World frame: z up, y forward, x to the subject's right; lengths in metres,
sequence files in millimetres.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import (OCCLUSION_PLACEHOLDER, DataError, MarkerFrame, Permutation,
                   apply_permutation, compose)
from .preprocess import MIN_VISIBLE
from .tensorio import ContainerError, load_tensors, save_tensors

DEFAULT_FPS = 120
ACTIONS = ("walk", "jog", "sit", "jump")


@dataclass(frozen=True)
class Segment:
    name: str
    parent: str | None
    # joint position in the parent's frame
    attach: tuple
    length: float


# rest skeleton of a ~1.75 m adult; limb bones point along -z, spine along +z
_SEGMENTS = (
    Segment("pelvis", None, (0.0, 0.0, 0.0), 0.10),
    Segment("abdomen", "pelvis", (0.0, 0.0, 0.10), 0.25),
    Segment("thorax", "abdomen", (0.0, 0.0, 0.25), 0.28),
    Segment("head", "thorax", (0.0, 0.0, 0.28), 0.22),
    Segment("r_upperarm", "thorax", (0.19, 0.0, 0.22), 0.29),
    Segment("r_forearm", "r_upperarm", (0.0, 0.0, -0.29), 0.26),
    Segment("r_hand", "r_forearm", (0.0, 0.0, -0.26), 0.08),
    Segment("l_upperarm", "thorax", (-0.19, 0.0, 0.22), 0.29),
    Segment("l_forearm", "l_upperarm", (0.0, 0.0, -0.29), 0.26),
    Segment("l_hand", "l_forearm", (0.0, 0.0, -0.26), 0.08),
    Segment("r_thigh", "pelvis", (0.09, 0.0, 0.0), 0.44),
    Segment("r_shank", "r_thigh", (0.0, 0.0, -0.44), 0.42),
    Segment("r_foot", "r_shank", (0.0, 0.0, -0.42), 0.15),
    Segment("l_thigh", "pelvis", (-0.09, 0.0, 0.0), 0.44),
    Segment("l_shank", "l_thigh", (0.0, 0.0, -0.44), 0.42),
    Segment("l_foot", "l_shank", (0.0, 0.0, -0.42), 0.15),
)
_SEG_INDEX = {s.name: k for k, s in enumerate(_SEGMENTS)}
_PELVIS_HEIGHT = 0.95

# 41-marker layout; the first 20 entries form the reduced layout.  The
# right-side back and head markers sit well off the midline so the layout
# is left/right asymmetric, which keeps the frame orientation stable.
_MARKERS = (
    ("RFHD", "head", (0.09, 0.06, 0.12)),
    ("LBHD", "head", (-0.06, -0.08, 0.10)),
    ("C7", "thorax", (0.0, -0.08, 0.27)),
    ("STRN", "thorax", (0.0, 0.11, 0.06)),
    ("RBAK", "thorax", (0.20, -0.08, 0.10)),
    ("RSHO", "thorax", (0.18, 0.0, 0.26)),
    ("LSHO", "thorax", (-0.18, 0.0, 0.26)),
    ("RELB", "r_upperarm", (0.03, -0.03, -0.29)),
    ("LELB", "l_upperarm", (-0.03, -0.03, -0.29)),
    ("RWRA", "r_forearm", (0.03, 0.02, -0.26)),
    ("LWRA", "l_forearm", (-0.03, 0.02, -0.26)),
    ("RASI", "pelvis", (0.12, 0.10, 0.05)),
    ("LASI", "pelvis", (-0.12, 0.10, 0.05)),
    ("RPSI", "pelvis", (0.16, -0.08, 0.07)),
    ("RKNE", "r_thigh", (0.05, 0.0, -0.44)),
    ("LKNE", "l_thigh", (-0.05, 0.0, -0.44)),
    ("RANK", "r_shank", (0.04, 0.0, -0.42)),
    ("LANK", "l_shank", (-0.04, 0.0, -0.42)),
    ("RTOE", "r_foot", (0.0, 0.14, -0.06)),
    ("LTOE", "l_foot", (0.0, 0.14, -0.06)),
    ("LFHD", "head", (-0.06, 0.09, 0.12)),
    ("RBHD", "head", (0.06, -0.08, 0.10)),
    ("T10", "thorax", (0.0, -0.10, 0.08)),
    ("CLAV", "thorax", (0.0, 0.08, 0.22)),
    ("LPSI", "pelvis", (-0.05, -0.10, 0.07)),
    ("RUPA", "r_upperarm", (0.05, 0.0, -0.15)),
    ("LUPA", "l_upperarm", (-0.05, 0.0, -0.15)),
    ("RFRM", "r_forearm", (0.04, 0.0, -0.12)),
    ("LFRM", "l_forearm", (-0.04, 0.0, -0.12)),
    ("RWRB", "r_forearm", (-0.03, 0.02, -0.26)),
    ("LWRB", "l_forearm", (0.03, 0.02, -0.26)),
    ("RFIN", "r_hand", (0.0, 0.02, -0.08)),
    ("LFIN", "l_hand", (0.0, 0.02, -0.08)),
    ("RTHI", "r_thigh", (0.07, 0.0, -0.22)),
    ("LTHI", "l_thigh", (-0.07, 0.0, -0.22)),
    ("RTIB", "r_shank", (0.05, 0.0, -0.20)),
    ("LTIB", "l_shank", (-0.05, 0.0, -0.20)),
    ("RHEE", "r_foot", (0.0, -0.05, -0.05)),
    ("LHEE", "l_foot", (0.0, -0.05, -0.05)),
    ("RMT5", "r_foot", (0.05, 0.09, -0.07)),
    ("LMT5", "l_foot", (-0.05, 0.09, -0.07)),
)
MAX_MARKERS = len(_MARKERS)


@dataclass(frozen=True)
class MotionParams:
    family: str = "walk"
    # scales every time-varying term, locomotion included
    amplitude: float = 1.0
    # vertical pelvis oscillation frequency in Hz; limbs cycle at half of it
    # for walk/jog, at the full rate for sit/jump
    frequency: float = 2.0
    speed: float = 1.2
    yaw_rate: float = 0.15
    phase: float = 0.0
    heading: float = 0.0
    # small subject-specific posture perturbations (rad)
    wobble: tuple = (0.0, 0.0, 0.0, 0.0)


_FAMILY_DEFAULTS = {
    "walk": dict(frequency=2.0, speed=1.2),
    "jog": dict(frequency=2.8, speed=2.6),
    "sit": dict(frequency=0.25, speed=0.0),
    "jump": dict(frequency=0.8, speed=0.0),
}


@dataclass(frozen=True)
class BodyModel:
    n_markers: int
    segments: tuple
    marker_names: tuple
    marker_segments: np.ndarray
    marker_offsets: np.ndarray
    motion: MotionParams
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_markers <= MAX_MARKERS:
            raise ValueError(f"n_markers must be in 1..{MAX_MARKERS}")
        if len(self.marker_segments) != self.n_markers or len(self.marker_offsets) != self.n_markers:
            raise ValueError("marker tables do not match n_markers")
        if any(s.length <= 0 for s in self.segments):
            raise ValueError("segment lengths must be positive")
        if self.motion.family not in ACTIONS:
            raise ValueError(f"unknown motion family {self.motion.family!r}")

    def with_motion(self, **changes) -> "BodyModel":
        return replace(self, motion=replace(self.motion, **changes))


def sample_body(n_markers: int = MAX_MARKERS, seed: int = 0, action: str = "walk",
                variability: float = 1.0) -> BodyModel:
    """Random subject: proportions, marker placement and motion style.

    ``variability=0`` gives the nominal body.
    """
    if action not in ACTIONS:
        raise ValueError(f"unknown action {action!r}")
    rng = np.random.default_rng(seed)
    height = 1.0 + variability * rng.uniform(-0.12, 0.12)
    width = 1.0 + variability * rng.uniform(-0.10, 0.10)
    seg_jitter = 1.0 + variability * rng.uniform(-0.04, 0.04, len(_SEGMENTS))
    segments = []
    for s, jit in zip(_SEGMENTS, seg_jitter):
        ax, ay, az = s.attach
        segments.append(Segment(s.name, s.parent, (ax * width, ay * height, az * height * jit),
                                s.length * height * jit))
    segments = tuple(segments)
    names, segs, offsets = [], [], []
    for name, seg, off in _MARKERS[:n_markers]:
        k = _SEG_INDEX[seg]
        along = segments[k].length / _SEGMENTS[k].length
        o = np.array([off[0] * width, off[1] * height, off[2] * along])
        o += variability * rng.uniform(-0.008, 0.008, 3)
        names.append(name)
        segs.append(k)
        offsets.append(o)
    defaults = _FAMILY_DEFAULTS[action]
    motion = MotionParams(
        family=action,
        amplitude=1.0 + variability * rng.uniform(-0.2, 0.2),
        frequency=defaults["frequency"] * (1.0 + variability * rng.uniform(-0.1, 0.1)),
        speed=defaults["speed"],
        yaw_rate=variability * rng.uniform(-0.3, 0.3),
        phase=rng.uniform(0, 2 * math.pi),
        heading=rng.uniform(0, 2 * math.pi),
        wobble=tuple(variability * rng.uniform(-0.15, 0.15, 4)),
    )
    return BodyModel(n_markers, segments, tuple(names), np.array(segs),
                     np.array(offsets), motion, seed)


# -- kinematics ----------------------------------------------------------------

def _rot(axis: str, angle) -> np.ndarray:
    """Stack of rotation matrices about a principal axis, shape ``(T, 3, 3)``."""
    a = np.atleast_1d(np.asarray(angle, dtype=np.float64))
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    if axis == "x":
        m = [[o, z, z], [z, c, -s], [z, s, c]]
    elif axis == "y":
        m = [[c, z, s], [z, o, z], [-s, z, c]]
    else:
        m = [[c, -s, z], [s, c, z], [z, z, o]]
    return np.moveaxis(np.array(m), (0, 1), (-2, -1))


def _smooth_pos(x):
    # max(0, x)**2 is continuously differentiable
    return np.maximum(x, 0.0) ** 2


def joint_angles(motion: MotionParams, t: np.ndarray) -> dict:
    """Joint angle curves ``{segment: (flex, abduct, twist)}`` plus root motion."""
    amp = motion.amplitude
    w = 2 * math.pi * motion.frequency
    ph = motion.phase
    zero = np.zeros_like(t)
    ang = {s.name: [zero, zero, zero] for s in _SEGMENTS}
    root_z = np.full_like(t, _PELVIS_HEIGHT)
    forward = zero.copy()
    lean = zero.copy()
    fam = motion.family

    if fam in ("walk", "jog"):
        big = 1.0 if fam == "walk" else 1.15
        leg = 0.5 * w * t + ph
        hip = 0.22 * big * np.sin(leg)
        ang["r_thigh"][0] = hip
        ang["l_thigh"][0] = -hip
        ang["r_shank"][0] = -0.30 * big * (1 - np.cos(leg - 0.6))
        ang["l_shank"][0] = -0.30 * big * (1 + np.cos(leg - 0.6))
        ang["r_foot"][0] = 0.15 * np.sin(leg + 0.8)
        ang["l_foot"][0] = -0.15 * np.sin(leg + 0.8)
        ang["r_upperarm"][0] = -0.20 * big * np.sin(leg)
        ang["l_upperarm"][0] = 0.20 * big * np.sin(leg)
        ang["r_forearm"][0] = 0.25 * big + 0.15 * np.sin(leg)
        ang["l_forearm"][0] = 0.25 * big - 0.15 * np.sin(leg)
        # runners carry the arms wider than walkers
        ang["r_upperarm"][1] = -(big - 1.0) * 2.0 + zero
        ang["l_upperarm"][1] = (big - 1.0) * 2.0 + zero
        ang["pelvis"][2] = 0.08 * big * np.sin(leg)
        ang["thorax"][2] = -0.10 * big * np.sin(leg)
        root_z = root_z + 0.025 * big * np.sin(w * t + 2 * ph)
        forward = motion.speed * t
        lean = 0.05 * big * np.ones_like(t)
    elif fam == "sit":
        s = 0.5 * (1 - np.cos(w * t + ph))
        ang["r_thigh"][0] = ang["l_thigh"][0] = 0.9 * s
        ang["r_shank"][0] = ang["l_shank"][0] = -1.1 * s
        ang["r_foot"][0] = ang["l_foot"][0] = 0.10 * s
        ang["r_upperarm"][0] = ang["l_upperarm"][0] = 0.45 * s
        ang["r_forearm"][0] = ang["l_forearm"][0] = 0.6 * s
        ang["r_thigh"][1] = -0.12 * s
        ang["l_thigh"][1] = 0.12 * s
        root_z = root_z - 0.22 * s
        forward = -0.10 * s
        lean = 0.30 * s
    elif fam == "jump":
        s = np.sin(w * t + ph)
        crouch, flight = _smooth_pos(-s), _smooth_pos(s)
        ang["r_thigh"][0] = ang["l_thigh"][0] = 0.7 * crouch
        ang["r_shank"][0] = ang["l_shank"][0] = -0.9 * crouch
        ang["r_foot"][0] = ang["l_foot"][0] = 0.3 * crouch - 0.3 * flight
        # arms swing back in the crouch and rise sideways in flight
        ang["r_upperarm"][0] = ang["l_upperarm"][0] = -0.3 * crouch
        ang["r_upperarm"][1] = -1.2 * flight
        ang["l_upperarm"][1] = 1.2 * flight
        ang["r_forearm"][0] = ang["l_forearm"][0] = 0.3 + 0.2 * flight
        root_z = root_z - 0.18 * crouch + 0.35 * flight
        lean = 0.2 * crouch
    # posture wobble shared by all families; negative y-rotation moves a
    # right limb outward.  Arm wobble is damped: unequal arm abduction shifts
    # the lateral third moment enough to mirror the normalized frame.
    wb = motion.wobble
    ang["abdomen"][0] = ang["abdomen"][0] + wb[0] * np.sin(0.37 * w * t + ph)
    ang["head"][0] = ang["head"][0] + wb[1] * np.sin(0.53 * w * t + 1.3 * ph)
    ang["r_upperarm"][1] = ang["r_upperarm"][1] - 0.35 + 0.3 * wb[2] * np.sin(0.41 * w * t)
    ang["l_upperarm"][1] = ang["l_upperarm"][1] + 0.35 - 0.3 * wb[3] * np.sin(0.43 * w * t)
    ang["abdomen"][0] = ang["abdomen"][0] + lean

    out = {name: tuple(amp * np.asarray(a) for a in v) for name, v in ang.items()}
    out["_root_z"] = _PELVIS_HEIGHT + amp * (root_z - _PELVIS_HEIGHT)
    out["_forward"] = amp * forward
    out["_yaw"] = motion.heading + amp * motion.yaw_rate * t
    return out


def forward_kinematics(body: BodyModel, t: np.ndarray) -> np.ndarray:
    """World marker positions in metres, shape ``(T, N, 3)``."""
    t = np.asarray(t, dtype=np.float64)
    ang = joint_angles(body.motion, t)
    n_t = len(t)
    rots = [None] * len(body.segments)
    origins = [None] * len(body.segments)

    yaw = ang["_yaw"]
    # forward progress integrated along the drifting heading
    dist = ang["_forward"]
    step = np.diff(dist, prepend=dist[:1])
    heading_dir = np.stack([-np.sin(yaw), np.cos(yaw), np.zeros_like(yaw)], axis=-1)
    travel = np.cumsum(step[:, None] * heading_dir, axis=0)
    root_pos = travel + np.stack([np.zeros(n_t), np.zeros(n_t), ang["_root_z"]], axis=-1)
    root_rot = _rot("z", yaw)

    for k, seg in enumerate(body.segments):
        flex, abd, twist = ang[seg.name]
        local = _rot("z", twist) @ _rot("y", abd) @ _rot("x", flex)
        if seg.parent is None:
            rots[k] = root_rot @ local
            origins[k] = root_pos
        else:
            p = _SEG_INDEX[seg.parent]
            origins[k] = origins[p] + np.einsum("tij,j->ti", rots[p], np.asarray(seg.attach))
            rots[k] = rots[p] @ local

    out = np.empty((n_t, body.n_markers, 3))
    for m in range(body.n_markers):
        k = body.marker_segments[m]
        out[:, m] = origins[k] + np.einsum("tij,j->ti", rots[k], body.marker_offsets[m])
    return out


# -- sequence files -------------------------------------------------------------

@dataclass(eq=False)
class SequenceFile:
    """Marker sequence with ground truth; positions in millimetres, NaN = occluded.

    Row ``k`` of every frame is one tracked marker whose true label is
    ``labels[k]``.
    """

    positions: np.ndarray
    labels: np.ndarray
    fps: int = DEFAULT_FPS
    subject: str = ""
    action: str = ""

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 3 or self.positions.shape[2] != 3:
            raise DataError(f"positions must be (T, N, 3), got {self.positions.shape}")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.n_markers,):
            raise DataError("labels must have one entry per marker")

    @property
    def n_markers(self) -> int:
        return self.positions.shape[1]

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    @property
    def occluded(self) -> np.ndarray:
        return np.isnan(self.positions).any(axis=2)

    def header(self) -> dict:
        return {"n_markers": self.n_markers, "fps": self.fps,
                "subject": self.subject, "action": self.action}

    def frames(self) -> list[MarkerFrame]:
        return [MarkerFrame.from_positions(p, t) for t, p in enumerate(self.positions)]

    def copy(self) -> "SequenceFile":
        return SequenceFile(self.positions.copy(), self.labels.copy(), self.fps,
                            self.subject, self.action)

    def __eq__(self, other):
        if not isinstance(other, SequenceFile):
            return NotImplemented
        return (self.header() == other.header()
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.positions, other.positions, equal_nan=True))


def generate_sequence(body: BodyModel, n_frames: int, fps: int = DEFAULT_FPS,
                      subject: str = "", time_offset: float = 0.0) -> SequenceFile:
    t = time_offset + np.arange(n_frames) / fps
    pos = forward_kinematics(body, t) * 1000.0
    return SequenceFile(pos, np.arange(body.n_markers), fps,
                        subject or f"S{body.seed:03d}", body.motion.family)


def _fmt(x: float) -> str:
    return "NaN" if math.isnan(x) else f"{x:.17g}"


def write_sequence(seq: SequenceFile, path, labels_file: bool = True) -> None:
    """CSV with a JSON header line; ``NaN,NaN,NaN`` marks an occluded sample."""
    path = Path(path)
    buf = io.StringIO()
    buf.write(json.dumps(seq.header(), sort_keys=True) + "\n")
    for t, frame in enumerate(seq.positions):
        buf.write(",".join([str(t)] + [_fmt(v) for v in frame.reshape(-1)]) + "\n")
    path.write_text(buf.getvalue(), encoding="utf-8")
    if labels_file:
        lines = ["track,label"] + [f"{k},{lab}" for k, lab in enumerate(seq.labels)]
        labels_path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def labels_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".labels")


def read_sequence(path) -> SequenceFile:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        first = fh.readline()
        try:
            header = json.loads(first)
            n = int(header["n_markers"])
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"{path}: malformed header line") from exc
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != 1 + 3 * n:
                raise DataError(f"{path}:{lineno}: expected {1 + 3 * n} fields, got {len(fields)}")
            rows.append([float(v) for v in fields[1:]])
    pos = np.array(rows, dtype=np.float64).reshape(-1, n, 3)
    lp = labels_path(path)
    if lp.exists():
        lab = np.loadtxt(lp, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
        labels = np.empty(n, dtype=np.int64)
        labels[lab[:, 0]] = lab[:, 1]
    else:
        labels = np.arange(n)
    return SequenceFile(pos, labels, int(header.get("fps", DEFAULT_FPS)),
                        str(header.get("subject", "")), str(header.get("action", "")))


# -- augmentation ------------------------------------------------------------------

def augment_shuffle(frames, rng: np.random.Generator, count: int = 16,
                    targets=None) -> list[tuple[MarkerFrame, Permutation]]:
    """``count`` uniform random shuffles of every frame, paired with targets.

    ``targets[k]`` is the labelling of ``frames[k]`` when the input is
    already shuffled (identity otherwise); returned targets compose with it.
    """
    out = []
    for k, frame in enumerate(frames):
        base = None if targets is None else targets[k]
        for _ in range(count):
            p = Permutation(rng.permutation(frame.n_markers))
            target = p if base is None else compose(p, base)
            out.append((apply_permutation(frame, p), target))
    return out


def augment_occlude(frames, rng: np.random.Generator, max_count: int = 5) -> list[MarkerFrame]:
    """Occlude ``Uniform{0..max_count}`` markers per frame at the placeholder."""
    out = []
    for frame in frames:
        k = int(rng.integers(0, max_count + 1))
        if k == 0:
            out.append(frame)
            continue
        idx = rng.choice(frame.n_markers, size=k, replace=False)
        pos = frame.positions.copy()
        occ = frame.occluded.copy()
        pos[idx] = OCCLUSION_PLACEHOLDER
        occ[idx] = True
        out.append(MarkerFrame(pos, occ, frame.frame_index))
    return out


def introduce_gaps(seq: SequenceFile, occlusion_ratio: float, rng: np.random.Generator,
                   mean_gap: float = 12.0) -> SequenceFile:
    """Blank out geometric-length bursts until ``occlusion_ratio`` of samples are missing.

    Frames never drop below the minimum number of visible markers needed
    for normalization.
    """
    if not 0.0 <= occlusion_ratio <= 0.5:
        raise ValueError("occlusion_ratio must be in [0, 0.5]")
    out = seq.copy()
    occ = out.occluded
    total = occ.size
    target = int(round(occlusion_ratio * total))
    n_t, n_m = occ.shape
    missing = int(occ.sum())
    attempts = 0
    while missing < target and attempts < 100 * total:
        attempts += 1
        m = int(rng.integers(n_m))
        start = int(rng.integers(n_t))
        length = int(rng.geometric(1.0 / mean_gap))
        stop = min(n_t, start + length, start + (target - missing))
        span = slice(start, stop)
        visible_after = (~occ[span]).sum(axis=1) - 1
        if (visible_after < MIN_VISIBLE).any():
            continue
        newly = int((~occ[span, m]).sum())
        occ[span, m] = True
        missing += newly
    out.positions[occ] = np.nan
    return out


# -- datasets ----------------------------------------------------------------------

@dataclass
class FrameSet:
    """Stack of (possibly shuffled) frames with their target labellings.

    ``targets[k, j]`` is the true label of marker ``j`` in frame ``k``.
    """

    positions: np.ndarray
    occluded: np.ndarray
    targets: np.ndarray
    subjects: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.subjects is None:
            self.subjects = np.array([""] * len(self.positions))
        if not (len(self.positions) == len(self.occluded) == len(self.targets) == len(self.subjects)):
            raise DataError("FrameSet fields have mismatched lengths")

    def __len__(self):
        return len(self.positions)

    @property
    def n_markers(self) -> int:
        return self.positions.shape[1]

    def subset(self, idx) -> "FrameSet":
        return FrameSet(self.positions[idx], self.occluded[idx], self.targets[idx], self.subjects[idx])

    def frame(self, k: int) -> MarkerFrame:
        return MarkerFrame(self.positions[k], self.occluded[k], k)

    def target(self, k: int) -> Permutation:
        return Permutation(self.targets[k])

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for a in (self.positions, self.occluded, self.targets):
            h.update(np.ascontiguousarray(a).tobytes())
        h.update("\0".join(sorted(set(map(str, self.subjects)))).encode())
        return h.hexdigest()[:16]

    def subject_set(self) -> set:
        return set(map(str, self.subjects))

    def save(self, path) -> None:
        save_tensors(path, {"kind": "frameset", "fingerprint": self.fingerprint()},
                     {"positions": self.positions, "occluded": self.occluded,
                      "targets": self.targets, "subjects": self.subjects.astype(str)})

    @classmethod
    def load(cls, path) -> "FrameSet":
        try:
            meta, a = load_tensors(path)
        except ContainerError as exc:
            raise DataError(str(exc)) from exc
        if meta.get("kind") != "frameset":
            raise DataError(f"{path}: not a frame set")
        subjects = a["subjects"] if a["subjects"].size else np.array([""] * len(a["positions"]))
        return cls(a["positions"], a["occluded"], a["targets"], subjects)


def normalized_frameset(sequences, stride: int = 1) -> FrameSet:
    """Normalize every ``stride``-th frame of each sequence (labels in row order)."""
    from .preprocess import normalize_frame

    pos, occ, tgt, subj = [], [], [], []
    for seq in sequences:
        for frame in seq.frames()[::stride]:
            norm, _ = normalize_frame(frame)
            pos.append(norm.positions)
            occ.append(norm.occluded)
            tgt.append(seq.labels)
            subj.append(seq.subject)
    return FrameSet(np.array(pos), np.array(occ), np.array(tgt), np.array(subj))


def shuffle_frameset(fs: FrameSet, rng: np.random.Generator, count: int = 16) -> FrameSet:
    """Array form of :func:`augment_shuffle`, applied to a whole FrameSet."""
    n = fs.n_markers
    reps = len(fs) * count
    perms = np.argsort(rng.random((reps, n)), axis=1)
    src = np.repeat(np.arange(len(fs)), count)
    rows = src[:, None]
    return FrameSet(fs.positions[rows, perms], fs.occluded[rows, perms],
                    fs.targets[rows, perms], fs.subjects[src])


def occlude_frameset(fs: FrameSet, rng: np.random.Generator, max_count: int = 5) -> FrameSet:
    """Array form of :func:`augment_occlude`."""
    pos = fs.positions.copy()
    occ = fs.occluded.copy()
    counts = rng.integers(0, max_count + 1, size=len(fs))
    order = np.argsort(rng.random((len(fs), fs.n_markers)), axis=1)
    mask = np.arange(fs.n_markers)[None, :] < counts[:, None]
    rows = np.repeat(np.arange(len(fs)), fs.n_markers).reshape(len(fs), -1)
    hit = np.zeros_like(occ)
    hit[rows[mask], order[mask]] = True
    pos[hit] = OCCLUSION_PLACEHOLDER
    occ |= hit
    return FrameSet(pos, occ, fs.targets.copy(), fs.subjects.copy())


def split_subjects(subjects, n_train: int, n_val: int, n_test: int,
                   rng: np.random.Generator) -> dict:
    """Disjoint train/val/test subject lists drawn from ``subjects``."""
    uniq = sorted(set(subjects))
    if n_train + n_val + n_test > len(uniq):
        raise ValueError("not enough subjects for the requested split")
    order = [uniq[k] for k in rng.permutation(len(uniq))]
    return {"train": sorted(order[:n_train]),
            "val": sorted(order[n_train:n_train + n_val]),
            "test": sorted(order[n_train + n_val:n_train + n_val + n_test])}


def generate_subject_sequences(n_markers: int, subject_seed: int, n_frames: int,
                               actions=ACTIONS, fps: int = DEFAULT_FPS,
                               variability: float = 1.0) -> list[SequenceFile]:
    """One sequence per action for a single subject."""
    out = []
    subject = f"S{subject_seed:03d}"
    for a, action in enumerate(actions):
        body = sample_body(n_markers, seed=subject_seed, action=action, variability=variability)
        # action-specific motion draws, same body proportions
        rng = np.random.default_rng([subject_seed, a])
        body = body.with_motion(phase=float(rng.uniform(0, 2 * math.pi)),
                                heading=float(rng.uniform(0, 2 * math.pi)))
        out.append(generate_sequence(body, n_frames, fps, subject=subject))
    return out
