"""Per-frame normalization: translation, orientation and size invariance.

Visible markers are centered on their centroid, rotated into their
principal axes (largest -> z, second -> x) and min-max scaled per axis into
[0, 1].  Occluded markers are excluded from every statistic and receive the
placeholder position afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import OCCLUSION_PLACEHOLDER, DegenerateFrameError, MarkerFrame

MIN_VISIBLE = 4
# smallest/largest covariance eigenvalue ratio below which a frame is planar
_PLANAR_RTOL = 1e-12


@dataclass(frozen=True)
class NormalizationRecord:
    centroid: np.ndarray
    # columns are the world directions of the output x, y, z axes
    rotation: np.ndarray
    axis_min: np.ndarray
    axis_max: np.ndarray

    @classmethod
    def identity(cls) -> "NormalizationRecord":
        return cls(np.zeros(3), np.eye(3), np.zeros(3), np.ones(3))


def _third_moment(points: np.ndarray, axis: np.ndarray) -> float:
    return float(np.sum((points @ axis) ** 3))


def sign_disambiguate(rotation, centered_points) -> np.ndarray:
    """Fix the sign of the principal axes in ``rotation``.

    ``rotation`` has columns ``(x, ?, z)`` where z is the first and x the
    second principal axis.  Each of z and x is flipped so the projections of
    ``centered_points`` onto it have non-negative third moment.  A third
    moment that is exactly zero falls back to making the axis's largest
    absolute component positive.  The y column is rebuilt as ``z cross x``
    so the result is always a proper rotation.
    """
    r = np.array(rotation, dtype=np.float64)
    pts = np.asarray(centered_points, dtype=np.float64)
    for col in (2, 0):
        axis = r[:, col]
        m3 = _third_moment(pts, axis)
        if m3 == 0.0:
            flip = axis[np.argmax(np.abs(axis))] < 0
        else:
            flip = m3 < 0
        if flip:
            r[:, col] = -axis
    r[:, 1] = np.cross(r[:, 2], r[:, 0])
    return r


def _principal_rotation(centered: np.ndarray) -> np.ndarray:
    cov = centered.T @ centered / centered.shape[0]
    evals, evecs = np.linalg.eigh(cov)  # ascending
    if evals[0] <= _PLANAR_RTOL * evals[2]:
        raise DegenerateFrameError("visible markers are coplanar or collinear")
    r = np.empty((3, 3))
    r[:, 2] = evecs[:, 2]
    r[:, 0] = evecs[:, 1]
    r[:, 1] = np.cross(r[:, 2], r[:, 0])
    return sign_disambiguate(r, centered)


def normalize_frame(frame: MarkerFrame) -> tuple[MarkerFrame, NormalizationRecord]:
    visible = ~frame.occluded
    if visible.sum() < MIN_VISIBLE:
        raise DegenerateFrameError(
            f"need at least {MIN_VISIBLE} visible markers, got {int(visible.sum())}")
    pts = frame.positions[visible]
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    rotation = _principal_rotation(centered)
    rotated = centered @ rotation
    lo = rotated.min(axis=0)
    hi = rotated.max(axis=0)
    span = hi - lo
    if (span <= 1e-12 * max(1.0, float(np.abs(rotated).max()))).any():
        raise DegenerateFrameError("zero extent along a principal axis")
    out = np.empty_like(frame.positions)
    out[visible] = (rotated - lo) / span
    out[~visible] = OCCLUSION_PLACEHOLDER
    record = NormalizationRecord(centroid, rotation, lo, hi)
    return MarkerFrame(out, frame.occluded, frame.frame_index), record


def denormalize_frame(frame: MarkerFrame, record: NormalizationRecord) -> MarkerFrame:
    """Map normalized positions back to the original coordinate system.

    Occluded markers keep their flag and their stored position.
    """
    scaled = frame.positions * (record.axis_max - record.axis_min) + record.axis_min
    world = scaled @ record.rotation.T + record.centroid
    out = np.where(frame.occluded[:, None], frame.positions, world)
    return MarkerFrame(out, frame.occluded, frame.frame_index)


def normalize_positions(positions: np.ndarray, occluded: np.ndarray | None = None) -> np.ndarray:
    """Array convenience wrapper around :func:`normalize_frame`."""
    pos = np.asarray(positions, dtype=np.float64)
    if occluded is None:
        occluded = np.zeros(pos.shape[0], dtype=bool)
    return normalize_frame(MarkerFrame(pos, occluded))[0].positions
