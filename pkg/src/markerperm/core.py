"""Shared value types and exact permutation arithmetic.

Permutation convention used everywhere in the package: applying a
permutation ``p`` to a stack of marker rows puts input row ``p[k]`` at
output row ``k``.  As a matrix ``P`` this is ``P[k, p[k]] = 1`` so that
``P @ X`` reproduces :func:`apply_permutation`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: position given to occluded markers in normalized space
OCCLUSION_PLACEHOLDER = (0.5, 0.5, 0.5)


class MarkerPermError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(MarkerPermError, ValueError):
    pass


class DegenerateFrameError(MarkerPermError, ValueError):
    pass


class DomainError(MarkerPermError, ValueError):
    pass


class NumericError(MarkerPermError, ArithmeticError):
    pass


class DataError(MarkerPermError, ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MarkerFrame:
    """N markers with 3D positions and per-marker occlusion flags."""

    positions: np.ndarray
    occluded: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise DimensionError(f"positions must be (N, 3), got {pos.shape}")
        occ = np.array(self.occluded, dtype=bool).reshape(-1)
        if occ.shape[0] != pos.shape[0]:
            raise DimensionError(
                f"{pos.shape[0]} positions but {occ.shape[0]} occlusion flags")
        if self.frame_index < 0:
            raise ValueError("frame_index must be >= 0")
        object.__setattr__(self, "positions", _frozen(pos))
        object.__setattr__(self, "occluded", _frozen(occ))

    @classmethod
    def from_positions(cls, positions, frame_index: int = 0) -> "MarkerFrame":
        """Build a frame where NaN rows mark occluded markers."""
        pos = np.array(positions, dtype=np.float64)
        occ = np.isnan(pos).any(axis=1)
        pos[occ] = OCCLUSION_PLACEHOLDER
        return cls(pos, occ, frame_index)

    @property
    def n_markers(self) -> int:
        return self.positions.shape[0]

    def flat(self) -> np.ndarray:
        """Marker-major flattening ``(x1, y1, z1, x2, ...)``."""
        return self.positions.reshape(-1).copy()

    def __eq__(self, other):
        if not isinstance(other, MarkerFrame):
            return NotImplemented
        return (self.frame_index == other.frame_index
                and np.array_equal(self.positions, other.positions)
                and np.array_equal(self.occluded, other.occluded))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Permutation:
    mapping: np.ndarray

    def __post_init__(self):
        m = np.array(self.mapping, dtype=np.int64).reshape(-1)
        n = m.shape[0]
        if n == 0 or not np.array_equal(np.sort(m), np.arange(n)):
            raise DomainError(f"not a permutation of 0..{n - 1}: {m.tolist()}")
        object.__setattr__(self, "mapping", _frozen(m))

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(np.arange(n))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "Permutation":
        return cls(rng.permutation(n))

    @property
    def size(self) -> int:
        return self.mapping.shape[0]

    def __len__(self):
        return self.size

    def __getitem__(self, k):
        return int(self.mapping[k])

    def __eq__(self, other):
        if not isinstance(other, Permutation):
            return NotImplemented
        return np.array_equal(self.mapping, other.mapping)

    def __hash__(self):
        return hash(self.mapping.tobytes())

    def __repr__(self):
        return f"Permutation({self.mapping.tolist()})"


@dataclass(frozen=True, eq=False)
class LabelledFrameResult:
    """Decoded labelling of one frame.

    ``permutation[j]`` is the label assigned to marker ``j`` and
    ``confidences[j]`` its normalized confidence in [0, 1].
    """

    permutation: Permutation
    dsm: np.ndarray
    confidences: np.ndarray
    frame_index: int = 0
    raw_confidences: np.ndarray = field(default=None)

    @property
    def labels(self) -> np.ndarray:
        return self.permutation.mapping


def _check_size(n: int, p: Permutation):
    if p.size != n:
        raise DimensionError(f"permutation of size {p.size} for {n} markers")


def apply_permutation(frame: MarkerFrame, p: Permutation) -> MarkerFrame:
    """Output marker ``k`` is input marker ``p[k]``; flags move with positions."""
    _check_size(frame.n_markers, p)
    return MarkerFrame(frame.positions[p.mapping], frame.occluded[p.mapping],
                       frame.frame_index)


def invert_permutation(p: Permutation) -> Permutation:
    inv = np.empty_like(p.mapping)
    inv[p.mapping] = np.arange(p.size)
    return Permutation(inv)


def compose(p: Permutation, q: Permutation) -> Permutation:
    """Permutation equal to applying ``q`` first and then ``p``.

    Satisfies ``permutation_to_matrix(compose(p, q)) ==
    permutation_to_matrix(p) @ permutation_to_matrix(q)``.
    """
    _check_size(p.size, q)
    return Permutation(q.mapping[p.mapping])


def permutation_to_matrix(p: Permutation) -> np.ndarray:
    m = np.zeros((p.size, p.size))
    m[np.arange(p.size), p.mapping] = 1.0
    return m


def matrix_to_permutation(m: np.ndarray) -> Permutation:
    """Inverse of :func:`permutation_to_matrix` for exact 0/1 matrices."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got {m.shape}")
    if not (np.isin(m, (0, 1)).all() and (m.sum(0) == 1).all() and (m.sum(1) == 1).all()):
        raise DomainError("matrix is not a permutation matrix")
    return Permutation(np.argmax(m, axis=1))


def label_matrix(p: Permutation) -> np.ndarray:
    """Target matrix ``T[label, marker]`` for markers labelled by ``p``.

    Column ``j`` is one-hot at ``p[j]``; this is the transpose of
    :func:`permutation_to_matrix` and is what the network's DSM approximates.
    """
    return permutation_to_matrix(p).T.copy()
