"""Decode a doubly-stochastic matrix to the nearest permutation.

The DSM is indexed ``D[label, marker]``; decoding minimizes
``sum_j (1 - D)[p[j], j]`` over permutations ``p`` (label of marker ``j``).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import DimensionError, DomainError, Permutation

BRUTE_FORCE_MAX_N = 8


@dataclass(frozen=True)
class AssignmentResult:
    permutation: Permutation
    total_cost: float


def _as_square(d) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] == 0:
        raise DimensionError(f"expected a non-empty square matrix, got shape {d.shape}")
    if not np.isfinite(d).all():
        raise DomainError("non-finite entry in matrix")
    return d


def assignment_cost(cost: np.ndarray, mapping) -> float:
    """``sum_j cost[mapping[j], j]`` accumulated left to right."""
    total = 0.0
    for j, i in enumerate(mapping):
        total += float(cost[i, j])
    return total


def hungarian(a: np.ndarray):
    """Minimum-cost perfect matching of rows to columns of ``a``.

    The matching comes from scipy's shortest augmenting path solver.  Duals
    are recovered from it: ``v`` is the shortest-path potential over columns
    with an edge ``match[r] -> c`` of weight ``a[r, c] - a[r, match[r]]``
    (no negative cycle since the matching is optimal), and ``u`` makes every
    matched edge tight.  Returns ``(row_to_col, u, v)`` with
    ``a[r, c] - u[r] - v[c] >= 0`` and equality on the matching.
    """
    n = a.shape[0]
    rows, cols = linear_sum_assignment(a)
    match = np.empty(n, dtype=np.int64)
    match[rows] = cols
    w = a - a[np.arange(n), match][:, None]
    v = np.minimum(w.min(axis=0), 0.0)
    for _ in range(n):
        nv = (v[match][:, None] + w).min(axis=0)
        if not (nv < v).any():
            break
        np.minimum(v, nv, out=v)
    u = a[np.arange(n), match] - v[match]
    return match, u, v


def _has_tight_cycle(tight: np.ndarray, match: np.ndarray) -> bool:
    """True if another optimal matching exists.

    Tight unmatched edges ``(r, c)`` give a graph on columns,
    ``match[r] -> c``; a second optimum is a cycle in it.  Repeated squaring
    of the reachability matrix covers paths of every length up to ``n``.
    """
    n = tight.shape[0]
    reach = np.zeros((n, n))
    reach[match] = tight
    np.fill_diagonal(reach, 0.0)
    for _ in range(max(1, (n - 1).bit_length())):
        if reach.diagonal().any():
            return True
        reach = np.minimum(reach + reach @ reach, 1.0)
    return bool(reach.diagonal().any())


def _lexicographic_optimum(tight: np.ndarray, match: np.ndarray) -> np.ndarray:
    """Smallest row-to-column matching (in row order) inside the tight graph.

    Every perfect matching on the tight edges is optimal, so choosing the
    smallest feasible column per row keeps optimality.
    """
    n = tight.shape[0]
    match = match.copy()
    owner = np.empty(n, dtype=np.int64)
    owner[match] = np.arange(n)
    for r in range(n):
        for c in np.flatnonzero(tight[r, :match[r]]):
            if owner[c] < r:
                continue
            freed = match[r]
            # alternating path from the displaced row back to ``freed``
            start = owner[c]
            parent = {start: None}
            queue = [start]
            found = None
            while queue and found is None:
                x = queue.pop(0)
                for y in np.flatnonzero(tight[x]):
                    if y == c or owner[y] < r:
                        continue
                    if y == freed:
                        found = (x, y)
                        break
                    nxt = owner[y]
                    if nxt not in parent:
                        parent[nxt] = (x, y)
                        queue.append(nxt)
            if found is None:
                continue
            x, y = found
            while True:
                match[x] = y
                owner[y] = x
                if parent[x] is None:
                    break
                x, y = parent[x]
            match[r] = c
            owner[c] = r
            break
    return match


def decode(d) -> AssignmentResult:
    """Nearest permutation to ``d`` under cost ``1 - d``.

    Ties resolve to the lexicographically smallest mapping.
    """
    d = _as_square(d)
    cost = 1.0 - d
    a = cost.T  # rows are markers, columns labels
    match, u, v = hungarian(a)
    reduced = a - u[:, None] - v[None, :]
    tol = 1e-11 * max(1.0, float(np.abs(a).max()))
    tight = np.abs(reduced) <= tol
    if tight.sum() > a.shape[0] and _has_tight_cycle(tight, match):
        match = _lexicographic_optimum(tight, match)
    return AssignmentResult(Permutation(match), assignment_cost(cost, match))


def brute_force_decode(d) -> AssignmentResult:
    """Exhaustive minimum over all N! permutations (N <= 8)."""
    d = _as_square(d)
    n = d.shape[0]
    if n > BRUTE_FORCE_MAX_N:
        raise DimensionError(f"brute force refused for N={n} > {BRUTE_FORCE_MAX_N}")
    cost = 1.0 - d
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    totals = np.zeros(len(perms))
    for j in range(n):  # same left-to-right order as assignment_cost
        totals += cost[perms[:, j], j]
    best = perms[int(np.argmin(totals))]
    return AssignmentResult(Permutation(best), assignment_cost(cost, best))
