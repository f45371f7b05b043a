"""Symmetric dynamic time warping for evaluation and trajectory averaging.

The step pattern is the standard symmetric one: a diagonal move pays twice the
local cost, horizontal and vertical moves pay it once, and the first cell pays
it once. Local cost is squared Euclidean distance. The accumulated-cost matrix
is filled row by row; the in-row horizontal recursion is folded into a running
minimum over (candidate - prefix) so each row is a handful of vectorized ops.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AlignmentPath:
    """Monotone index pairing covering both sequences end to end."""

    pairs: np.ndarray  # [P, 2] int

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.intp)
        object.__setattr__(self, "pairs", pairs)
        if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] < 1:
            raise ValueError("path must be a [P, 2] index array")
        if pairs[0, 0] != 0 or pairs[0, 1] != 0:
            raise ValueError("path must start at (0, 0)")
        steps = np.diff(pairs, axis=0)
        if steps.size and (steps.min() < 0 or steps.max() > 1 or (steps.sum(axis=1) == 0).any()):
            raise ValueError("each path step must advance i and/or j by exactly one")


def _as_points(traj) -> np.ndarray:
    arr = np.asarray(getattr(traj, "samples", traj), dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ValueError("trajectory must be a nonempty [T, n] array")
    return arr


def _local_cost(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # squared Euclidean distances, [T_a, T_b]
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.maximum(sq, 0.0)


def dtw_align(a, b) -> tuple[AlignmentPath, float]:
    """Optimal symmetric alignment of two trajectories.

    Returns the minimizing path and its accumulated cost. Backtracking breaks
    ties by preferring diagonal, then vertical, then horizontal predecessors,
    so the path is deterministic.
    """
    pa, pb = _as_points(a), _as_points(b)
    if pa.shape[1] != pb.shape[1]:
        raise ValueError(f"spatial dimension mismatch: {pa.shape[1]} vs {pb.shape[1]}")
    d = _local_cost(pa, pb)
    ta, tb = d.shape

    acc = np.empty_like(d)
    acc[0] = np.cumsum(d[0])
    for i in range(1, ta):
        row = d[i]
        # best way to enter (i, j) from the previous row
        enter = np.empty(tb)
        enter[0] = acc[i - 1, 0] + row[0]
        if tb > 1:
            enter[1:] = np.minimum(acc[i - 1, :-1] + 2.0 * row[1:], acc[i - 1, 1:] + row[1:])
        # D[i, j] = min(enter[j], D[i, j-1] + d[i, j]) unrolls to a running min:
        # with c = cumsum(row), D[i, j] = c[j] + min_{r<=j}(enter[r] - c[r])
        prefix = np.cumsum(row)
        acc[i] = np.minimum.accumulate(enter - prefix) + prefix

    i, j = ta - 1, tb - 1
    rev = [(i, j)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            step = d[i, j]
            diag = acc[i - 1, j - 1] + 2.0 * step
            vert = acc[i - 1, j] + step
            horiz = acc[i, j - 1] + step
            if diag <= vert and diag <= horiz:
                i, j = i - 1, j - 1
            elif vert <= horiz:
                i -= 1
            else:
                j -= 1
        rev.append((i, j))
    path = AlignmentPath(pairs=np.array(rev[::-1], dtype=np.intp))
    return path, float(acc[ta - 1, tb - 1])


def aligned_rmse(original, reconstruction) -> float:
    """RMSE after alignment: per original timestep, average the squared
    distances to all paired reconstruction points, average those over
    timesteps, then take the square root."""
    po, pr = _as_points(original), _as_points(reconstruction)
    path, _ = dtw_align(po, pr)
    idx_o = path.pairs[:, 0]
    idx_r = path.pairs[:, 1]
    sq = ((po[idx_o] - pr[idx_r]) ** 2).sum(axis=1)
    sums = np.zeros(po.shape[0])
    counts = np.zeros(po.shape[0])
    np.add.at(sums, idx_o, sq)
    np.add.at(counts, idx_o, 1.0)
    return float(np.sqrt((sums / counts).mean()))


def uniform_time_average(a, b, weight: float = 0.5) -> np.ndarray:
    """Pointwise blend of two equal-length trajectories."""
    pa, pb = _as_points(a), _as_points(b)
    if pa.shape != pb.shape:
        raise ValueError(f"trajectories must share shape after resampling, got {pa.shape} vs {pb.shape}")
    return (1.0 - weight) * pa + weight * pb


def dtw_average(a, b, weight: float = 0.5) -> np.ndarray:
    """Blend along the optimal alignment path; one output point per pair."""
    pa, pb = _as_points(a), _as_points(b)
    path, _ = dtw_align(pa, pb)
    return (1.0 - weight) * pa[path.pairs[:, 0]] + weight * pb[path.pairs[:, 1]]
