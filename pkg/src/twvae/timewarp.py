"""Piecewise-linear time warps on [0, 1] and their regularizer.

A warp is a monotone bijection of [0, 1] built from K equal-width segments
whose slopes are positive and average to one. The regularizer is the discrete
form of the slope penalty integral((slope - 1) * log(slope)) over [0, 1], and
is invariant under inverting the warp, which is why inversion returns an
unequal-knot representation instead of resampling back onto equal segments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, scale, softmax

MEAN_SLOPE_TOL = 1e-9


@dataclass(frozen=True)
class WarpCoefficients:
    """Slopes of the K equal-width segments; positive, mean 1."""

    slopes: np.ndarray

    def __post_init__(self):
        slopes = np.asarray(self.slopes, dtype=np.float64)
        object.__setattr__(self, "slopes", slopes)
        if slopes.ndim != 1 or slopes.size < 1:
            raise ValueError("slopes must be a nonempty 1-D array")
        if not np.all(np.isfinite(slopes)):
            raise ValueError("slopes must be finite")
        if np.any(slopes <= 0.0):
            raise ValueError("all segment slopes must be positive")
        if abs(slopes.mean() - 1.0) > MEAN_SLOPE_TOL:
            raise ValueError(f"segment slopes must average to 1, got mean {slopes.mean()!r}")

    @property
    def n_segments(self) -> int:
        return int(self.slopes.size)

    def knots(self) -> tuple[np.ndarray, np.ndarray]:
        """(input knots j/K, output knots cumsum(slopes)/K), both starting at 0."""
        k = self.n_segments
        x = np.arange(k + 1) / k
        y = np.concatenate(([0.0], np.cumsum(self.slopes) / k))
        return x, y


@dataclass(frozen=True)
class PiecewiseLinearWarp:
    """General monotone piecewise-linear bijection of [0, 1] given by knots."""

    x_knots: np.ndarray
    y_knots: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x_knots, dtype=np.float64)
        y = np.asarray(self.y_knots, dtype=np.float64)
        object.__setattr__(self, "x_knots", x)
        object.__setattr__(self, "y_knots", y)
        if x.shape != y.shape or x.ndim != 1 or x.size < 2:
            raise ValueError("knot arrays must be matching 1-D arrays with at least two knots")
        if np.any(np.diff(x) <= 0.0) or np.any(np.diff(y) <= 0.0):
            raise ValueError("knots must be strictly increasing in both coordinates")


def _check_unit_interval(values: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")
    return arr


def segment_basis(j: int, t, n_segments: int):
    """Ramp basis for segment j (1-based): clamp(t - (j-1)/K, 0, 1/K).

    Summed over all segments the basis reproduces t, so a slope-weighted sum
    yields a piecewise-linear warp with equally spaced knots.
    """
    if not 1 <= j <= n_segments:
        raise ValueError(f"segment index {j} outside 1..{n_segments}")
    arr = _check_unit_interval(t, "t")
    out = np.minimum(np.maximum(arr - (j - 1) / n_segments, 0.0), 1.0 / n_segments)
    return out if isinstance(t, np.ndarray) else float(out)


def basis_matrix(times: np.ndarray, n_segments: int) -> np.ndarray:
    """[T, K] matrix whose columns are the segment bases evaluated at `times`."""
    t = _check_unit_interval(times, "times").reshape(-1, 1)
    offsets = np.arange(n_segments) / n_segments
    return np.minimum(np.maximum(t - offsets, 0.0), 1.0 / n_segments)


def warp_eval(warp: WarpCoefficients | PiecewiseLinearWarp, t):
    """Evaluate the warp at t in [0, 1]; output is pinned to [0, 1].

    The pin only absorbs ulp-level rounding of the slope cumsum at the upper
    endpoint; interior values stay strictly inside.
    """
    arr = _check_unit_interval(t, "t")
    if isinstance(warp, WarpCoefficients):
        x, y = warp.knots()
    else:
        x, y = warp.x_knots, warp.y_knots
    out = np.clip(np.interp(arr, x, y), 0.0, 1.0)
    return out if isinstance(t, np.ndarray) else float(out)


def warp_inverse(warp: WarpCoefficients | PiecewiseLinearWarp, s):
    """Evaluate the inverse warp at s in [0, 1]; output is pinned to [0, 1]."""
    arr = _check_unit_interval(s, "s")
    if isinstance(warp, WarpCoefficients):
        x, y = warp.knots()
    else:
        x, y = warp.x_knots, warp.y_knots
    out = np.clip(np.interp(arr, y, x), 0.0, 1.0)
    return out if isinstance(s, np.ndarray) else float(out)


def invert_coefficients(warp: WarpCoefficients) -> PiecewiseLinearWarp:
    """Inverse warp as a knot list; segment widths become slopes/K, slopes 1/slopes."""
    x, y = warp.knots()
    return PiecewiseLinearWarp(x_knots=y, y_knots=x)


def warp_regularizer(warp: WarpCoefficients | PiecewiseLinearWarp) -> float:
    """Discrete slope penalty sum(width * (slope - 1) * log(slope)).

    Equals integral((phi' - 1) * log(phi')) for the piecewise-linear warp; zero
    exactly when every slope is 1, positive otherwise, and identical for a warp
    and its inverse.
    """
    if isinstance(warp, WarpCoefficients):
        widths = np.full(warp.n_segments, 1.0 / warp.n_segments)
        slopes = warp.slopes
    else:
        widths = np.diff(warp.x_knots)
        slopes = np.diff(warp.y_knots) / widths
    if np.any(slopes <= 0.0):
        raise ValueError("warp slopes must be positive")
    return float(np.sum(widths * (slopes - 1.0) * np.log(slopes)))


def coefficients_from_logits(logits):
    """Map unconstrained K-vector to valid segment slopes via K * softmax.

    Accepts a plain array (returns WarpCoefficients) or a graph Tensor
    (returns a Tensor of slopes, differentiable in the logits). Softmax keeps
    every slope positive and the scaling pins the mean to exactly 1.
    """
    if isinstance(logits, Tensor):
        if not np.all(np.isfinite(logits.data)):
            raise ValueError("logits must be finite")
        k = logits.data.shape[-1]
        return scale(softmax(logits, axis=-1), float(k))
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("logits must be a 1-D array")
    if not np.all(np.isfinite(arr)):
        raise ValueError("logits must be finite")
    shifted = np.exp(arr - arr.max())
    return WarpCoefficients(slopes=arr.size * shifted / shifted.sum())


def random_coefficients(rng: np.random.Generator, n_segments: int,
                        spread: float) -> WarpCoefficients:
    """Random slopes in [1 - spread, 1 + spread] with mean exactly 1.

    Uses antithetic pairs (+d, -d) so the mean constraint holds without
    pushing any slope outside the requested band. Odd segment counts keep one
    slope at 1.
    """
    if not 0.0 <= spread < 1.0:
        raise ValueError("spread must lie in [0, 1)")
    half = n_segments // 2
    mags = rng.uniform(0.0, spread, half)
    deltas = np.concatenate([mags, -mags, np.zeros(n_segments - 2 * half)])
    slopes = 1.0 + deltas[rng.permutation(n_segments)]
    return WarpCoefficients(slopes=slopes / slopes.mean())
