"""Trajectory containers, preprocessing, timing-noise augmentation, synthetic
glyph dataset, and CSV ingestion.

Preprocessing follows the two dataset recipes: planar data is mean-centered
and scaled so the pooled variance of (x, y) is 2; pose data is mean-centered,
positions are scaled so the pooled variance of (x, y, z) is 3, and quaternion
channels are multiplied by a fixed 0.08 length scale before dividing by the
same position normalizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .timewarp import WarpCoefficients, random_coefficients, warp_eval


@lru_cache(maxsize=64)
def _uniform_grid(n: int) -> np.ndarray:
    grid = np.linspace(0.0, 1.0, n)
    grid.setflags(write=False)
    return grid

POSE_CHANNELS = ("x", "y", "z", "rw", "rx", "ry", "rz")
QUATERNION_SCALE = 0.08
NOISE_KNOTS = 10


@dataclass(frozen=True)
class Trajectory:
    """Evenly sampled path: samples [T, n] on the implicit grid j/(T-1)."""

    samples: np.ndarray
    channels: tuple[str, ...]

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "channels", tuple(self.channels))
        if arr.ndim != 2 or arr.shape[0] < 2:
            raise ValueError("samples must be a [T, n] array with T >= 2")
        if arr.shape[1] != len(self.channels):
            raise ValueError(f"{arr.shape[1]} sample columns but {len(self.channels)} channel labels")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")

    @property
    def length(self) -> int:
        return int(self.samples.shape[0])

    @property
    def n_channels(self) -> int:
        return int(self.samples.shape[1])

    @property
    def times(self) -> np.ndarray:
        return _uniform_grid(self.length)


def resample(traj: Trajectory, length: int) -> Trajectory:
    """Linear interpolation onto a uniform grid of `length` samples."""
    if length < 2:
        raise ValueError("resample length must be >= 2")
    new_times = _uniform_grid(length)
    cols = [np.interp(new_times, traj.times, traj.samples[:, c]) for c in range(traj.n_channels)]
    return Trajectory(samples=np.column_stack(cols), channels=traj.channels)


# ---------------------------------------------------------------------------
# preprocessing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PreprocessStats:
    """Per-channel centering plus the scale factors fitted on a training split."""

    means: np.ndarray
    position_scale: float
    quaternion_scale: float
    mode: str

    def __post_init__(self):
        object.__setattr__(self, "means", np.asarray(self.means, dtype=np.float64))
        if self.position_scale <= 0.0 or self.quaternion_scale <= 0.0:
            raise ValueError("scale factors must be strictly positive")

    def _factors(self, n: int) -> np.ndarray:
        f = np.full(n, 1.0 / self.position_scale)
        if self.mode == "pose":
            f[3:] *= self.quaternion_scale
        return f

    def apply(self, traj: Trajectory) -> Trajectory:
        out = (traj.samples - self.means) * self._factors(traj.n_channels)
        return Trajectory(samples=out, channels=traj.channels)

    def invert(self, traj: Trajectory) -> Trajectory:
        out = traj.samples / self._factors(traj.n_channels) + self.means
        return Trajectory(samples=out, channels=traj.channels)


def fit_preprocess(trajectories: list[Trajectory], mode: str) -> PreprocessStats:
    """Fit centering and scaling on a training split.

    planar: two channels, pooled variance of both brought to 2.
    pose: channels (x, y, z, rw, rx, ry, rz); positions pooled to variance 3,
    quaternions multiplied by 0.08 before the same normalization.
    """
    if not trajectories:
        raise ValueError("cannot fit preprocessing on an empty dataset")
    if mode not in ("planar", "pose"):
        raise ValueError(f"unknown preprocessing mode {mode!r}")
    pooled = np.concatenate([t.samples for t in trajectories], axis=0)
    n = pooled.shape[1]
    if mode == "planar" and n != 2:
        raise ValueError(f"planar mode expects 2 channels, got {n}")
    if mode == "pose":
        channels = trajectories[0].channels
        if channels != POSE_CHANNELS:
            raise ValueError(f"pose mode expects channels {POSE_CHANNELS}, got {channels}")
    means = pooled.mean(axis=0)
    centered = pooled - means
    n_pos = 2 if mode == "planar" else 3
    pooled_var = float((centered[:, :n_pos] ** 2).sum(axis=1).mean())
    if pooled_var <= 0.0:
        raise ValueError("training data has zero pooled variance")
    position_scale = math.sqrt(pooled_var / n_pos)
    quaternion_scale = QUATERNION_SCALE if mode == "pose" else 1.0
    return PreprocessStats(means=means, position_scale=position_scale,
                           quaternion_scale=quaternion_scale, mode=mode)


def preprocess_mode_for(traj: Trajectory) -> str:
    """planar for 2-channel data, pose for the 7-channel pose layout."""
    if traj.n_channels == 2:
        return "planar"
    if traj.n_channels == 7:
        return "pose"
    raise ValueError(f"no preprocessing mode for {traj.n_channels}-channel data")


# ---------------------------------------------------------------------------
# timing-noise augmentation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimingNoiseFn:
    """Monotone piecewise-linear map of [0, 1] used to perturb sample times."""

    x_knots: np.ndarray
    y_knots: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x_knots, dtype=np.float64)
        y = np.asarray(self.y_knots, dtype=np.float64)
        object.__setattr__(self, "x_knots", x)
        object.__setattr__(self, "y_knots", y)
        if x.shape != y.shape or x.ndim != 1:
            raise ValueError("knot arrays must be matching 1-D arrays")
        if x[0] != 0.0 or y[0] != 0.0 or x[-1] != 1.0 or y[-1] != 1.0:
            raise ValueError("noise function must map (0, 0) and (1, 1)")
        if np.any(np.diff(x) <= 0.0) or np.any(np.diff(y) <= 0.0):
            raise ValueError("noise knots must be strictly increasing")

    def __call__(self, t: np.ndarray) -> np.ndarray:
        return np.interp(t, self.x_knots, self.y_knots)


def _perturbed_knots(rng: np.random.Generator, eta: float) -> np.ndarray:
    noise = rng.uniform(0.0, 1.0, NOISE_KNOTS)
    knots = _uniform_grid(NOISE_KNOTS) + np.cumsum(eta * noise ** 2)
    return knots / knots[-1]


def make_timing_noise(rng: np.random.Generator, eta: float) -> TimingNoiseFn:
    """Random monotone perturbation of the time axis.

    Ten uniformly spaced knots are shifted by the cumulative sum of eta-scaled
    squared uniforms (input and output axes drawn independently, input first),
    renormalized to end at 1. The cumulative sum leaves the first knot
    strictly positive, so a (0, 0) knot is prepended to cover t = 0.
    """
    if eta < 0.0:
        raise ValueError("noise scale must be nonnegative")
    x = _perturbed_knots(rng, eta)
    y = _perturbed_knots(rng, eta)
    if x[0] > 0.0 or y[0] > 0.0:
        x = np.concatenate(([0.0], x))
        y = np.concatenate(([0.0], y))
    return TimingNoiseFn(x_knots=x, y_knots=y)


def augment(traj: Trajectory, noise: TimingNoiseFn, length: int) -> Trajectory:
    """Resample the trajectory at noise-perturbed times."""
    warped = noise(_uniform_grid(length))
    cols = [np.interp(warped, traj.times, traj.samples[:, c]) for c in range(traj.n_channels)]
    return Trajectory(samples=np.column_stack(cols), channels=traj.channels)


def augment_batch(trajectories: list[Trajectory], length: int,
                  rng: np.random.Generator, eta: float) -> np.ndarray:
    """Fresh timing noise per trajectory, returned as one [N, length, n] array.

    Vectorizes the knot draws; the stream order (per sample: input knots then
    output knots) matches per-sample make_timing_noise calls exactly, so the
    result is bit-identical to the one-at-a-time path.
    """
    if eta < 0.0:
        raise ValueError("noise scale must be nonnegative")
    n = len(trajectories)
    grid = _uniform_grid(length)
    raw = rng.uniform(0.0, 1.0, (n, 2, NOISE_KNOTS))
    knots = _uniform_grid(NOISE_KNOTS) + np.cumsum(eta * raw ** 2, axis=2)
    knots /= knots[:, :, -1:]
    out = np.empty((n, length, trajectories[0].n_channels))
    for i, traj in enumerate(trajectories):
        x, y = knots[i, 0], knots[i, 1]
        if x[0] > 0.0 or y[0] > 0.0:
            x = np.concatenate(([0.0], x))
            y = np.concatenate(([0.0], y))
        warped = np.interp(grid, x, y)
        for c in range(traj.n_channels):
            out[i, :, c] = np.interp(warped, traj.times, traj.samples[:, c])
    return out


# ---------------------------------------------------------------------------
# synthetic glyph dataset
# ---------------------------------------------------------------------------

# Canonical three-stroke glyph: rise to the apex, fall to the lower right,
# swing back and cross. Waypoint parameters follow cumulative chord length so
# drawing speed stays roughly constant; tangents are Catmull-Rom style.
_GLYPH_POINTS = np.array([
    [-0.50, 0.00],
    [-0.25, 0.50],
    [0.00, 1.00],
    [0.25, 0.50],
    [0.50, 0.00],
    [0.05, 0.28],
    [-0.28, 0.47],
    [0.28, 0.47],
])
_GLYPH_SCALE = 0.11
# the warp family is deliberately high-dimensional (one slope per segment)
# so a training set of ~128 samples cannot blanket the timing space
_SYNTH_WARP_SEGMENTS = 40


def _chord_parameters(points: np.ndarray) -> np.ndarray:
    chords = np.sqrt(((np.diff(points, axis=0)) ** 2).sum(axis=1))
    u = np.concatenate(([0.0], np.cumsum(chords)))
    return u / u[-1]

_GLYPH_PARAMS = _chord_parameters(_GLYPH_POINTS)


def _hermite_tangents(points: np.ndarray, u: np.ndarray) -> np.ndarray:
    tangents = np.empty_like(points)
    tangents[0] = (points[1] - points[0]) / (u[1] - u[0])
    tangents[-1] = (points[-1] - points[-2]) / (u[-1] - u[-2])
    tangents[1:-1] = (points[2:] - points[:-2]) / (u[2:] - u[:-2])[:, None]
    return tangents

_GLYPH_TANGENTS = _hermite_tangents(_GLYPH_POINTS, _GLYPH_PARAMS)


def glyph_curve(latents: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Evaluate the deformed glyph at canonical times s in [0, 1] -> [len(s), 2].

    Latent coordinates control slant (shear of x by y), width (x scale), and
    apex height (y scale); missing trailing latents default to zero, which
    yields the canonical curve.
    """
    z = np.zeros(3)
    z[:len(latents)] = latents
    s = np.asarray(s, dtype=np.float64)
    if np.any(s < 0.0) or np.any(s > 1.0):
        raise ValueError("glyph parameter must lie in [0, 1]")

    seg = np.clip(np.searchsorted(_GLYPH_PARAMS, s, side="right") - 1, 0, len(_GLYPH_PARAMS) - 2)
    u0 = _GLYPH_PARAMS[seg]
    du = _GLYPH_PARAMS[seg + 1] - u0
    w = (s - u0) / du
    h00 = (1.0 + 2.0 * w) * (1.0 - w) ** 2
    h10 = w * (1.0 - w) ** 2
    h01 = w * w * (3.0 - 2.0 * w)
    h11 = w * w * (w - 1.0)
    p0, p1 = _GLYPH_POINTS[seg], _GLYPH_POINTS[seg + 1]
    m0, m1 = _GLYPH_TANGENTS[seg] * du[:, None], _GLYPH_TANGENTS[seg + 1] * du[:, None]
    curve = (h00[:, None] * p0 + h10[:, None] * m0 + h01[:, None] * p1 + h11[:, None] * m1)

    width = 1.0 + 0.35 * z[1]
    apex = 1.0 + 0.35 * z[2]
    out = np.empty_like(curve)
    out[:, 1] = curve[:, 1] * apex
    out[:, 0] = curve[:, 0] * width + 0.35 * z[0] * out[:, 1]
    return out * _GLYPH_SCALE


@dataclass(frozen=True)
class LabeledTrajectory:
    """Synthetic sample with its generating latents and time warp."""

    trajectory: Trajectory
    latents: np.ndarray
    warp: WarpCoefficients


def synth_dataset(rng: np.random.Generator, count: int, length: int = 200,
                  latent_dim: int = 2, timing_spread: float = 0.5) -> list[LabeledTrajectory]:
    """Generate glyph trajectories with known spatial and timing factors.

    Each sample draws latent coordinates uniform in [-1, 1], a random warp
    with slopes in [1 - spread, 1 + spread] and mean 1, and evaluates the
    deformed glyph at the warped uniform grid.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if latent_dim not in (1, 2, 3):
        raise ValueError("latent_dim must be 1, 2, or 3")
    grid = np.linspace(0.0, 1.0, length)
    out = []
    for _ in range(count):
        latents = rng.uniform(-1.0, 1.0, latent_dim)
        warp = random_coefficients(rng, _SYNTH_WARP_SEGMENTS, timing_spread)
        samples = glyph_curve(latents, warp_eval(warp, grid))
        traj = Trajectory(samples=samples, channels=("x", "y"))
        out.append(LabeledTrajectory(trajectory=traj, latents=latents, warp=warp))
    return out


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    """Train/test split of trajectories, optionally with synthesis labels."""

    train: list[Trajectory] = field(default_factory=list)
    test: list[Trajectory] = field(default_factory=list)

    def split(self, name: str) -> list[Trajectory]:
        if name == "train":
            return self.train
        if name == "test":
            return self.test
        raise ValueError(f"unknown split {name!r}")


def save_csv(path, traj: Trajectory) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# channels: " + ",".join(traj.channels) + "\n")
        for row in traj.samples:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_csv(path) -> Trajectory:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("# channels:"):
        raise ValueError(f"{path}: first line must be '# channels: <names>'")
    channels = tuple(name.strip() for name in lines[0].split(":", 1)[1].split(","))
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(channels):
            raise ValueError(f"{path}:{lineno}: expected {len(channels)} values, got {len(cells)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
    if len(rows) < 2:
        raise ValueError(f"{path}: trajectory needs at least two rows")
    return Trajectory(samples=np.array(rows), channels=channels)


def save_manifest(path, entries: list[tuple[str, str]]) -> None:
    """entries are (relative csv path, split) pairs."""
    with open(path, "w", encoding="utf-8") as fh:
        for rel, split in entries:
            fh.write(f"{rel},{split}\n")


def load_dataset(manifest_path) -> Dataset:
    """Load the trajectories listed in a manifest of `path,split` lines."""
    import os

    base = os.path.dirname(os.fspath(manifest_path))
    dataset = Dataset()
    with open(manifest_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.rsplit(",", 1)
            if len(parts) != 2 or parts[1] not in ("train", "test"):
                raise ValueError(f"{manifest_path}:{lineno}: expected 'path,train|test'")
            traj = load_csv(os.path.join(base, parts[0]))
            dataset.split(parts[1]).append(traj)
    if not dataset.train and not dataset.test:
        raise ValueError(f"{manifest_path}: manifest lists no trajectories")
    return dataset
