"""Loss terms, training loop, rate/distortion evaluation, and baselines."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .alignment import aligned_rmse
from .data import Trajectory, augment_batch, resample
from .models import ForwardResult, ModelBundle, decode_latent, encode_spatial, forward
from .optim import AdamState, adam_step
from .tensor import Tensor, backward

LN2 = math.log(2.0)


@dataclass(frozen=True)
class LossBreakdown:
    reconstruction: float
    kl: float
    warp_reg: float

    @property
    def total(self) -> float:
        return self.reconstruction + self.kl + self.warp_reg


@dataclass
class EpochMetrics:
    epoch: int
    loss: LossBreakdown
    wallclock_ms: float


@dataclass
class EvalReport:
    """Rate in bits plus aligned reconstruction errors per split."""

    rate_bits: float | None
    train_aligned_rmse: float
    test_aligned_rmse: float
    train_errors: list[float]
    test_errors: list[float]
    epoch: int = 0


class TrainingDiverged(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# loss terms
# ---------------------------------------------------------------------------

def loss_reconstruction(x, recon, recon_variance: float) -> Tensor:
    """Mean squared row distance between target and reconstruction / sigma^2."""
    x_t, r_t = T.as_tensor(x), T.as_tensor(recon)
    if x_t.shape != r_t.shape:
        raise ValueError(f"shape mismatch: target {x_t.shape} vs reconstruction {r_t.shape}")
    rows = int(np.prod(x_t.shape[:-1]))
    return T.scale(T.tsum(T.square(T.sub(r_t, x_t))), 1.0 / (rows * recon_variance))


def loss_kl(code, beta: float) -> Tensor:
    """Diagonal-Gaussian KL to the standard normal prior, averaged over the
    batch and weighted by beta: 0.5 * sum(mean^2 + var - log var - 1)."""
    mean, log_var = T.as_tensor(code.mean), T.as_tensor(code.log_var)
    per_dim = T.sub(T.add(T.square(mean), T.exp(log_var)), T.add(log_var, T.as_tensor(1.0)))
    batch = 1 if mean.ndim == 1 else mean.shape[0]
    return T.scale(T.tsum(per_dim), 0.5 * beta / batch)


def loss_warp_reg(slopes, warp_lambda: float) -> Tensor:
    """Batch-mean slope penalty (1/K) * sum((slope - 1) * log(slope))."""
    s = T.as_tensor(slopes)
    penalty = T.tsum(T.mul(T.sub(s, T.as_tensor(1.0)), T.log(s)))
    return T.scale(penalty, warp_lambda / s.data.size)


def _aligned_reconstruction_loss(x: np.ndarray, result: ForwardResult,
                                 recon_variance: float) -> Tensor:
    """Reconstruction term for the per-step-DTW variant: mean squared distance
    over aligned pairs, averaged per trajectory then over the batch."""
    batch = x.shape[0]
    b_idx, r_idx, weights, targets = [], [], [], []
    for i, pairs in enumerate(result.dtw_pairs):
        n_pairs = pairs.shape[0]
        b_idx.append(np.full(n_pairs, i))
        r_idx.append(pairs[:, 1])
        targets.append(x[i, pairs[:, 0]])
        weights.append(np.full(n_pairs, 1.0 / n_pairs))
    picked = T.gather_time(result.recon, np.concatenate(b_idx), np.concatenate(r_idx))
    sq = T.square(T.sub(picked, Tensor(np.concatenate(targets))))
    weighted = T.mul(sq, Tensor(np.concatenate(weights)[:, None]))
    return T.scale(T.tsum(weighted), 1.0 / (batch * recon_variance))


def batch_loss(bundle: ModelBundle, x: np.ndarray,
               rng: np.random.Generator | None = None,
               train: bool = False) -> tuple[Tensor, LossBreakdown]:
    """Total variant loss on a batch [B, T, n]; returns the graph root and the
    detached per-term breakdown."""
    c = bundle.config
    result = forward(bundle, x, rng=rng, train=train)
    if c.variant == "timewarp_vae_dtw":
        recon = _aligned_reconstruction_loss(x, result, c.recon_variance)
    else:
        recon = loss_reconstruction(x, result.recon, c.recon_variance)
    kl = loss_kl(result.code, c.beta)
    terms = [recon, kl]
    warp_val = 0.0
    if result.warp_slopes is not None:
        warp = loss_warp_reg(result.warp_slopes, c.warp_lambda)
        terms.append(warp)
        warp_val = warp.item()
    total = terms[0]
    for term in terms[1:]:
        total = T.add(total, term)
    return total, LossBreakdown(reconstruction=recon.item(), kl=kl.item(), warp_reg=warp_val)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainSettings:
    epochs: int
    batch_size: int = 64
    learning_rate: float = 1e-4
    augment: bool = True
    aug_eta: float = 0.1


def train(bundle: ModelBundle, trajectories: list[Trajectory], settings: TrainSettings,
          rng: np.random.Generator, on_epoch=None) -> list[EpochMetrics]:
    """Minibatch Adam on the variant loss; deterministic given the rng seed.

    With augmentation on, every sample is resampled through a fresh timing
    noise function each epoch; otherwise the uniform resampling is cached.
    Epoch metrics are sample-weighted means over the epoch's batches.
    """
    if not trajectories:
        raise ValueError("training requires a nonempty dataset")
    c = bundle.config
    length = c.train_length
    base = np.stack([resample(t, length).samples for t in trajectories])
    n_samples = base.shape[0]
    state = AdamState(learning_rate=settings.learning_rate)
    history: list[EpochMetrics] = []

    for epoch in range(1, settings.epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(n_samples)
        sums = np.zeros(3)
        for lo in range(0, n_samples, settings.batch_size):
            idx = order[lo:lo + settings.batch_size]
            if settings.augment:
                x = augment_batch([trajectories[i] for i in idx], length, rng, settings.aug_eta)
            else:
                x = base[idx]
            total, parts = batch_loss(bundle, x, rng=rng, train=True)
            if not np.isfinite(parts.total):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch starting at sample {lo}: {parts}")
            bundle.zero_grads()
            backward(total, bundle.params.values())
            adam_step(bundle.params, state)
            sums += np.array([parts.reconstruction, parts.kl, parts.warp_reg]) * idx.size
        mean = sums / n_samples
        metrics = EpochMetrics(
            epoch=epoch,
            loss=LossBreakdown(reconstruction=mean[0], kl=mean[1], warp_reg=mean[2]),
            wallclock_ms=(time.perf_counter() - start) * 1e3)
        history.append(metrics)
        if on_epoch is not None:
            on_epoch(metrics)
    return history


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _kl_nats(code) -> np.ndarray:
    z = np.atleast_2d(code.mean.data)
    lv = np.atleast_2d(code.log_var.data)
    return 0.5 * (z ** 2 + np.exp(lv) - lv - 1.0).sum(axis=1)


def rate_bits_of(code) -> float:
    """Mean unweighted KL of the codes, converted from nats to bits."""
    return float(_kl_nats(code).mean() / LN2)


def _split_errors(bundle: ModelBundle, trajectories: list[Trajectory]):
    x = np.stack([resample(t, bundle.config.train_length).samples for t in trajectories])
    result = forward(bundle, x, train=False)
    recon = result.recon.data
    errors = [aligned_rmse(x[i], recon[i]) for i in range(x.shape[0])]
    return errors, result.code


def evaluate(bundle: ModelBundle, train_set: list[Trajectory], test_set: list[Trajectory],
             epoch: int = 0) -> EvalReport:
    """Noise-free aligned RMSE on both splits plus the train-set rate in bits."""
    train_errors, train_code = _split_errors(bundle, train_set)
    test_errors, _ = _split_errors(bundle, test_set)
    return EvalReport(
        rate_bits=rate_bits_of(train_code),
        train_aligned_rmse=float(np.mean(train_errors)),
        test_aligned_rmse=float(np.mean(test_errors)),
        train_errors=train_errors,
        test_errors=test_errors,
        epoch=epoch)


def pca_baseline(train_set: list[Trajectory], test_set: list[Trajectory],
                 latent_dim: int) -> EvalReport:
    """PCA on flattened trajectories; aligned RMSE like the models, no rate."""
    lengths = {t.length for t in train_set} | {t.length for t in test_set}
    if len(lengths) != 1:
        raise ValueError("pca_baseline requires all trajectories at a common length")
    flat_train = np.stack([t.samples.reshape(-1) for t in train_set])
    flat_test = np.stack([t.samples.reshape(-1) for t in test_set])
    if latent_dim > min(flat_train.shape):
        raise ValueError(f"latent_dim {latent_dim} exceeds data rank bound {min(flat_train.shape)}")
    mean = flat_train.mean(axis=0)
    _, _, vt = np.linalg.svd(flat_train - mean, full_matrices=False)
    basis = vt[:latent_dim]

    def split_errors(flat, trajs):
        recon = mean + ((flat - mean) @ basis.T) @ basis
        return [aligned_rmse(t.samples, r.reshape(t.samples.shape))
                for t, r in zip(trajs, recon)]

    train_errors = split_errors(flat_train, train_set)
    test_errors = split_errors(flat_test, test_set)
    return EvalReport(
        rate_bits=None,
        train_aligned_rmse=float(np.mean(train_errors)),
        test_aligned_rmse=float(np.mean(test_errors)),
        train_errors=train_errors,
        test_errors=test_errors)


def interpolate_latent(bundle: ModelBundle, x_a, x_b, alpha: float) -> np.ndarray:
    """Decode the blend of two latent means on the uniform canonical grid."""
    z_a = encode_spatial(bundle, _traj_array(x_a)).mean.data
    z_b = encode_spatial(bundle, _traj_array(x_b)).mean.data
    return decode_latent(bundle, (1.0 - alpha) * z_a + alpha * z_b)


def _traj_array(x) -> np.ndarray:
    return np.asarray(getattr(x, "samples", x), dtype=np.float64)
