"""Model variants: factorized time-warping autoencoder, its ablations, and the
convolutional beta-VAE baseline.

All variants share the convolutional spatial encoder (two fully connected
heads for the latent mean and log-variance). Warping variants add a
convolutional temporal encoder whose softmax-scaled output parameterizes a
piecewise-linear time warp. The factorized decoder maps a latent vector to an
n x m matrix and a canonical time to an m-vector; their product is the
reconstructed position.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .alignment import dtw_align
from .nn import Conv1d, Linear, time_input_linear
from .tensor import Tensor
from .timewarp import basis_matrix, coefficients_from_logits

VARIANTS = ("timewarp_vae", "beta_vae", "no_timewarp", "no_nonlinearity", "timewarp_vae_dtw")
KERNEL_SIZE = 3
LOG_VAR_CLAMP = 20.0


def conv_out_length(length: int, stride: int, kernel_size: int = KERNEL_SIZE) -> int:
    pad = (kernel_size - 1) // 2
    return (length + 2 * pad - kernel_size) // stride + 1


def trunk_length(length: int, strides: tuple[int, ...]) -> int:
    for s in strides:
        length = conv_out_length(length, s)
    return length


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and loss hyperparameters for one model variant."""

    variant: str
    n_channels: int
    latent_dim: int = 3
    train_length: int = 200
    warp_segments: int = 50
    decoder_width: int = 64
    spatial_channels: tuple[int, ...] = (16, 32, 64, 32)
    spatial_strides: tuple[int, ...] = (1, 2, 2, 2)
    temporal_channels: tuple[int, ...] = (16, 32, 32, 64, 64, 64)
    temporal_strides: tuple[int, ...] = (1, 2, 1, 2, 1, 2)
    g_widths: tuple[int, ...] = (500, 500)
    tz_widths: tuple[int, ...] = (200,)
    beta_fc_channels: int = 32
    beta_conv_channels: tuple[int, ...] = (20, 20)
    recon_variance: float = 0.01
    beta: float = 0.01
    warp_lambda: float = 0.05
    init_slope: float = 10.0
    init_margin: float = 0.1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.latent_dim < 1 or self.warp_segments < 1 or self.decoder_width < 1:
            raise ValueError("latent_dim, warp_segments, and decoder_width must be >= 1")
        if self.n_channels < 1 or self.train_length < 2:
            raise ValueError("n_channels must be >= 1 and train_length >= 2")
        if self.recon_variance <= 0.0:
            raise ValueError("recon_variance must be positive")
        if self.beta < 0.0 or self.warp_lambda < 0.0:
            raise ValueError("beta and warp_lambda must be nonnegative")
        if len(self.spatial_channels) != len(self.spatial_strides):
            raise ValueError("spatial_channels and spatial_strides must have equal length")
        if len(self.temporal_channels) != len(self.temporal_strides):
            raise ValueError("temporal_channels and temporal_strides must have equal length")
        if self.variant == "no_nonlinearity" and self.tz_widths:
            raise ValueError("no_nonlinearity requires an empty tz_widths (linear latent map)")
        if not self.g_widths and self.variant != "beta_vae":
            raise ValueError("g_widths must name at least one hidden layer")
        if self.variant == "beta_vae":
            up = 2 ** (len(self.beta_conv_channels) + 1)
            if self.spatial_trunk_length * up != self.train_length:
                raise ValueError(
                    f"beta decoder upsamples {self.spatial_trunk_length} -> "
                    f"{self.spatial_trunk_length * up}, but train_length is {self.train_length}")

    @property
    def spatial_trunk_length(self) -> int:
        return trunk_length(self.train_length, self.spatial_strides)

    @property
    def temporal_trunk_length(self) -> int:
        return trunk_length(self.train_length, self.temporal_strides)

    @property
    def has_temporal_encoder(self) -> bool:
        return self.variant in ("timewarp_vae", "no_nonlinearity")

    @property
    def has_factorized_decoder(self) -> bool:
        return self.variant != "beta_vae"

    def ignored_fields(self, explicit: set[str]) -> list[str]:
        """Config keys that this variant ignores, out of those explicitly set."""
        if self.variant in ("beta_vae", "no_timewarp", "timewarp_vae_dtw"):
            return sorted(explicit & {"warp_segments", "warp_lambda"})
        return []


@dataclass
class LatentCode:
    """Encoder output: latent mean and per-dimension log-variance."""

    mean: Tensor
    log_var: Tensor


@dataclass
class ForwardResult:
    recon: Tensor
    code: LatentCode
    warp_slopes: Tensor | None = None
    dtw_pairs: list[np.ndarray] | None = None


@dataclass
class ModelBundle:
    """All learnable parameters of one variant, keyed by canonical names."""

    config: ModelConfig
    params: dict[str, Tensor] = field(default_factory=dict)
    _layers: dict = field(default_factory=dict, repr=False)
    _basis_cache: dict = field(default_factory=dict, repr=False)

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.grad = None

    def _register(self, name: str, layer) -> None:
        self._layers[name] = layer
        self.params[f"{name}.weight"] = layer.weight
        if layer.bias is not None:
            self.params[f"{name}.bias"] = layer.bias

    def basis_transpose(self, times: np.ndarray) -> Tensor:
        key = (times.shape[0], float(times[0]), float(times[-1]))
        cached = self._basis_cache.get(key)
        if cached is None or cached.data.shape[1] != times.shape[0]:
            cached = Tensor(basis_matrix(times, self.config.warp_segments).T)
            self._basis_cache[key] = cached
        return cached


def build_model(config: ModelConfig, rng: np.random.Generator) -> ModelBundle:
    """Create a bundle with freshly initialized parameters.

    Layer creation order is fixed so a seed fully determines every tensor:
    spatial trunk, spatial heads, temporal trunk and head, decoder.
    """
    bundle = ModelBundle(config=config)
    c = config

    in_ch = c.n_channels
    for i, (out_ch, stride) in enumerate(zip(c.spatial_channels, c.spatial_strides)):
        bundle._register(f"spatial.conv{i}", Conv1d(in_ch, out_ch, KERNEL_SIZE, stride, rng))
        in_ch = out_ch
    flat = c.spatial_channels[-1] * c.spatial_trunk_length
    bundle._register("spatial.mean", Linear(flat, c.latent_dim, rng))
    bundle._register("spatial.logvar", Linear(flat, c.latent_dim, rng))

    if c.has_temporal_encoder:
        in_ch = c.n_channels
        for i, (out_ch, stride) in enumerate(zip(c.temporal_channels, c.temporal_strides)):
            bundle._register(f"temporal.conv{i}", Conv1d(in_ch, out_ch, KERNEL_SIZE, stride, rng))
            in_ch = out_ch
        bundle._register("temporal.head",
                         Linear(c.temporal_channels[-1] * c.temporal_trunk_length, c.warp_segments, rng))

    if c.has_factorized_decoder:
        bundle._register("decoder.time.fc0",
                         time_input_linear(c.g_widths[0], c.init_slope, c.init_margin, rng))
        for i in range(1, len(c.g_widths)):
            bundle._register(f"decoder.time.fc{i}", Linear(c.g_widths[i - 1], c.g_widths[i], rng))
        bundle._register("decoder.time.out", Linear(c.g_widths[-1], c.decoder_width, rng))
        width = c.latent_dim
        for i, w in enumerate(c.tz_widths):
            bundle._register(f"decoder.latent.fc{i}", Linear(width, w, rng))
            width = w
        out_dim = c.n_channels * c.decoder_width
        # the linear ablation keeps the latent map bias-free so the decoder is
        # exactly linear (not just affine) in the latent vector
        bundle._register("decoder.latent.out",
                         Linear(width, out_dim, rng, bias=c.variant != "no_nonlinearity"))
    else:
        base_len = c.spatial_trunk_length
        bundle._register("decoder.fc", Linear(c.latent_dim, c.beta_fc_channels * base_len, rng))
        in_ch = c.beta_fc_channels
        for i, out_ch in enumerate(tuple(c.beta_conv_channels) + (c.n_channels,)):
            bundle._register(f"decoder.conv{i}", Conv1d(in_ch, out_ch, KERNEL_SIZE, 1, rng))
            in_ch = out_ch
    return bundle


# ---------------------------------------------------------------------------
# encoding / decoding
# ---------------------------------------------------------------------------

def _as_batched(x, config: ModelConfig) -> tuple[Tensor, bool]:
    t = T.as_tensor(x)
    if t.ndim == 2:
        t = T.reshape(t, (1,) + t.shape)
        single = True
    elif t.ndim == 3:
        single = False
    else:
        raise ValueError(f"expected [T, n] or [B, T, n] input, got shape {t.shape}")
    if t.shape[1] != config.train_length or t.shape[2] != config.n_channels:
        raise ValueError(
            f"input shape {t.shape[1:]} does not match configured "
            f"({config.train_length}, {config.n_channels})")
    return t, single


def _conv_trunk(bundle: ModelBundle, prefix: str, x: Tensor, n_layers: int) -> Tensor:
    h = T.transpose(x, (0, 2, 1))  # [B, n, T]
    for i in range(n_layers):
        h = T.relu(bundle._layers[f"{prefix}.conv{i}"](h))
    batch = h.shape[0]
    return T.reshape(h, (batch, h.shape[1] * h.shape[2]))


def encode_spatial(bundle: ModelBundle, x) -> LatentCode:
    """Map trajectories to latent mean and clamped log-variance."""
    xb, single = _as_batched(x, bundle.config)
    flat = _conv_trunk(bundle, "spatial", xb, len(bundle.config.spatial_channels))
    mean = bundle._layers["spatial.mean"](flat)
    log_var = T.clamp(bundle._layers["spatial.logvar"](flat), -LOG_VAR_CLAMP, LOG_VAR_CLAMP)
    if single:
        mean = T.reshape(mean, (bundle.config.latent_dim,))
        log_var = T.reshape(log_var, (bundle.config.latent_dim,))
    return LatentCode(mean=mean, log_var=log_var)


def encode_temporal(bundle: ModelBundle, x) -> Tensor:
    """Map trajectories to positive, mean-one warp slopes (softmax scaled by K)."""
    if not bundle.config.has_temporal_encoder:
        raise ValueError(f"variant {bundle.config.variant!r} has no temporal encoder")
    xb, single = _as_batched(x, bundle.config)
    flat = _conv_trunk(bundle, "temporal", xb, len(bundle.config.temporal_channels))
    slopes = coefficients_from_logits(bundle._layers["temporal.head"](flat))
    if single:
        slopes = T.reshape(slopes, (bundle.config.warp_segments,))
    return slopes


def _decode_batched(bundle: ModelBundle, s: Tensor, z: Tensor) -> Tensor:
    """Factorized decode: s [B, T], z [B, latent] -> [B, T, n]."""
    c = bundle.config
    batch, steps = s.shape
    h = T.reshape(s, (batch * steps, 1))
    for i in range(len(c.g_widths)):
        h = T.elu(bundle._layers[f"decoder.time.fc{i}"](h))
    g_out = T.reshape(bundle._layers["decoder.time.out"](h), (batch, steps, c.decoder_width))

    zh = z
    for i in range(len(c.tz_widths)):
        zh = T.elu(bundle._layers[f"decoder.latent.fc{i}"](zh))
    latent_map = T.reshape(bundle._layers["decoder.latent.out"](zh),
                           (batch, c.n_channels, c.decoder_width))
    return T.matmul(g_out, T.transpose(latent_map, (0, 2, 1)))


def decode(bundle: ModelBundle, s, z) -> Tensor:
    """Decode positions at canonical times s (vector or scalar) for one latent z."""
    if not bundle.config.has_factorized_decoder:
        raise ValueError("beta_vae decodes whole trajectories; use decode_latent")
    s_t = T.as_tensor(np.atleast_1d(s) if not isinstance(s, Tensor) else s)
    if np.any(s_t.data < 0.0) or np.any(s_t.data > 1.0):
        raise ValueError("canonical time must lie in [0, 1]")
    z_t = T.as_tensor(z)
    steps = s_t.data.size
    out = _decode_batched(bundle, T.reshape(s_t, (1, steps)), T.reshape(z_t, (1, -1)))
    return T.reshape(out, (steps, bundle.config.n_channels))


def _decode_beta(bundle: ModelBundle, z: Tensor) -> Tensor:
    c = bundle.config
    batch = z.shape[0]
    h = bundle._layers["decoder.fc"](z)
    h = T.reshape(h, (batch, c.beta_fc_channels, c.spatial_trunk_length))
    n_convs = len(c.beta_conv_channels) + 1
    for i in range(n_convs):
        h = bundle._layers[f"decoder.conv{i}"](T.repeat_time(h, 2))
        if i < n_convs - 1:
            h = T.elu(h)
    return T.transpose(h, (0, 2, 1))


def decode_latent(bundle: ModelBundle, z) -> np.ndarray:
    """Reconstruct a full trajectory on the canonical grid from latent z (no noise)."""
    z_t = T.as_tensor(z)
    batched = z_t.ndim == 2
    if not batched:
        z_t = T.reshape(z_t, (1, -1))
    if bundle.config.has_factorized_decoder:
        grid = Tensor(np.broadcast_to(np.linspace(0.0, 1.0, bundle.config.train_length),
                                      (z_t.shape[0], bundle.config.train_length)).copy())
        out = _decode_batched(bundle, grid, z_t)
    else:
        out = _decode_beta(bundle, z_t)
    return out.data if batched else out.data[0]


def reparameterize(code: LatentCode, rng: np.random.Generator) -> Tensor:
    """Sample from the encoder distribution: mean + exp(log_var / 2) * eps."""
    eps = rng.standard_normal(code.mean.shape)
    return T.add(code.mean, T.mul(T.exp(T.scale(code.log_var, 0.5)), Tensor(eps)))


def forward(bundle: ModelBundle, x, t_grid: np.ndarray | None = None,
            rng: np.random.Generator | None = None, train: bool = False) -> ForwardResult:
    """Reconstruct a batch of trajectories according to the variant.

    With train=True a latent sample is drawn through the reparameterization
    path (rng required); otherwise the latent mean is decoded. A custom
    reconstruction grid is only meaningful for variants with the factorized
    decoder driven by a (possibly identity) time warp.
    """
    c = bundle.config
    xb, single = _as_batched(x, c)
    batch = xb.shape[0]
    code = encode_spatial(bundle, xb)
    if train:
        if rng is None:
            raise ValueError("training forward requires an rng for the latent sample")
        z = reparameterize(code, rng)
    else:
        z = code.mean

    slopes = None
    pairs = None
    if c.variant in ("timewarp_vae", "no_nonlinearity", "no_timewarp"):
        if t_grid is None:
            t_grid = np.linspace(0.0, 1.0, c.train_length)
        if c.variant == "no_timewarp":
            s = Tensor(np.broadcast_to(t_grid, (batch, t_grid.size)).copy())
        else:
            slopes = encode_temporal(bundle, xb)
            s = T.matmul(slopes, bundle.basis_transpose(t_grid))
        recon = _decode_batched(bundle, s, z)
    elif c.variant == "timewarp_vae_dtw":
        if t_grid is not None:
            raise ValueError("timewarp_vae_dtw always decodes on the uniform canonical grid")
        grid = Tensor(np.broadcast_to(np.linspace(0.0, 1.0, c.train_length),
                                      (batch, c.train_length)).copy())
        recon = _decode_batched(bundle, grid, z)
        # forward-only alignment of each reconstruction to its input; gradients
        # flow through the chosen pairings, not through path selection
        pairs = [dtw_align(xb.data[i], recon.data[i])[0].pairs for i in range(batch)]
    else:  # beta_vae
        if t_grid is not None:
            raise ValueError("beta_vae always reconstructs the full training grid")
        recon = _decode_beta(bundle, z)

    if single:
        recon = T.reshape(recon, recon.shape[1:])
        if slopes is not None:
            slopes = T.reshape(slopes, (c.warp_segments,))
    return ForwardResult(recon=recon, code=code, warp_slopes=slopes, dtw_pairs=pairs)


def tiny_config(variant: str, n_channels: int = 2) -> ModelConfig:
    """Small architecture used by gradient checks and fast tests."""
    return ModelConfig(
        variant=variant,
        n_channels=n_channels,
        latent_dim=2,
        train_length=16,
        warp_segments=4,
        decoder_width=4,
        spatial_channels=(3, 4),
        spatial_strides=(2, 2),
        temporal_channels=(3, 4),
        temporal_strides=(2, 2),
        g_widths=(8,),
        tz_widths=() if variant == "no_nonlinearity" else (6,),
        beta_fc_channels=4,
        beta_conv_channels=(4,),
        recon_variance=0.01,
        beta=0.01,
        warp_lambda=0.05,
    )
