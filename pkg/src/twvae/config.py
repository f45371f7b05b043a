"""Flat `key = value` run configuration with strict validation.

Unknown keys are hard errors (they are almost always hyperparameter typos),
and every invalid field is reported, not just the first. List values are
comma-separated integers; an empty value is the empty list.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Any

from .models import ModelConfig

TABLE_DEFAULTS = {
    "spatial_channels": (16, 32, 64, 32),
    "spatial_strides": (1, 2, 2, 2),
    "temporal_channels": (16, 32, 32, 64, 64, 64),
    "temporal_strides": (1, 2, 1, 2, 1, 2),
    "g_widths": (500, 500),
    "tz_widths": (200,),
}


class ConfigError(ValueError):
    """Carries every validation problem found in a config."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass
class RunConfig:
    variant: str = "timewarp_vae"
    latent_dim: int = 3
    warp_segments: int = 50
    decoder_width: int = 64
    spatial_channels: tuple[int, ...] | None = None
    spatial_strides: tuple[int, ...] | None = None
    temporal_channels: tuple[int, ...] | None = None
    temporal_strides: tuple[int, ...] | None = None
    g_widths: tuple[int, ...] | None = None
    tz_widths: tuple[int, ...] | None = None
    beta_fc_channels: int = 32
    beta_conv_channels: tuple[int, ...] = (20, 20)
    recon_variance: float = 0.01
    beta: float = 0.01
    warp_lambda: float = 0.05
    init_slope: float = 10.0
    init_margin: float = 0.1
    train_T: int = 200
    seed: int = 0
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 0.0001
    augment: bool = True
    aug_eta: float = 0.1
    dataset: str = ""
    synth_count: int = 0
    synth_latent_dims: int = 2
    synth_spread: float = 0.5
    synth_train_frac: float = 0.667
    out: str = ""
    checkpoint_every: int = 0
    explicit_keys: set[str] = field(default_factory=set, repr=False)

    def resolved_widths(self) -> dict[str, tuple[int, ...]]:
        out = {}
        for name, default in TABLE_DEFAULTS.items():
            value = getattr(self, name)
            if value is None:
                value = () if (name == "tz_widths" and self.variant == "no_nonlinearity") else default
            out[name] = value
        return out

    def model_config(self, n_channels: int) -> ModelConfig:
        return ModelConfig(
            variant=self.variant,
            n_channels=n_channels,
            latent_dim=self.latent_dim,
            train_length=self.train_T,
            warp_segments=self.warp_segments,
            decoder_width=self.decoder_width,
            beta_fc_channels=self.beta_fc_channels,
            beta_conv_channels=self.beta_conv_channels,
            recon_variance=self.recon_variance,
            beta=self.beta,
            warp_lambda=self.warp_lambda,
            init_slope=self.init_slope,
            init_margin=self.init_margin,
            **self.resolved_widths())


_INT_LIST_KEYS = {"spatial_channels", "spatial_strides", "temporal_channels",
                  "temporal_strides", "g_widths", "tz_widths", "beta_conv_channels"}
_SKIP_KEYS = {"explicit_keys"}


def _parse_value(key: str, raw: str, kind: type) -> Any:
    raw = raw.strip()
    if key in _INT_LIST_KEYS:
        if raw == "":
            return ()
        return tuple(int(part) for part in raw.split(","))
    if kind is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    """Parse `key = value` lines; `#` starts a comment. All problems at once."""
    kinds = {f.name: type(getattr(RunConfig(), f.name)) for f in fields(RunConfig)
             if f.name not in _SKIP_KEYS}
    values: dict[str, Any] = {}
    explicit: set[str] = set()
    problems: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            problems.append(f"{source}:{lineno}: expected 'key = value', got {stripped!r}")
            continue
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in kinds:
            problems.append(f"{source}:{lineno}: unknown key {key!r}")
            continue
        if key in explicit:
            problems.append(f"{source}:{lineno}: duplicate key {key!r}")
            continue
        explicit.add(key)
        kind = tuple if key in _INT_LIST_KEYS else kinds[key]
        try:
            values[key] = _parse_value(key, raw, kind)
        except ValueError as exc:
            problems.append(f"{source}:{lineno}: bad value for {key!r}: {exc}")
    # validate whatever parsed so one report covers every bad field
    cfg = RunConfig(**values)
    cfg.explicit_keys = explicit
    _validate(cfg, problems)
    if problems:
        raise ConfigError(problems)
    return cfg


def _validate(cfg: RunConfig, problems: list[str]) -> None:
    def check(ok: bool, message: str):
        if not ok:
            problems.append(message)

    from .models import VARIANTS

    check(cfg.variant in VARIANTS, f"variant must be one of {VARIANTS}, got {cfg.variant!r}")
    check(cfg.latent_dim >= 1, "latent_dim must be >= 1")
    check(cfg.warp_segments >= 1, "warp_segments must be >= 1")
    check(cfg.decoder_width >= 1, "decoder_width must be >= 1")
    check(cfg.recon_variance > 0.0, "recon_variance must be positive")
    check(cfg.beta >= 0.0, "beta must be nonnegative")
    check(cfg.warp_lambda >= 0.0, "warp_lambda must be nonnegative")
    check(cfg.init_slope > 0.0, "init_slope must be positive")
    check(cfg.init_margin >= 0.0, "init_margin must be nonnegative")
    check(cfg.train_T >= 2, "train_T must be >= 2")
    check(cfg.epochs >= 1, "epochs must be >= 1")
    check(cfg.batch_size >= 1, "batch_size must be >= 1")
    check(cfg.learning_rate >= 0.0, "learning_rate must be nonnegative")
    check(cfg.aug_eta >= 0.0, "aug_eta must be nonnegative")
    check(cfg.checkpoint_every >= 0, "checkpoint_every must be nonnegative")
    if cfg.variant == "no_nonlinearity" and cfg.tz_widths not in (None, ()):
        problems.append("no_nonlinearity requires empty tz_widths")
    if cfg.dataset and cfg.synth_count:
        problems.append("set either dataset or synth_count, not both")
    if not cfg.dataset and not cfg.synth_count:
        problems.append("one of dataset or synth_count is required")
    if cfg.synth_count:
        check(cfg.synth_count >= 1, "synth_count must be >= 1")
        check(cfg.synth_latent_dims in (1, 2, 3), "synth_latent_dims must be 1, 2, or 3")
        check(0.0 <= cfg.synth_spread < 1.0, "synth_spread must lie in [0, 1)")
        check(0.0 < cfg.synth_train_frac <= 1.0, "synth_train_frac must lie in (0, 1]")


def parse_config_file(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=str(path))


def serialize_config(cfg: RunConfig) -> str:
    """Deterministic round-trippable text form (field order, 17 digits)."""
    lines = []
    for f in fields(RunConfig):
        if f.name in _SKIP_KEYS:
            continue
        value = getattr(cfg, f.name)
        if value is None:
            value = cfg.resolved_widths()[f.name]
        if isinstance(value, tuple):
            text = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = f"{value:.17g}"
        else:
            text = str(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"
