"""Command-line surface: dataset synthesis, training, evaluation, latent
interpolation export, and warp inspection.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or validation
failure. All floating-point output uses 17 significant digits so identical
runs produce byte-identical files.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .alignment import dtw_average, uniform_time_average
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, parse_config_file
from .data import (Dataset, Trajectory, fit_preprocess, load_csv, load_dataset,
                   preprocess_mode_for, resample, save_csv, save_manifest, synth_dataset)
from .models import build_model, decode_latent, encode_spatial, encode_temporal, forward
from .tensor import make_rng, tune_allocator
from .timewarp import basis_matrix
from .training import TrainSettings, evaluate, train


class UsageError(ValueError):
    pass


def _fmt(value: float) -> str:
    return f"{value:.17g}"


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    if args.latent_dims not in (1, 2, 3):
        raise UsageError("--latent-dims must be 1, 2, or 3")
    if not 0.0 <= args.timing_spread < 1.0:
        raise UsageError("--timing-spread must lie in [0, 1)")
    if not 0.0 < args.train_frac <= 1.0:
        raise UsageError("--train-frac must lie in (0, 1]")
    if args.samples < 2:
        raise UsageError("--samples must be >= 2")
    os.makedirs(args.out, exist_ok=True)
    items = synth_dataset(make_rng(args.seed), args.count, length=args.samples,
                          latent_dim=args.latent_dims, timing_spread=args.timing_spread)
    n_train = int(round(args.count * args.train_frac))
    width = max(3, len(str(args.count - 1)))
    entries = []
    truth_lines = ["# columns: path, latent values, warp segment slopes"]
    for i, item in enumerate(items):
        name = f"traj_{i:0{width}d}.csv"
        save_csv(os.path.join(args.out, name), item.trajectory)
        entries.append((name, "train" if i < n_train else "test"))
        cells = [name] + [_fmt(v) for v in item.latents] + [_fmt(v) for v in item.warp.slopes]
        truth_lines.append(",".join(cells))
    save_manifest(os.path.join(args.out, "manifest.csv"), entries)
    with open(os.path.join(args.out, "truth.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(truth_lines) + "\n")
    print(f"wrote {args.count} trajectories ({n_train} train) to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _load_or_synth(cfg: RunConfig) -> Dataset:
    if cfg.dataset:
        return load_dataset(cfg.dataset)
    items = synth_dataset(make_rng(cfg.seed), cfg.synth_count, length=cfg.train_T,
                          latent_dim=cfg.synth_latent_dims, timing_spread=cfg.synth_spread)
    n_train = int(round(cfg.synth_count * cfg.synth_train_frac))
    return Dataset(train=[it.trajectory for it in items[:n_train]],
                   test=[it.trajectory for it in items[n_train:]])


def _prepare(cfg: RunConfig):
    dataset = _load_or_synth(cfg)
    if not dataset.train:
        raise ValueError("dataset has no training trajectories")
    mode = preprocess_mode_for(dataset.train[0])
    stats = fit_preprocess(dataset.train, mode)
    train_set = [stats.apply(t) for t in dataset.train]
    test_set = [stats.apply(t) for t in dataset.test]
    return dataset, train_set, test_set, stats


def _write_eval(fh, report) -> None:
    if report.rate_bits is not None:
        fh.write(f"rate_bits = {_fmt(report.rate_bits)}\n")
    fh.write(f"train_aligned_rmse = {_fmt(report.train_aligned_rmse)}\n")
    fh.write(f"test_aligned_rmse = {_fmt(report.test_aligned_rmse)}\n")
    fh.write(f"epoch = {report.epoch}\n")
    for i, err in enumerate(report.train_errors):
        fh.write(f"train_err_{i} = {_fmt(err)}\n")
    for i, err in enumerate(report.test_errors):
        fh.write(f"test_err_{i} = {_fmt(err)}\n")


def cmd_train(args) -> int:
    cfg = parse_config_file(args.config)
    if args.out:
        cfg.out = args.out
    if args.checkpoint_every is not None:
        cfg.checkpoint_every = args.checkpoint_every
    if not cfg.out:
        raise UsageError("an output directory is required (config key 'out' or --out)")
    ignored = cfg.model_config(2).ignored_fields(cfg.explicit_keys & {"warp_segments", "warp_lambda"})
    for key in ignored:
        print(f"warning: variant {cfg.variant!r} ignores config key {key!r}", file=sys.stderr)

    dataset, train_set, test_set, stats = _prepare(cfg)
    n_channels = train_set[0].n_channels
    bundle = build_model(cfg.model_config(n_channels), make_rng(cfg.seed + 1))
    os.makedirs(cfg.out, exist_ok=True)

    ckpt_path = os.path.join(cfg.out, "checkpoint.ckpt")
    metrics_path = os.path.join(cfg.out, "metrics.tsv")
    with open(metrics_path, "w", encoding="utf-8") as metrics_fh:
        def on_epoch(m):
            metrics_fh.write(f"{m.epoch}\t{_fmt(m.loss.reconstruction)}\t{_fmt(m.loss.kl)}\t"
                             f"{_fmt(m.loss.warp_reg)}\t{_fmt(m.loss.total)}\t{m.wallclock_ms:.3f}\n")
            metrics_fh.flush()
            if cfg.checkpoint_every and m.epoch % cfg.checkpoint_every == 0:
                save_checkpoint(os.path.join(cfg.out, f"checkpoint_{m.epoch:06d}.ckpt"),
                                bundle, stats, cfg)

        settings = TrainSettings(epochs=cfg.epochs, batch_size=cfg.batch_size,
                                 learning_rate=cfg.learning_rate, augment=cfg.augment,
                                 aug_eta=cfg.aug_eta)
        train(bundle, train_set, settings, make_rng(cfg.seed + 2), on_epoch=on_epoch)

    save_checkpoint(ckpt_path, bundle, stats, cfg)
    # evaluate through the reloaded checkpoint so cmd_eval reproduces this exactly
    reloaded, reloaded_stats, _ = load_checkpoint(ckpt_path)
    eval_train = [reloaded_stats.apply(t) for t in dataset.train]
    eval_test = [reloaded_stats.apply(t) for t in dataset.test]
    report = evaluate(reloaded, eval_train, eval_test or eval_train, epoch=cfg.epochs)
    with open(os.path.join(cfg.out, "eval.txt"), "w", encoding="utf-8") as fh:
        _write_eval(fh, report)
    print(f"trained {cfg.epochs} epochs; checkpoint at {ckpt_path}")
    return 0


# ---------------------------------------------------------------------------
# eval / interp / warp
# ---------------------------------------------------------------------------

def _load_for_inference(checkpoint_path):
    if not os.path.exists(checkpoint_path):
        raise FileNotFoundError(f"checkpoint not found: {checkpoint_path}")
    return load_checkpoint(checkpoint_path)


def cmd_eval(args) -> int:
    bundle, stats, cfg = _load_for_inference(args.checkpoint)
    dataset = load_dataset(args.manifest)
    expected = stats.means.shape[0]
    for traj in dataset.train + dataset.test:
        if traj.n_channels != expected:
            raise ValueError(f"dataset has {traj.n_channels} channels, "
                             f"checkpoint preprocess.means expects {expected}")
    train_set = [stats.apply(t) for t in dataset.train]
    test_set = [stats.apply(t) for t in dataset.test]
    report = evaluate(bundle, train_set or test_set, test_set or train_set, epoch=cfg.epochs)
    _write_eval(sys.stdout, report)
    return 0


def _reconstruct(bundle, traj: Trajectory) -> np.ndarray:
    return forward(bundle, traj.samples, train=False).recon.data


def _emit_block(fh, name: str, rows: np.ndarray, times: np.ndarray) -> None:
    fh.write(f"# block: {name}\n")
    for t, row in zip(times, rows):
        fh.write("\t".join([_fmt(t)] + [_fmt(v) for v in row]) + "\n")


def cmd_interp(args) -> int:
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    bundle, stats, cfg = _load_for_inference(args.checkpoint)
    traj_a = stats.apply(resample(load_csv(args.a), cfg.train_T))
    traj_b = stats.apply(resample(load_csv(args.b), cfg.train_T))
    grid = np.linspace(0.0, 1.0, cfg.train_T)

    fh = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        _emit_block(fh, "recon_a", _reconstruct(bundle, traj_a), grid)
        _emit_block(fh, "recon_b", _reconstruct(bundle, traj_b), grid)
        z_a = encode_spatial(bundle, traj_a.samples).mean.data
        z_b = encode_spatial(bundle, traj_b.samples).mean.data
        alphas = np.linspace(0.0, 1.0, args.steps + 2)[1:-1]
        for i, alpha in enumerate(alphas):
            blend = decode_latent(bundle, (1.0 - alpha) * z_a + alpha * z_b)
            _emit_block(fh, f"interp_{i:03d}_alpha_{alpha:.6f}", blend, grid)
        _emit_block(fh, "uniform_avg", uniform_time_average(traj_a, traj_b, 0.5), grid)
        dtw_blend = dtw_average(traj_a, traj_b, 0.5)
        path_times = np.linspace(0.0, 1.0, dtw_blend.shape[0])
        _emit_block(fh, "dtw_avg", dtw_blend, path_times)
    finally:
        if args.out:
            fh.close()
    return 0


def cmd_warp(args) -> int:
    bundle, stats, cfg = _load_for_inference(args.checkpoint)
    if not bundle.config.has_temporal_encoder:
        raise UsageError(f"variant {cfg.variant!r} has no time-warper")
    traj = stats.apply(resample(load_csv(args.trajectory), cfg.train_T))
    slopes = encode_temporal(bundle, traj.samples).data
    grid = np.arange(0.0, 1.0 + 1e-12, 1e-3)
    phi = basis_matrix(grid, bundle.config.warp_segments) @ slopes
    out = sys.stdout
    out.write("# theta: " + " ".join(_fmt(v) for v in slopes) + "\n")
    for t, s in zip(grid, phi):
        out.write(f"{_fmt(t)}\t{_fmt(s)}\n")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twvae",
                                     description="trajectory manifold learning with time warping")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic glyph dataset")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--latent-dims", type=int, default=2)
    p.add_argument("--timing-spread", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--train-frac", type=float, default=0.667)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("config")
    p.add_argument("--out", default="")
    p.add_argument("--checkpoint-every", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("interp", help="export latent interpolations and averaging baselines")
    p.add_argument("checkpoint")
    p.add_argument("--a", required=True, help="trajectory CSV")
    p.add_argument("--b", required=True, help="trajectory CSV")
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--out", default="")
    p.set_defaults(func=cmd_interp)

    p = sub.add_parser("warp", help="print the learned warp for one trajectory")
    p.add_argument("checkpoint")
    p.add_argument("trajectory")
    p.set_defaults(func=cmd_warp)
    return parser


def main(argv=None) -> int:
    tune_allocator()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
