"""Checkpoint binary format: round trips, byte identity, error surfaces."""

import numpy as np
import pytest

from twvae.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from twvae.config import parse_config_text
from twvae.data import PreprocessStats
from twvae.models import build_model
from twvae.tensor import make_rng

CONFIG = ("synth_count = 8\nepochs = 1\nlatent_dim = 2\ntrain_T = 16\nwarp_segments = 4\n"
          "decoder_width = 4\nspatial_channels = 3,4\nspatial_strides = 2,2\n"
          "temporal_channels = 3,4\ntemporal_strides = 2,2\ng_widths = 8\ntz_widths = 6\n")


def make_bundle_and_stats(seed=0):
    cfg = parse_config_text(CONFIG)
    bundle = build_model(cfg.model_config(2), make_rng(seed))
    stats = PreprocessStats(means=np.array([0.25, -1.5]), position_scale=1.75,
                            quaternion_scale=1.0, mode="planar")
    return bundle, stats, cfg


def test_save_load_round_trip(tmp_path):
    bundle, stats, cfg = make_bundle_and_stats()
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, bundle, stats, cfg)
    assert path.read_bytes().startswith(MAGIC)
    loaded, loaded_stats, loaded_cfg = load_checkpoint(path)
    assert loaded.params.keys() == bundle.params.keys()
    for name in bundle.params:
        assert np.array_equal(loaded.params[name].data,
                              bundle.params[name].data.astype(np.float32).astype(np.float64))
    assert np.allclose(loaded_stats.means, stats.means, atol=1e-7)
    assert loaded_stats.mode == "planar"
    assert loaded_cfg.warp_segments == cfg.warp_segments


def test_save_load_save_is_byte_identical(tmp_path):
    bundle, stats, cfg = make_bundle_and_stats()
    p1 = tmp_path / "a.ckpt"
    p2 = tmp_path / "b.ckpt"
    save_checkpoint(p1, bundle, stats, cfg)
    loaded, loaded_stats, loaded_cfg = load_checkpoint(p1)
    save_checkpoint(p2, loaded, loaded_stats, loaded_cfg)
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic_is_rejected(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOTAMODEL" + b"\x00" * 32)
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(path)


def test_truncated_checkpoint_is_rejected(tmp_path):
    bundle, stats, cfg = make_bundle_and_stats()
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, bundle, stats, cfg)
    clipped = tmp_path / "clipped.ckpt"
    clipped.write_bytes(path.read_bytes()[:100])
    with pytest.raises(ValueError, match="truncated"):
        load_checkpoint(clipped)
