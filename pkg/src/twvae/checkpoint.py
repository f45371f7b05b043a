"""Binary checkpoint format.

Layout (all integers little-endian u32):

    magic b"TWVAE1\\n"
    record count
    records: name length, name bytes (utf-8), rank, dims, payload (f32 LE)
    config echo: text length, text bytes (utf-8)

Parameters are stored in bundle order followed by the preprocessing records
(`preprocess.means`, `preprocess.position_scale`, `preprocess.quaternion_scale`).
Payloads are f32 on disk while the library computes in f64, so save -> load ->
save is byte-identical.
"""

from __future__ import annotations

import struct

import numpy as np

from .config import RunConfig, parse_config_text, serialize_config
from .data import PreprocessStats
from .models import ModelBundle, build_model
from .tensor import make_rng

MAGIC = b"TWVAE1\n"


def _write_record(fh, name: str, values: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<I", len(encoded)))
    fh.write(encoded)
    arr = np.ascontiguousarray(values, dtype=np.float32)
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(arr.tobytes())


def _read_exact(fh, count: int) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise ValueError("checkpoint truncated")
    return data


def _read_record(fh) -> tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<I", _read_exact(fh, 4))
    name = _read_exact(fh, name_len).decode("utf-8")
    (rank,) = struct.unpack("<I", _read_exact(fh, 4))
    shape = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank)) if rank else ()
    count = int(np.prod(shape)) if shape else 1
    payload = np.frombuffer(_read_exact(fh, 4 * count), dtype="<f4").reshape(shape)
    return name, payload.astype(np.float64)


def save_checkpoint(path, bundle: ModelBundle, stats: PreprocessStats,
                    run_config: RunConfig) -> None:
    records = [(name, p.data) for name, p in bundle.params.items()]
    records.append(("preprocess.means", stats.means))
    records.append(("preprocess.position_scale", np.array([stats.position_scale])))
    records.append(("preprocess.quaternion_scale", np.array([stats.quaternion_scale])))
    echo = serialize_config(run_config).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(records)))
        for name, values in records:
            _write_record(fh, name, values)
        fh.write(struct.pack("<I", len(echo)))
        fh.write(echo)


def load_checkpoint(path) -> tuple[ModelBundle, PreprocessStats, RunConfig]:
    with open(path, "rb") as fh:
        if _read_exact(fh, len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint (bad magic)")
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        records = dict(_read_record(fh) for _ in range(count))
        (echo_len,) = struct.unpack("<I", _read_exact(fh, 4))
        run_config = parse_config_text(_read_exact(fh, echo_len).decode("utf-8"),
                                       source=f"{path}(config echo)")

    means = records.pop("preprocess.means")
    position_scale = float(records.pop("preprocess.position_scale")[0])
    quaternion_scale = float(records.pop("preprocess.quaternion_scale")[0])
    n_channels = means.shape[0]
    mode = "pose" if n_channels == 7 else "planar"
    stats = PreprocessStats(means=means, position_scale=position_scale,
                            quaternion_scale=quaternion_scale, mode=mode)

    bundle = build_model(run_config.model_config(n_channels), make_rng(run_config.seed))
    missing = set(bundle.params) - set(records)
    surplus = set(records) - set(bundle.params)
    if missing or surplus:
        raise ValueError(f"{path}: parameter records do not match the config "
                         f"(missing {sorted(missing)}, surplus {sorted(surplus)})")
    for name, values in records.items():
        p = bundle.params[name]
        if values.shape != p.data.shape:
            raise ValueError(f"{path}: tensor {name!r} has shape {values.shape}, "
                             f"expected {p.data.shape}")
        p.data = np.ascontiguousarray(values)
    return bundle, stats, run_config
