"""Central finite-difference gradient checking and small helpers shared by
the test modules."""

import numpy as np

from twvae.tensor import Tensor, backward

STEP = 1e-5
REL_TOL = 1e-4


def randomize_output_layers(bundle, rng, scale=0.3):
    """Fresh bundles start with zeroed head and output layers (codes at the
    prior, identity warp, zero reconstruction); tests that need nontrivial
    outputs move off that point first."""
    for name in ("spatial.mean.weight", "spatial.mean.bias",
                 "spatial.logvar.weight", "spatial.logvar.bias",
                 "temporal.head.weight", "temporal.head.bias",
                 "decoder.latent.out.weight", "decoder.latent.out.bias"):
        p = bundle.params.get(name)
        if p is not None:
            p.data[...] = scale * rng.standard_normal(p.data.shape)


def numeric_gradient(fn, values: np.ndarray, step: float = STEP) -> np.ndarray:
    """Central differences of a scalar function of a flat parameter array."""
    grad = np.zeros_like(values)
    flat = values.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        hi = fn()
        flat[i] = keep - step
        lo = fn()
        flat[i] = keep
        out[i] = (hi - lo) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Worst-case elementwise relative error; absolute below a small floor."""
    diff = np.abs(analytic - numeric)
    denom = np.abs(analytic) + np.abs(numeric)
    mask = denom > 1e-6
    rel = np.zeros_like(diff)
    rel[mask] = diff[mask] / denom[mask]
    worst = float(rel.max()) if rel.size else 0.0
    worst_abs = float(diff[~mask].max()) if np.any(~mask) else 0.0
    assert worst_abs < 1e-8, f"absolute gradient error {worst_abs} on near-zero entries"
    return worst


def check_op_gradients(build_scalar, tensors: list[Tensor], tol: float = REL_TOL) -> float:
    """Compare reverse-mode gradients of build_scalar() against central
    differences for every tensor in `tensors`; returns the worst error."""
    root = build_scalar()
    for t in tensors:
        t.grad = None
    backward(root, tensors)
    worst = 0.0
    for t in tensors:
        numeric = numeric_gradient(lambda: build_scalar().item(), t.data)
        worst = max(worst, relative_error(t.grad, numeric))
    assert worst < tol, f"gradient mismatch: relative error {worst} >= {tol}"
    return worst
