"""Minimal dense-tensor library with reverse-mode differentiation.

Everything runs in float64 on top of numpy. A Tensor either is a leaf
(parameters, inputs) or remembers the tensors it was computed from together
with one vector-Jacobian closure per parent. ``backward`` walks the graph in
reverse topological order and accumulates gradients into the leaves.

Tensors are treated as immutable once built, except that training code may
overwrite leaf ``data`` in place between graph constructions (the graph is
rebuilt every step) and ``backward`` accumulates into leaf ``grad``.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

Array = np.ndarray


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor data must be finite")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Array | None = None
        # tuple of (parent, vjp) pairs; empty for leaves
        self._parents: tuple = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _scalar_error(self)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; scalars and ndarrays are wrapped as constants
    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / other)
        raise TypeError("tensor division only supports scalar divisors")

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))


def _scalar_error(t: Tensor):
    raise ValueError(f"expected scalar tensor, got shape {t.data.shape}")


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _result(data: Array, parents: Sequence[tuple[Tensor, Callable[[Array], Array]]]) -> Tensor:
    """Build an op result, keeping graph edges only where gradients can flow."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    kept = tuple(p for p in parents if p[0].requires_grad)
    out.requires_grad = bool(kept)
    out._parents = kept
    return out


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum grad down to `shape` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise and structural ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    return _result(a.data + b.data, (
        (a, lambda g: _unbroadcast(g, a.data.shape)),
        (b, lambda g: _unbroadcast(g, b.data.shape)),
    ))


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _result(a.data - b.data, (
        (a, lambda g: _unbroadcast(g, a.data.shape)),
        (b, lambda g: _unbroadcast(-g, b.data.shape)),
    ))


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _result(a.data * b.data, (
        (a, lambda g: _unbroadcast(g * b.data, a.data.shape)),
        (b, lambda g: _unbroadcast(g * a.data, b.data.shape)),
    ))


def scale(a: Tensor, factor: float) -> Tensor:
    return _result(a.data * factor, ((a, lambda g: g * factor),))


def square(a: Tensor) -> Tensor:
    return _result(a.data * a.data, ((a, lambda g: g * (2.0 * a.data)),))


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)
    return _result(out_data, ((a, lambda g: g * out_data),))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise ValueError("log requires strictly positive input")
    return _result(np.log(a.data), ((a, lambda g: g / a.data),))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    mask = (a.data >= lo) & (a.data <= hi)
    return _result(np.clip(a.data, lo, hi), ((a, lambda g: g * mask),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0
    return _result(np.where(mask, a.data, 0.0), ((a, lambda g: g * mask),))


def elu(a: Tensor) -> Tensor:
    # max(x, 0) + (exp(min(x, 0)) - 1): identity above zero, exp(x) - 1 below;
    # formulated with in-place updates to keep full-array passes cheap
    out_data = np.minimum(a.data, 0.0)
    np.exp(out_data, out=out_data)
    out_data -= 1.0
    out_data += np.maximum(a.data, 0.0)

    def vjp(g: Array) -> Array:
        # elu preserves sign, so the slope (1 above zero, exp(x) = out + 1
        # below) can be read off the output
        slope = out_data + 1.0
        np.copyto(slope, 1.0, where=out_data > 0.0)
        slope *= g
        return slope

    return _result(out_data, ((a, vjp),))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def vjp(g: Array) -> Array:
        gs = g * s
        return gs - s * gs.sum(axis=axis, keepdims=True)

    return _result(s, ((a, vjp),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    return _result(a.data.reshape(shape), ((a, lambda g: g.reshape(a.data.shape)),))


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result(a.data.transpose(axes), ((a, lambda g: g.transpose(inverse)),))


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g: Array) -> Array:
        if axis is None:
            g_exp = np.asarray(g).reshape((1,) * a.data.ndim)
        else:
            g_exp = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(g_exp, a.data.shape).copy()

    return _result(np.asarray(out_data), ((a, vjp),))


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.data.size
    elif isinstance(axis, int):
        count = a.data.shape[axis]
    else:
        count = int(np.prod([a.data.shape[ax] for ax in axis]))
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 2-D operands or batched 3-D operands of equal batch."""
    if a.data.ndim != b.data.ndim or a.data.ndim not in (2, 3):
        raise ValueError(f"matmul expects matching 2-D or 3-D operands, got {a.data.shape} @ {b.data.shape}")
    out_data = a.data @ b.data
    return _result(out_data, (
        (a, lambda g: g @ b.data.swapaxes(-1, -2)),
        (b, lambda g: a.data.swapaxes(-1, -2) @ g),
    ))


def fully_connected(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x [N, in] -> [N, out] with weight [out, in] and optional bias [out]."""
    if x.data.shape[-1] != weight.data.shape[1]:
        raise ValueError(f"fully_connected: input width {x.data.shape[-1]} != weight fan-in {weight.data.shape[1]}")
    out_data = x.data @ weight.data.T
    parents = [
        (x, lambda g: g @ weight.data),
        (weight, lambda g: g.T @ x.data if g.ndim == 2 else np.tensordot(g, x.data, axes=(tuple(range(g.ndim - 1)),) * 2)),
    ]
    if bias is not None:
        out_data += bias.data
        parents.append((bias, lambda g: g.sum(axis=tuple(range(g.ndim - 1)))))
    return _result(out_data, parents)


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """Strided 1-D convolution over the last axis with same-style zero padding.

    x [B, C_in, L], kernels [C_out, C_in, k]; pads (k-1)//2 zeros on both sides,
    so L_out = (L + 2*((k-1)//2) - k)//stride + 1.
    """
    if x.data.ndim != 3 or kernels.data.ndim != 3:
        raise ValueError("conv1d expects x [B, C_in, L] and kernels [C_out, C_in, k]")
    if x.data.shape[1] != kernels.data.shape[1]:
        raise ValueError(f"conv1d channel mismatch: input has {x.data.shape[1]}, kernels expect {kernels.data.shape[1]}")
    if stride < 1:
        raise ValueError("conv1d stride must be >= 1")
    batch, _, length = x.data.shape
    c_out, c_in, k = kernels.data.shape
    if k > length:
        raise ValueError(f"conv1d kernel size {k} exceeds input length {length}")
    pad = (k - 1) // 2

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad))) if pad else x.data
    l_out = (length + 2 * pad - k) // stride + 1
    span = (l_out - 1) * stride + 1
    # accumulate channel-major then tap, the same association order as a naive
    # scalar loop, so results are bit-identical to direct summation
    out_data = np.zeros((batch, c_out, l_out))
    for c in range(c_in):
        for tap in range(k):
            view = xp[:, c, tap:tap + span:stride]
            out_data += view[:, None, :] * kernels.data[None, :, c, tap, None]

    def vjp_kernels(g: Array) -> Array:
        gw = np.empty((c_out, c_in, k))
        for tap in range(k):
            # g [B, C_out, L_out] x strided view [B, C_in, L_out] -> [C_out, C_in]
            view = xp[:, :, tap:tap + span:stride]
            gw[:, :, tap] = np.tensordot(g, view, axes=([0, 2], [0, 2]))
        return gw

    def vjp_x(g: Array) -> Array:
        gxp = np.zeros_like(xp)
        for tap in range(k):
            # [B, C_out, L_out] x [C_out, C_in] -> [B, C_in, L_out]
            contrib = np.tensordot(g, kernels.data[:, :, tap], axes=([1], [0])).transpose(0, 2, 1)
            gxp[:, :, tap:tap + span:stride] += contrib
        return gxp[:, :, pad:pad + length] if pad else gxp

    parents = [(x, vjp_x), (kernels, vjp_kernels)]
    if bias is not None:
        # bias joins after the accumulation, same placement as the naive oracle
        out_data += bias.data[None, :, None]
        parents.append((bias, lambda g: g.sum(axis=(0, 2))))
    return _result(out_data, parents)


def repeat_time(x: Tensor, factor: int) -> Tensor:
    """Duplicate every element along the last axis `factor` times."""
    if factor < 1:
        raise ValueError("repeat factor must be >= 1")
    out_data = np.repeat(x.data, factor, axis=-1)

    def vjp(g: Array) -> Array:
        return g.reshape(*x.data.shape, factor).sum(axis=-1)

    return _result(out_data, ((x, vjp),))


def gather_time(x: Tensor, batch_idx: Array, time_idx: Array) -> Tensor:
    """Select rows x[b, t, :] for paired index vectors; used for aligned losses."""
    if x.data.ndim != 3:
        raise ValueError("gather_time expects x [B, T, n]")
    batch_idx = np.asarray(batch_idx, dtype=np.intp)
    time_idx = np.asarray(time_idx, dtype=np.intp)
    out_data = x.data[batch_idx, time_idx]

    def vjp(g: Array) -> Array:
        gx = np.zeros_like(x.data)
        np.add.at(gx, (batch_idx, time_idx), g)
        return gx

    return _result(out_data, ((x, vjp),))


# ---------------------------------------------------------------------------
# reverse-mode driver
# ---------------------------------------------------------------------------

def backward(root: Tensor, params: Iterable[Tensor] | None = None) -> None:
    """Accumulate d(root)/d(leaf) into every reachable leaf's ``grad``.

    root must be scalar. When ``params`` is given, parameters the root does not
    depend on receive an explicit zero gradient so optimizers see a full set.
    """
    if root.data.size != 1:
        raise ValueError(f"backward root must be scalar, got shape {root.data.shape}")
    if not np.all(np.isfinite(root.data)):
        raise FloatingPointError("backward root is not finite")

    order: list[Tensor] = []
    visited = {id(root)}
    stack: list[tuple[Tensor, int]] = [(root, 0)]
    while stack:
        node, child = stack[-1]
        if child < len(node._parents):
            stack[-1] = (node, child + 1)
            parent = node._parents[child][0]
            if id(parent) not in visited and parent._parents:
                visited.add(id(parent))
                stack.append((parent, 0))
        else:
            order.append(node)
            stack.pop()

    grads: dict[int, Array] = {id(root): np.ones_like(root.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for parent, vjp in node._parents:
            pg = vjp(g)
            if parent._parents:
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
            else:
                pg = np.asarray(pg, dtype=np.float64).reshape(parent.data.shape)
                parent.grad = pg.copy() if parent.grad is None else parent.grad + pg

    if params is not None:
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)


# ---------------------------------------------------------------------------
# seeded random streams
# ---------------------------------------------------------------------------

def make_rng(seed: int) -> np.random.Generator:
    """Deterministic generator: one seed, one bit-exact stream."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def tune_allocator() -> bool:
    """Keep multi-megabyte temporaries on the heap instead of fresh mmaps.

    Training allocates short-lived arrays past glibc's mmap threshold, and
    the map/unmap churn costs ~15% of a step. Safe no-op on other platforms.
    """
    try:
        import ctypes

        libc = ctypes.CDLL("libc.so.6", use_errno=True)
        ok = libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD
        ok &= libc.mallopt(-1, 1 << 30)  # M_TRIM_THRESHOLD
        return bool(ok)
    except (OSError, AttributeError):
        return False


def gaussian(rng: np.random.Generator, shape: Sequence[int] | int) -> Array:
    return rng.standard_normal(shape)


def uniform(rng: np.random.Generator, low: float, high: float, shape: Sequence[int] | int) -> Array:
    return rng.uniform(low, high, shape)
