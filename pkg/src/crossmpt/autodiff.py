"""Minimal dense-tensor engine with reverse-mode differentiation.

Covers exactly the primitives the decoder stacks need: (batched) matmul,
elementwise arithmetic with limited broadcasting, masked softmax, layer norm,
GELU, softplus, concatenation/slicing along the last axes, and full-sum
reduction. Arrays are float64 by default; float32 is accepted for training
runs. Graphs are built per forward pass; backward() walks the recorded
applications exactly once and refuses to run twice on the same record.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "parameter",
    "constant",
    "matmul",
    "transpose",
    "add",
    "mul",
    "neg",
    "scale",
    "concat",
    "narrow",
    "reshape",
    "reduce_sum",
    "masked_softmax",
    "layer_norm",
    "gelu",
    "softplus",
    "ffn",
]

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    """A dense array plus the bookkeeping needed for reverse-mode gradients."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_done")

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (), _backward=None):
        if isinstance(data, Tensor):
            raise TypeError("cannot wrap a Tensor in a Tensor")
        arr = np.asarray(data)
        if arr.dtype not in (np.float64, np.float32):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward
        self._done = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad = self.grad + g

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Reverse-accumulate gradients from this tensor.

        Every node in the recorded graph is visited exactly once. Calling
        backward twice on the same output is an error; build a fresh forward
        pass instead.
        """
        if self._done:
            raise RuntimeError("backward already ran on this computation record")
        if seed is None:
            if self.data.ndim != 0:
                raise ValueError("backward() without a seed needs a scalar output")
            seed = np.ones_like(self.data)

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        self._accumulate(np.asarray(seed, dtype=self.data.dtype))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                if node._done:
                    raise RuntimeError("computation record node already consumed by backward")
                node._backward(node.grad)
                node._done = True
        self._done = True

    # operator sugar
    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return add(self, neg(other))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, grad={'set' if self.grad is not None else 'none'})"


def parameter(data, dtype=np.float64) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)


def constant(data, dtype=None) -> Tensor:
    arr = np.asarray(data)
    if dtype is not None:
        arr = arr.astype(dtype)
    return Tensor(arr, requires_grad=False)


def _tracked(*tensors: Tensor) -> bool:
    return any(t.requires_grad or t._parents for t in tensors)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to `shape` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _result(data, parents, backward) -> Tensor:
    if _tracked(*parents):
        return Tensor(data, _parents=tuple(parents), _backward=backward)
    return Tensor(data)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes, broadcasting leading axes.

    Adjoints: dA = dC @ B^T, dB = A^T @ dC (summed over broadcast axes).
    """
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g: np.ndarray) -> None:
        if a.requires_grad or a._parents:
            ga = g @ np.swapaxes(b.data, -1, -2)
            a._accumulate(_unbroadcast(ga, a.data.shape))
        if b.requires_grad or b._parents:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b._accumulate(_unbroadcast(gb, b.data.shape))

    return _result(out_data, (a, b), backward)


def transpose(t: Tensor) -> Tensor:
    """Swap the last two axes."""
    out_data = np.swapaxes(t.data, -1, -2)

    def backward(g: np.ndarray) -> None:
        t._accumulate(np.swapaxes(g, -1, -2))

    return _result(out_data, (t,), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def backward(g: np.ndarray) -> None:
        if a.requires_grad or a._parents:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad or b._parents:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _result(out_data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def backward(g: np.ndarray) -> None:
        if a.requires_grad or a._parents:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad or b._parents:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _result(out_data, (a, b), backward)


def neg(t: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> None:
        t._accumulate(-g)

    return _result(-t.data, (t,), backward)


def scale(t: Tensor, factor: float) -> Tensor:
    factor = float(factor)

    def backward(g: np.ndarray) -> None:
        t._accumulate(g * factor)

    return _result(t.data * factor, (t,), backward)


def concat(tensors: list[Tensor], axis: int = -2) -> Tensor:
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g: np.ndarray) -> None:
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis if axis >= 0 else g.ndim + axis] = slice(start, stop)
            t._accumulate(g[tuple(idx)])

    return _result(out_data, tuple(tensors), backward)


def narrow(t: Tensor, start: int, stop: int, axis: int = -1) -> Tensor:
    """Contiguous slice along one axis."""
    idx = [slice(None)] * t.data.ndim
    pos = axis if axis >= 0 else t.data.ndim + axis
    idx[pos] = slice(start, stop)
    idx = tuple(idx)

    def backward(g: np.ndarray) -> None:
        full = np.zeros_like(t.data)
        full[idx] = g
        t._accumulate(full)

    return _result(t.data[idx], (t,), backward)


def reshape(t: Tensor, shape: tuple[int, ...]) -> Tensor:
    def backward(g: np.ndarray) -> None:
        t._accumulate(g.reshape(t.data.shape))

    return _result(t.data.reshape(shape), (t,), backward)


def reduce_sum(t: Tensor) -> Tensor:
    """Sum of all entries (scalar output)."""
    def backward(g: np.ndarray) -> None:
        t._accumulate(np.broadcast_to(g, t.data.shape).astype(t.data.dtype))

    return _result(t.data.sum(), (t,), backward)


def masked_softmax(logits: Tensor, mask) -> Tensor:
    """Row-wise softmax of (logits + mask) along the last axis.

    mask is an additive array (or MaskMatrix) with entries in {0, -inf};
    masked positions get weight exactly 0 and gradient exactly 0. Raises on a
    fully-masked row.
    """
    additive = getattr(mask, "additive", mask)
    z = logits.data + additive
    zmax = np.max(z, axis=-1, keepdims=True)
    if np.isneginf(zmax).any():
        raise ValueError("masked_softmax: a row is fully masked")
    e = np.exp(z - zmax)
    w = e / e.sum(axis=-1, keepdims=True)

    def backward(g: np.ndarray) -> None:
        inner = (g * w).sum(axis=-1, keepdims=True)
        logits._accumulate(w * (g - inner))

    return _result(w, (logits,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then apply the
    learned affine map."""
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out_data = gain.data * xhat + bias.data

    def backward(g: np.ndarray) -> None:
        if gain.requires_grad or gain._parents:
            gain._accumulate(_unbroadcast(g * xhat, gain.data.shape))
        if bias.requires_grad or bias._parents:
            bias._accumulate(_unbroadcast(g, bias.data.shape))
        if x.requires_grad or x._parents:
            gx = g * gain.data
            m1 = gx.mean(axis=-1, keepdims=True)
            m2 = (gx * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(inv * (gx - m1 - xhat * m2))

    return _result(out_data, (x, gain, bias), backward)


def gelu(t: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    x = t.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out_data = x * cdf

    def backward(g: np.ndarray) -> None:
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
        t._accumulate(g * (cdf + x * pdf))

    return _result(out_data, (t,), backward)


def softplus(t: Tensor) -> Tensor:
    """log(1 + exp(x)) with overflow-safe evaluation."""
    x = t.data
    out_data = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def backward(g: np.ndarray) -> None:
        sig = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.clip(x, 0, None))),
                       np.exp(np.clip(x, None, 0)) / (1.0 + np.exp(np.clip(x, None, 0))))
        t._accumulate(g * sig)

    return _result(out_data, (t,), backward)


def ffn(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    """Two-layer position-wise feed-forward block: linear -> GELU -> linear."""
    return add(matmul(gelu(add(matmul(x, w1), b1)), w2), b2)
