"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Every value is a 64-bit float numpy array wrapped in a :class:`Tensor` that
records its producing operation, so a single call to :meth:`Tensor.backward`
on a scalar loss fills the gradient slot of every reachable tensor that
requires gradients.  Only the operations the enhancement network needs are
implemented; there is no broadcasting beyond what those operations use.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "Parameter",
    "DimensionError",
    "ContractError",
    "tensor",
    "zeros",
    "matmul",
    "softmax",
    "conv2d",
    "conv_transpose2d",
    "gelu",
    "batch_norm",
    "concat",
    "reflect_pad2d",
    "make_rng",
]

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


class ContractError(ValueError):
    """Raised when an operation's calling contract is violated."""


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic generator (PCG64) used for all initialization and sampling."""
    return np.random.Generator(np.random.PCG64(seed))


class Tensor:
    """Dense n-d array of float64 with an optional gradient and lineage."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple = (), _backward=None):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ContractError("tensor initialized with non-finite values")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward = _backward

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- autodiff -----------------------------------------------------------

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar; visits each node exactly once."""
        if self.data.shape != ():
            raise ContractError(
                f"backward requires a scalar loss, got shape {self.shape}")
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
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            node._accumulate(g)
            if node._backward is not None:
                for parent, pg in node._backward(g):
                    if not parent.requires_grad:
                        continue
                    key = id(parent)
                    if key in grads:
                        grads[key] = grads[key] + pg
                    else:
                        grads[key] = pg

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def reshape(self, *shape) -> "Tensor":
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def sum(self) -> "Tensor":
        return sum_(self)

    def mean(self) -> "Tensor":
        return mean(self)

    def abs(self) -> "Tensor":
        return abs_(self)


class Parameter(Tensor):
    """Trainable tensor with a hierarchical name; gradient starts at zero."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _requires(*ts: Tensor) -> bool:
    return any(t.requires_grad for t in ts)


# -- elementwise ------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def backward(g):
        return ((a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape)))

    return Tensor(out_data, _requires(a, b), (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.data, a.requires_grad, (a,), lambda g: ((a, -g),))


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def backward(g):
        return ((a, _unbroadcast(g * b.data, a.shape)),
                (b, _unbroadcast(g * a.data, b.shape)))

    return Tensor(out_data, _requires(a, b), (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data / b.data

    def backward(g):
        return ((a, _unbroadcast(g / b.data, a.shape)),
                (b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape)))

    return Tensor(out_data, _requires(a, b), (a, b), backward)


def abs_(a: Tensor) -> Tensor:
    def backward(g):
        return ((a, g * np.sign(a.data)),)

    return Tensor(np.abs(a.data), a.requires_grad, (a,), backward)


def gelu(a: Tensor) -> Tensor:
    """Exact Gaussian-CDF form x * Phi(x)."""
    phi = 0.5 * (1.0 + erf(a.data * _INV_SQRT2))
    out_data = a.data * phi

    def backward(g):
        pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT2PI
        return ((a, g * (phi + a.data * pdf)),)

    return Tensor(out_data, a.requires_grad, (a,), backward)


# -- reductions -------------------------------------------------------------

def sum_(a: Tensor) -> Tensor:
    def backward(g):
        return ((a, np.broadcast_to(g, a.shape).copy()),)

    return Tensor(a.data.sum(), a.requires_grad, (a,), backward)


def mean(a: Tensor) -> Tensor:
    n = a.size

    def backward(g):
        return ((a, np.broadcast_to(g / n, a.shape).copy()),)

    return Tensor(a.data.mean(), a.requires_grad, (a,), backward)


# -- shape manipulation -----------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    def backward(g):
        return ((a, g.reshape(a.shape)),)

    return Tensor(a.data.reshape(shape), a.requires_grad, (a,), backward)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {a.shape}")

    def backward(g):
        return ((a, np.ascontiguousarray(g.T)),)

    return Tensor(np.ascontiguousarray(a.data.T), a.requires_grad, (a,), backward)


def slice_(a: Tensor, key) -> Tensor:
    def backward(g):
        full = np.zeros_like(a.data)
        full[key] = g
        return ((a, full),)

    return Tensor(a.data[key].copy(), a.requires_grad, (a,), backward)


def concat(parts: list[Tensor], axis: int = 0) -> Tensor:
    sizes = [p.shape[axis] for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=axis)

    def backward(g):
        pieces = np.split(g, np.cumsum(sizes)[:-1], axis=axis)
        return tuple(zip(parts, pieces))

    return Tensor(out_data, _requires(*parts), tuple(parts), backward)


def reflect_pad2d(a: Tensor, pad_h: int, pad_w: int) -> Tensor:
    """Reflect-pad the bottom/right edges of a C x H x W tensor."""
    if a.data.ndim != 3:
        raise DimensionError(f"reflect_pad2d expects C x H x W, got {a.shape}")
    _, h, w = a.shape
    rows = np.concatenate([np.arange(h), h - 2 - np.arange(pad_h)]) if pad_h else np.arange(h)
    cols = np.concatenate([np.arange(w), w - 2 - np.arange(pad_w)]) if pad_w else np.arange(w)
    out_data = a.data[:, rows][:, :, cols]

    def backward(g):
        gx = np.zeros_like(a.data)
        # scatter-add because reflected rows/cols repeat source indices
        np.add.at(gx, (slice(None), rows[:, None], cols[None, :]), g)
        return ((a, gx),)

    return Tensor(out_data, a.requires_grad, (a,), backward)


# -- linear algebra ---------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        return ((a, g @ b.data.T), (b, a.data.T @ g))

    return Tensor(out_data, _requires(a, b), (a, b), backward)


def softmax(a: Tensor, axis: int) -> Tensor:
    if not -a.data.ndim <= axis < a.data.ndim:
        raise DimensionError(f"softmax axis {axis} invalid for shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        return ((a, out_data * (g - inner)),)

    return Tensor(out_data, a.requires_grad, (a,), backward)


# -- convolution ------------------------------------------------------------

def _conv_geometry(h: int, w: int, k: int, stride: int, padding: int):
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError(
            f"conv output extent < 1 for input {h}x{w}, kernel {k}, "
            f"stride {stride}, padding {padding}")
    return ho, wo


def _patches(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    c = xp.shape[0]
    out = np.empty((c, k, k, ho, wo))
    for di in range(k):
        for dj in range(k):
            out[:, di, dj] = xp[:, di:di + stride * ho:stride,
                                dj:dj + stride * wo:stride]
    return out


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1,
           padding: int = 0) -> Tensor:
    """Cross-correlation of C x H x W input with C_out x C_in x k x k kernel."""
    if x.data.ndim != 3 or w.data.ndim != 4:
        raise DimensionError(f"conv2d expects 3-d input and 4-d kernel, "
                             f"got {x.shape} and {w.shape}")
    c, h, ww = x.shape
    co, ci, k, k2 = w.shape
    if ci != c or k != k2:
        raise DimensionError(f"conv2d shape mismatch: input {x.shape}, kernel {w.shape}")
    if k % 2 == 0 and padding != 0:
        raise DimensionError("even kernels are only supported with zero padding")
    if b.shape != (co,):
        raise DimensionError(f"conv2d bias shape {b.shape} != ({co},)")
    ho, wo = _conv_geometry(h, ww, k, stride, padding)

    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding)))
    pat = _patches(xp, k, stride, ho, wo)
    out_data = np.einsum("ocij,cijhw->ohw", w.data, pat, optimize=True)
    out_data += b.data[:, None, None]

    def backward(g):
        gw = np.einsum("ohw,cijhw->ocij", g, pat, optimize=True)
        gb = g.sum(axis=(1, 2))
        spread = np.einsum("ocij,ohw->cijhw", w.data, g, optimize=True)
        gxp = np.zeros_like(xp)
        for di in range(k):
            for dj in range(k):
                gxp[:, di:di + stride * ho:stride,
                    dj:dj + stride * wo:stride] += spread[:, di, dj]
        gx = gxp[:, padding:padding + h, padding:padding + ww]
        return ((x, gx), (w, gw), (b, gb))

    return Tensor(out_data, _requires(x, w, b), (x, w, b), backward)


def conv_transpose2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1) -> Tensor:
    """Adjoint of ``conv2d(., w, stride, padding=0)``; maps C_out back to C_in."""
    if stride < 1:
        raise DimensionError(f"stride must be >= 1, got {stride}")
    if x.data.ndim != 3 or w.data.ndim != 4:
        raise DimensionError(f"conv_transpose2d expects 3-d input and 4-d kernel, "
                             f"got {x.shape} and {w.shape}")
    co, h, ww = x.shape
    wco, ci, k, _ = w.shape
    if wco != co:
        raise DimensionError(
            f"conv_transpose2d channel mismatch: input {x.shape}, kernel {w.shape}")
    if b.shape != (ci,):
        raise DimensionError(f"conv_transpose2d bias shape {b.shape} != ({ci},)")
    hout = (h - 1) * stride + k
    wout = (ww - 1) * stride + k

    spread = np.einsum("ocij,ohw->cijhw", w.data, x.data, optimize=True)
    out_data = np.zeros((ci, hout, wout))
    for di in range(k):
        for dj in range(k):
            out_data[:, di:di + stride * h:stride,
                     dj:dj + stride * ww:stride] += spread[:, di, dj]
    out_data += b.data[:, None, None]

    def backward(g):
        pat = _patches(g, k, stride, h, ww)
        gx = np.einsum("ocij,cijhw->ohw", w.data, pat, optimize=True)
        gw = np.einsum("ohw,cijhw->ocij", x.data, pat, optimize=True)
        gb = g.sum(axis=(1, 2))
        return ((x, gx), (w, gw), (b, gb))

    return Tensor(out_data, _requires(x, w, b), (x, w, b), backward)


# -- normalization ----------------------------------------------------------

def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1,
               eps: float = 1e-5) -> Tensor:
    """Per-channel normalization of C x H x W (or N x C x H x W) input.

    Train mode normalizes with batch statistics and updates the running
    buffers in place; eval mode uses the running buffers.
    """
    if x.data.ndim == 3:
        ch_axis, red = 0, (1, 2)
    elif x.data.ndim == 4:
        ch_axis, red = 1, (0, 2, 3)
    else:
        raise DimensionError(f"batch_norm expects 3-d or 4-d input, got {x.shape}")
    c = x.shape[ch_axis]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(
            f"batch_norm scale/shift shape mismatch for {c} channels")
    cshape = [1] * x.data.ndim
    cshape[ch_axis] = c

    if training:
        mu = x.data.mean(axis=red)
        var = x.data.var(axis=red)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu = running_mean
        var = running_var

    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(cshape)) * inv.reshape(cshape)
    out_data = gamma.data.reshape(cshape) * xhat + beta.data.reshape(cshape)

    def backward(g):
        ggamma = (g * xhat).sum(axis=red)
        gbeta = g.sum(axis=red)
        gxhat = g * gamma.data.reshape(cshape)
        if training:
            n = x.size // c
            gx = (inv.reshape(cshape) / n) * (
                n * gxhat
                - gxhat.sum(axis=red).reshape(cshape)
                - xhat * (gxhat * xhat).sum(axis=red).reshape(cshape))
        else:
            gx = gxhat * inv.reshape(cshape)
        return ((x, gx), (gamma, ggamma), (beta, gbeta))

    return Tensor(out_data, _requires(x, gamma, beta), (x, gamma, beta), backward)
