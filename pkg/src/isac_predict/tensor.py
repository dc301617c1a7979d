"""Reverse-mode automatic differentiation over dense numpy arrays.

A `Tensor` wraps a real-valued numpy array together with an optional gradient
and a closure that pushes incoming gradients to its parents. The op set is
closed and fixed: elementwise arithmetic, matmul (batched), same-padded
conv2d, sigmoid/tanh/GELU, softmax, layer norm, reductions, and
reshape/transpose/slice/concat. That is everything the prediction network
needs; there is deliberately no general broadcasting engine beyond what
those ops require.

All kernels are deterministic: no unordered reductions, no threading inside
an op. A single graph must stay on one thread.
"""

from __future__ import annotations

import contextlib
from typing import Optional, Sequence

import numpy as np
from scipy.special import erf

from .errors import ConfigError, DimensionError, UsageError

_INV_SQRT2 = float(1.0 / np.sqrt(2.0))
_INV_SQRT2PI = float(1.0 / np.sqrt(2.0 * np.pi))

# Global switch: with grad disabled, ops return leaf tensors and build no graph.
_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference/eval)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce `grad` back to `shape` by summing the axes broadcasting added."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A node in the autodiff graph: value, lazy gradient, provenance."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward",
                 "op", "_backward_calls")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf"):
        self.data = np.asarray(data)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None
        self.op = op
        self._backward_calls = 0

    # -- basics ------------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op!r}, grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self):
        """Populate gradients of every requires_grad ancestor.

        Visits each node exactly once in reverse topological order.
        """
        if self.data.size != 1:
            raise UsageError(f"backward requires a scalar loss, got shape {self.data.shape}")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward()
                node._backward_calls += 1

    # -- graph construction helper ----------------------------------------

    @staticmethod
    def _result(data, parents: Sequence["Tensor"], op: str):
        req = _grad_enabled and any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=req, op=op)
        if req:
            out._parents = tuple(parents)
        return out

    # -- elementwise arithmetic --------------------------------------------

    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(np.asarray(x))

    def __add__(self, other):
        other = Tensor._lift(other)
        out = Tensor._result(self.data + other.data, (self, other), "add")
        if out.requires_grad:
            def _bw():
                if self.requires_grad:
                    self._accumulate(_unbroadcast(out.grad, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(out.grad, other.data.shape))
            out._backward = _bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor._result(-self.data, (self,), "neg")
        if out.requires_grad:
            def _bw():
                self._accumulate(-out.grad)
            out._backward = _bw
        return out

    def __sub__(self, other):
        other = Tensor._lift(other)
        out = Tensor._result(self.data - other.data, (self, other), "sub")
        if out.requires_grad:
            def _bw():
                if self.requires_grad:
                    self._accumulate(_unbroadcast(out.grad, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(-out.grad, other.data.shape))
            out._backward = _bw
        return out

    def __rsub__(self, other):
        return Tensor._lift(other) - self

    def __mul__(self, other):
        other = Tensor._lift(other)
        out = Tensor._result(self.data * other.data, (self, other), "mul")
        if out.requires_grad:
            def _bw():
                if self.requires_grad:
                    self._accumulate(_unbroadcast(out.grad * other.data, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(out.grad * self.data, other.data.shape))
            out._backward = _bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._lift(other)
        out = Tensor._result(self.data / other.data, (self, other), "div")
        if out.requires_grad:
            def _bw():
                if self.requires_grad:
                    self._accumulate(_unbroadcast(out.grad / other.data, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(-out.grad * self.data / (other.data ** 2),
                                                   other.data.shape))
            out._backward = _bw
        return out

    def __rtruediv__(self, other):
        return Tensor._lift(other) / self

    def __pow__(self, p: float):
        p = float(p)
        out = Tensor._result(self.data ** p, (self,), "pow")
        if out.requires_grad:
            def _bw():
                self._accumulate(out.grad * p * self.data ** (p - 1.0))
            out._backward = _bw
        return out

    def exp(self):
        out = Tensor._result(np.exp(self.data), (self,), "exp")
        if out.requires_grad:
            def _bw():
                self._accumulate(out.grad * out.data)
            out._backward = _bw
        return out

    def sigmoid(self):
        y = 1.0 / (1.0 + np.exp(-self.data))
        out = Tensor._result(y, (self,), "sigmoid")
        if out.requires_grad:
            def _bw():
                self._accumulate(out.grad * out.data * (1.0 - out.data))
            out._backward = _bw
        return out

    def tanh(self):
        out = Tensor._result(np.tanh(self.data), (self,), "tanh")
        if out.requires_grad:
            def _bw():
                self._accumulate(out.grad * (1.0 - out.data ** 2))
            out._backward = _bw
        return out

    def gelu(self):
        """Exact GELU: 0.5 x (1 + erf(x/sqrt(2)))."""
        x = self.data
        cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
        out = Tensor._result(x * cdf, (self,), "gelu")
        if out.requires_grad:
            def _bw():
                pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
                self._accumulate(out.grad * (cdf + x * pdf))
            out._backward = _bw
        return out

    # -- reductions --------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = Tensor._result(self.data.sum(axis=axis, keepdims=keepdims), (self,), "sum")
        if out.requires_grad:
            def _bw():
                g = out.grad
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(g, self.data.shape))
            out._backward = _bw
        return out

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    # -- shape ops ---------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.data.shape
        out = Tensor._result(self.data.reshape(shape), (self,), "reshape")
        if out.requires_grad:
            def _bw():
                self._accumulate(out.grad.reshape(src))
            out._backward = _bw
        return out

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = np.argsort(axes)
        out = Tensor._result(self.data.transpose(axes), (self,), "transpose")
        if out.requires_grad:
            def _bw():
                self._accumulate(out.grad.transpose(inv))
            out._backward = _bw
        return out

    def __getitem__(self, idx):
        out = Tensor._result(self.data[idx], (self,), "slice")
        if out.requires_grad:
            def _bw():
                g = np.zeros_like(self.data)
                g[idx] = out.grad
                self._accumulate(g)
            out._backward = _bw
        return out

    # -- linear algebra ----------------------------------------------------

    def matmul(self, other: "Tensor"):
        other = Tensor._lift(other)
        a, b = self.data, other.data
        if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
            raise DimensionError(f"matmul inner dims disagree: {a.shape} @ {b.shape}")
        out = Tensor._result(np.matmul(a, b), (self, other), "matmul")
        if out.requires_grad:
            def _bw():
                g = out.grad
                if self.requires_grad:
                    if b.ndim > 1:
                        self._accumulate(_unbroadcast(np.matmul(g, np.swapaxes(b, -1, -2)),
                                                      a.shape))
                    else:
                        self._accumulate(_unbroadcast(g[..., None] * b, a.shape))
                if other.requires_grad:
                    if a.ndim > 1:
                        other._accumulate(_unbroadcast(np.matmul(np.swapaxes(a, -1, -2), g),
                                                       b.shape))
                    elif b.ndim > 1:
                        other._accumulate(_unbroadcast(a[:, None] * g, b.shape))
                    else:
                        other._accumulate(_unbroadcast(a * g, b.shape))
            out._backward = _bw
        return out

    __matmul__ = matmul


# -- free functions over tensors -------------------------------------------


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [Tensor._lift(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    out = Tensor._result(data, tensors, "concat")
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def _bw():
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    idx = [slice(None)] * data.ndim
                    idx[axis] = slice(lo, hi)
                    t._accumulate(out.grad[tuple(idx)])
        out._backward = _bw
    return out


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    expanded = []
    for t in tensors:
        t = Tensor._lift(t)
        shape = list(t.data.shape)
        shape.insert(axis if axis >= 0 else axis + t.ndim + 1, 1)
        expanded.append(t.reshape(shape))
    return concat(expanded, axis=axis)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along `axis` (max-subtraction)."""
    m = np.max(x.data, axis=axis, keepdims=True)
    e = (x - Tensor(m)).exp()
    return e / e.sum(axis=axis, keepdims=True)


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor, axis: int = -1,
               eps: float = 1e-5) -> Tensor:
    """Normalize to zero mean / unit variance along `axis`, then affine."""
    d = x.data.shape[axis]
    if d < 2:
        raise ConfigError(f"layer_norm axis length must be >= 2, got {d}")
    gain = Tensor._lift(gain)
    shift = Tensor._lift(shift)
    if gain.data.shape != (d,) or shift.data.shape != (d,):
        raise DimensionError("layer_norm gain/shift must match normalized axis length")
    bshape = [1] * x.ndim
    bshape[axis] = d
    mu = x.mean(axis=axis, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    xhat = xc * ((var + eps) ** -0.5)
    return xhat * gain.reshape(bshape) + shift.reshape(bshape)


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Same-padded 2D cross-correlation.

    x: [B, C_in, H, W] or [C_in, H, W]; kernels: [C_out, C_in, k_h, k_w]
    with odd k_h, k_w; bias: [C_out]. Output keeps the spatial size.
    """
    kernels = Tensor._lift(kernels)
    bias = Tensor._lift(bias)
    squeeze = x.ndim == 3
    if squeeze:
        x = x.reshape((1,) + x.data.shape)
    if x.ndim != 4 or kernels.ndim != 4:
        raise DimensionError("conv2d expects 4D input and 4D kernels")
    B, C_in, H, W = x.data.shape
    C_out, C_k, kh, kw = kernels.data.shape
    if C_k != C_in:
        raise DimensionError(f"conv2d channel mismatch: input {C_in}, kernels {C_k}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ConfigError(f"conv2d kernel dims must be odd, got {kh}x{kw}")
    if bias.data.shape != (C_out,):
        raise DimensionError("conv2d bias must be [C_out]")
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    out_data = np.zeros((B, C_out, H, W), dtype=x.data.dtype)
    for i in range(kh):
        for j in range(kw):
            out_data += np.einsum("bchw,oc->bohw", xp[:, :, i:i + H, j:j + W],
                                  kernels.data[:, :, i, j], optimize=True)
    out_data += bias.data[None, :, None, None]
    out = Tensor._result(out_data, (x, kernels, bias), "conv2d")
    if out.requires_grad:
        def _bw():
            g = out.grad
            if x.requires_grad:
                gxp = np.zeros_like(xp)
                for i in range(kh):
                    for j in range(kw):
                        gxp[:, :, i:i + H, j:j + W] += np.einsum(
                            "bohw,oc->bchw", g, kernels.data[:, :, i, j], optimize=True)
                x._accumulate(gxp[:, :, ph:ph + H, pw:pw + W])
            if kernels.requires_grad:
                gk = np.zeros_like(kernels.data)
                for i in range(kh):
                    for j in range(kw):
                        gk[:, :, i, j] = np.einsum(
                            "bohw,bchw->oc", g, xp[:, :, i:i + H, j:j + W], optimize=True)
                kernels._accumulate(gk)
            if bias.requires_grad:
                bias._accumulate(g.sum(axis=(0, 2, 3)))
        out._backward = _bw
    if squeeze:
        out = out.reshape(out.data.shape[1:])
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return Tensor._lift(a).matmul(b)


def sigmoid(x: Tensor) -> Tensor:
    return Tensor._lift(x).sigmoid()


def tanh(x: Tensor) -> Tensor:
    return Tensor._lift(x).tanh()


def gelu(x: Tensor) -> Tensor:
    return Tensor._lift(x).gelu()
