"""Minimal reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps a float array plus a closure that routes an upstream gradient
to its parents. Graphs are built eagerly by the arithmetic below and walked
once, in reverse topological order, by ``Tensor.backward``. Everything runs
in the array's own dtype (float64 during training, float32 for the fast
inference path); gradients always match the data dtype.

Only the operations the quality network needs are implemented; each backward
rule is exact, with fixed subgradient conventions at kinks (relu/leaky-relu
take the inactive side at 0, max routes to the first maximizer).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    # -- plumbing ---------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad=None) -> None:
        """Reverse-mode sweep from this node; seeds with ones if no grad given."""
        if grad is None:
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
            if grad.shape != self.data.shape:
                grad = np.broadcast_to(grad, self.data.shape).copy()

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited and p.requires_grad:
                    stack.append((p, False))

        self._accumulate(grad)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data + other.data,
                     requires_grad=self.requires_grad or other.requires_grad,
                     _parents=(self, other))

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))
        out._backward = backward
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, requires_grad=self.requires_grad, _parents=(self,))

        def backward(g):
            if self.requires_grad:
                self._accumulate(-g)
        out._backward = backward
        return out

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data * other.data,
                     requires_grad=self.requires_grad or other.requires_grad,
                     _parents=(self, other))

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))
        out._backward = backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data / other.data,
                     requires_grad=self.requires_grad or other.requires_grad,
                     _parents=(self, other))

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(-g * self.data / (other.data * other.data),
                                               other.data.shape))
        out._backward = backward
        return out

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __matmul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data @ other.data,
                     requires_grad=self.requires_grad or other.requires_grad,
                     _parents=(self, other))
        a, b = self.data, other.data

        def backward(g):
            if a.ndim == 1 and b.ndim == 1:
                if self.requires_grad:
                    self._accumulate(g * b)
                if other.requires_grad:
                    other._accumulate(g * a)
                return
            ga = gb = None
            if a.ndim == 1:      # (k,) @ (..., k, m)
                if self.requires_grad:
                    ga = (np.expand_dims(g, -2) @ np.swapaxes(b, -1, -2)).reshape(b.shape[:-2] + a.shape)
                    ga = _unbroadcast(ga, a.shape)
                if other.requires_grad:
                    gb = np.expand_dims(a, -1) @ np.expand_dims(g, -2)
                    gb = _unbroadcast(gb, b.shape)
            elif b.ndim == 1:    # (..., n, k) @ (k,)
                if self.requires_grad:
                    ga = np.expand_dims(g, -1) @ np.expand_dims(b, 0)
                    ga = _unbroadcast(ga, a.shape)
                if other.requires_grad:
                    gb = _unbroadcast(np.swapaxes(a, -1, -2) @ np.expand_dims(g, -1), b.shape + (1,))
                    gb = gb.reshape(b.shape)
            else:
                if self.requires_grad:
                    ga = _unbroadcast(g @ np.swapaxes(b, -1, -2), a.shape)
                if other.requires_grad:
                    gb = _unbroadcast(np.swapaxes(a, -1, -2) @ g, b.shape)
            if ga is not None:
                self._accumulate(ga)
            if gb is not None:
                other._accumulate(gb)
        out._backward = backward
        return out

    # -- shape ops --------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor(self.data.reshape(shape), requires_grad=self.requires_grad, _parents=(self,))
        orig = self.data.shape

        def backward(g):
            if self.requires_grad:
                self._accumulate(g.reshape(orig))
        out._backward = backward
        return out

    def transpose(self, axes):
        axes = tuple(axes)
        inverse = tuple(np.argsort(axes))
        out = Tensor(self.data.transpose(axes), requires_grad=self.requires_grad, _parents=(self,))

        def backward(g):
            if self.requires_grad:
                self._accumulate(g.transpose(inverse))
        out._backward = backward
        return out

    def take_rows(self, indices: np.ndarray):
        """Gather along axis 0 with integer indices; backward scatter-adds."""
        indices = np.asarray(indices)
        out = Tensor(self.data[indices], requires_grad=self.requires_grad, _parents=(self,))

        def backward(g):
            if self.requires_grad:
                acc = np.zeros_like(self.data)
                np.add.at(acc, indices, g)
                self._accumulate(acc)
        out._backward = backward
        return out

    # -- reductions -------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims),
                     requires_grad=self.requires_grad, _parents=(self,))
        shape = self.data.shape

        def backward(g):
            if not self.requires_grad:
                return
            if axis is None:
                self._accumulate(np.broadcast_to(g, shape).astype(self.data.dtype))
                return
            axes = axis if isinstance(axis, tuple) else (axis,)
            if not keepdims:
                g = np.expand_dims(g, tuple(a % len(shape) for a in axes))
            self._accumulate(np.broadcast_to(g, shape).copy())
        out._backward = backward
        return out

    def mean(self, axis=None, keepdims: bool = False):
        size = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(size))

    def max(self, axis: int, keepdims: bool = False):
        """Max along one axis; gradient routes to the first maximizer."""
        moved = np.moveaxis(self.data, axis, -1)
        arg = np.argmax(moved, axis=-1)
        values = np.take_along_axis(moved, arg[..., None], axis=-1)[..., 0]
        out_data = np.moveaxis(values[..., None], -1, axis) if keepdims else values
        out = Tensor(out_data, requires_grad=self.requires_grad, _parents=(self,))

        def backward(g):
            if not self.requires_grad:
                return
            gm = np.moveaxis(g, axis, -1)[..., 0] if keepdims else g
            acc = np.zeros_like(moved)
            np.put_along_axis(acc, arg[..., None], gm[..., None], axis=-1)
            self._accumulate(np.moveaxis(acc, -1, axis))
        out._backward = backward
        return out

    # -- elementwise nonlinearities ----------------------------------------

    def relu(self):
        mask = self.data > 0
        out = Tensor(np.where(mask, self.data, 0.0), requires_grad=self.requires_grad, _parents=(self,))

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * mask)
        out._backward = backward
        return out

    def leaky_relu(self, slope: float = 0.2):
        mask = self.data > 0
        out = Tensor(np.where(mask, self.data, slope * self.data),
                     requires_grad=self.requires_grad, _parents=(self,))

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * np.where(mask, 1.0, slope))
        out._backward = backward
        return out

    def gelu(self):
        """Exact (erf-based) GELU: x * Phi(x)."""
        x = self.data
        phi_cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
        out = Tensor(x * phi_cdf, requires_grad=self.requires_grad, _parents=(self,))

        def backward(g):
            if self.requires_grad:
                pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
                self._accumulate(g * (phi_cdf + x * pdf))
        out._backward = backward
        return out

    def exp(self):
        val = np.exp(self.data)
        out = Tensor(val, requires_grad=self.requires_grad, _parents=(self,))

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * val)
        out._backward = backward
        return out

    def log(self):
        out = Tensor(np.log(self.data), requires_grad=self.requires_grad, _parents=(self,))

        def backward(g):
            if self.requires_grad:
                self._accumulate(g / self.data)
        out._backward = backward
        return out

    def sqrt(self):
        val = np.sqrt(self.data)
        out = Tensor(val, requires_grad=self.requires_grad, _parents=(self,))

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * (0.5 / val))
        out._backward = backward
        return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def stack(tensors: list[Tensor], axis: int = 0) -> Tensor:
    """Stack scalars/arrays into one tensor; gradients split back apart."""
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.stack([t.data for t in tensors], axis=axis),
                 requires_grad=any(t.requires_grad for t in tensors),
                 _parents=tuple(tensors))

    def backward(g):
        pieces = np.moveaxis(g, axis, 0)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                t._accumulate(piece.reshape(t.data.shape))
    out._backward = backward
    return out


def attend(alpha: Tensor, values: Tensor) -> Tensor:
    """Attention aggregation msg[i,h,:] = sum_j alpha[i,j,h] * values[j,h,:].

    Dedicated op so the (n, n, heads, dh) outer product is never materialized.
    """
    out = Tensor(np.einsum("ijh,jhd->ihd", alpha.data, values.data, optimize=True),
                 requires_grad=alpha.requires_grad or values.requires_grad,
                 _parents=(alpha, values))

    def backward(g):
        if alpha.requires_grad:
            alpha._accumulate(np.einsum("ihd,jhd->ijh", g, values.data, optimize=True))
        if values.requires_grad:
            values._accumulate(np.einsum("ijh,ihd->jhd", alpha.data, g, optimize=True))
    out._backward = backward
    return out


def softmax(t: Tensor, axis: int) -> Tensor:
    """Overflow-safe softmax; the subtracted max is a detached constant."""
    shift = np.max(t.data, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(shift), shift, 0.0)  # rows of -inf stay defined
    z = (t - Tensor(shift)).exp()
    return z / z.sum(axis=axis, keepdims=True)


def layer_norm(t: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    mu = t.mean(axis=-1, keepdims=True)
    centered = t - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / (var + eps).sqrt() * gain + bias
