"""Reverse-mode automatic differentiation over float64 numpy arrays.

A :class:`Tensor` wraps a C-contiguous float64 array.  Operations that
receive at least one tensor with ``requires_grad`` record a closure that
maps the upstream gradient onto their parents; :func:`backward` walks the
recorded graph in reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigurationError, UsageError

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple[Tensor, ...] = (),
        backward: BackwardFn | None = None,
        op: str = "",
    ):
        self.data = np.asarray(data, dtype=np.float64, order="C")
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    def __float__(self) -> float:
        return self.item()

    def __repr__(self) -> str:
        tag = f", op={self.op!r}" if self.op else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __add__(self, other) -> Tensor:
        return add(self, as_tensor(other))

    __radd__ = __add__

    def __mul__(self, other) -> Tensor:
        if isinstance(other, Tensor):
            raise UsageError("elementwise tensor products are not supported; use scale()")
        return scale(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other) -> Tensor:
        return matmul(self, as_tensor(other))

    def backward(self) -> None:
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def node(data: np.ndarray, parents: tuple[Tensor, ...], fn: BackwardFn, op: str) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, backward=fn, op=op)
    return Tensor(data, op=op)


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf reachable from ``loss``."""
    if loss.data.size != 1:
        raise UsageError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_toposort(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


class GradientSet(dict):
    """Gradient arrays keyed (and ordered) like the parameters they belong to."""

    def matches(self, params) -> bool:
        return list(self) == list(params.names) and all(
            np.shape(self[n]) == params[n].shape for n in params.names
        )


def gradients(loss: Tensor, leaves: Mapping[str, Tensor]) -> GradientSet:
    """Run :func:`backward` and collect one gradient array per named leaf.

    Leaves the loss does not depend on get a zero gradient of matching shape.
    """
    for leaf in leaves.values():
        leaf.grad = None
    backward(loss)
    return GradientSet(
        (name, leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data))
        for name, leaf in leaves.items()
    )


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and linear algebra
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return node(out, (a, b), fn, "add")


def scale(a: Tensor, c: float) -> Tensor:
    def fn(g):
        return (g * c,)

    return node(a.data * c, (a,), fn, "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ConfigurationError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def fn(g):
        return g @ b.data.T, a.data.T @ g

    return node(a.data @ b.data, (a, b), fn, "matmul")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def fn(g):
        return (g * mask,)

    return node(np.where(mask, a.data, 0.0), (a,), fn, "relu")


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def fn(g):
        return (g.reshape(a.shape),)

    return node(a.data.reshape(shape), (a,), fn, "reshape")


def total(a: Tensor) -> Tensor:
    def fn(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    return node(np.asarray(a.data.sum()), (a,), fn, "sum")


def mean(a: Tensor) -> Tensor:
    n = a.data.size

    def fn(g):
        return (np.full(a.shape, float(g) / n),)

    return node(np.asarray(a.data.mean()), (a,), fn, "mean")


def weighted_sum(terms: Iterable[tuple[float, Tensor]]) -> Tensor:
    """Scalar ``sum(w * t)`` as a single node; terms with weight 0 still get a (zero) edge."""
    terms = list(terms)
    out = np.zeros(())
    for w, t in terms:
        out = out + w * t.data
    parents = tuple(t for _, t in terms)
    weights = [w for w, _ in terms]

    def fn(g):
        return [g * w for w in weights]

    return node(out, parents, fn, "weighted_sum")


# ---------------------------------------------------------------------------
# convolution and pooling, NHWC layout
# ---------------------------------------------------------------------------

def conv2d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Valid, stride-1 convolution.  x: (N,H,W,C), w: (k,k,C,O), b: (O,)."""
    n, h, wd, c = x.shape
    k, k2, cin, cout = w.shape
    if k != k2 or cin != c:
        raise ConfigurationError(f"conv2d: kernel {w.shape} does not fit input {x.shape}")
    ho, wo = h - k + 1, wd - k + 1
    if ho < 1 or wo < 1:
        raise ConfigurationError(f"conv2d: kernel {k} larger than input {h}x{wd}")
    # (N, Ho, Wo, C, k, k) -> (N, Ho, Wo, k, k, C)
    patches = sliding_window_view(x.data, (k, k), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3)
    cols = patches.reshape(n * ho * wo, k * k * c)
    wmat = w.data.reshape(k * k * c, cout)
    out = (cols @ wmat + b.data).reshape(n, ho, wo, cout)

    def fn(g):
        g2 = g.reshape(n * ho * wo, cout)
        gw = (cols.T @ g2).reshape(w.shape)
        gb = g2.sum(axis=0)
        gx = None
        if x.requires_grad:
            gcols = (g2 @ wmat.T).reshape(n, ho, wo, k, k, c)
            gx = np.zeros_like(x.data)
            for i in range(k):
                for j in range(k):
                    gx[:, i:i + ho, j:j + wo, :] += gcols[:, :, :, i, j, :]
        return gx, gw, gb

    return node(out, (x, w, b), fn, "conv2d")


def max_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping max pooling; trailing rows/cols that do not fill a window are dropped."""
    n, h, wd, c = x.shape
    ho, wo = h // size, wd // size
    if ho < 1 or wo < 1:
        raise ConfigurationError(f"max_pool2d: window {size} larger than input {h}x{wd}")
    cropped = x.data[:, : ho * size, : wo * size, :]
    windows = cropped.reshape(n, ho, size, wo, size, c).transpose(0, 1, 3, 5, 2, 4)
    windows = windows.reshape(n, ho, wo, c, size * size)
    arg = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]

    def fn(g):
        gw = np.zeros((n, ho, wo, c, size * size))
        np.put_along_axis(gw, arg[..., None], g[..., None], axis=-1)
        gw = gw.reshape(n, ho, wo, c, size, size).transpose(0, 1, 4, 2, 5, 3)
        gx = np.zeros_like(x.data)
        gx[:, : ho * size, : wo * size, :] = gw.reshape(n, ho * size, wo * size, c)
        return (gx,)

    return node(out, (x,), fn, "max_pool2d")
