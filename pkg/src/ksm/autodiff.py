"""Dense-tensor engine with reverse-mode automatic differentiation.

Every tensor is a float64 numpy array wrapped in a :class:`Tensor` node.
Operations record their inputs and a backward closure; calling
``Tensor.backward()`` on a scalar walks the recorded graph in reverse
topological order and accumulates ``d loss / d node`` into ``node.grad``.

Semantics worth knowing:

- repeated ``backward()`` calls accumulate gradients (call ``zero_grad``
  between steps);
- the graph is plain Python objects and stays alive as long as the loss
  tensor does, so a loss can be backpropagated more than once;
- gradients flow only into nodes with ``requires_grad=True`` (set directly
  or inherited from any input).

The op vocabulary is fixed and small: matmul, add, multiply, neg, concat
(last axis), row gather, reshape, transpose, sum/mean over an axis, amax,
tanh, sigmoid, relu, log, softmax, layer_norm and dropout.

Tensors are plain values and safe to copy between threads; a recorded
graph belongs to the thread that built it. Training is single-threaded;
forward passes over frozen parameters may run concurrently.
"""

from __future__ import annotations

import logging
from typing import Iterator, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DTYPE = np.float64


class Tensor:
    """A dense float64 array plus an optional gradient of the same shape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple = (), _backward=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of size {self.data.size}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Backpropagate from this scalar through the recorded graph.

        Leaf gradients accumulate across repeated calls (zero them between
        optimizer steps); interior-node gradients are reset at the start of
        every pass so each call contributes exactly one fresh gradient.
        The graph stays alive with the loss tensor and may be re-walked.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward() requires a scalar loss, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        for node in topo:
            if node._backward is not None:
                node.grad = None
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # arithmetic sugar; everything routes through the op functions below
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other):
        return add(_as_tensor(other), neg(self))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return multiply(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=DTYPE))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `g` down to `shape`, inverting numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req,
                  _parents=tuple(parents) if req else (),
                  _backward=backward if req else None)


# ---------------------------------------------------------------------------
# ops


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(out_data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a._accumulate(-g)

    return _make(-a.data, (a,), backward)


def scale(a: Tensor, c: float) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a._accumulate(g * c)

    return _make(a.data * c, (a,), backward)


def multiply(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(
            f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _make(out_data, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError(f"transpose expects a 2-D tensor, got {a.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.T)

    return _make(a.data.T.copy(), (a,), backward)


def reshape(a: Tensor, shape: tuple) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.shape))

    return _make(a.data.reshape(shape), (a,), backward)


def concat(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis."""
    if not tensors:
        raise ValueError("concat of an empty sequence")
    out_data = np.concatenate([t.data for t in tensors], axis=-1)
    widths = [t.shape[-1] for t in tensors]
    offsets = np.cumsum([0] + widths)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                t._accumulate(g[..., lo:hi])

    return _make(out_data, tensors, backward)


def gather_rows(a: Tensor, index: Sequence[int]) -> Tensor:
    """Select rows of a 2-D tensor; repeated indices scatter-add on backward."""
    if a.data.ndim != 2:
        raise ValueError(f"gather_rows expects a 2-D tensor, got {a.shape}")
    idx = np.asarray(index, dtype=np.intp)
    if idx.ndim != 1:
        raise ValueError("gather_rows index must be 1-D")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise IndexError(f"gather_rows index out of range for {a.shape}")

    def backward(g):
        if a.requires_grad:
            acc = np.zeros_like(a.data)
            np.add.at(acc, idx, g)
            a._accumulate(acc)

    return _make(a.data[idx], (a,), backward)


def tensor_sum(a: Tensor, axis: int | None = None,
               keepdims: bool = False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if not a.requires_grad:
            return
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape).copy())
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(gg, a.shape).copy())

    return _make(out_data, (a,), backward)


def mean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    if n == 0:
        raise ValueError("mean over an empty axis")
    return scale(tensor_sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def amax(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    """Max over an axis; gradient flows to the (first) argmax positions."""
    out_data = a.data.max(axis=axis, keepdims=keepdims)
    hit = (a.data == a.data.max(axis=axis, keepdims=True))
    # ties: route the gradient to the first maximal entry only
    first = np.cumsum(hit, axis=axis) == 1
    mask = (hit & first).astype(DTYPE)

    def backward(g):
        if a.requires_grad:
            gg = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(mask * gg)

    return _make(out_data, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (1.0 - out_data * out_data))

    return _make(out_data, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    # split by sign for stability on large |x|
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                        np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), backward)


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0.0)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (a.data > 0))

    return _make(out_data, (a,), backward)


def log(a: Tensor, floor: float | None = None) -> Tensor:
    """Natural log. With `floor`, inputs below it are clamped (grad 0 there)."""
    x = a.data
    if floor is not None:
        clipped = np.maximum(x, floor)
        if np.any(x < floor):
            logger.warning("log: clamped %d value(s) below %.3g",
                           int(np.sum(x < floor)), floor)
    else:
        clipped = x
    out_data = np.log(clipped)

    def backward(g):
        if a.requires_grad:
            dx = g / clipped
            if floor is not None:
                dx = np.where(x < floor, 0.0, dx)
            a._accumulate(dx)

    return _make(out_data, (a,), backward)


def softmax(a: Tensor, axis: int) -> Tensor:
    """Numerically stable softmax along `axis` (max-subtraction)."""
    if not -a.data.ndim <= axis < a.data.ndim:
        raise ValueError(f"softmax axis {axis} invalid for shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            dot = (g * out_data).sum(axis=axis, keepdims=True)
            a._accumulate(out_data * (g - dot))

    return _make(out_data, (a,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               eps: float = 1e-5) -> Tensor:
    """Normalize each last-axis slice to zero mean / unit variance.

    Output is ``(x - mean) / sqrt(var + eps) * gamma + beta``; gamma and
    beta span the last axis.
    """
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    n = x.shape[-1] if x.data.ndim else 0
    if n == 0:
        raise ValueError("layer_norm over a zero-length axis")
    if gamma.shape != (n,) or beta.shape != (n,):
        raise ValueError(
            f"gamma/beta must have shape ({n},), got {gamma.shape}/{beta.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out_data = xhat * gamma.data + beta.data

    def backward(g):
        if beta.requires_grad:
            beta._accumulate(g.reshape(-1, n).sum(axis=0))
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).reshape(-1, n).sum(axis=0))
        if x.requires_grad:
            dxhat = g * gamma.data
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(inv * (dxhat - m1 - xhat * m2))

    return _make(out_data, (x, gamma, beta), backward)


def dropout(a: Tensor, rate: float, rng: np.random.Generator | None,
            train: bool = True) -> Tensor:
    """Inverted dropout: kept entries are scaled by 1/(1-rate).

    Identity when ``train`` is false or ``rate`` is 0; rate must be in [0, 1).
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return a
    if rng is None:
        raise ValueError("active dropout needs an rng")
    keep = 1.0 - rate
    mask = (rng.random(a.shape) < keep).astype(DTYPE) / keep

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * mask)

    return _make(a.data * mask, (a,), backward)


# ---------------------------------------------------------------------------
# parameters


class ParameterStore:
    """Ordered, uniquely-named registry of trainable tensors.

    Names are '.'-separated paths (e.g. "encoder1.block0.head2.wq");
    iteration follows insertion order, so checkpoints and optimizer state
    are deterministic.
    """

    def __init__(self):
        self._entries: dict[str, Tensor] = {}

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._entries:
            raise ValueError(f"duplicate parameter name: {name}")
        tensor.requires_grad = True
        self._entries[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._entries.items())

    def tensors(self) -> Iterator[Tensor]:
        return iter(self._entries.values())

    def zero_grad(self) -> None:
        for t in self._entries.values():
            t.zero_grad()

    def clone_values(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._entries.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        missing = set(self._entries) - set(values)
        extra = set(values) - set(self._entries)
        if missing or extra:
            raise KeyError(
                f"parameter name mismatch: missing={sorted(missing)}, "
                f"unexpected={sorted(extra)}")
        for k, t in self._entries.items():
            v = np.asarray(values[k], dtype=DTYPE)
            if v.shape != t.shape:
                raise ValueError(
                    f"shape mismatch for {k}: stored {v.shape}, "
                    f"expected {t.shape}")
            t.data = v.copy()


def backward(loss: Tensor, params: ParameterStore | None = None) -> None:
    """Backpropagate a scalar loss; gradients land in parameter ``.grad``s."""
    loss.backward()
    if params is not None:
        for name, t in params.items():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
