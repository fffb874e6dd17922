"""Reverse-mode automatic differentiation over numpy arrays.

A ``Tape`` records every primitive applied to ``Node`` values in creation
order. ``Tape.backward`` walks that order in reverse, which is a valid reverse
topological order because a node only exists after its parents do. Parameters
live in flat ``ParamVector`` buffers and gradients reaching a parameter leaf
accumulate into ``ParamVector.grads``.

A tape built with an explicit ``trainable`` collection treats every other
parameter vector as a constant, so frozen parameters never receive gradients.
"""

import builtins
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ConfigurationError, UsageError

Shape = Tuple[int, ...]


class ParamVector:
    """A flat float64 parameter buffer with a matching gradient buffer.

    ``shapes`` names the logical blocks laid out back to back in ``values``.
    """

    def __init__(self, shapes: Sequence[Shape], values: Optional[np.ndarray] = None, name: str = ""):
        self.shapes: List[Shape] = [tuple(int(d) for d in shape) for shape in shapes]
        size = builtins.sum(int(np.prod(shape)) for shape in self.shapes)
        if values is None:
            values = np.zeros(size)
        values = np.array(values, dtype=np.float64).reshape(-1)
        if values.size != size:
            raise ConfigurationError(f"{name or 'parameters'}: expected {size} values, got {values.size}")
        self.values = values
        self.grads = np.zeros(size)
        self.name = name

    def __len__(self) -> int:
        return self.values.size

    def __repr__(self) -> str:
        return f"ParamVector(name={self.name!r}, shapes={self.shapes})"

    def offsets(self) -> List[int]:
        offsets = [0]
        for shape in self.shapes:
            offsets.append(offsets[-1] + int(np.prod(shape)))
        return offsets

    def block(self, k: int) -> np.ndarray:
        """Returns a reshaped view of block ``k``."""
        offsets = self.offsets()
        return self.values[offsets[k]:offsets[k + 1]].reshape(self.shapes[k])

    def zero_grad(self) -> None:
        self.grads[:] = 0.0

    def copy(self, name: Optional[str] = None) -> "ParamVector":
        return ParamVector(self.shapes, self.values.copy(), self.name if name is None else name)

    def assign(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if values.size != self.values.size:
            raise UsageError(f"{self.name}: cannot assign {values.size} values to {self.values.size}")
        self.values[:] = values


class Node:
    """A value on a tape. Supports the arithmetic operators."""

    __slots__ = ("value", "tape", "requires_grad", "parents", "backward_fn", "sink")

    # numpy defers binary operators to Node's reflected methods.
    __array_ufunc__ = None

    def __init__(self, value: np.ndarray, tape: "Tape", requires_grad: bool = False,
                 parents: Tuple["Node", ...] = (), backward_fn: Optional[Callable] = None,
                 sink: Optional[ParamVector] = None):
        self.value = value
        self.tape = tape
        self.requires_grad = requires_grad
        self.parents = parents
        self.backward_fn = backward_fn
        self.sink = sink

    @property
    def shape(self) -> Shape:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def item(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        return f"Node(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims: bool = False) -> "Node":
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Node":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape: Shape) -> "Node":
        return reshape(self, shape)


class Tape:
    """Records operations for one backward pass.

    ``trainable``: parameter vectors that receive gradients. ``None`` means
    every parameter placed on the tape is trainable.
    """

    def __init__(self, trainable: Optional[Iterable[ParamVector]] = None):
        self._nodes: List[Node] = []
        self._params: Dict[int, Node] = {}
        self._trainable = None if trainable is None else {id(pv) for pv in trainable}
        self._consumed = False

    @property
    def consumed(self) -> bool:
        return self._consumed

    def is_trainable(self, params: ParamVector) -> bool:
        return self._trainable is None or id(params) in self._trainable

    def param(self, params: ParamVector) -> Node:
        """Places a parameter vector on the tape as a 1-D leaf."""
        self._check_open()
        cached = self._params.get(id(params))
        if cached is not None:
            return cached
        if self.is_trainable(params):
            node = Node(params.values, self, requires_grad=True, sink=params)
            self._nodes.append(node)
        else:
            node = Node(params.values, self)
        self._params[id(params)] = node
        return node

    def constant(self, value) -> Node:
        return Node(np.asarray(value, dtype=np.float64), self)

    def lift(self, value) -> Node:
        if isinstance(value, Node):
            if value.tape is not self:
                raise UsageError("cannot mix nodes from different tapes")
            return value
        return self.constant(value)

    def record(self, value: np.ndarray, parents: Tuple[Node, ...], backward_fn: Callable) -> Node:
        self._check_open()
        value = np.asarray(value, dtype=np.float64)
        if any(parent.requires_grad for parent in parents):
            node = Node(value, self, True, parents, backward_fn)
            self._nodes.append(node)
            return node
        return Node(value, self)

    def backward(self, loss: Node) -> None:
        """Accumulates d(loss)/d(param) into every trainable parameter's grads.

        The tape is consumed afterwards.
        """
        self._check_open()
        if not isinstance(loss, Node) or loss.tape is not self:
            raise UsageError("loss is not a node on this tape")
        if loss.value.size != 1:
            raise UsageError(f"backward needs a scalar loss, got shape {loss.value.shape}")
        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
        for node in reversed(self._nodes):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node.sink is not None:
                node.sink.grads += grad.reshape(-1)
            if node.backward_fn is None:
                continue
            for parent, parent_grad in zip(node.parents, node.backward_fn(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                parent_grad = _unbroadcast(np.asarray(parent_grad, dtype=np.float64), parent.value.shape)
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad
        self._nodes.clear()
        self._params.clear()
        self._consumed = True

    def _check_open(self) -> None:
        if self._consumed:
            raise UsageError("tape already consumed by backward")


ArrayOrNode = Union[Node, np.ndarray, float, int]


def _unbroadcast(grad: np.ndarray, shape: Shape) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _tape_of(*values: ArrayOrNode) -> Tape:
    for value in values:
        if isinstance(value, Node):
            return value.tape
    raise UsageError("operation needs at least one tape node")


def _lift2(a: ArrayOrNode, b: ArrayOrNode) -> Tuple[Tape, Node, Node]:
    tape = _tape_of(a, b)
    return tape, tape.lift(a), tape.lift(b)


def add(a: ArrayOrNode, b: ArrayOrNode) -> Node:
    tape, a, b = _lift2(a, b)
    return tape.record(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a: ArrayOrNode, b: ArrayOrNode) -> Node:
    tape, a, b = _lift2(a, b)
    return tape.record(a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a: ArrayOrNode, b: ArrayOrNode) -> Node:
    tape, a, b = _lift2(a, b)
    return tape.record(a.value * b.value, (a, b), lambda g: (g * b.value, g * a.value))


def div(a: ArrayOrNode, b: ArrayOrNode) -> Node:
    tape, a, b = _lift2(a, b)
    return tape.record(a.value / b.value, (a, b),
                       lambda g: (g / b.value, -g * a.value / (b.value * b.value)))


def neg(a: Node) -> Node:
    return a.tape.record(-a.value, (a,), lambda g: (-g,))


def power(a: Node, exponent: float) -> Node:
    exponent = float(exponent)
    return a.tape.record(a.value ** exponent, (a,),
                         lambda g: (g * exponent * a.value ** (exponent - 1.0),))


def square(a: Node) -> Node:
    return a.tape.record(a.value * a.value, (a,), lambda g: (2.0 * g * a.value,))


def matmul(a: ArrayOrNode, b: ArrayOrNode) -> Node:
    """Matrix product; ``a`` may be 1-D or 2-D, ``b`` must be 2-D."""
    tape, a, b = _lift2(a, b)
    if b.value.ndim != 2 or a.value.ndim not in (1, 2):
        raise UsageError(f"matmul shapes {a.shape} @ {b.shape} not supported")
    vector = a.value.ndim == 1
    left = a.value[None, :] if vector else a.value
    out = left @ b.value

    def backward(g):
        grad = g[None, :] if vector else g
        grad_a = grad @ b.value.T
        return (grad_a[0] if vector else grad_a), left.T @ grad

    return tape.record(out[0] if vector else out, (a, b), backward)


def exp(a: Node) -> Node:
    out = np.exp(a.value)
    return a.tape.record(out, (a,), lambda g: (g * out,))


def log(a: Node) -> Node:
    return a.tape.record(np.log(a.value), (a,), lambda g: (g / a.value,))


def tanh(a: Node) -> Node:
    out = np.tanh(a.value)
    return a.tape.record(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a: Node) -> Node:
    mask = a.value > 0.0
    return a.tape.record(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def _expand(g: np.ndarray, shape: Shape, axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum(a: Node, axis=None, keepdims: bool = False) -> Node:
    shape = a.value.shape
    return a.tape.record(np.sum(a.value, axis=axis, keepdims=keepdims), (a,),
                         lambda g: (_expand(g, shape, axis, keepdims),))


def mean(a: Node, axis=None, keepdims: bool = False) -> Node:
    count = a.value.size if axis is None else np.prod([a.value.shape[k] for k in np.atleast_1d(axis)])
    return sum(a, axis=axis, keepdims=keepdims) / float(count)


def logsumexp(a: Node, axis: int = -1) -> Node:
    peak = np.max(a.value, axis=axis, keepdims=True)
    shifted = np.exp(a.value - peak)
    total = np.sum(shifted, axis=axis, keepdims=True)
    softmax = shifted / total
    out = np.squeeze(peak + np.log(total), axis=axis)
    return a.tape.record(out, (a,), lambda g: (np.expand_dims(g, axis) * softmax,))


def concat(parts: Sequence[ArrayOrNode], axis: int = -1) -> Node:
    tape = _tape_of(*parts)
    nodes = tuple(tape.lift(part) for part in parts)
    out = np.concatenate([node.value for node in nodes], axis=axis)
    splits = np.cumsum([node.value.shape[axis] for node in nodes])[:-1]
    return tape.record(out, nodes, lambda g: tuple(np.split(g, splits, axis=axis)))


def _is_basic_index(key) -> bool:
    parts = key if isinstance(key, tuple) else (key,)
    return all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis or p is None for p in parts)


def getitem(a: Node, key) -> Node:
    basic = _is_basic_index(key)

    def backward(g):
        grad = np.zeros_like(a.value)
        if basic:
            grad[key] += g
        else:
            np.add.at(grad, key, g)
        return (grad,)

    return a.tape.record(np.array(a.value[key]), (a,), backward)


def reshape(a: Node, shape: Shape) -> Node:
    original = a.value.shape
    return a.tape.record(a.value.reshape(shape), (a,), lambda g: (g.reshape(original),))


def outer(a: ArrayOrNode, b: ArrayOrNode) -> Node:
    """Flattened outer product, batched over a leading axis when inputs are 2-D.

    ``(N, p)`` and ``(N, q)`` give ``(N, p * q)``; 1-D inputs give ``(p * q,)``.
    """
    tape, a, b = _lift2(a, b)
    av, bv = a.value, b.value
    if av.ndim != bv.ndim or av.ndim not in (1, 2):
        raise UsageError(f"outer shapes {a.shape} and {b.shape} not supported")
    out = av[..., :, None] * bv[..., None, :]

    def backward(g):
        grid = g.reshape(out.shape)
        return (grid * bv[..., None, :]).sum(axis=-1), (grid * av[..., :, None]).sum(axis=-2)

    return tape.record(out.reshape(av.shape[:-1] + (-1,)), (a, b), backward)


def minimum(a: ArrayOrNode, b: ArrayOrNode) -> Node:
    tape, a, b = _lift2(a, b)
    first = a.value <= b.value
    return tape.record(np.where(first, a.value, b.value), (a, b),
                       lambda g: (g * first, g * ~first))


def clip(a: Node, low: float, high: float) -> Node:
    inside = (a.value >= low) & (a.value <= high)
    return a.tape.record(np.clip(a.value, low, high), (a,), lambda g: (g * inside,))


def detach(a: Node) -> Node:
    return a.tape.constant(a.value.copy())
