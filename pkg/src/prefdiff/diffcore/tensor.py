"""
tensor - Dense float64 tensors with reverse-mode automatic differentiation.

A Tensor wraps a contiguous numpy float64 array. Every primitive operation on
tensors that require gradients records a Node holding its parents and a backward
rule; ``backward`` walks the recorded nodes in reverse creation order, which is a
valid reverse topological order because parents are always created before their
children.
"""

from __future__ import annotations

import itertools
import threading
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import special

from ..errors import GraphError, NonFiniteError, ShapeError

type ArrayLike = np.ndarray | float | int | Sequence[Any]
type BackwardFn = Callable[[np.ndarray], tuple[np.ndarray | None, ...]]

_NODE_IDS = itertools.count()


class _State(threading.local):
    """Per-thread autodiff switches; graphs are confined to one thread."""

    def __init__(self) -> None:
        self.grad_enabled = True
        self.debug = False
        self.tape: _StopGradientTape | None = None


_state = _State()


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block (pure evaluation)."""
    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


@contextmanager
def debug_mode(enabled: bool = True) -> Iterator[None]:
    """Screen every operation result for NaN/Inf inside the block."""
    previous = _state.debug
    _state.debug = enabled
    try:
        yield
    finally:
        _state.debug = previous


def is_debug() -> bool:
    return _state.debug


@dataclass(eq=False)
class Node:
    """One recorded primitive: its op name, inputs and gradient rule."""

    op: str
    parents: tuple[Tensor, ...]
    backward_fn: BackwardFn
    index: int = field(default_factory=lambda: next(_NODE_IDS))


class Tensor:
    """
    A dense float64 tensor that may participate in a computation record.

    Leaves created with ``requires_grad=True`` are parameters; results of primitive
    operations require gradients when any input does.
    """

    __slots__ = ("data", "requires_grad", "grad_node", "name")
    __array_priority__ = 1000

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: str | None = None,
    ):
        arr = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"tensor creation{f' ({name})' if name else ''}")
        self.data: np.ndarray = arr
        self.requires_grad = requires_grad
        self.grad_node: Node | None = None
        self.name = name

    @classmethod
    def _from_op(cls, data: np.ndarray, node: Node | None) -> Tensor:
        out = cls.__new__(cls)
        out.data = np.ascontiguousarray(data, dtype=np.float64)
        out.requires_grad = node is not None
        out.grad_node = node
        out.name = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise GraphError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        """Return a copy of the values."""
        return self.data.copy()

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        grad = " requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{label}{grad})"

    # Operator sugar
    def __add__(self, other: Tensor | ArrayLike) -> Tensor:
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Tensor | ArrayLike) -> Tensor:
        return subtract(self, other)

    def __rsub__(self, other: ArrayLike) -> Tensor:
        return subtract(other, self)

    def __mul__(self, other: Tensor | ArrayLike) -> Tensor:
        return multiply(self, other)

    def __rmul__(self, other: ArrayLike) -> Tensor:
        return multiply(other, self)

    def __matmul__(self, other: Tensor | ArrayLike) -> Tensor:
        return matmul(self, other)

    def __neg__(self) -> Tensor:
        return scale(self, -1.0)

    def sum(self, axis: int | None = None) -> Tensor:
        return tensor_sum(self, axis)

    def mean(self, axis: int | None = None) -> Tensor:
        return mean(self, axis)

    def reshape(self, *shape: int) -> Tensor:
        return reshape(self, shape)


def as_tensor(value: Tensor | ArrayLike) -> Tensor:
    """Wrap a constant as a tensor that does not require gradients."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _record(op: str, data: np.ndarray, parents: tuple[Tensor, ...], rule: BackwardFn) -> Tensor:
    needs_grad = _state.grad_enabled and any(p.requires_grad for p in parents)
    node = Node(op, parents, rule) if needs_grad else None
    out = Tensor._from_op(data, node)
    if _state.debug and not np.all(np.isfinite(out.data)):
        raise NonFiniteError(f"result of {op}")
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a.shape, b.shape))
    except ValueError as e:
        raise ShapeError(op, [a.shape, b.shape], "not broadcastable") from e


# Elementwise binary primitives


def add(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record("add", a.data + b.data, (a, b), rule)


def subtract(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("subtract", a, b)

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record("subtract", a.data - b.data, (a, b), rule)


def multiply(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("multiply", a, b)
    a_data, b_data = a.data, b.data

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g * b_data, a.shape), _unbroadcast(g * a_data, b.shape)

    return _record("multiply", a_data * b_data, (a, b), rule)


def scale(a: Tensor | ArrayLike, c: float) -> Tensor:
    """Multiply by a Python scalar constant."""
    a = as_tensor(a)
    c = float(c)

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * c,)

    return _record("scale", a.data * c, (a,), rule)


def matmul(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    """Matrix product of a (n, k) or (k,) tensor with a (k, m) tensor."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeError("matmul", [a.shape, b.shape], "expected (n,k)@(k,m) or (k,)@(k,m)")
    a_data, b_data = a.data, b.data

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_a = g @ b_data.T
        grad_b = np.outer(a_data, g) if a_data.ndim == 1 else a_data.T @ g
        return grad_a, grad_b

    return _record("matmul", a_data @ b_data, (a, b), rule)


# Shape primitives


def broadcast_to(a: Tensor | ArrayLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    target = tuple(int(s) for s in shape)
    try:
        data = np.broadcast_to(a.data, target)
    except ValueError as e:
        raise ShapeError("broadcast_to", [a.shape, target], "not broadcastable") from e

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        return (_unbroadcast(g, a.shape),)

    return _record("broadcast_to", np.array(data), (a,), rule)


def reshape(a: Tensor | ArrayLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        data = a.data.reshape(tuple(shape))
    except ValueError as e:
        raise ShapeError("reshape", [a.shape, tuple(shape)]) from e
    original = a.shape

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        return (g.reshape(original),)

    return _record("reshape", data, (a,), rule)


def concatenate(tensors: Sequence[Tensor | ArrayLike], axis: int = -1) -> Tensor:
    parts = tuple(as_tensor(t) for t in tensors)
    if not parts:
        raise ShapeError("concatenate", [], "no inputs")
    try:
        data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as e:
        raise ShapeError("concatenate", [p.shape for p in parts]) from e
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def rule(g: np.ndarray) -> tuple[np.ndarray, ...]:
        return tuple(np.split(g, splits, axis=axis))

    return _record("concatenate", data, parts, rule)


def take_rows(table: Tensor | ArrayLike, indices: np.ndarray) -> Tensor:
    """Gather rows of a 2-D table (embedding lookup)."""
    table = as_tensor(table)
    idx = np.asarray(indices, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError("take_rows", [table.shape, idx.shape], "table must be 2-D")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError("take_rows", [table.shape, idx.shape], "row index out of range")
    rows = table.shape[0]

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros((rows, g.shape[-1]))
        np.add.at(grad, idx, g)
        return (grad,)

    return _record("take_rows", table.data[idx], (table,), rule)


# Reductions


def tensor_sum(a: Tensor | ArrayLike, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _record("sum", np.asarray(a.data.sum(axis=axis)), (a,), rule)


def mean(a: Tensor | ArrayLike, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else a.shape[axis]
    return scale(tensor_sum(a, axis), 1.0 / count)


# Elementwise unary primitives


def square(a: Tensor | ArrayLike) -> Tensor:
    a = as_tensor(a)
    a_data = a.data

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        return (2.0 * a_data * g,)

    return _record("square", a_data * a_data, (a,), rule)


def relu(a: Tensor | ArrayLike) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * mask,)

    return _record("relu", np.where(mask, a.data, 0.0), (a,), rule)


def silu(a: Tensor | ArrayLike) -> Tensor:
    a = as_tensor(a)
    x = a.data
    s = special.expit(x)

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * s * (1.0 + x * (1.0 - s)),)

    return _record("silu", x * s, (a,), rule)


def sigmoid(a: Tensor | ArrayLike) -> Tensor:
    a = as_tensor(a)
    s = special.expit(a.data)

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * s * (1.0 - s),)

    return _record("sigmoid", s, (a,), rule)


def log(a: Tensor | ArrayLike) -> Tensor:
    a = as_tensor(a)
    x = a.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x)

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        return (g / x,)

    return _record("log", out, (a,), rule)


def log_sigmoid(a: Tensor | ArrayLike) -> Tensor:
    """log σ(z), evaluated as -softplus(-z) so large |z| stays finite."""
    a = as_tensor(a)
    z = a.data

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * special.expit(-z),)

    return _record("log_sigmoid", special.log_expit(z), (a,), rule)


# Stop-gradient


class _StopGradientTape:
    """Records detached values so perturbed re-evaluations can hold them fixed."""

    def __init__(self) -> None:
        self.values: list[np.ndarray] = []
        self.replaying = False
        self.cursor = 0

    def take(self, value: np.ndarray) -> np.ndarray:
        if not self.replaying:
            self.values.append(value.copy())
            return value
        if self.cursor >= len(self.values):
            raise GraphError("stop_gradient replay ran past the recorded values")
        held = self.values[self.cursor]
        self.cursor += 1
        return held


@contextmanager
def _stop_gradient_tape(tape: _StopGradientTape, replay: bool) -> Iterator[_StopGradientTape]:
    previous = _state.tape
    tape.replaying = replay
    tape.cursor = 0
    _state.tape = tape
    try:
        yield tape
    finally:
        _state.tape = previous


def stop_gradient(x: Tensor | ArrayLike) -> Tensor:
    """
    Return a tensor with the value of ``x`` through which no gradient flows.

    Inside a finite-difference check the unperturbed value is replayed, so the
    numerical derivative treats the detached factor as the constant it is.
    """
    x = as_tensor(x)
    value = x.data if _state.tape is None else _state.tape.take(x.data)
    return Tensor._from_op(value.copy(), None)


# Backward pass


class ComputationRecord:
    """The recorded nodes reachable from one output, in topological order."""

    def __init__(self, nodes: list[Node]):
        self.nodes = nodes

    @classmethod
    def trace(cls, output: Tensor) -> ComputationRecord:
        if output.grad_node is None:
            return cls([])
        seen: dict[int, Node] = {}
        stack = [output.grad_node]
        while stack:
            node = stack.pop()
            if node.index in seen:
                continue
            seen[node.index] = node
            for parent in node.parents:
                if parent.grad_node is None:
                    continue
                if parent.grad_node.index >= node.index:
                    raise GraphError(f"cycle detected at op {node.op}")
                stack.append(parent.grad_node)
        return cls(sorted(seen.values(), key=lambda n: n.index))

    def __len__(self) -> int:
        return len(self.nodes)


type GradientMap = dict[Tensor, Tensor]


def _accumulate(grads: dict[int, np.ndarray], key: int, grad: np.ndarray) -> None:
    grads[key] = grads[key] + grad if key in grads else grad


def backward(output: Tensor, params: Sequence[Tensor] | None = None) -> GradientMap:
    """
    Compute gradients of a scalar output.

    Args:
        output: A single-element tensor
        params: Parameters to report. Parameters unreachable from ``output`` get
            zero gradients. When omitted, every reachable leaf that requires
            gradients is reported.

    Returns:
        Mapping from parameter tensor to its gradient tensor.
    """
    if output.size != 1:
        raise GraphError(f"backward needs a scalar output, got shape {output.shape}")

    record = ComputationRecord.trace(output)
    node_grads: dict[int, np.ndarray] = {}
    leaf_grads: dict[int, np.ndarray] = {}
    leaves: dict[int, Tensor] = {}

    if output.grad_node is not None:
        node_grads[output.grad_node.index] = np.ones_like(output.data)
    elif output.requires_grad:
        leaves[id(output)] = output
        leaf_grads[id(output)] = np.ones_like(output.data)

    for node in reversed(record.nodes):
        grad = node_grads.pop(node.index, None)
        if grad is None:
            continue
        for parent, parent_grad in zip(node.parents, node.backward_fn(grad), strict=True):
            if parent_grad is None or not parent.requires_grad:
                continue
            if parent.grad_node is not None:
                _accumulate(node_grads, parent.grad_node.index, parent_grad)
            else:
                leaves[id(parent)] = parent
                _accumulate(leaf_grads, id(parent), parent_grad)

    if params is None:
        return {leaves[k]: Tensor._from_op(leaf_grads[k], None) for k in leaves}

    result: GradientMap = {}
    for p in params:
        g = leaf_grads.get(id(p))
        result[p] = Tensor._from_op(np.zeros_like(p.data) if g is None else g, None)
    return result
