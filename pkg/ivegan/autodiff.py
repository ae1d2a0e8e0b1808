"""Define-by-run reverse-mode differentiation over dense float64 arrays.

Every op appends a node to a :class:`Tape` holding the forward value, the ids
of its inputs and the local vector-Jacobian product. ``backward`` walks the
tape once in reverse insertion order, which is a valid topological order
because inputs always precede their consumers.

Usage::

    tape = Tape()
    w = tape.param(Tensor(np.eye(3)))
    x = tape.constant(Tensor(np.ones((4, 3))))
    loss = mean_all(tanh_act(matmul(x, w)))
    grads = backward(tape, loss)
    grads[w]  # Tensor of shape (3, 3)
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from .errors import NonFiniteError, ShapeError, TapeError

ArrayLike = Union["Tensor", np.ndarray, Sequence, float, int]


class Tensor:
    """Immutable, finite, rank <= 2 array of float64 values."""

    __slots__ = ("_data",)

    def __init__(self, data: ArrayLike):
        if isinstance(data, Tensor):
            self._data = data._data
            return
        self._data = _freeze(np.array(data, dtype=np.float64))

    @classmethod
    def _adopt(cls, arr: np.ndarray) -> "Tensor":
        # Takes ownership of a freshly computed array without copying it.
        t = cls.__new__(cls)
        t._data = _freeze(np.asarray(arr, dtype=np.float64))
        return t

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._data.shape

    @property
    def size(self) -> int:
        return int(self._data.size)

    def numpy(self) -> np.ndarray:
        return self._data.copy()

    def item(self) -> float:
        if self._data.size != 1:
            raise ShapeError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self._data.reshape(-1)[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._data, other._data)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, data={np.array2string(self._data, threshold=8)})"


def _freeze(arr: np.ndarray) -> np.ndarray:
    if arr.ndim > 2:
        raise ShapeError(f"tensors are rank <= 2, got shape {arr.shape}")
    if arr.size and not np.isfinite(arr).all():
        bad = int(np.count_nonzero(~np.isfinite(arr)))
        raise NonFiniteError(
            f"{bad} of {arr.size} entries are NaN/Inf", {"shape": arr.shape, "non_finite": bad}
        )
    if arr.flags.writeable:
        arr.flags.writeable = False
    return arr


GradFn = Callable[..., Tuple[np.ndarray, ...]]
ForwardFn = Callable[..., np.ndarray]


@dataclass(frozen=True)
class _Node:
    op: str
    inputs: Tuple[int, ...]
    value: Tensor
    forward: Optional[ForwardFn]
    grad: Optional[GradFn]
    trainable: bool = False


class Var:
    """Handle to a node on a tape."""

    __slots__ = ("tape", "id")

    def __init__(self, tape: "Tape", node_id: int):
        self.tape = tape
        self.id = node_id

    @property
    def value(self) -> Tensor:
        return self.tape._nodes[self.id].value

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def op(self) -> str:
        return self.tape._nodes[self.id].op

    def __add__(self, other: "Var") -> "Var":
        return add(self, other)

    def __sub__(self, other: "Var") -> "Var":
        return add(self, neg(other))

    def __neg__(self) -> "Var":
        return neg(self)

    def __mul__(self, c: float) -> "Var":
        return scale(self, c)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"Var(id={self.id}, op={self.op!r}, shape={self.shape})"


class Tape:
    """Append-only record of forward operations. Single-threaded."""

    def __init__(self):
        self._nodes: List[_Node] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def constant(self, value: ArrayLike) -> Var:
        return self._leaf(value, trainable=False)

    def param(self, value: ArrayLike) -> Var:
        return self._leaf(value, trainable=True)

    def _leaf(self, value: ArrayLike, trainable: bool) -> Var:
        tensor = value if isinstance(value, Tensor) else Tensor(value)
        self._nodes.append(_Node("leaf", (), tensor, None, None, trainable))
        return Var(self, len(self._nodes) - 1)

    def trainable_leaves(self) -> List[Var]:
        return [Var(self, i) for i, n in enumerate(self._nodes) if n.trainable]

    def owns(self, var: Var) -> bool:
        return var.tape is self and 0 <= var.id < len(self._nodes)

    def record(
        self, op: str, inputs: Sequence[Var], forward: ForwardFn, grad: GradFn
    ) -> Var:
        for v in inputs:
            if not self.owns(v):
                raise TapeError(f"{op}: input {v!r} is not on this tape")
        values = [v.value.data for v in inputs]
        try:
            out = Tensor._adopt(forward(*values))
        except NonFiniteError as e:
            raise NonFiniteError(
                f"{op} (node {len(self._nodes)}) produced non-finite output: {e}",
                {**e.diagnostics, "op": op, "node": len(self._nodes)},
            ) from None
        self._nodes.append(_Node(op, tuple(v.id for v in inputs), out, forward, grad))
        return Var(self, len(self._nodes) - 1)

    def replay(self) -> None:
        """Re-evaluate every node from its recorded inputs.

        Raises TapeError on the first node whose recomputed output is not
        bit-identical to the recorded one.
        """
        for i, node in enumerate(self._nodes):
            if node.forward is None:
                continue
            values = [self._nodes[j].value.data for j in node.inputs]
            again = np.asarray(node.forward(*values), dtype=np.float64)
            if again.shape != node.value.shape or not np.array_equal(again, node.value.data):
                raise TapeError(f"replay mismatch at node {i} ({node.op})")


class Gradients(Mapping[int, Tensor]):
    """Leaf id -> gradient. Indexable by node id or by the leaf's Var."""

    def __init__(self, grads: Mapping[int, Tensor]):
        self._grads = dict(grads)

    def __getitem__(self, key: Union[int, Var]) -> Tensor:
        if isinstance(key, Var):
            key = key.id
        return self._grads[key]

    def __contains__(self, key: object) -> bool:
        if isinstance(key, Var):
            key = key.id
        return key in self._grads

    def __iter__(self) -> Iterator[int]:
        return iter(self._grads)

    def __len__(self) -> int:
        return len(self._grads)


def backward(tape: Tape, loss: Var) -> Gradients:
    """Reverse-mode gradients of a scalar ``loss`` for every trainable leaf.

    Leaves the loss does not depend on get an all-zero gradient.
    """
    if not isinstance(loss, Var) or not tape.owns(loss):
        raise TapeError(f"loss {loss!r} is not a node on this tape")
    if loss.value.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.shape}")

    nodes = tape._nodes
    adjoint: List[Optional[np.ndarray]] = [None] * len(nodes)
    adjoint[loss.id] = np.ones(loss.shape, dtype=np.float64)

    for i in range(loss.id, -1, -1):
        g = adjoint[i]
        node = nodes[i]
        if g is None or node.grad is None:
            continue
        partials = node.grad(g, node.value.data, *(nodes[j].value.data for j in node.inputs))
        for j, p in zip(node.inputs, partials):
            if adjoint[j] is None:
                adjoint[j] = np.array(p, dtype=np.float64)
            else:
                adjoint[j] = adjoint[j] + p

    out = {}
    for i, node in enumerate(nodes):
        if not node.trainable:
            continue
        g = adjoint[i] if adjoint[i] is not None else np.zeros(node.value.shape)
        try:
            out[i] = Tensor._adopt(g)
        except NonFiniteError as e:
            raise NonFiniteError(f"gradient of leaf {i} is non-finite", {**e.diagnostics, "node": i}) from None
    return Gradients(out)


def finite_difference_grad(
    f: Callable[[Tensor], Union[float, Tensor, Var]], at: Tensor, h: float = 1e-6
) -> Tensor:
    """Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate."""
    if not h > 0:
        raise ValueError(f"step h must be positive, got {h}")
    x = np.array(Tensor(at).data, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        fp = _as_float(f(Tensor(x)))
        x[idx] = orig - h
        fm = _as_float(f(Tensor(x)))
        x[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * h)
    return Tensor._adopt(grad)


def _as_float(v: Union[float, Tensor, Var]) -> float:
    if isinstance(v, Var):
        v = v.value
    if isinstance(v, Tensor):
        return v.item()
    return float(v)


# ---------------------------------------------------------------------------
# ops

def _rank2(op: str, v: Var) -> None:
    if len(v.shape) != 2:
        raise ShapeError(f"{op}: expected a rank-2 tensor, got shape {v.shape}")


def matmul(a: Var, b: Var) -> Var:
    _rank2("matmul", a)
    _rank2("matmul", b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} x {b.shape}")
    return a.tape.record(
        "matmul",
        (a, b),
        lambda x, y: x @ y,
        lambda g, out, x, y: (g @ y.T, x.T @ g),
    )


def transpose(a: Var) -> Var:
    _rank2("transpose", a)
    return a.tape.record(
        "transpose",
        (a,),
        lambda x: np.ascontiguousarray(x.T),
        lambda g, out, x: (g.T,),
    )


def add_bias(a: Var, b: Var) -> Var:
    _rank2("add_bias", a)
    if len(b.shape) != 1 or b.shape[0] != a.shape[1]:
        raise ShapeError(f"add_bias: bias shape {b.shape} does not match {a.shape}")
    return a.tape.record(
        "add_bias",
        (a, b),
        lambda x, c: x + c,
        lambda g, out, x, c: (g, g.sum(axis=0)),
    )


def concat(a: Var, b: Var) -> Var:
    _rank2("concat", a)
    _rank2("concat", b)
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat: leading dimensions differ, {a.shape} vs {b.shape}")
    p = a.shape[1]
    return a.tape.record(
        "concat",
        (a, b),
        lambda x, y: np.concatenate([x, y], axis=1),
        lambda g, out, x, y: (g[:, :p], g[:, p:]),
    )


def add(a: Var, b: Var) -> Var:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes differ, {a.shape} vs {b.shape}")
    return a.tape.record("add", (a, b), lambda x, y: x + y, lambda g, out, x, y: (g, g))


def neg(a: Var) -> Var:
    return a.tape.record("neg", (a,), lambda x: -x, lambda g, out, x: (-g,))


def scale(a: Var, c: float) -> Var:
    c = float(c)
    return a.tape.record("scale", (a,), lambda x: c * x, lambda g, out, x: (c * g,))


def tanh_act(a: Var) -> Var:
    return a.tape.record(
        "tanh", (a,), np.tanh, lambda g, out, x: (g * (1.0 - out * out),)
    )


def sigmoid_act(a: Var) -> Var:
    return a.tape.record(
        "sigmoid", (a,), expit, lambda g, out, x: (g * out * (1.0 - out),)
    )


def lrelu(a: Var, slope: float = 0.2) -> Var:
    if not 0.0 < slope < 1.0:
        raise ValueError(f"lrelu slope must lie in (0, 1), got {slope}")
    # x >= 0 takes the identity branch, so the subgradient at 0 is 1
    return a.tape.record(
        "lrelu",
        (a,),
        lambda x: np.where(x >= 0, x, slope * x),
        lambda g, out, x: (g * np.where(x >= 0, 1.0, slope),),
    )


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def softplus(a: Var) -> Var:
    """log(1 + exp(x)) without overflow; derivative is the logistic sigmoid."""
    return a.tape.record("softplus", (a,), _softplus, lambda g, out, x: (g * expit(x),))


def mean_all(a: Var) -> Var:
    n = a.value.size
    if n == 0:
        raise ShapeError("mean_all: empty tensor")
    return a.tape.record(
        "mean",
        (a,),
        lambda x: np.asarray(x.mean()),
        lambda g, out, x: (np.full(x.shape, g / n),),
    )
