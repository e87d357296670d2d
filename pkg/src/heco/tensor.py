"""Dense-matrix reverse-mode autodiff.

Every value is a 2-D float64 :class:`Tensor`. Operations executed while a
:class:`Tape` is active append a record holding a backward closure; calling
:meth:`Tape.gradient` walks those records once in reverse order.

>>> w = Tensor([[1.0, 2.0]], requires_grad=True)
>>> with Tape() as tape:
...     loss = sum_(w * w)
>>> tape.gradient(loss, [w])[0]
array([[2., 4.]])
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, NumericError, ShapeError

LEAKY_SLOPE = 0.2

_ACTIVE: list["Tape"] = []


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got ndim={arr.ndim}")
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / float(other))
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class OpRecord:
    kind: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; nested tapes record into the innermost one.
    """

    records: list[OpRecord] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def gradient(self, loss: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
        return backward(self, loss, params)


def backward(tape: Tape, loss: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradients of scalar ``loss`` w.r.t. each of ``params``.

    Parameters the loss does not depend on receive a zero array.
    """
    if loss.shape != (1, 1):
        raise ContractError(f"loss must be scalar (1, 1), got {loss.shape}")
    produced = {id(r.output) for r in tape.records}
    if id(loss) not in produced and not any(p is loss for p in params):
        raise ContractError("loss was not produced on this tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    return [grads.get(id(p), np.zeros(p.shape)) for p in params]


def record_op(kind: str, inputs: Sequence[Tensor], value: np.ndarray, back) -> Tensor:
    """Wrap a forward value as a Tensor and log it on the active tape."""
    if not np.all(np.isfinite(value)):
        raise NumericError(f"{kind} produced a non-finite value")
    needs = any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = value
    out.requires_grad = needs
    out.name = None
    if needs and _ACTIVE:
        _ACTIVE[-1].records.append(OpRecord(kind, tuple(inputs), out, back))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _check_broadcast(kind: str, a: Tensor, b: Tensor) -> None:
    for da, db in zip(a.shape, b.shape):
        if da != db and da != 1 and db != 1:
            raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} do not broadcast")


# -- binary ----------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    A, B = a.data, b.data
    return record_op("matmul", (a, b), A @ B, lambda g: (g @ B.T, A.T @ g))


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return record_op(
        "add", (a, b), a.data + b.data,
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("sub", a, b)
    sa, sb = a.shape, b.shape
    return record_op(
        "sub", (a, b), a.data - b.data,
        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("mul", a, b)
    A, B = a.data, b.data
    return record_op(
        "mul", (a, b), A * B,
        lambda g: (_unbroadcast(g * B, A.shape), _unbroadcast(g * A, B.shape)),
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("div", a, b)
    A, B = a.data, b.data
    out = A / B
    return record_op(
        "div", (a, b), out,
        lambda g: (_unbroadcast(g / B, A.shape), _unbroadcast(-g * out / B, B.shape)),
    )


def concat_cols(*xs: Tensor) -> Tensor:
    rows = {x.shape[0] for x in xs}
    if len(rows) != 1:
        raise ShapeError(f"concat_cols: row counts differ {[x.shape for x in xs]}")
    widths = [x.shape[1] for x in xs]
    cuts = np.cumsum([0] + widths)

    def back(g):
        return [g[:, cuts[k]:cuts[k + 1]] for k in range(len(xs))]

    return record_op("concat_cols", xs, np.concatenate([x.data for x in xs], axis=1), back)


def spmm(adj: sp.spmatrix, x: Tensor) -> Tensor:
    """Constant sparse matrix times tensor; no gradient flows into ``adj``."""
    if adj.shape[1] != x.shape[0]:
        raise ShapeError(f"spmm: {adj.shape} @ {x.shape}")
    adj = sp.csr_matrix(adj)
    adj_t = adj.T.tocsr()
    value = np.asarray(adj @ x.data)
    return record_op("spmm", (x,), value, lambda g: (np.asarray(adj_t @ g),))


# -- unary -----------------------------------------------------------------


def scale(x: Tensor, c: float) -> Tensor:
    return record_op("scale", (x,), x.data * c, lambda g: (g * c,))


def elu(x: Tensor) -> Tensor:
    X = x.data
    neg = np.expm1(np.minimum(X, 0.0))
    out = np.where(X > 0, X, neg)
    return record_op("elu", (x,), out, lambda g: (g * np.where(X > 0, 1.0, neg + 1.0),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return record_op("tanh", (x,), out, lambda g: (g * (1.0 - out * out),))


def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    X = x.data
    out = np.where(X > 0, X, slope * X)
    return record_op("leaky_relu", (x,), out, lambda g: (g * np.where(X > 0, 1.0, slope),))


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(x.data)
    return record_op("exp", (x,), out, lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    X = x.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(X)
    return record_op("log", (x,), out, lambda g: (g / X,))


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.data)
    return record_op("sigmoid", (x,), out, lambda g: (g * out * (1.0 - out),))


def log_sigmoid(x: Tensor) -> Tensor:
    """``log(sigmoid(x))`` without overflow for large ``|x|``."""
    X = x.data
    out = -np.logaddexp(0.0, -X)
    return record_op("log_sigmoid", (x,), out, lambda g: (g * _sigmoid(-X),))


def _sigmoid(X: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -X))


def row_softmax(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax along each row with max subtraction.

    Entries where ``mask`` is False get probability 0; a fully masked row is
    all zeros.
    """
    X = x.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != X.shape:
            raise ShapeError(f"row_softmax mask {mask.shape} vs {X.shape}")
        X = np.where(mask, X, -np.inf)
    top = np.max(X, axis=1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    e = np.exp(X - top)
    denom = e.sum(axis=1, keepdims=True)
    out = e / np.where(denom > 0, denom, 1.0)

    def back(g):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return record_op("row_softmax", (x,), out, back)


def row_log_softmax(x: Tensor) -> Tensor:
    X = x.data
    shifted = X - X.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    p = np.exp(out)
    return record_op(
        "row_log_softmax", (x,), out,
        lambda g: (g - p * g.sum(axis=1, keepdims=True),),
    )


def row_l2_normalize(x: Tensor) -> Tensor:
    """Scale each row to unit Euclidean norm; all-zero rows stay zero."""
    X = x.data
    norm = np.sqrt((X * X).sum(axis=1, keepdims=True))
    safe = np.where(norm > 0, norm, 1.0)
    out = X / safe

    def back(g):
        gy = g - out * (g * out).sum(axis=1, keepdims=True)
        return (np.where(norm > 0, gy / safe, 0.0),)

    return record_op("row_l2_normalize", (x,), out, back)


def sum_(x: Tensor, axis: int | None = None) -> Tensor:
    shape = x.shape
    if axis is None:
        value = np.array([[x.data.sum()]])
    else:
        value = x.data.sum(axis=axis, keepdims=True)
    return record_op("sum", (x,), value, lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    n = x.data.size if axis is None else x.shape[axis]
    return scale(sum_(x, axis), 1.0 / n)


def dropout(x: Tensor, mask: np.ndarray) -> Tensor:
    """Multiply by a pre-sampled (already rescaled) keep mask."""
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != x.shape:
        raise ShapeError(f"dropout mask {mask.shape} vs {x.shape}")
    return record_op("dropout", (x,), x.data * mask, lambda g: (g * mask,))


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    index = np.asarray(index, dtype=np.int64).ravel()
    if index.size and (index.min() < 0 or index.max() >= x.shape[0]):
        raise ShapeError(f"gather_rows: index out of range for {x.shape[0]} rows")
    rows = x.shape

    def back(g):
        out = np.zeros(rows)
        np.add.at(out, index, g)
        return (out,)

    return record_op("gather_rows", (x,), x.data[index], back)


def reshape(x: Tensor, shape: tuple[int, int]) -> Tensor:
    old = x.shape
    if shape[0] * shape[1] != old[0] * old[1]:
        raise ShapeError(f"reshape {old} -> {shape}")
    return record_op("reshape", (x,), x.data.reshape(shape), lambda g: (g.reshape(old),))


def transpose(x: Tensor) -> Tensor:
    return record_op("transpose", (x,), x.data.T.copy(), lambda g: (g.T,))


# -- initialisation and optimisation ---------------------------------------


def glorot_init(rows: int, cols: int, rng: np.random.Generator, name: str | None = None) -> Tensor:
    if rows < 1 or cols < 1:
        raise ContractError(f"glorot_init needs rows, cols >= 1, got {rows}x{cols}")
    bound = np.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform(-bound, bound, size=(rows, cols)), requires_grad=True, name=name)


def zeros(rows: int, cols: int, name: str | None = None) -> Tensor:
    return Tensor(np.zeros((rows, cols)), requires_grad=True, name=name)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState) -> None:
    """In-place Adam update with bias correction."""
    if state.lr <= 0:
        raise ContractError(f"Adam lr must be > 0, got {state.lr}")
    if len(params) != len(grads):
        raise ShapeError("params and grads differ in length")
    if not state.m:
        state.m = [np.zeros(p.shape) for p in params]
        state.v = [np.zeros(p.shape) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for k, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.shape:
            raise ShapeError(f"grad {g.shape} for param {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {p.name or k}")
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * (g * g)
        p.data = p.data - state.lr * (state.m[k] / c1) / (np.sqrt(state.v[k] / c2) + state.eps)


class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def step(self, grads: Sequence[np.ndarray]) -> None:
        adam_step(self.params, grads, self.state)
