"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Only the handful of operations the TeCh/CoTAR equations need are provided.
Every op accepts optional leading batch axes; the "matrix" semantics act on
the last two axes.  Broadcasting is limited to suffix-shaped addends
(bias vectors and positional tables) and to row repetition.
"""

from __future__ import annotations

import math
import threading
import weakref
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

GELU_COEF = 0.044715
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
LAYER_NORM_EPS = 1e-5


class ShapeError(ValueError):
    pass


class GraphError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# allocation / MAC accounting


class Accountant:
    """Counts multiply-accumulates and live intermediate elements.

    Activate with ``with Accountant() as acc:``.  Only tensors produced by
    ops are counted; leaves (parameters, inputs) are not.
    """

    def __init__(self):
        self.macs = 0
        self.live = 0
        self.peak_live = 0
        self.max_buffer = 0
        self.n_alloc = 0
        self.shapes: list[tuple[str, tuple[int, ...]]] = []

    def _alloc(self, t: "Tensor") -> None:
        n = int(t.data.size)
        self.n_alloc += 1
        self.live += n
        self.peak_live = max(self.peak_live, self.live)
        self.max_buffer = max(self.max_buffer, n)
        self.shapes.append((t.op, t.shape))
        weakref.finalize(t, self._free, n)

    def _free(self, n: int) -> None:
        self.live -= n

    def __enter__(self):
        _active().append(self)
        return self

    def __exit__(self, *exc):
        _active().remove(self)
        return False


_local = threading.local()


def _active() -> list[Accountant]:
    if not hasattr(_local, "accountants"):
        _local.accountants = []
    return _local.accountants


def _count_macs(n: int) -> None:
    for acc in _active():
        acc.macs += n


# ---------------------------------------------------------------------------
# tensor


class Tensor:
    __slots__ = (
        "data", "requires_grad", "grad", "_parents", "_backward", "op",
        "_consumed", "__weakref__",
    )

    def __init__(self, data, requires_grad: bool = False, _parents=(), _op: str = ""):
        self.data = np.array(data, dtype=np.float64) if not isinstance(data, np.ndarray) \
            or data.dtype != np.float64 else data
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if requires_grad and not _parents else None
        self._parents: tuple[Tensor, ...] = tuple(_parents)
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.op = _op
        self._consumed = False
        if _parents:
            for acc in _active():
                acc._alloc(self)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def backward(self) -> None:
        backward(self)

    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(_wrap(other), -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=requires_grad)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _make(data: np.ndarray, parents: Iterable[Tensor], op: str, backward_fn) -> Tensor:
    parents = tuple(parents)
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents), _parents=parents, _op=op)
    if out.requires_grad:
        out._backward = backward_fn
    return out


def _sum_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum away leading axes so ``g`` matches a suffix ``shape``."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    return g


def _norm_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise ShapeError(f"axis {axis} out of range for rank {ndim}")
    return axis % ndim


# ---------------------------------------------------------------------------
# ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    ``b`` is either 2-D (a weight shared across a's batch axes) or has the
    same leading axes as ``a``.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    if b.ndim > 2 and b.shape[:-2] != a.shape[:-2]:
        raise ShapeError(f"matmul batch axes differ: {a.shape} @ {b.shape}")
    m, k = a.shape[-2:]
    n = b.shape[-1]
    batch = int(np.prod(a.shape[:-2], dtype=np.int64))
    _count_macs(batch * m * k * n)
    ad, bd = a.data, b.data

    def bw(g):
        ga = g @ np.swapaxes(bd, -1, -2) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = np.swapaxes(ad, -1, -2) @ g
            if b.ndim == 2 and gb.ndim > 2:
                gb = gb.reshape(-1, *gb.shape[-2:]).sum(axis=0)
        return ga, gb

    return _make(ad @ bd, (a, b), "matmul", bw)


def transpose(x: Tensor) -> Tensor:
    if x.ndim < 2:
        raise ShapeError(f"transpose needs rank >= 2, got {x.shape}")
    return _make(np.swapaxes(x.data, -1, -2), (x,), "transpose",
                 lambda g: (np.swapaxes(g, -1, -2),))


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may have a suffix of ``a``'s shape."""
    if a.shape != b.shape and a.shape[a.ndim - b.ndim:] != b.shape:
        raise ShapeError(f"add shapes incompatible: {a.shape} + {b.shape}")
    bshape = b.shape
    return _make(a.data + b.data, (a, b), "add", lambda g: (g, _sum_to(g, bshape)))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise ShapeError(f"bias of shape {b.shape} does not fit {x.shape}")
    return add(x, b)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, w)
    return add_bias(y, b) if b is not None else y


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul shapes differ: {a.shape} * {b.shape}")
    _count_macs(a.data.size)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), "mul", lambda g: (g * bd, g * ad))


def scale(x: Tensor, c: float) -> Tensor:
    return _make(x.data * c, (x,), "scale", lambda g: (g * c,))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = x.shape
    return _make(x.data.reshape(shape), (x,), "reshape", lambda g: (g.reshape(old),))


def gelu(x: Tensor) -> Tensor:
    """tanh-approximation GELU."""
    xd = x.data
    u = _SQRT_2_OVER_PI * (xd + GELU_COEF * xd ** 3)
    t = np.tanh(u)

    def bw(g):
        du = _SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEF * xd ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * du),)

    return _make(0.5 * xd * (1.0 + t), (x,), "gelu", bw)


def _softmax_np(x: np.ndarray, axis: int) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    ax = _norm_axis(axis, x.ndim)
    s = _softmax_np(x.data, ax)

    def bw(g):
        return (s * (g - (g * s).sum(axis=ax, keepdims=True)),)

    return _make(s, (x,), "softmax", bw)


def reduce(x: Tensor, axis: int, kind: str = "sum") -> Tensor:
    ax = _norm_axis(axis, x.ndim)
    if kind not in ("sum", "mean"):
        raise ValueError(f"unknown reduction {kind!r}")
    n = x.shape[ax]
    factor = 1.0 if kind == "sum" else 1.0 / n
    shape = x.shape

    def bw(g):
        return (np.broadcast_to(np.expand_dims(g, ax) * factor, shape).copy(),)

    return _make(x.data.sum(axis=ax) * factor, (x,), kind, bw)


def sum(x: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    if axis is not None:
        return reduce(x, axis, "sum")
    shape = x.shape
    return _make(np.array(x.data.sum()), (x,), "sum_all", lambda g: (np.full(shape, float(g)),))


def mean(x: Tensor, axis: int) -> Tensor:
    return reduce(x, axis, "mean")


def concat(a: Tensor, b: Tensor, axis: int = -1) -> Tensor:
    if a.ndim != b.ndim:
        raise ShapeError(f"concat rank mismatch: {a.shape} vs {b.shape}")
    ax = _norm_axis(axis, a.ndim)
    for i in range(a.ndim):
        if i != ax and a.shape[i] != b.shape[i]:
            raise ShapeError(f"concat shapes incompatible on axis {ax}: {a.shape} vs {b.shape}")
    na = a.shape[ax]

    def bw(g):
        ga, gb = np.split(g, [na], axis=ax)
        return ga, gb

    return _make(np.concatenate([a.data, b.data], axis=ax), (a, b), "concat", bw)


def repeat_rows(v: Tensor, times: int) -> Tensor:
    """(..., d) -> (..., times, d) by copying ``v`` into every row."""
    if times < 1:
        raise ShapeError("repeat count must be positive")
    out = np.repeat(np.expand_dims(v.data, -2), times, axis=-2)
    return _make(out, (v,), "repeat", lambda g: (g.sum(axis=-2),))


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    if eps <= 0:
        raise ValueError("eps must be positive")
    d = x.shape[-1]
    if gain.shape != (d,) or shift.shape != (d,):
        raise ShapeError(f"layer_norm params {gain.shape}/{shift.shape} do not fit {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gd = gain.data

    def bw(g):
        gx = None
        if x.requires_grad:
            gh = g * gd
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                        - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        return gx, _sum_to(g * xhat, (d,)), _sum_to(g, (d,))

    return _make(xhat * gd + shift.data, (x, gain, shift), "layer_norm", bw)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if rate == 0.0:
        return x
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _make(x.data * mask, (x,), "dropout", lambda g: (g * mask,))


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under softmax(logits)."""
    if logits.ndim != 2:
        raise ShapeError(f"logits must be (B, K), got {logits.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    b, k = logits.shape
    if labels.shape != (b,):
        raise ShapeError(f"expected {b} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label out of range [0, {k})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(b)
    loss = float(np.mean(lse - z[rows, labels]))

    def bw(g):
        p = _softmax_np(logits.data, 1)
        p[rows, labels] -= 1.0
        return (p * (float(g) / b),)

    return _make(np.array(loss), (logits,), "cross_entropy", bw)


# ---------------------------------------------------------------------------
# graph + backward


@dataclass
class Graph:
    """Topologically ordered record of the ops reachable from one output."""

    nodes: list[Tensor] = field(default_factory=list)

    @classmethod
    def trace(cls, out: Tensor) -> "Graph":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(out, False)]
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
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        return cls(order)

    def backward(self) -> None:
        out = self.nodes[-1]
        if out._consumed:
            raise GraphError("backward already ran on this trace; run a new forward first")
        for node in self.nodes:
            if node._parents and node._backward is None:
                raise GraphError("trace was consumed by an earlier backward pass")
        adj: dict[int, np.ndarray] = {id(out): np.ones_like(out.data)}
        for node in reversed(self.nodes):
            g = adj.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                node.grad = node.grad + g if node.grad is not None else g.copy()
                continue
            node.grad = g
            grads = node._backward(g)
            for p, gp in zip(node._parents, grads):
                if gp is None or not p.requires_grad:
                    continue
                key = id(p)
                adj[key] = adj[key] + gp if key in adj else gp
        for node in self.nodes:
            node._backward = None
        out._consumed = True


def backward(loss: Tensor) -> None:
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar output, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphError("output does not depend on any tensor requiring grad")
    if loss._consumed:
        raise GraphError("backward already ran on this trace; run a new forward first")
    Graph.trace(loss).backward()


# ---------------------------------------------------------------------------
# finite-difference checking


@dataclass
class GradCheckReport:
    max_rel_err: float
    per_input: list[float]
    n_entries: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol


def rel_err(analytic, numeric, floor: float = 1e-3) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor); the floor keeps near-zero entries sane."""
    a = np.asarray(analytic)
    n = np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def grad_check(f: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-5,
               tol: float = 1e-5) -> GradCheckReport:
    """Compare analytic gradients of scalar ``f()`` against central differences.

    ``f`` must rebuild its graph on every call from the tensors in ``inputs``.
    """
    for t in inputs:
        t.zero_grad()
    out = f()
    backward(out)
    analytic = [t.grad.copy() for t in inputs]
    per_input = []
    n = 0
    for t, ga in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        num = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f().data)
            flat[i] = orig - h
            fm = float(f().data)
            flat[i] = orig
            num[i] = (fp - fm) / (2.0 * h)
        n += flat.size
        per_input.append(float(rel_err(ga.reshape(-1), num).max()) if flat.size else 0.0)
    return GradCheckReport(max(per_input, default=0.0), per_input, n, tol)
