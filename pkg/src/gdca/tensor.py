"""Dense tensors with tape-based reverse-mode differentiation.

Every differentiable operation funnels through :func:`apply`, which computes
the forward value with numpy and, when a :class:`Tape` is active and any input
requires a gradient, records a node holding the backward rule.  Outside a
tape, operations run in plain inference mode and nothing is recorded.

Broadcasting is intentionally narrow.  A binary op accepts a right-hand
operand that is either the same shape as the left, a single element, or a
per-channel vector whose shape equals the left operand's shape minus the two
trailing spatial axes (``[C]`` against ``[C, H, W]``, ``[N, C]`` against
``[N, C, H, W]``).
"""

from __future__ import annotations

import enum
import math
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DomainError, PrecisionError, ShapeError


class Precision(enum.Enum):
    SINGLE = "single"
    DOUBLE = "double"

    @property
    def dtype(self):
        return np.dtype(np.float32) if self is Precision.SINGLE else np.dtype(np.float64)

    @classmethod
    def of(cls, value) -> "Precision":
        if isinstance(value, Precision):
            return value
        if value is None:
            return cls.SINGLE
        if isinstance(value, str):
            return cls(value)
        dt = np.dtype(value)
        if dt == np.float32:
            return cls.SINGLE
        if dt == np.float64:
            return cls.DOUBLE
        raise PrecisionError(f"unsupported dtype {dt}")


SINGLE = Precision.SINGLE
DOUBLE = Precision.DOUBLE


class Tensor:
    """An n-dimensional float array with an optional gradient slot.

    ``data`` is treated as immutable once the tensor exists; optimizers
    rebind it rather than writing into it.
    """

    __slots__ = ("_data", "requires_grad", "grad", "_tape", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, precision=None):
        if precision is None and isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            dtype = data.dtype
        else:
            dtype = Precision.of(precision).dtype
        arr = np.array(data, dtype=dtype)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if arr.size == 0:
            raise ShapeError("tensors must have at least one element")
        arr.flags.writeable = False
        self._data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._tape = None

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool = False) -> "Tensor":
        t = cls.__new__(cls)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        arr.flags.writeable = False
        t._data = arr
        t.requires_grad = requires_grad
        t.grad = None
        t._tape = None
        return t

    @property
    def data(self) -> np.ndarray:
        return self._data

    @data.setter
    def data(self, value):
        if self._tape is not None:
            raise ContractError("cannot rebind data of a tensor produced on a tape")
        arr = np.array(value, dtype=self._data.dtype)
        if arr.shape != self._data.shape:
            raise ShapeError(f"cannot change shape {self._data.shape} -> {arr.shape}")
        arr.flags.writeable = False
        self._data = arr

    @property
    def shape(self) -> tuple:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return self._data.size

    @property
    def dtype(self):
        return self._data.dtype

    @property
    def precision(self) -> Precision:
        return Precision.of(self._data.dtype)

    def numpy(self) -> np.ndarray:
        return self._data.copy()

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self._data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor._wrap(self._data, requires_grad=False)

    def astype(self, precision) -> "Tensor":
        dt = Precision.of(precision).dtype
        return Tensor._wrap(self._data.astype(dt), requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, precision={self.precision.value}{flag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ShapeError("division is only defined by a python scalar")
        return scale(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axes=None):
        return reduce("sum", self, axes)

    def mean(self, axes=None):
        return reduce("mean", self, axes)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)


# ---------------------------------------------------------------------------
# tape


class Node:
    __slots__ = ("name", "inputs", "output", "backward_fn")

    def __init__(self, name, inputs, output, backward_fn):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn

    def __repr__(self):
        return f"Node({self.name})"


_state = threading.local()


def _stack() -> list:
    s = getattr(_state, "stack", None)
    if s is None:
        s = _state.stack = []
    return s


def current_tape() -> "Tape | None":
    s = _stack()
    return s[-1] if s else None


class Tape:
    """Records differentiable operations executed while it is active.

    Use as a context manager::

        with Tape(DOUBLE) as tape:
            loss = (x * x).sum()
        tape.backward(loss)

    A tape belongs to the thread that entered it.
    """

    def __init__(self, precision=SINGLE):
        self.precision = Precision.of(precision)
        self.nodes: list[Node] = []

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        s = _stack()
        if not s or s[-1] is not self:
            raise ContractError("tape stack corrupted: exiting a tape that is not innermost")
        s.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, name, inputs, output, backward_fn):
        output._tape = self
        self.nodes.append(Node(name, tuple(inputs), output, backward_fn))

    def backward(self, loss: Tensor):
        """Populate ``.grad`` on every grad-requiring tensor that feeds ``loss``.

        Leaf gradients accumulate into any existing ``.grad``; intermediate
        tensors get their gradient assigned.
        """
        if not isinstance(loss, Tensor) or loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {getattr(loss, 'shape', None)}")
        if loss._tape is not self:
            raise ContractError("loss was not recorded on this tape")

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            node.output.grad = g
            in_grads = node.backward_fn(g)
            for t, gi in zip(node.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                key = id(t)
                if t._tape is not self:
                    leaves[key] = t
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        for key, t in leaves.items():
            g = grads[key]
            t.grad = g.copy() if t.grad is None else t.grad + g


def backward(tape: Tape, loss: Tensor):
    tape.backward(loss)


def zero_grad(params: Iterable[Tensor]):
    for p in params:
        p.grad = None


def apply(name: str, forward_value: np.ndarray, inputs: Sequence[Tensor],
          backward_fn: Callable[[np.ndarray], tuple]) -> Tensor:
    """Wrap a forward result and, under an active tape, record its backward rule.

    ``backward_fn`` receives the output gradient and returns one entry per
    input (``None`` for inputs that need no gradient).
    """
    tape = current_tape()
    if tape is None:
        return Tensor._wrap(forward_value)
    dt = tape.precision.dtype
    for t in inputs:
        if t.dtype != dt:
            raise PrecisionError(f"{name}: input precision {t.dtype} differs from tape precision {dt}")
    need = any(t.requires_grad for t in inputs)
    out = Tensor._wrap(forward_value, requires_grad=need)
    if need:
        tape.record(name, inputs, out, backward_fn)
    return out


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(x, precision=dtype)


# ---------------------------------------------------------------------------
# elementwise


def _broadcast_mode(a_shape, b_shape):
    if a_shape == b_shape:
        return "same"
    if math.prod(b_shape) == 1:
        return "scalar"
    if len(a_shape) >= 3 and len(b_shape) == len(a_shape) - 2 and tuple(b_shape) == tuple(a_shape[:-2]):
        return "channel"
    raise ShapeError(f"cannot broadcast {tuple(b_shape)} against {tuple(a_shape)}")


def _expand(b: np.ndarray, mode: str) -> np.ndarray:
    if mode == "scalar":
        return b.reshape(())
    if mode == "channel":
        return b.reshape(b.shape + (1, 1))
    return b


def _unexpand(g: np.ndarray, b_shape, mode: str) -> np.ndarray:
    if mode == "scalar":
        return np.asarray(g.sum(), dtype=g.dtype).reshape(b_shape)
    if mode == "channel":
        return g.sum(axis=(-2, -1))
    return g


def add(a: Tensor, b) -> Tensor:
    b = as_tensor(b, a)
    mode = _broadcast_mode(a.shape, b.shape)
    out = a.data + _expand(b.data, mode)

    def back(g):
        return g, _unexpand(g, b.shape, mode)

    return apply("add", out, (a, b), back)


def sub(a: Tensor, b) -> Tensor:
    b = as_tensor(b, a)
    mode = _broadcast_mode(a.shape, b.shape)
    out = a.data - _expand(b.data, mode)

    def back(g):
        return g, _unexpand(-g, b.shape, mode)

    return apply("sub", out, (a, b), back)


def mul(a: Tensor, b) -> Tensor:
    b = as_tensor(b, a)
    mode = _broadcast_mode(a.shape, b.shape)
    bx = _expand(b.data, mode)
    out = a.data * bx

    def back(g):
        ga = g * bx if a.requires_grad else None
        gb = _unexpand(g * a.data, b.shape, mode) if b.requires_grad else None
        return ga, gb

    return apply("mul", out, (a, b), back)


def scale(a: Tensor, s: float) -> Tensor:
    s = a.dtype.type(s)
    out = a.data * s
    return apply("scale", out, (a,), lambda g: (g * s,))


def neg(a: Tensor) -> Tensor:
    return apply("neg", -a.data, (a,), lambda g: (-g,))


def maximum(a: Tensor, s: float) -> Tensor:
    """Elementwise ``max(a, s)`` against a scalar; ties route the gradient to ``a``."""
    s = a.dtype.type(s)
    keep = a.data >= s
    out = np.where(keep, a.data, s)
    return apply("maximum", out, (a,), lambda g: (g * keep,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return apply("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    bad = np.flatnonzero(~(a.data > 0))
    if bad.size:
        i = int(bad[0])
        idx = np.unravel_index(i, a.shape)
        raise DomainError(f"log of non-positive value {a.data.reshape(-1)[i]!r} at index {idx}", index=idx)
    x = a.data
    return apply("log", np.log(x), (a,), lambda g: (g / x,))


def absolute(a: Tensor) -> Tensor:
    """Elementwise ``|a|``; the subgradient at zero is zero."""
    sign = np.sign(a.data)
    return apply("abs", np.abs(a.data), (a,), lambda g: (g * sign,))


def elementwise(op: str, a: Tensor, b=None) -> Tensor:
    """Dispatch by name; ``b`` is the second operand or scalar where one is needed."""
    table = {
        "add": lambda: add(a, b),
        "sub": lambda: sub(a, b),
        "mul": lambda: mul(a, b),
        "max": lambda: maximum(a, b),
        "exp": lambda: exp(a),
        "log": lambda: log(a),
        "neg": lambda: neg(a),
        "scale": lambda: scale(a, b),
        "abs": lambda: absolute(a),
    }
    if op not in table:
        raise ValueError(f"unknown elementwise op {op!r}")
    return table[op]()


# ---------------------------------------------------------------------------
# structural ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not align")
    A, B = a.data, b.data

    def back(g):
        return (g @ B.T if a.requires_grad else None,
                A.T @ g if b.requires_grad else None)

    return apply("matmul", A @ B, (a, b), back)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if math.prod(shape) != a.size or any(s <= 0 for s in shape):
        raise ShapeError(f"cannot reshape {a.shape} to {shape}")
    src = a.shape
    return apply("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(src),))


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError("transpose expects a matrix")
    return apply("transpose", a.data.T, (a,), lambda g: (g.T,))


def _normalize_axes(axes, ndim):
    out = []
    for ax in axes:
        ax = int(ax)
        if not -ndim <= ax < ndim:
            raise ShapeError(f"axis {ax} out of range for {ndim}-d tensor")
        ax %= ndim
        if ax in out:
            raise ShapeError(f"axis {ax} repeated")
        out.append(ax)
    return tuple(sorted(out))


def reduce(op: str, a: Tensor, axes=None) -> Tensor:
    """Sum or mean over ``axes`` (all axes when None; an empty list is a copy)."""
    if op not in ("sum", "mean"):
        raise ValueError(f"unknown reduction {op!r}")
    axes = tuple(range(a.ndim)) if axes is None else _normalize_axes(axes, a.ndim)
    if not axes:
        return apply(f"{op}-copy", a.data.copy(), (a,), lambda g: (g,))
    count = math.prod(a.shape[ax] for ax in axes)
    total = np.sum(a.data, axis=axes)
    out = total / a.dtype.type(count) if op == "mean" else total
    out = np.asarray(out, dtype=a.dtype)
    kept = tuple(1 if i in axes else n for i, n in enumerate(a.shape))
    factor = a.dtype.type(1.0 / count) if op == "mean" else None
    src = a.shape

    def back(g):
        g = np.broadcast_to(g.reshape(kept), src)
        return ((g * factor) if factor is not None else g.copy(),)

    return apply(op, out, (a,), back)


def sum(a: Tensor, axes=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    return reduce("sum", a, axes)


def mean(a: Tensor, axes=None) -> Tensor:
    return reduce("mean", a, axes)


# ---------------------------------------------------------------------------
# gradient checking


def finite_diff_grad(f: Callable[[Tensor], Tensor], x: Tensor, step: float = 1e-6) -> Tensor:
    """Central-difference estimate of the gradient of scalar ``f`` at ``x``.

    ``f`` is evaluated outside any tape, once per perturbed element.
    """
    base = x.data.astype(np.float64 if x.dtype == np.float64 else x.dtype)
    flat = base.reshape(-1)
    out = np.empty_like(flat)
    saved = _stack()[:]
    _stack().clear()
    try:
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = f(Tensor(base.copy())).item()
            flat[i] = orig - step
            fm = f(Tensor(base.copy())).item()
            flat[i] = orig
            out[i] = (fp - fm) / (2 * step)
    finally:
        _stack()[:] = saved
    return Tensor(out.reshape(x.shape))


def rel_error(a, b) -> float:
    """Relative error ``|a - b| / max(|a|, |b|)`` in the Euclidean norm."""
    a = np.asarray(a.data if isinstance(a, Tensor) else a, dtype=np.float64)
    b = np.asarray(b.data if isinstance(b, Tensor) else b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)
