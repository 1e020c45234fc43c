"""Minimal reverse-mode gradient engine over dense float64 matrices.

Everything is a 2-D numpy array. Operations applied to tracked :class:`Var`
values are recorded on a :class:`Tape`; ``Tape.backward`` replays them in
reverse to accumulate adjoints. One tape serves one backward pass.

The engine stays deliberately small: only the primitives the models here
need (matmul, elementwise arithmetic and activations, column concat, bias
broadcast, full sum, scalar scaling).
"""

from __future__ import annotations

import numpy as np


class TapeConsumedError(RuntimeError):
    pass


class Tape:
    """Ordered record of primitive ops, replayed once in reverse."""

    def __init__(self):
        self._steps = []
        self._consumed = False

    def record(self, backward_fn):
        self._steps.append(backward_fn)

    def backward(self, loss: "Var"):
        if self._consumed:
            raise TapeConsumedError("tape already consumed by a backward pass")
        if loss.tape is not self:
            raise ValueError("loss was not recorded on this tape")
        if loss.value.shape != (1, 1):
            raise ValueError(f"loss must be 1x1, got shape {loss.value.shape}")
        self._consumed = True
        loss.grad = np.ones((1, 1))
        for fn in reversed(self._steps):
            fn()


class Var:
    """A matrix value, optionally tracked on a tape for differentiation."""

    __slots__ = ("value", "grad", "tape")

    def __init__(self, value, tape: Tape | None = None):
        arr = np.asarray(value)
        if arr.dtype != np.longdouble:
            # float64 everywhere; longdouble is admitted so the
            # finite-difference checker can evaluate in extended precision
            arr = arr.astype(np.float64)
        if arr.ndim != 2:
            raise ValueError(f"Var requires a 2-D array, got ndim {arr.ndim}")
        self.value = arr
        self.grad = None
        self.tape = tape

    @property
    def shape(self):
        return self.value.shape

    def _accum(self, g):
        self.grad = g if self.grad is None else self.grad + g


def _as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _out_tape(*vs):
    for v in vs:
        if v.tape is not None:
            return v.tape
    return None


def matmul(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    t = _out_tape(a, b)
    out = Var(a.value @ b.value, t)
    if t is not None:
        def back():
            if a.tape is not None:
                a._accum(out.grad @ b.value.T)
            if b.tape is not None:
                b._accum(a.value.T @ out.grad)
        t.record(back)
    return out


def _binary_same_shape(a, b, name):
    a, b = _as_var(a), _as_var(b)
    if a.shape != b.shape:
        raise ValueError(f"{name} shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def add(a, b) -> Var:
    a, b = _binary_same_shape(a, b, "add")
    t = _out_tape(a, b)
    out = Var(a.value + b.value, t)
    if t is not None:
        def back():
            if a.tape is not None:
                a._accum(out.grad)
            if b.tape is not None:
                b._accum(out.grad)
        t.record(back)
    return out


def sub(a, b) -> Var:
    a, b = _binary_same_shape(a, b, "sub")
    t = _out_tape(a, b)
    out = Var(a.value - b.value, t)
    if t is not None:
        def back():
            if a.tape is not None:
                a._accum(out.grad)
            if b.tape is not None:
                b._accum(-out.grad)
        t.record(back)
    return out


def hadamard(a, b) -> Var:
    a, b = _binary_same_shape(a, b, "hadamard")
    t = _out_tape(a, b)
    out = Var(a.value * b.value, t)
    if t is not None:
        def back():
            if a.tape is not None:
                a._accum(out.grad * b.value)
            if b.tape is not None:
                b._accum(out.grad * a.value)
        t.record(back)
    return out


def add_bias(x, b) -> Var:
    """x (n,m) + row bias b (1,m), broadcast over rows."""
    x, b = _as_var(x), _as_var(b)
    if b.shape != (1, x.shape[1]):
        raise ValueError(f"add_bias shape mismatch: {x.shape} + {b.shape}")
    t = _out_tape(x, b)
    out = Var(x.value + b.value, t)
    if t is not None:
        def back():
            if x.tape is not None:
                x._accum(out.grad)
            if b.tape is not None:
                b._accum(out.grad.sum(axis=0, keepdims=True))
        t.record(back)
    return out


def hstack(a, b) -> Var:
    """Column concatenation [a, b]."""
    a, b = _as_var(a), _as_var(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"hstack row mismatch: {a.shape} vs {b.shape}")
    t = _out_tape(a, b)
    out = Var(np.hstack([a.value, b.value]), t)
    if t is not None:
        na = a.shape[1]
        def back():
            if a.tape is not None:
                a._accum(out.grad[:, :na])
            if b.tape is not None:
                b._accum(out.grad[:, na:])
        t.record(back)
    return out


def _unary(x, fval, fgrad):
    x = _as_var(x)
    t = x.tape
    y = fval(x.value)
    out = Var(y, t)
    if t is not None:
        def back():
            x._accum(out.grad * fgrad(x.value, y))
        t.record(back)
    return out


def sigmoid(x) -> Var:
    # Branch on sign to avoid overflow in exp.
    def f(v):
        out = np.empty_like(v)
        pos = v >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
        e = np.exp(v[~pos])
        out[~pos] = e / (1.0 + e)
        return out
    return _unary(x, f, lambda v, y: y * (1.0 - y))


def tanh(x) -> Var:
    return _unary(x, np.tanh, lambda v, y: 1.0 - y * y)


def exp(x) -> Var:
    return _unary(x, np.exp, lambda v, y: y)


def log(x) -> Var:
    x = _as_var(x)
    if np.any(x.value <= 0):
        raise ValueError("log requires strictly positive entries")
    return _unary(x, np.log, lambda v, y: 1.0 / v)


def square(x) -> Var:
    return _unary(x, np.square, lambda v, y: 2.0 * v)


def scale(x, c: float) -> Var:
    """Multiply by a constant scalar."""
    x = _as_var(x)
    t = x.tape
    out = Var(x.value * c, t)
    if t is not None:
        def back():
            x._accum(out.grad * c)
        t.record(back)
    return out


def add_const(x, c: float) -> Var:
    x = _as_var(x)
    t = x.tape
    out = Var(x.value + c, t)
    if t is not None:
        def back():
            x._accum(out.grad)
        t.record(back)
    return out


def total(x) -> Var:
    """Sum of all entries, as a 1x1 matrix."""
    x = _as_var(x)
    t = x.tape
    out = Var(np.array([[x.value.sum()]]), t)
    if t is not None:
        def back():
            x._accum(np.full(x.value.shape, out.grad[0, 0]))
        t.record(back)
    return out


def track(params: dict, tape: Tape) -> dict:
    """Wrap a name->array parameter dict as tracked leaf Vars on ``tape``."""
    return {name: Var(value, tape) for name, value in params.items()}


def collect_grads(tracked: dict) -> dict:
    """Gradients per tracked leaf after backward; untouched leaves get zeros."""
    out = {}
    for name, var in tracked.items():
        out[name] = var.grad if var.grad is not None else np.zeros(var.shape)
    return out
