"""Adam optimizer and a finite-difference gradient checker."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag


class OracleViolationError(RuntimeError):
    """Loss function was supposed to be deterministic but is not."""


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict, grads: dict) -> dict:
    """One bias-corrected Adam update. Mutates ``state``, returns new params.

    ``grads`` must be keyed exactly like ``params``.
    """
    if set(params) != set(grads):
        missing = set(params) ^ set(grads)
        raise KeyError(f"params/grads key mismatch: {sorted(missing)}")
    if not state.m:
        state.m = {k: np.zeros_like(p) for k, p in params.items()}
        state.v = {k: np.zeros_like(p) for k, p in params.items()}
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    out = {}
    for k, p in params.items():
        g = grads[k]
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        m_hat = state.m[k] / bc1
        v_hat = state.v[k] / bc2
        out[k] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out


def finite_difference_check(loss_fn, params: dict, h: float = 1e-5) -> float:
    """Compare tape gradients of ``loss_fn`` against central differences.

    ``loss_fn`` takes a dict of :class:`~turbomon.autograd.Var` leaves and
    returns a 1x1 Var built through them. It must be deterministic; any
    stochastic input (e.g. sampling noise) has to be frozen by the caller.

    Returns the worst relative error over every parameter entry, with the
    denominator floored at 1e-8.

    The numeric side is evaluated in extended precision so that differencing
    noise stays below the comparison floor; the analytic gradients under
    test are the plain float64 backward pass.
    """
    def evaluate(p):
        # keep the full longdouble value: rounding f to double before
        # differencing would alone cost ~1e-11 in the derivative
        return loss_fn({k: ag.Var(v) for k, v in p.items()}).value[0, 0]

    wide = {k: v.astype(np.longdouble) for k, v in params.items()}
    base = evaluate(wide)
    if evaluate(wide) != base:
        raise OracleViolationError("loss_fn is not deterministic at the base point")

    tape = ag.Tape()
    tracked = ag.track(params, tape)
    tape.backward(loss_fn(tracked))
    grads = ag.collect_grads(tracked)

    h = np.longdouble(h)
    worst = 0.0
    for name, p in wide.items():
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            up = evaluate(wide)
            p[idx] = orig - h
            down = evaluate(wide)
            p[idx] = orig
            numeric = float((up - down) / (2.0 * h))
            analytic = grads[name][idx]
            denom = max(abs(numeric), abs(analytic), 1e-8)
            worst = max(worst, abs(numeric - analytic) / denom)
    return worst
