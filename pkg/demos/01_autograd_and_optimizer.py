"""Tape-based autograd and Adam, from the ground up.

Builds a tiny two-layer network on the package's reverse-mode tape, checks
its gradients against central finite differences, then minimizes a least
squares objective with the Adam implementation.
"""

import numpy as np

from turbomon import autograd as ag
from turbomon.optim import AdamState, adam_step, finite_difference_check

rng = np.random.default_rng(0)
x = rng.normal(size=(32, 4))
y = np.sin(x @ rng.normal(size=(4, 2)))

params = {
    "W1": rng.normal(size=(4, 8)) * 0.5, "b1": np.zeros((1, 8)),
    "W2": rng.normal(size=(8, 2)) * 0.5, "b2": np.zeros((1, 2)),
}


def loss_graph(p):
    h = ag.tanh(ag.add_bias(ag.matmul(ag.Var(x), p["W1"]), p["b1"]))
    out = ag.add_bias(ag.matmul(h, p["W2"]), p["b2"])
    return ag.scale(ag.total(ag.square(ag.sub(out, ag.Var(y)))), 1.0 / y.size)


print("== gradient fidelity ==")
err = finite_difference_check(loss_graph, params)
print(f"worst relative error vs central differences: {err:.2e}")

print("\n== Adam descent ==")
state = AdamState(lr=1e-2)
for step in range(501):
    tape = ag.Tape()
    tracked = ag.track(params, tape)
    loss = loss_graph(tracked)
    if step % 100 == 0:
        print(f"step {step:4d}  loss {loss.value[0, 0]:.6f}")
    tape.backward(loss)
    params = adam_step(state, params, ag.collect_grads(tracked))
