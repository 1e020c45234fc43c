"""Shared minibatch training loop: Adam, shuffled batches, per-epoch
validation, early stopping on the best validation loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .optim import AdamState, adam_step


class TrainingError(RuntimeError):
    def __init__(self, msg, epoch=None):
        super().__init__(msg)
        self.epoch = epoch


@dataclass
class TrainConfig:
    batch_size: int = 64
    max_epochs: int = 20000
    patience: int = 100             # epochs without validation improvement
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)

    @property
    def best_val(self) -> float:
        return min(self.val_loss)


def train_loop(params: dict, batch_loss, val_loss, n_train: int,
               cfg: TrainConfig, shuffle_rng: np.random.Generator):
    """Generic training driver.

    ``batch_loss(tracked_params, batch_indices) -> 1x1 Var`` builds the loss
    graph for one minibatch; ``val_loss(params) -> float`` evaluates the
    validation loss without a tape. Returns (best_params, History).
    """
    params = {k: v.copy() for k, v in params.items()}
    state = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
    history = History()
    best = {k: v.copy() for k, v in params.items()}
    best_val = np.inf
    stall = 0

    for epoch in range(cfg.max_epochs):
        order = shuffle_rng.permutation(n_train)
        epoch_losses = []
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            tape = ag.Tape()
            tracked = ag.track(params, tape)
            loss = batch_loss(tracked, idx)
            value = float(loss.value[0, 0])
            if not np.isfinite(value):
                raise TrainingError(f"training loss diverged at epoch {epoch}", epoch)
            tape.backward(loss)
            params = adam_step(state, params, ag.collect_grads(tracked))
            epoch_losses.append(value)

        vl = float(val_loss(params))
        if not np.isfinite(vl):
            raise TrainingError(f"validation loss diverged at epoch {epoch}", epoch)
        history.train_loss.append(float(np.mean(epoch_losses)))
        history.val_loss.append(vl)

        if vl < best_val:
            best_val = vl
            best = {k: v.copy() for k, v in params.items()}
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break

    return best, history
