"""Training-set refinement: a dense autoencoder scores per-sample
reconstruction errors, Local Outlier Factor ranks them, and the top
contamination fraction is dropped."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .rng import stream
from .training import TrainConfig, train_loop

# Mean-reachability floor guarding lrd against duplicate-point blowup.
LRD_FLOOR = 1e-10


@dataclass
class DaeConfig:
    # Encoder 19-16-10-8-4 mirrored in the decoder, for the 19-channel layout.
    dims: tuple = (19, 16, 10, 8, 4, 8, 10, 16, 19)
    seed: int = 0


@dataclass
class DaeModel:
    dims: tuple
    params: dict                     # W0, b0, W1, b1, ... along dims

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        out = _forward({k: ag.Var(v) for k, v in self.params.items()},
                       ag.Var(np.atleast_2d(x)), len(self.dims) - 1)
        return out.value


def init_dae_params(cfg: DaeConfig) -> dict:
    """Uniform +-1/sqrt(fan_in) weights, zero biases."""
    rng = stream(cfg.seed, "dae-init")
    params = {}
    for i, (fi, fo) in enumerate(zip(cfg.dims[:-1], cfg.dims[1:])):
        bound = 1.0 / np.sqrt(fi)
        params[f"W{i}"] = rng.uniform(-bound, bound, (fi, fo))
        params[f"b{i}"] = np.zeros((1, fo))
    return params


def _forward(pvars: dict, x: ag.Var, n_layers: int) -> ag.Var:
    # tanh hidden layers, linear output
    h = x
    for i in range(n_layers):
        h = ag.add_bias(ag.matmul(h, pvars[f"W{i}"]), pvars[f"b{i}"])
        if i < n_layers - 1:
            h = ag.tanh(h)
    return h


def dae_loss(pvars: dict, batch: np.ndarray, n_layers: int) -> ag.Var:
    """Mean squared reconstruction error over all batch entries."""
    x = ag.Var(batch)
    out = _forward(pvars, x, n_layers)
    return ag.scale(ag.total(ag.square(ag.sub(out, x))), 1.0 / batch.size)


def dae_train(train_values: np.ndarray, val_values: np.ndarray,
              cfg: TrainConfig, arch: DaeConfig | None = None):
    """Train the autoencoder with Adam and early stopping; returns the
    best-validation checkpoint and the loss history."""
    if arch is None:
        arch = DaeConfig(seed=cfg.seed)
    if train_values.shape[1] != arch.dims[0]:
        raise ValueError(f"data has {train_values.shape[1]} features, "
                         f"architecture expects {arch.dims[0]}")
    n_layers = len(arch.dims) - 1
    params = init_dae_params(arch)

    def batch_loss(tracked, idx):
        return dae_loss(tracked, train_values[idx], n_layers)

    def val_loss(p):
        return float(dae_loss({k: ag.Var(v) for k, v in p.items()},
                              val_values, n_layers).value[0, 0])

    best, history = train_loop(params, batch_loss, val_loss,
                               len(train_values), cfg,
                               stream(cfg.seed, "dae-shuffle"))
    return DaeModel(tuple(arch.dims), best), history


def reconstruction_errors(model: DaeModel, samples: np.ndarray) -> np.ndarray:
    """Per-sample mean over features of squared reconstruction difference."""
    recon = model.reconstruct(samples)
    return np.mean((samples - recon) ** 2, axis=1)


def lof_scores(errors: np.ndarray, k: int) -> np.ndarray:
    """Local Outlier Factor over 1-D values with Euclidean distance.

    Standard formulation: k-distance, reachability distance
    reach(a,b) = max(k-dist(b), d(a,b)), local reachability density
    lrd(a) = 1 / mean reach over the k-distance neighborhood (which includes
    distance ties), LOF(a) = mean over neighbors of lrd(b) / lrd(a).
    """
    errors = np.asarray(errors, dtype=np.float64).ravel()
    n = len(errors)
    if k < 1 or n <= k:
        raise ValueError(f"need n > k >= 1, got n={n}, k={k}")
    if not np.all(np.isfinite(errors)):
        raise ValueError("errors must be finite")

    order = np.argsort(errors, kind="stable")
    v = errors[order]

    # k-distance via the 2k nearest candidates in sorted order
    kdist = np.empty(n)
    for i in range(n):
        lo, hi = max(0, i - k), min(n, i + k + 1)
        d = np.abs(v[lo:hi] - v[i])
        d = np.delete(d, i - lo)
        kdist[i] = np.partition(d, k - 1)[k - 1]

    # neighborhoods include all points within k-distance (ties kept);
    # compare distances directly so boundary ties resolve exactly as in
    # the definition
    neighborhoods = []
    for i in range(n):
        lo = i
        while lo > 0 and v[i] - v[lo - 1] <= kdist[i]:
            lo -= 1
        hi = i + 1
        while hi < n and v[hi] - v[i] <= kdist[i]:
            hi += 1
        nb = np.arange(lo, hi)
        neighborhoods.append(nb[nb != i])

    lrd = np.empty(n)
    for i, nb in enumerate(neighborhoods):
        reach = np.maximum(kdist[nb], np.abs(v[nb] - v[i]))
        lrd[i] = 1.0 / max(reach.mean(), LRD_FLOOR)

    lof_sorted = np.array([lrd[nb].mean() / lrd[i]
                           for i, nb in enumerate(neighborhoods)])
    scores = np.empty(n)
    scores[order] = lof_sorted
    return scores


@dataclass
class LofConfig:
    k_neighbors: int = 20
    contamination: float = 0.2

    def validate(self, n: int):
        if not 0.0 <= self.contamination <= 0.5:
            raise ValueError(f"contamination must be in [0, 0.5], "
                             f"got {self.contamination}")
        if self.contamination > 0 and not 1 <= self.k_neighbors < n:
            raise ValueError(f"k_neighbors must be in [1, n), got "
                             f"{self.k_neighbors} with n={n}")


@dataclass
class RefinementReport:
    errors: list = field(default_factory=list)
    lof: list = field(default_factory=list)
    removed_indices: list = field(default_factory=list)
    retained_indices: list = field(default_factory=list)
    skipped: bool = False

    def to_json(self) -> str:
        return json.dumps({
            "skipped": self.skipped,
            "removed_indices": self.removed_indices,
            "retained_indices": self.retained_indices,
            "errors": self.errors,
            "lof": self.lof,
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RefinementReport":
        d = json.loads(text)
        return cls(d["errors"], d["lof"], d["removed_indices"],
                   d["retained_indices"], d["skipped"])


def select_refined(frame, errors: np.ndarray, scores: np.ndarray,
                   cfg: LofConfig):
    """Remove the round(C*n) highest-LOF samples; ties broken by larger
    reconstruction error, then lower index. Returns (refined frame, report)."""
    n = len(errors)
    cfg.validate(n)
    n_remove = int(np.floor(cfg.contamination * n + 0.5))
    ranking = np.lexsort((np.arange(n), -np.asarray(errors), -np.asarray(scores)))
    removed = np.sort(ranking[:n_remove])
    retained = np.sort(ranking[n_remove:])
    report = RefinementReport(np.asarray(errors).tolist(),
                              np.asarray(scores).tolist(),
                              removed.tolist(), retained.tolist())
    return frame.take(retained), report
