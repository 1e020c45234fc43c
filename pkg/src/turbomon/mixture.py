"""Full-covariance Gaussian mixture fitted by expectation-maximization,
with a cluster-to-label mapping for anomaly verdicts."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .rng import stream


class DegenerateComponentError(RuntimeError):
    pass


@dataclass
class EmConfig:
    n_components: int = 2
    max_iter: int = 500
    tol: float = 1e-6               # absolute change in total log-likelihood
    ridge: float = 1e-6
    restarts: int = 5
    seed: int = 0

    def validate(self):
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        if self.n_components < 1 or self.max_iter < 1 or self.restarts < 1:
            raise ValueError("n_components, max_iter and restarts must be >= 1")


@dataclass
class GmmModel:
    weights: np.ndarray             # (K,), sums to 1
    means: np.ndarray               # (K, d)
    covariances: np.ndarray         # (K, d, d) symmetric positive-definite
    label_map: dict | None = None   # cluster index -> "normal" / "abnormal"

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def to_json(self) -> str:
        return json.dumps({
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "label_map": ({str(k): v for k, v in self.label_map.items()}
                          if self.label_map else None),
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "GmmModel":
        d = json.loads(text)
        label_map = ({int(k): v for k, v in d["label_map"].items()}
                     if d["label_map"] else None)
        return cls(np.asarray(d["weights"]), np.asarray(d["means"]),
                   np.asarray(d["covariances"]), label_map)


def _log_gaussian(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Log multivariate normal density for each row of x."""
    d = len(mean)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"covariance not positive-definite: {exc}")
    diff = x - mean
    sol = np.linalg.solve(chol, diff.T)
    maha = np.sum(sol ** 2, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (d * np.log(2.0 * np.pi) + logdet + maha)


def gaussian_pdf(x, mean, cov) -> np.ndarray:
    """Multivariate normal density; normalizer (2 pi)^(d/2) |cov|^(1/2)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    out = np.exp(_log_gaussian(x, mean, cov))
    return out if len(out) > 1 else float(out[0])


def _log_resp(data, model):
    logp = np.column_stack([
        np.log(model.weights[k]) + _log_gaussian(data, model.means[k],
                                                 model.covariances[k])
        for k in range(model.n_components)])
    norm = logsumexp(logp, axis=1)
    if np.any(~np.isfinite(norm)):
        bad = int(np.where(~np.isfinite(norm))[0][0])
        raise FloatingPointError(f"all component densities underflow at point {bad}")
    return logp - norm[:, None], norm


def e_step(data: np.ndarray, model: GmmModel) -> np.ndarray:
    """Posterior responsibilities, computed in log-space; rows sum to 1."""
    log_r, _ = _log_resp(data, model)
    return np.exp(log_r)


def m_step(data: np.ndarray, resp: np.ndarray, ridge: float = 1e-6) -> GmmModel:
    """Maximum-likelihood update of weights, means, and covariances."""
    n, k = resp.shape
    totals = resp.sum(axis=0)
    if np.any(totals < 1e-12):
        raise DegenerateComponentError(
            f"component with vanishing responsibility: totals={totals.tolist()}")
    weights = totals / n
    means = (resp.T @ data) / totals[:, None]
    d = data.shape[1]
    covs = np.empty((k, d, d))
    for j in range(k):
        diff = data - means[j]
        covs[j] = (resp[:, j, None] * diff).T @ diff / totals[j]
        covs[j] += ridge * np.eye(d)
    return GmmModel(weights, means, covs)


def log_likelihood(data: np.ndarray, model: GmmModel) -> float:
    _, norm = _log_resp(data, model)
    return float(norm.sum())


def _init_model(data, k, rng, ridge):
    n, d = data.shape
    idx = rng.choice(n, size=k, replace=False)
    cov = np.cov(data, rowvar=False).reshape(d, d) + ridge * np.eye(d)
    return GmmModel(np.full(k, 1.0 / k), data[idx].copy(),
                    np.repeat(cov[None], k, axis=0))


def fit(data: np.ndarray, cfg: EmConfig):
    """EM fit, best of ``cfg.restarts`` seeded initializations by final
    log-likelihood. Returns (GmmModel, log-likelihood trace)."""
    cfg.validate()
    data = np.asarray(data, dtype=np.float64)
    n, d = data.shape
    if n <= cfg.n_components * d:
        raise ValueError(f"need more than K*d = {cfg.n_components * d} points, got {n}")

    best_model, best_trace, best_ll = None, None, -np.inf
    failures = []
    for r in range(cfg.restarts):
        rng = stream(cfg.seed, f"gmm-init-{r}")
        try:
            model = _init_model(data, cfg.n_components, rng, cfg.ridge)
            trace = [log_likelihood(data, model)]
            for _ in range(cfg.max_iter):
                resp = e_step(data, model)
                model = m_step(data, resp, cfg.ridge)
                trace.append(log_likelihood(data, model))
                if abs(trace[-1] - trace[-2]) < cfg.tol:
                    break
        except (DegenerateComponentError, np.linalg.LinAlgError,
                FloatingPointError) as exc:
            failures.append(str(exc))
            continue
        if trace[-1] > best_ll:
            best_model, best_trace, best_ll = model, trace, trace[-1]

    if best_model is None:
        raise RuntimeError(f"all {cfg.restarts} EM restarts failed: {failures}")
    return best_model, best_trace


def predict(model: GmmModel, points: np.ndarray):
    """Argmax-responsibility cluster per point (ties to the lower index).
    Returns (cluster indices, responsibilities)."""
    resp = e_step(np.atleast_2d(points), model)
    return resp.argmax(axis=1), resp


def map_clusters(model: GmmModel) -> dict:
    """Two-component rule: the cluster whose mean has the larger
    reconstruction-error coordinate (last column) is abnormal."""
    if model.n_components != 2:
        raise ValueError(f"cluster labeling requires K=2, got {model.n_components}")
    abnormal = int(np.argmax(model.means[:, -1]))
    return {abnormal: "abnormal", 1 - abnormal: "normal"}


def map_clusters_by_errors(clusters: np.ndarray, errors: np.ndarray) -> dict:
    """Fallback rule when the mixture was fitted without the error coordinate:
    label by mean reconstruction error of the assigned windows."""
    means = [errors[clusters == k].mean() if np.any(clusters == k) else -np.inf
             for k in range(2)]
    abnormal = int(np.argmax(means))
    return {abnormal: "abnormal", 1 - abnormal: "normal"}
