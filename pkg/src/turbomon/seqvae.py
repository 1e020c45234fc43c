"""Sequence variational autoencoder over sensor windows.

The encoder runs a stacked two-layer LSTM over the window, takes the final
hidden state of the top layer through a dense layer, and emits the latent
mean and log-variance (latent dim 2 by default). The decoder feeds the
latent vector to a stacked two-layer LSTM at every timestep and maps each
hidden state back to feature space. A dense ("flat") variant that flattens
the window replaces the LSTM stacks for ablation runs.

Each window's phase-space coordinate is (mu_1, mu_2, reconstruction error):
latent embedding plus reconstruction discrepancy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .data import NormalizationStats
from .rng import stream
from .training import TrainConfig, train_loop

MODEL_FORMAT_VERSION = 1


@dataclass
class LstmVaeArch:
    n_features: int = 19
    enc_hidden: tuple = (19, 8)
    dense: int = 8
    latent: int = 2
    dec_hidden: tuple = (8, 19)


@dataclass
class FlatVaeArch:
    """Dense VAE over flattened windows (the no-recurrence ablation)."""
    n_features: int = 19
    seq_len: int = 100
    hidden: tuple = (4,)
    latent: int = 2


@dataclass
class LatentStats:
    mu: np.ndarray
    logvar: np.ndarray


@dataclass
class VaeModel:
    kind: str                        # "lstm" or "flat"
    arch: LstmVaeArch | FlatVaeArch
    params: dict
    norm_stats: NormalizationStats | None
    seed: int


def _cell_param_shapes(n_in: int, n_hidden: int) -> dict:
    return {
        "W_f": (n_in + n_hidden, n_hidden), "b_f": (1, n_hidden),
        "W_i": (n_in + n_hidden, n_hidden), "b_i": (1, n_hidden),
        "W_o": (n_in + n_hidden, n_hidden), "b_o": (1, n_hidden),
        "W_c": (n_in, n_hidden), "W_hc": (n_hidden, n_hidden),
        "b_c": (1, n_hidden),
    }


def _dense_shapes(n_in: int, n_out: int) -> dict:
    return {"W": (n_in, n_out), "b": (1, n_out)}


def _param_shapes(arch) -> dict:
    shapes = {}
    if isinstance(arch, LstmVaeArch):
        sizes = [arch.n_features] + list(arch.enc_hidden)
        for i, (ni, nh) in enumerate(zip(sizes[:-1], sizes[1:])):
            for k, s in _cell_param_shapes(ni, nh).items():
                shapes[f"enc{i}.{k}"] = s
        for k, s in _dense_shapes(arch.enc_hidden[-1], arch.dense).items():
            shapes[f"enc_dense.{k}"] = s
        for head in ("mu", "logvar"):
            for k, s in _dense_shapes(arch.dense, arch.latent).items():
                shapes[f"{head}.{k}"] = s
        sizes = [arch.latent] + list(arch.dec_hidden)
        for i, (ni, nh) in enumerate(zip(sizes[:-1], sizes[1:])):
            for k, s in _cell_param_shapes(ni, nh).items():
                shapes[f"dec{i}.{k}"] = s
        for k, s in _dense_shapes(arch.dec_hidden[-1], arch.n_features).items():
            shapes[f"out.{k}"] = s
    else:
        flat = arch.seq_len * arch.n_features
        sizes = [flat] + list(arch.hidden)
        for i, (ni, no) in enumerate(zip(sizes[:-1], sizes[1:])):
            for k, s in _dense_shapes(ni, no).items():
                shapes[f"enc{i}.{k}"] = s
        for head in ("mu", "logvar"):
            for k, s in _dense_shapes(sizes[-1], arch.latent).items():
                shapes[f"{head}.{k}"] = s
        sizes = [arch.latent] + list(reversed(arch.hidden))
        for i, (ni, no) in enumerate(zip(sizes[:-1], sizes[1:])):
            for k, s in _dense_shapes(ni, no).items():
                shapes[f"dec{i}.{k}"] = s
        for k, s in _dense_shapes(sizes[-1], flat).items():
            shapes[f"out.{k}"] = s
    return shapes


def init_vae_params(arch, seed: int) -> dict:
    """Uniform +-1/sqrt(fan_in) weights, zero biases, forget-gate bias +1."""
    rng = stream(seed, "vae-init")
    params = {}
    for name, shape in _param_shapes(arch).items():
        if name.endswith(("b_f",)):
            params[name] = np.ones(shape)
        elif ".b" in name:
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.uniform(-1.0, 1.0, shape) / np.sqrt(shape[0])
    return params


def lstm_cell_step(params: dict, x_t, h_prev, c_prev, prefix: str = ""):
    """One LSTM cell update on plain arrays; returns (h_t, c_t)."""
    get = {k: ag.Var(np.atleast_2d(v)) for k, v in params.items()}
    h, c = _cell_step(lambda k: get[prefix + k], ag.Var(np.atleast_2d(x_t)),
                      ag.Var(np.atleast_2d(h_prev)), ag.Var(np.atleast_2d(c_prev)))
    return h.value, c.value


def _cell_step(get, x, h_prev, c_prev):
    hx = ag.hstack(h_prev, x)
    f_t = ag.sigmoid(ag.add_bias(ag.matmul(hx, get("W_f")), get("b_f")))
    i_t = ag.sigmoid(ag.add_bias(ag.matmul(hx, get("W_i")), get("b_i")))
    o_t = ag.sigmoid(ag.add_bias(ag.matmul(hx, get("W_o")), get("b_o")))
    cand = ag.tanh(ag.add_bias(
        ag.add(ag.matmul(x, get("W_c")), ag.matmul(h_prev, get("W_hc"))),
        get("b_c")))
    c_t = ag.add(ag.hadamard(c_prev, f_t), ag.hadamard(i_t, cand))
    h_t = ag.hadamard(o_t, ag.tanh(c_t))
    return h_t, c_t


def _dense(pvars, prefix, x, activation=None):
    out = ag.add_bias(ag.matmul(x, pvars[f"{prefix}.W"]), pvars[f"{prefix}.b"])
    return activation(out) if activation else out


def _run_stack(pvars, prefix, n_layers, inputs, batch_size, hidden_sizes):
    """Run stacked LSTM layers over a sequence of (B, *) input Vars.
    Returns the list of top-layer hidden-state Vars per timestep."""
    h = [ag.Var(np.zeros((batch_size, nh))) for nh in hidden_sizes]
    c = [ag.Var(np.zeros((batch_size, nh))) for nh in hidden_sizes]
    top = []
    for x in inputs:
        inp = x
        for layer in range(n_layers):
            get = lambda k, layer=layer: pvars[f"{prefix}{layer}.{k}"]
            h[layer], c[layer] = _cell_step(get, inp, h[layer], c[layer])
            inp = h[layer]
        top.append(h[-1])
    return top


def _encode_graph(pvars, arch, batch: np.ndarray):
    """batch (B, L, F) -> (mu Var (B, d), logvar Var (B, d))."""
    b, length, _ = batch.shape
    if isinstance(arch, LstmVaeArch):
        inputs = [ag.Var(batch[:, t, :]) for t in range(length)]
        top = _run_stack(pvars, "enc", len(arch.enc_hidden), inputs, b,
                         arch.enc_hidden)
        feat = _dense(pvars, "enc_dense", top[-1], ag.tanh)
    else:
        feat = ag.Var(batch.reshape(b, -1))
        for i in range(len(arch.hidden)):
            feat = _dense(pvars, f"enc{i}", feat, ag.tanh)
    return _dense(pvars, "mu", feat), _dense(pvars, "logvar", feat)


def _decode_graph(pvars, arch, z, length: int):
    """z Var (B, d) -> list of L reconstruction Vars, each (B, F)."""
    b = z.shape[0]
    if isinstance(arch, LstmVaeArch):
        top = _run_stack(pvars, "dec", len(arch.dec_hidden), [z] * length, b,
                         arch.dec_hidden)
        return [_dense(pvars, "out", h) for h in top]
    h = z
    for i in range(len(arch.hidden)):
        h = _dense(pvars, f"dec{i}", h, ag.tanh)
    flat = _dense(pvars, "out", h)
    return _split_columns(flat, length, arch.n_features)


def _split_columns(flat, length, n_features):
    """Split a (B, L*F) Var into L pieces of (B, F), differentiable."""
    tape = flat.tape
    out = []
    for t in range(length):
        sl = slice(t * n_features, (t + 1) * n_features)
        piece = ag.Var(flat.value[:, sl], tape)
        if tape is not None:
            def back(piece=piece, sl=sl):
                g = np.zeros_like(flat.value)
                g[:, sl] = piece.grad
                flat._accum(g)
            tape.record(back)
        out.append(piece)
    return out


def elbo_graph(pvars, arch, batch: np.ndarray, eps: np.ndarray):
    """Batch training loss: mean-per-window MSE plus the KL regularizer
    -(1/2) sum_j (1 + logvar_j - mu_j^2 - sigma_j^2), averaged over windows."""
    b, length, n_feat = batch.shape
    mu, logvar = _encode_graph(pvars, arch, batch)
    sigma = ag.exp(ag.scale(logvar, 0.5))
    z = ag.add(mu, ag.hadamard(sigma, ag.Var(eps)))
    recon = _decode_graph(pvars, arch, z, length)

    sq = None
    for t, r in enumerate(recon):
        term = ag.total(ag.square(ag.sub(r, ag.Var(batch[:, t, :]))))
        sq = term if sq is None else ag.add(sq, term)
    rec = ag.scale(sq, 1.0 / (b * length * n_feat))

    kl_inner = ag.sub(ag.add_const(logvar, 1.0),
                      ag.add(ag.square(mu), ag.exp(logvar)))
    kl = ag.scale(ag.total(kl_inner), -0.5 / b)
    return ag.add(rec, kl), rec, kl


def encode_batch(model: VaeModel, windows: np.ndarray):
    pvars = {k: ag.Var(v) for k, v in model.params.items()}
    mu, logvar = _encode_graph(pvars, model.arch, windows)
    return mu.value, logvar.value


def encode(model: VaeModel, window: np.ndarray) -> LatentStats:
    mu, logvar = encode_batch(model, window[None])
    return LatentStats(mu[0], logvar[0])


def reparameterize(stats: LatentStats, eps: np.ndarray) -> np.ndarray:
    """z = mu + sigma * eps with sigma = exp(logvar / 2)."""
    return stats.mu + np.exp(0.5 * stats.logvar) * eps


def decode_batch(model: VaeModel, z: np.ndarray, seq_len: int) -> np.ndarray:
    pvars = {k: ag.Var(v) for k, v in model.params.items()}
    recon = _decode_graph(pvars, model.arch, ag.Var(z), seq_len)
    return np.stack([r.value for r in recon], axis=1)


def decode(model: VaeModel, z: np.ndarray, seq_len: int) -> np.ndarray:
    return decode_batch(model, np.atleast_2d(z), seq_len)[0]


def elbo_loss(window: np.ndarray, recon: np.ndarray, stats: LatentStats):
    """Scalar loss for one window; returns (total, rec, kl)."""
    rec = float(np.mean((window - recon) ** 2))
    kl = float(-0.5 * np.sum(1.0 + stats.logvar - stats.mu ** 2
                             - np.exp(stats.logvar)))
    return rec + kl, rec, kl


def train(windows: np.ndarray, cfg: TrainConfig, arch=None,
          norm_stats: NormalizationStats | None = None,
          val_fraction: float = 0.2):
    """Train on refined windows: chronological 80/20 split, Adam, early
    stopping on validation loss (epsilon = 0 for validation)."""
    if arch is None:
        arch = LstmVaeArch(n_features=windows.shape[2])
    if isinstance(arch, FlatVaeArch) and arch.seq_len != windows.shape[1]:
        raise ValueError(f"flat architecture expects windows of length "
                         f"{arch.seq_len}, got {windows.shape[1]}")
    n = len(windows)
    cut = int(np.floor(n * (1.0 - val_fraction)))
    if cut == 0 or cut == n:
        raise ValueError(f"cannot split {n} windows for validation")
    train_w, val_w = windows[:cut], windows[cut:]

    params = init_vae_params(arch, cfg.seed)
    eps_rng = stream(cfg.seed, "vae-eps")
    latent = arch.latent

    def batch_loss(tracked, idx):
        eps = eps_rng.standard_normal((len(idx), latent))
        loss, _, _ = elbo_graph(tracked, arch, train_w[idx], eps)
        return loss

    def val_loss(p):
        pvars = {k: ag.Var(v) for k, v in p.items()}
        loss, _, _ = elbo_graph(pvars, arch, val_w,
                                np.zeros((len(val_w), latent)))
        return float(loss.value[0, 0])

    best, history = train_loop(params, batch_loss, val_loss, cut, cfg,
                               stream(cfg.seed, "vae-shuffle"))
    model = VaeModel("lstm" if isinstance(arch, LstmVaeArch) else "flat",
                     arch, best, norm_stats, cfg.seed)
    return model, history


def extract_features(model: VaeModel, windows: np.ndarray,
                     batch_size: int = 512) -> np.ndarray:
    """Per-window phase-space coordinates (mu_1, mu_2, reconstruction error),
    computed deterministically with z = mu."""
    out = np.empty((len(windows), model.arch.latent + 1))
    length = windows.shape[1]
    for start in range(0, len(windows), batch_size):
        chunk = windows[start:start + batch_size]
        mu, _ = encode_batch(model, chunk)
        recon = decode_batch(model, mu, length)
        err = np.mean((chunk - recon) ** 2, axis=(1, 2))
        out[start:start + len(chunk), :model.arch.latent] = mu
        out[start:start + len(chunk), -1] = err
    return out


def save_model(model: VaeModel, path):
    arch = {k: (list(v) if isinstance(v, tuple) else v)
            for k, v in vars(model.arch).items()}
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "arch": arch,
        "seed": model.seed,
        "norm_stats": model.norm_stats.to_dict() if model.norm_stats else None,
        "params": {k: v.tolist() for k, v in model.params.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)


def load_model(path) -> VaeModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('version')}")
    arch_d = {k: (tuple(v) if isinstance(v, list) else v)
              for k, v in doc["arch"].items()}
    arch = LstmVaeArch(**arch_d) if doc["kind"] == "lstm" else FlatVaeArch(**arch_d)
    params = {k: np.asarray(v, dtype=np.float64) for k, v in doc["params"].items()}
    stats = (NormalizationStats.from_dict(doc["norm_stats"])
             if doc["norm_stats"] else None)
    return VaeModel(doc["kind"], arch, params, stats, doc["seed"])
