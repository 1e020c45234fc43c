"""End-to-end orchestration: synthesize data, train the refinement and
sequence-VAE models, detect anomalies via mixture clustering of the
phase-space features, evaluate, and sweep parameters.

Every artifact except ``timings.json`` is a deterministic function of
(config, seed, input files); timings are kept in their own file so the rest
of a run's output can be compared byte for byte.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import mixture, refine, seqvae
from .data import (LABEL_ABNORMAL, LABEL_NORMAL, SensorFrame, SynthConfig,
                   apply_normalizer, clean, fit_normalizer, generate,
                   load_csv, make_windows, split_chronological, write_csv)
from .evaluation import MetricReport, evaluate_labels
from .training import TrainConfig

_LABEL_FOR_NAME = {"normal": LABEL_NORMAL, "abnormal": LABEL_ABNORMAL}


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    """Synthetic benchmark scenario: a normal-operation training period and
    a test period whose second half carries a gradual drift fault."""
    train_samples: int = 20000
    test_samples: int = 6000
    n_features: int = 19
    onset_fraction: float = 0.5
    drift_rate: float = 0.005            # per-sample drift on affected features
    n_drift_features: int = 6
    noise_std: float = 0.1
    train_outlier_fraction: float = 0.02
    outlier_scale: float = 2.0
    sample_period_s: int = 60


@dataclass
class PipelineConfig:
    contamination: float = 0.2
    lof_k: int = 20
    seq_len: int = 100
    stride: int = 1                      # detection windows
    train_stride: int = 1                # training windows
    batch_size: int = 64
    max_epochs: int = 20000
    patience: int = 100
    lr: float = 1e-3
    latent_dim: int = 2
    gmm_components: int = 2
    gmm_max_iter: int = 500
    gmm_tol: float = 1e-6
    gmm_ridge: float = 1e-6
    gmm_restarts: int = 5
    fit_on: str = "test"                 # train | test | both
    use_selection: bool = True
    use_lstm: bool = True
    feature_mode: str = "daf"            # daf | latent_only
    flat_hidden: tuple = (4,)            # parameter budget comparable to the
                                         # recurrent model's

    seed: int = 42
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)

    def validate(self):
        checks = [
            (0.0 <= self.contamination <= 0.5, "contamination must be in [0, 0.5]"),
            (self.lof_k >= 1, "lof_k must be >= 1"),
            (self.seq_len >= 1, "seq_len must be >= 1"),
            (self.stride >= 1 and self.train_stride >= 1, "strides must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.max_epochs >= 1, "max_epochs must be >= 1"),
            (self.patience >= 1, "patience must be >= 1"),
            (self.lr > 0, "lr must be > 0"),
            (self.latent_dim >= 1, "latent_dim must be >= 1"),
            (self.fit_on in ("train", "test", "both"), "fit_on must be train|test|both"),
            (self.feature_mode in ("daf", "latent_only"),
             "feature_mode must be daf|latent_only"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flat_hidden"] = list(self.flat_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "scenario" in d:
            scen_known = {f.name for f in fields(ScenarioConfig)}
            bad = set(d["scenario"]) - scen_known
            if bad:
                raise ConfigError(f"unknown scenario keys: {sorted(bad)}")
            d["scenario"] = ScenarioConfig(**d["scenario"])
        if "flat_hidden" in d:
            d["flat_hidden"] = tuple(d["flat_hidden"])
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def from_json_file(cls, path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _config_json(cfg: PipelineConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2)


def _train_config(cfg: PipelineConfig) -> TrainConfig:
    return TrainConfig(batch_size=cfg.batch_size, max_epochs=cfg.max_epochs,
                       patience=cfg.patience, lr=cfg.lr, seed=cfg.seed)


def _em_config(cfg: PipelineConfig) -> mixture.EmConfig:
    return mixture.EmConfig(n_components=cfg.gmm_components,
                            max_iter=cfg.gmm_max_iter, tol=cfg.gmm_tol,
                            ridge=cfg.gmm_ridge, restarts=cfg.gmm_restarts,
                            seed=cfg.seed)


def synth_scenario(cfg: PipelineConfig):
    """Build the (train, test) frames for the configured scenario. The test
    period continues the same base signals with fresh noise."""
    s = cfg.scenario
    drift_mask = np.zeros(s.n_features, dtype=bool)
    drift_mask[np.linspace(0, s.n_features - 1, s.n_drift_features).astype(int)] = True
    train_cfg = SynthConfig(
        n_samples=s.train_samples, n_features=s.n_features,
        sample_period_s=s.sample_period_s, seed=cfg.seed,
        noise_std=s.noise_std,
        outlier_fraction=s.train_outlier_fraction,
        outlier_scale=s.outlier_scale,
    )
    train = generate(train_cfg)
    onset = int(s.test_samples * s.onset_fraction)
    test_cfg = SynthConfig(
        n_samples=s.test_samples, n_features=s.n_features,
        sample_period_s=s.sample_period_s, seed=cfg.seed,
        noise_seed=cfg.seed + 1, t_offset=s.train_samples,
        noise_std=s.noise_std,
        onset_index=onset, drift_rate=s.drift_rate, drift_features=drift_mask,
    )
    test = generate(test_cfg)
    # place the test period right after the training period
    shift = np.timedelta64(s.train_samples * s.sample_period_s, "s")
    test.timestamps = test.timestamps + shift
    return train, test


def cmd_synth(cfg: PipelineConfig, out_dir) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train, test = synth_scenario(cfg)
    train_path, test_path = out_dir / "train.csv", out_dir / "test.csv"
    write_csv(train, train_path)
    write_csv(test, test_path)
    return {"train": str(train_path), "test": str(test_path),
            "train_samples": train.n_samples, "test_samples": test.n_samples}


def _dae_arch(n_features: int, seed: int) -> refine.DaeConfig:
    dims = (n_features, 16, 10, 8, 4, 8, 10, 16, n_features)
    return refine.DaeConfig(dims=dims, seed=seed)


def _vae_arch(cfg: PipelineConfig, n_features: int):
    if cfg.use_lstm:
        return seqvae.LstmVaeArch(n_features=n_features, latent=cfg.latent_dim)
    return seqvae.FlatVaeArch(n_features=n_features, seq_len=cfg.seq_len,
                              hidden=cfg.flat_hidden, latent=cfg.latent_dim)


def _write_features_csv(path, timestamps, feats, labels):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "mu_1", "mu_2", "e_rec", "label"])
        times = np.datetime_as_string(timestamps, unit="s")
        for i in range(len(feats)):
            lab = int(labels[i])
            w.writerow([times[i]] + [repr(float(v)) for v in feats[i]]
                       + ["" if lab < 0 else str(lab)])


def cmd_train(cfg: PipelineConfig, train_csv, out_dir) -> dict:
    """clean -> normalize -> autoencoder -> LOF refinement -> window ->
    sequence-VAE training. Writes the model bundle into ``out_dir``."""
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    timings = {}
    t0 = time.perf_counter()

    frame = load_csv(train_csv)
    frame, clean_report = clean(frame)
    tr, _val = split_chronological(frame, 0.8)
    stats = fit_normalizer(tr)
    norm = apply_normalizer(frame, stats)
    timings["prepare_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    histories = {}
    if cfg.use_selection and cfg.contamination > 0:
        norm_tr, norm_val = split_chronological(norm, 0.8)
        dae, dae_hist = refine.dae_train(
            norm_tr.values, norm_val.values, _train_config(cfg),
            _dae_arch(frame.n_features, cfg.seed))
        errors = refine.reconstruction_errors(dae, norm.values)
        scores = refine.lof_scores(errors, cfg.lof_k)
        lof_cfg = refine.LofConfig(cfg.lof_k, cfg.contamination)
        refined, report = refine.select_refined(norm, errors, scores, lof_cfg)
        histories["dae"] = {"train": dae_hist.train_loss, "val": dae_hist.val_loss}
        (out_dir / "dae.json").write_text(json.dumps(
            {"dims": list(dae.dims),
             "params": {k: v.tolist() for k, v in dae.params.items()}}, indent=2))
    else:
        refined, report = norm, refine.RefinementReport(skipped=True)
    timings["refine_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    windows = make_windows(refined, cfg.seq_len, cfg.train_stride)
    model, vae_hist = seqvae.train(windows.windows, _train_config(cfg),
                                   _vae_arch(cfg, frame.n_features),
                                   norm_stats=stats)
    histories["vae"] = {"train": vae_hist.train_loss, "val": vae_hist.val_loss}
    timings["vae_train_s"] = time.perf_counter() - t0

    # training-period phase-space features, for --fit-on train|both
    t0 = time.perf_counter()
    train_feats = seqvae.extract_features(model, windows.windows)
    _write_features_csv(out_dir / "train_features.csv",
                        refined.timestamps[windows.source_indices],
                        train_feats, windows.window_labels)
    timings["train_features_s"] = time.perf_counter() - t0

    seqvae.save_model(model, out_dir / "model.json")
    (out_dir / "refinement.json").write_text(report.to_json())
    (out_dir / "history.json").write_text(json.dumps(histories, indent=2))
    (out_dir / "config.json").write_text(_config_json(cfg))
    (out_dir / "clean_report.json").write_text(json.dumps(
        {"removed_indices": clean_report.removed_indices,
         "per_feature_counts": clean_report.per_feature_counts}, indent=2))
    (out_dir / "timings.json").write_text(json.dumps(timings, indent=2))
    return {"out_dir": str(out_dir), "n_windows": windows.n_windows,
            "refinement_skipped": report.skipped}


def _load_train_features(bundle_dir) -> np.ndarray:
    path = Path(bundle_dir) / "train_features.csv"
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            rows.append([float(row[1]), float(row[2]), float(row[3])])
    return np.asarray(rows)


def cmd_detect(cfg: PipelineConfig, bundle_dir, test_csv, out_dir) -> dict:
    """Window the test data, extract phase-space features, fit the mixture,
    map clusters to verdicts, and write verdict + feature CSVs."""
    cfg.validate()
    bundle_dir, out_dir = Path(bundle_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    timings = {}
    t0 = time.perf_counter()

    model = seqvae.load_model(bundle_dir / "model.json")
    frame = load_csv(test_csv)
    if frame.n_features != model.arch.n_features:
        raise ValueError(f"model expects {model.arch.n_features} features, "
                         f"data has {frame.n_features}")
    frame, _ = clean(frame)
    norm = apply_normalizer(frame, model.norm_stats)
    windows = make_windows(norm, cfg.seq_len, cfg.stride)
    feats = seqvae.extract_features(model, windows.windows)
    timings["features_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    cols = slice(0, 2) if cfg.feature_mode == "latent_only" else slice(0, 3)
    fit_sets = {"test": feats}
    if cfg.fit_on in ("train", "both"):
        fit_sets["train"] = _load_train_features(bundle_dir)
    if cfg.fit_on == "train":
        fit_data = fit_sets["train"]
    elif cfg.fit_on == "both":
        fit_data = np.vstack([fit_sets["train"], fit_sets["test"]])
    else:
        fit_data = feats
    gmm, trace = mixture.fit(fit_data[:, cols], _em_config(cfg))
    clusters, _resp = mixture.predict(gmm, feats[:, cols])
    if cfg.feature_mode == "latent_only":
        label_map = mixture.map_clusters_by_errors(clusters, feats[:, 2])
    else:
        label_map = mixture.map_clusters(gmm)
    gmm.label_map = label_map
    verdicts = np.array([_LABEL_FOR_NAME[label_map[c]] for c in clusters],
                        dtype=np.int8)
    timings["gmm_s"] = time.perf_counter() - t0

    times = np.datetime_as_string(frame.timestamps[windows.source_indices],
                                  unit="s")
    with open(out_dir / "verdicts.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "mu_1", "mu_2", "e_rec", "cluster", "label"])
        for i in range(len(feats)):
            w.writerow([times[i]] + [repr(float(v)) for v in feats[i]]
                       + [int(clusters[i]), int(verdicts[i])])
    _write_features_csv(out_dir / "features.csv",
                        frame.timestamps[windows.source_indices],
                        feats, windows.window_labels)
    (out_dir / "gmm.json").write_text(gmm.to_json())
    (out_dir / "gmm_trace.json").write_text(json.dumps(trace, indent=2))
    (out_dir / "detect_timings.json").write_text(json.dumps(timings, indent=2))
    return {"out_dir": str(out_dir), "n_windows": int(len(feats)),
            "n_abnormal": int(np.sum(verdicts == LABEL_ABNORMAL))}


def read_verdicts(path):
    """Returns (timestamps, features (N,3), clusters, verdict labels)."""
    ts, feats, clusters, labels = [], [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            ts.append(np.datetime64(row[0], "s"))
            feats.append([float(v) for v in row[1:4]])
            clusters.append(int(row[4]))
            labels.append(int(row[5]))
    return (np.asarray(ts), np.asarray(feats),
            np.asarray(clusters), np.asarray(labels, dtype=np.int8))


def cmd_evaluate(cfg: PipelineConfig, verdicts_csv, test_csv, out_json) -> MetricReport:
    """Score verdicts against the labeled test windows."""
    cfg.validate()
    _, _, _, predicted = read_verdicts(verdicts_csv)
    frame = load_csv(test_csv)
    frame, _ = clean(frame)
    windows = make_windows(frame, cfg.seq_len, cfg.stride)
    if windows.n_windows != len(predicted):
        raise ValueError(f"verdicts ({len(predicted)}) do not align with "
                         f"test windows ({windows.n_windows})")
    report = evaluate_labels(predicted, windows.window_labels)
    Path(out_json).write_text(report.to_json())
    return report


def run_pipeline(cfg: PipelineConfig, train_csv, test_csv, out_dir) -> MetricReport:
    """train + detect + evaluate in one directory; returns the metric report."""
    out_dir = Path(out_dir)
    cmd_train(cfg, train_csv, out_dir / "bundle")
    cmd_detect(cfg, out_dir / "bundle", test_csv, out_dir / "detect")
    return cmd_evaluate(cfg, out_dir / "detect" / "verdicts.csv", test_csv,
                        out_dir / "metrics.json")


SWEEP_AXES = {"contamination", "seq_len", "batch"}


def cmd_sweep(cfg: PipelineConfig, axis: str, values, train_csv, test_csv,
              out_dir) -> list:
    """Run the full pipeline once per axis value with a shared seed; writes
    a table CSV (value, AC, PR, RC, F1, FAR)."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {sorted(SWEEP_AXES)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in values:
        run_cfg = PipelineConfig.from_dict(cfg.to_dict())
        if axis == "contamination":
            run_cfg.contamination = float(value)
        elif axis == "seq_len":
            run_cfg.seq_len = int(value)
        else:
            run_cfg.batch_size = int(value)
        run_cfg.validate()
        report = run_pipeline(run_cfg, train_csv, test_csv,
                              out_dir / f"{axis}_{value}")
        rows.append((value, report))
    with open(out_dir / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([axis, "ac", "pr", "rc", "f1", "far"])
        for value, rep in rows:
            w.writerow([value] + [repr(float(v))
                                  for v in (rep.ac, rep.pr, rep.rc, rep.f1, rep.far)])
    return rows
