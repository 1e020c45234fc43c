"""Sensor-table ingestion, cleaning, normalization, windowing, and a
synthetic turbine-telemetry generator.

CSV contract: UTF-8, comma-separated, header ``timestamp,<features...>[,label]``,
ISO-8601 timestamps, label ``0`` = normal, ``1`` = abnormal, empty = unknown.
Missing values are empty fields or ``NaN``.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .rng import stream

LABEL_UNKNOWN = -1
LABEL_NORMAL = 0
LABEL_ABNORMAL = 1

# Default channel names for the 19-sensor turbine layout: pressures and
# temperatures along the steam path plus generator active power.
DEFAULT_FEATURES = [
    "P_0", "T_0", "P_1", "T_1", "P_2", "T_2", "P_3", "T_3",
    "P_4", "T_4", "P_5", "T_5", "P_6", "T_6",
    "P_7", "P_8", "P_9", "P_10", "Eff",
]

STD_FLOOR = 1e-8


class IngestError(ValueError):
    pass


class DataQualityError(ValueError):
    pass


@dataclass
class SensorFrame:
    timestamps: np.ndarray          # datetime64[s], strictly increasing
    values: np.ndarray              # (n, F) float64
    feature_names: list
    labels: np.ndarray              # (n,) int8 in {-1, 0, 1}

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[s]")
        self.values = np.asarray(self.values, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int8)
        n = len(self.timestamps)
        if self.values.shape[0] != n or len(self.labels) != n:
            raise ValueError("timestamps, values and labels lengths disagree")
        if self.values.ndim != 2 or self.values.shape[1] != len(self.feature_names):
            raise ValueError("values must be (n, F) matching feature_names")
        if n > 1 and not np.all(np.diff(self.timestamps).astype(np.int64) > 0):
            bad = np.where(np.diff(self.timestamps).astype(np.int64) <= 0)[0] + 1
            raise IngestError(f"timestamps not strictly increasing at rows {bad.tolist()}")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def take(self, idx) -> "SensorFrame":
        return SensorFrame(self.timestamps[idx], self.values[idx],
                           list(self.feature_names), self.labels[idx])

    def equals(self, other: "SensorFrame") -> bool:
        return (list(self.feature_names) == list(other.feature_names)
                and np.array_equal(self.timestamps, other.timestamps)
                and np.array_equal(self.values, other.values, equal_nan=True)
                and np.array_equal(self.labels, other.labels))


@dataclass
class NormalizationStats:
    mean: np.ndarray                # (F,)
    std: np.ndarray                 # (F,), floored at STD_FLOOR

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=np.float64),
                   np.asarray(d["std"], dtype=np.float64))


@dataclass
class WindowSet:
    windows: np.ndarray             # (N, L, F)
    window_labels: np.ndarray       # (N,) label of each window's last sample
    source_indices: np.ndarray      # (N,) last-sample index per window

    @property
    def n_windows(self) -> int:
        return self.windows.shape[0]


@dataclass
class CleanReport:
    removed_indices: list
    per_feature_counts: dict


def _parse_float(s: str) -> float:
    s = s.strip()
    if s == "" or s.lower() == "nan":
        return float("nan")
    return float(s)


def load_csv(path, feature_names=None) -> SensorFrame:
    """Load a sensor table. Rows with unparseable timestamps are dropped with
    a warning listing their row numbers; non-monotonic timestamps raise."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file")
        if not header or header[0] != "timestamp":
            raise IngestError(f"{path}: first column must be 'timestamp', got {header[:1]}")
        has_label = header[-1] == "label"
        names = header[1:-1] if has_label else header[1:]
        if feature_names is not None and list(names) != list(feature_names):
            raise IngestError(
                f"{path}: header features {names} do not match expected {list(feature_names)}")

        ts, rows, labels, rejected = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                t = np.datetime64(row[0], "s")
                if np.isnat(t):
                    raise ValueError
            except Exception:
                rejected.append(lineno)
                continue
            fields = row[1:-1] if has_label else row[1:]
            if len(fields) != len(names):
                raise IngestError(f"{path}: row {lineno} has {len(fields)} values, "
                                  f"expected {len(names)}")
            ts.append(t)
            rows.append([_parse_float(v) for v in fields])
            if has_label:
                lab = row[-1].strip()
                labels.append(LABEL_UNKNOWN if lab == "" else int(lab))
            else:
                labels.append(LABEL_UNKNOWN)

    if rejected:
        warnings.warn(f"{path}: dropped rows with unparseable timestamps: {rejected}")
    ts = np.asarray(ts, dtype="datetime64[s]")
    if len(ts) > 1:
        diffs = np.diff(ts).astype(np.int64)
        if np.any(diffs <= 0):
            bad = (np.where(diffs <= 0)[0] + 1).tolist()
            raise IngestError(f"{path}: timestamps not strictly increasing at data rows {bad}")
    values = np.asarray(rows, dtype=np.float64).reshape(len(ts), len(names))
    return SensorFrame(ts, values, list(names), np.asarray(labels, dtype=np.int8))


def write_csv(frame: SensorFrame, path):
    """Write a frame in the load_csv format. Floats use repr so a round trip
    is bit-exact; NaN is written as ``NaN``; unknown labels as empty."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp"] + list(frame.feature_names) + ["label"])
        times = np.datetime_as_string(frame.timestamps, unit="s")
        for i in range(frame.n_samples):
            row = [times[i]]
            for v in frame.values[i]:
                row.append("NaN" if np.isnan(v) else repr(float(v)))
            lab = int(frame.labels[i])
            row.append("" if lab == LABEL_UNKNOWN else str(lab))
            w.writerow(row)


def clean(frame: SensorFrame, max_removed_fraction: float = 0.5):
    """Drop rows containing NaN/Inf. Returns (frame, CleanReport)."""
    bad_mask = ~np.isfinite(frame.values)
    bad_rows = np.any(bad_mask, axis=1)
    removed = np.where(bad_rows)[0]
    if frame.n_samples and len(removed) / frame.n_samples > max_removed_fraction:
        raise DataQualityError(
            f"clean would remove {len(removed)} of {frame.n_samples} rows "
            f"(> {max_removed_fraction:.0%})")
    per_feature = {name: int(bad_mask[:, j].sum())
                   for j, name in enumerate(frame.feature_names)
                   if bad_mask[:, j].any()}
    report = CleanReport(removed.tolist(), per_feature)
    return frame.take(~bad_rows), report


def fit_normalizer(frame: SensorFrame) -> NormalizationStats:
    """Per-feature z-score stats. Fit on training data only (caller contract).
    Constant features get a floored std and a warning."""
    mean = frame.values.mean(axis=0)
    std = frame.values.std(axis=0)
    floored = std < STD_FLOOR
    if np.any(floored):
        names = [frame.feature_names[j] for j in np.where(floored)[0]]
        warnings.warn(f"constant features {names}: std floored at {STD_FLOOR}")
        std = np.where(floored, STD_FLOOR, std)
    return NormalizationStats(mean, std)


def apply_normalizer(frame: SensorFrame, stats: NormalizationStats) -> SensorFrame:
    vals = (frame.values - stats.mean) / stats.std
    return SensorFrame(frame.timestamps, vals, list(frame.feature_names), frame.labels)


def invert_normalizer(frame: SensorFrame, stats: NormalizationStats) -> SensorFrame:
    vals = frame.values * stats.std + stats.mean
    return SensorFrame(frame.timestamps, vals, list(frame.feature_names), frame.labels)


def split_chronological(frame: SensorFrame, train_fraction: float):
    """First floor(n * fraction) samples to train, remainder to validation."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    cut = int(np.floor(frame.n_samples * train_fraction))
    if cut == 0 or cut == frame.n_samples:
        raise ValueError(f"split leaves an empty side: n={frame.n_samples}, "
                         f"fraction={train_fraction}")
    idx = np.arange(frame.n_samples)
    return frame.take(idx[:cut]), frame.take(idx[cut:])


def make_windows(frame: SensorFrame, length: int, stride: int = 1) -> WindowSet:
    """Sliding windows of ``length`` rows; each window labeled by its last
    sample."""
    n = frame.n_samples
    if length > n:
        raise ValueError(f"window length {length} exceeds {n} samples")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    last = np.arange(length - 1, n, stride)
    windows = np.stack([frame.values[i - length + 1:i + 1] for i in last])
    return WindowSet(windows, frame.labels[last].copy(), last)


@dataclass
class SynthConfig:
    """Synthetic turbine-like telemetry: per-feature sinusoids mixed by a
    coupling matrix plus Gaussian noise, with an optional slow linear drift
    on selected features from ``onset_index`` onward (the gradual-wear
    scenario), spike contamination, and injected missing values."""
    n_samples: int = 20000
    n_features: int = 19
    sample_period_s: int = 60
    seed: int = 0
    noise_seed: int | None = None              # defaults to seed
    t_offset: int = 0                          # phase offset, in samples
    start: str = "2017-06-05T00:00:00"
    amplitudes: np.ndarray | None = None       # default: uniform [0.5, 2]
    periods: np.ndarray | None = None          # in samples; default [200, 2000]
    phases: np.ndarray | None = None
    coupling: np.ndarray | None = None         # default: I + 0.1 * random
    noise_std: float = 0.1
    onset_index: int | None = None
    drift_rate: float = 0.0                    # units per sample on drifted features
    drift_features: np.ndarray | None = None   # bool mask; default: all
    outlier_fraction: float = 0.0              # rows hit by spike contamination
    outlier_scale: float = 0.0
    missing_fraction: float = 0.0              # rows given one NaN entry

    def validate(self):
        if self.n_samples < 1 or self.n_features < 1:
            raise ValueError("n_samples and n_features must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.onset_index is not None and not 0 <= self.onset_index < self.n_samples:
            raise ValueError(f"onset_index {self.onset_index} out of range")
        for frac in (self.outlier_fraction, self.missing_fraction):
            if not 0.0 <= frac <= 1.0:
                raise ValueError("fractions must be in [0, 1]")


def generate(cfg: SynthConfig) -> SensorFrame:
    """Deterministic for a fixed config; labels partition exactly at onset."""
    cfg.validate()
    n, f = cfg.n_samples, cfg.n_features
    base_rng = stream(cfg.seed, "synth-base")

    amp = cfg.amplitudes if cfg.amplitudes is not None else base_rng.uniform(0.5, 2.0, f)
    per = cfg.periods if cfg.periods is not None else base_rng.uniform(200, 2000, f)
    pha = cfg.phases if cfg.phases is not None else base_rng.uniform(0, 2 * np.pi, f)
    if cfg.coupling is not None:
        coupling = cfg.coupling
    else:
        coupling = np.eye(f) + 0.1 * base_rng.standard_normal((f, f))

    t = (np.arange(n) + cfg.t_offset)[:, None]
    signal = amp * np.sin(2 * np.pi * t / per + pha)
    values = signal @ coupling.T
    noise_seed = cfg.seed if cfg.noise_seed is None else cfg.noise_seed
    noise_rng = stream(noise_seed, "synth-noise")
    values = values + cfg.noise_std * noise_rng.standard_normal((n, f))

    labels = np.full(n, LABEL_NORMAL, dtype=np.int8)
    if cfg.onset_index is not None:
        onset = cfg.onset_index
        labels[onset:] = LABEL_ABNORMAL
        mask = (cfg.drift_features if cfg.drift_features is not None
                else np.ones(f, dtype=bool))
        elapsed = np.arange(n - onset)[:, None]
        values[onset:, mask] += cfg.drift_rate * elapsed

    contam_rng = stream(cfg.seed, "synth-contam")
    if cfg.outlier_fraction > 0:
        k = int(round(cfg.outlier_fraction * n))
        rows = contam_rng.choice(n, size=k, replace=False)
        values[rows] += cfg.outlier_scale * contam_rng.standard_normal((k, f))
    if cfg.missing_fraction > 0:
        k = int(round(cfg.missing_fraction * n))
        rows = contam_rng.choice(n, size=k, replace=False)
        cols = contam_rng.integers(0, f, size=k)
        values[rows, cols] = np.nan

    start = np.datetime64(cfg.start, "s")
    ts = start + np.arange(n) * np.timedelta64(cfg.sample_period_s, "s")
    names = (list(DEFAULT_FEATURES) if f == len(DEFAULT_FEATURES)
             else [f"ch_{j}" for j in range(f)])
    return SensorFrame(ts, values, names, labels)
