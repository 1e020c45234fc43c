"""End-to-end pipeline at desk scale: synthesize, train, detect, evaluate.

Equivalent CLI session:

    turbomon synth    --config cfg.json --out data
    turbomon train    --config cfg.json --out bundle --train-csv data/train.csv
    turbomon detect   --config cfg.json --out detect --bundle bundle \
                      --test-csv data/test.csv
    turbomon evaluate --config cfg.json --out . \
                      --verdicts detect/verdicts.csv --test-csv data/test.csv
"""

import json
import tempfile
from pathlib import Path

from turbomon import pipeline as pl

cfg = pl.PipelineConfig(
    contamination=0.1, lof_k=10, seq_len=20, stride=5, train_stride=5,
    batch_size=32, max_epochs=8, patience=8, lr=3e-3, seed=11,
    scenario=pl.ScenarioConfig(train_samples=800, test_samples=500,
                               n_features=5, drift_rate=0.02,
                               n_drift_features=2))

root = Path(tempfile.mkdtemp(prefix="turbomon-demo-"))
print(f"working in {root}")

print(pl.cmd_synth(cfg, root / "data"))
print(pl.cmd_train(cfg, root / "data" / "train.csv", root / "bundle"))
print(pl.cmd_detect(cfg, root / "bundle", root / "data" / "test.csv",
                    root / "detect"))
report = pl.cmd_evaluate(cfg, root / "detect" / "verdicts.csv",
                         root / "data" / "test.csv", root / "metrics.json")
print(json.dumps({"ac": report.ac, "pr": report.pr, "rc": report.rc,
                  "f1": report.f1, "far": report.far}, indent=2))
