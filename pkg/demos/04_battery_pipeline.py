"""End-to-end battery state-of-charge pipeline on simulated packs.

Simulate full discharge cycles at two ambient temperatures, write them in
the standard CSV layout, ingest back at 1 Hz, cut sliding windows, and
split train/test by drive cycle so no cycle leaks across the boundary.
Then adapt from a cold pack (-20 C, labeled) to a warm one (25 C, no
labels): the recurrent encoder reads 100-step (V, I, T) windows and the
evidential head predicts soc at the final step.
"""

import math
import tempfile
from pathlib import Path

import numpy as np

from uga.data import (gen_battery_curves, ingest_battery_csv, split_by_cycle,
                      windows_to_set, write_battery_csv)
from uga.metrics import evaluate
from uga.models import SeqEncoderSpec
from uga.train import TrainConfig, train_uga


def load_domain(temp_c, seed, workdir):
    curves = gen_battery_curves(temp_c, 6, seed=seed, capacity_ah=0.2)
    path = Path(workdir) / f"pack_{int(temp_c)}c.csv"
    write_battery_csv(curves, path)
    series = ingest_battery_csv(path)          # resampled to 1 Hz
    n_rec = sum(len(s) for s in series)
    print(f"{temp_c:+6.1f} C: {len(series)} cycles, {n_rec} records after ingest")
    return split_by_cycle(series, "Panasonic")


def normalize(ds):
    ds.inputs[..., 0] = (ds.inputs[..., 0] - 3.6) / 0.6   # volts
    ds.inputs[..., 1] = ds.inputs[..., 1] / 3.0           # amps
    ds.inputs[..., 2] = ds.inputs[..., 2] / 30.0          # deg C
    return ds


with tempfile.TemporaryDirectory() as tmp:
    src_train_series, _ = load_domain(-20.0, seed=500, workdir=tmp)
    tgt_train_series, tgt_test_series = load_domain(25.0, seed=700, workdir=tmp)

src = normalize(windows_to_set(src_train_series, length=100, stride=5))
tgt = normalize(windows_to_set(tgt_train_series, length=100, stride=5))
tgt_test = normalize(windows_to_set(tgt_test_series, length=100, stride=5))
print(f"windows: {len(src)} source train, {len(tgt)} target train, "
      f"{len(tgt_test)} target test\n")

spec = SeqEncoderSpec(num_layers=1, hidden_dim=16, input_dim=3, window_len=100)
for method in ("none", "uga_feature"):
    iters = 30 * math.ceil(len(src) / 32)
    cfg = TrainConfig(alignment=method, iterations=iters, batch_size=32,
                      lr=3e-3, seed=0, lambda_evi=0.1, aug_weight=32.0,
                      clip_norm=0.5)
    bundle, _ = train_uga(src, tgt.unlabeled(), cfg, spec)
    rep = evaluate(bundle, tgt_test)
    print(f"{method:>12}: warm-pack R2 {rep.r2:+.3f}  mae {rep.mae:.4f}  "
          f"coverage@90 {rep.coverage90:.2f}")

print("\nthe cold-only model misreads the warm pack's flatter voltage sag;")
print("aligning the augmented features recovers it without a single warm label")
