"""Dataset generation, battery CSV ingestion, windowing, and splits.

Synthetic side: a cubic regression family whose input distribution can be
translated and rescaled between domains while the label range stays put,
and a battery discharge simulator whose capacity and voltage sag respond
monotonically to ambient temperature.  Real side: ingestion of the
canonical battery CSV schema with 1 Hz downsampling and the drive-cycle
train/test split.
"""

from __future__ import annotations

import csv
import dataclasses
import math

import numpy as np

__all__ = [
    "LabeledSet",
    "UnlabeledSet",
    "BatteryRecord",
    "SyntheticShiftSpec",
    "LabelBounds",
    "CYCLE_TAGS",
    "TEST_CYCLES",
    "gen_cubic_shift",
    "make_cubic_shift_pair",
    "gen_battery_curves",
    "write_battery_csv",
    "ingest_battery_csv",
    "write_vector_csv",
    "read_vector_csv",
    "window",
    "windows_to_set",
    "split_by_cycle",
    "normalize_labels",
]

CSV_COLUMNS = ("time_s", "voltage_v", "current_a", "temp_c", "soc", "cycle")

CYCLE_TAGS = ("US06", "HWFET", "UDDS", "LA92", "NN", "Mixed")

# Declared test memberships per dataset; everything else trains.
TEST_CYCLES = {
    "Panasonic": frozenset({"US06", "LA92", "NN"}),
    "LG": frozenset({"US06", "LA92", "HWFET"}),
}

# Rough aggressiveness of each drive cycle, scaling the simulated current.
_CYCLE_CURRENT_SCALE = {
    "US06": 1.5, "LA92": 1.3, "HWFET": 1.1,
    "UDDS": 0.9, "NN": 1.0, "Mixed": 1.0,
}


@dataclasses.dataclass
class LabeledSet:
    """Inputs paired with scalar labels; one row (or window) per sample."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64).ravel()
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"{self.inputs.shape[0]} inputs vs {self.labels.shape[0]} labels")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def unlabeled(self) -> "UnlabeledSet":
        return UnlabeledSet(self.inputs)


@dataclasses.dataclass
class UnlabeledSet:
    inputs: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)

    def __len__(self) -> int:
        return self.inputs.shape[0]


@dataclasses.dataclass(frozen=True)
class BatteryRecord:
    t: float
    v: float
    i: float
    temp: float
    soc: float
    cycle: str


@dataclasses.dataclass(frozen=True)
class SyntheticShiftSpec:
    """One domain of the cubic family: input x = u*scale + shift for a
    latent u ~ Uniform(-4, 4); the label depends on u only, so shifted
    domains keep a common label range."""

    shift: float = 0.0
    scale: float = 1.0
    noise_sd: float = 0.0
    n: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        if self.n < 1:
            raise ValueError("n must be positive")


@dataclasses.dataclass(frozen=True)
class LabelBounds:
    """Affine label map fitted on source raw labels."""

    lo: float
    hi: float

    def apply(self, y):
        return (np.asarray(y, dtype=np.float64) - self.lo) / (self.hi - self.lo)

    def invert(self, u):
        return self.lo + np.asarray(u, dtype=np.float64) * (self.hi - self.lo)


def gen_cubic_shift(spec: SyntheticShiftSpec) -> LabeledSet:
    """One domain with RAW labels: u ~ U(-4,4), x = u*scale + shift,
    y = u^3/64 + noise.  Normalization is applied separately with the
    source domain's bounds (see make_cubic_shift_pair)."""
    rng = np.random.default_rng(spec.seed)
    u = rng.uniform(-4.0, 4.0, size=spec.n)
    x = u * spec.scale + spec.shift
    y = u ** 3 / 64.0
    if spec.noise_sd > 0:
        y = y + rng.normal(0.0, spec.noise_sd, size=spec.n)
    return LabeledSet(x.reshape(-1, 1), y)


def make_cubic_shift_pair(
    source_spec: SyntheticShiftSpec, target_spec: SyntheticShiftSpec
) -> tuple[LabeledSet, LabeledSet, LabelBounds]:
    """Generate both domains and normalize labels with the source bounds.

    Normalized labels are clipped into [0, 1]: label noise can push a few
    raw values marginally outside the fitted source range.
    """
    src = gen_cubic_shift(source_spec)
    tgt = gen_cubic_shift(target_spec)
    src_n, bounds = normalize_labels(src)
    tgt_labels = np.clip(bounds.apply(tgt.labels), 0.0, 1.0)
    return src_n, LabeledSet(tgt.inputs, tgt_labels), bounds


def normalize_labels(source: LabeledSet, hidden_raw_labels=None):
    """Fit min-max bounds on the source raw labels and rescale to [0, 1].

    `hidden_raw_labels`, when given, are target-domain labels (unseen at
    training time) mapped through the same bounds for evaluation use.
    Returns (normalized_source, bounds) or (normalized_source,
    normalized_hidden, bounds).
    """
    if len(source) == 0:
        raise ValueError("empty source set")
    lo = float(np.min(source.labels))
    hi = float(np.max(source.labels))
    if hi == lo:
        raise ValueError("degenerate source labels: min equals max")
    bounds = LabelBounds(lo, hi)
    normalized = LabeledSet(source.inputs,
                            np.clip(bounds.apply(source.labels), 0.0, 1.0))
    if hidden_raw_labels is None:
        return normalized, bounds
    return normalized, bounds.apply(hidden_raw_labels), bounds


# -- battery simulation -----------------------------------------------------

def _capacity_as(temp_c: float, capacity_ah: float) -> float:
    """Effective capacity in ampere-seconds; shrinks in the cold."""
    factor = max(0.3, 1.0 + 0.004 * (temp_c - 25.0))
    return capacity_ah * 3600.0 * factor


def gen_battery_curves(temp_c: float, n_cycles: int, seed: int,
                       capacity_ah: float = 0.5, hz: float = 10.0,
                       ) -> list[list[BatteryRecord]]:
    """Simulate full discharges at one ambient temperature.

    Each cycle draws a piecewise-constant random current profile whose
    magnitude follows the tag's aggressiveness; soc falls monotonically
    from exactly 1 to exactly 0.  Lower temperature means less effective
    capacity and a larger resistive voltage sag.  V, I, T carry
    measurement noise; soc (the label) does not.
    """
    if n_cycles < 1:
        raise ValueError("n_cycles must be >= 1")
    rng = np.random.default_rng(seed)
    q_as = _capacity_as(temp_c, capacity_ah)
    resistance = 0.05 * (1.0 + 0.01 * (25.0 - temp_c))
    dt = 1.0 / hz
    series_list = []
    for c in range(n_cycles):
        tag = CYCLE_TAGS[c % len(CYCLE_TAGS)]
        scale = _CYCLE_CURRENT_SCALE[tag]
        records = []
        t = 0.0
        drawn = 0.0
        current = 0.0
        segment_left = 0
        k = 0
        while True:
            soc = max(0.0, 1.0 - drawn / q_as)
            ocv = 3.0 + 1.2 * soc - 0.25 * math.exp(-8.0 * soc)
            v = ocv - current * resistance + rng.normal(0.0, 2e-3)
            i_meas = current + rng.normal(0.0, 5e-3)
            t_meas = temp_c + rng.normal(0.0, 0.1)
            records.append(BatteryRecord(t=t, v=v, i=i_meas, temp=t_meas,
                                         soc=soc, cycle=tag))
            if soc == 0.0:
                break
            if segment_left == 0:
                current = float(np.clip(rng.uniform(0.5, 4.0) * scale, 0.3, 6.0))
                segment_left = int(rng.uniform(30.0, 120.0) * hz)
            drawn += current * dt
            segment_left -= 1
            k += 1
            t = k * dt
        series_list.append(records)
    return series_list


def write_battery_csv(series_list, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for series in series_list:
            for r in series:
                writer.writerow([repr(r.t), repr(r.v), repr(r.i),
                                 repr(r.temp), repr(r.soc), r.cycle])


def write_vector_csv(path, inputs, labels=None) -> None:
    """Write a flat feature table: columns x0..x{d-1}, plus y when labels
    are given.  Floats use repr() so files round-trip exactly."""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2:
        raise ValueError("inputs must be 2-D (samples, features)")
    if labels is not None:
        labels = np.asarray(labels, dtype=float).ravel()
        if len(labels) != len(inputs):
            raise ValueError("labels length does not match inputs")
    header = [f"x{j}" for j in range(inputs.shape[1])]
    if labels is not None:
        header.append("y")
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for k, row in enumerate(inputs):
            out = [repr(float(v)) for v in row]
            if labels is not None:
                out.append(repr(float(labels[k])))
            writer.writerow(out)


def read_vector_csv(path):
    """Inverse of write_vector_csv.  Returns (inputs, labels-or-None)."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("vector CSV is empty") from None
        has_label = bool(header) and header[-1] == "y"
        feat = header[:-1] if has_label else header
        if feat != [f"x{j}" for j in range(len(feat))]:
            raise ValueError(f"unexpected vector CSV header {header!r}")
        if not feat:
            raise ValueError("vector CSV has no feature columns")
        inputs, labels = [], []
        for k, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"row {k}: expected {len(header)} fields")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise ValueError(f"row {k}: non-numeric field") from None
            if has_label:
                inputs.append(vals[:-1])
                labels.append(vals[-1])
            else:
                inputs.append(vals)
    if not inputs:
        raise ValueError("vector CSV has no data rows")
    x = np.asarray(inputs, dtype=float)
    return (x, np.asarray(labels, dtype=float)) if has_label else (x, None)


def ingest_battery_csv(path) -> list[list[BatteryRecord]]:
    """Read the canonical schema, group rows into contiguous per-cycle
    series, and downsample each series to 1 Hz (first sample per
    1-second bucket)."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        for col in CSV_COLUMNS:
            if col not in header:
                raise ValueError(f"battery CSV is missing column {col!r}")
        rows = list(reader)
    series_list: list[list[BatteryRecord]] = []
    current_tag = None
    block: list[BatteryRecord] = []
    for idx, row in enumerate(rows):
        try:
            rec = BatteryRecord(t=float(row["time_s"]), v=float(row["voltage_v"]),
                                i=float(row["current_a"]), temp=float(row["temp_c"]),
                                soc=float(row["soc"]), cycle=row["cycle"])
        except (TypeError, ValueError) as e:
            raise ValueError(f"bad battery CSV row {idx + 2}: {e}") from None
        if not 0.0 <= rec.soc <= 1.0:
            raise ValueError(f"soc {rec.soc} outside [0, 1] at row {idx + 2}")
        if rec.cycle != current_tag:
            if block:
                series_list.append(block)
            current_tag = rec.cycle
            block = []
        if block and rec.t <= block[-1].t:
            raise ValueError(
                f"non-monotone time within cycle {rec.cycle!r} at row {idx + 2}")
        block.append(rec)
    if block:
        series_list.append(block)
    return [_downsample_1hz(s) for s in series_list]


def _downsample_1hz(series: list[BatteryRecord]) -> list[BatteryRecord]:
    out = []
    last_bucket = None
    for r in series:
        bucket = math.floor(r.t)
        if bucket != last_bucket:
            out.append(r)
            last_bucket = bucket
    return out


def window(series: list[BatteryRecord], length: int = 100, stride: int = 1,
           ) -> list[tuple[np.ndarray, float]]:
    """Sliding (V, I, T) windows; the label is the soc at the final step."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n = len(series)
    if n < length:
        raise ValueError(f"series of {n} records is shorter than window {length}")
    feats = np.array([[r.v, r.i, r.temp] for r in series])
    socs = np.array([r.soc for r in series])
    out = []
    for start in range(0, n - length + 1, stride):
        out.append((feats[start:start + length], float(socs[start + length - 1])))
    return out


def windows_to_set(series_list, length: int = 100, stride: int = 1) -> LabeledSet:
    """Window every series and stack the results into one LabeledSet."""
    xs, ys = [], []
    for series in series_list:
        if len(series) < length:
            continue
        for w, label in window(series, length, stride):
            xs.append(w)
            ys.append(label)
    if not xs:
        raise ValueError("no series long enough to window")
    return LabeledSet(np.stack(xs), np.array(ys))


def split_by_cycle(series_list, dataset_tag: str):
    """Partition series into (train, test) by the declared test cycles."""
    if dataset_tag not in TEST_CYCLES:
        raise ValueError(f"unknown dataset tag {dataset_tag!r}; "
                         f"expected one of {sorted(TEST_CYCLES)}")
    test_tags = TEST_CYCLES[dataset_tag]
    train, test = [], []
    for series in series_list:
        tag = series[0].cycle
        if tag not in CYCLE_TAGS:
            raise ValueError(f"unknown cycle tag {tag!r}")
        (test if tag in test_tags else train).append(series)
    return train, test
