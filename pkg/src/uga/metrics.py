"""Evaluation metrics, calibration diagnostics, and report artifacts.

`evaluate` runs a trained bundle over a labeled dataset (in chunks, with
gradients disabled) and produces a MetricsReport: MAE/MSE/R-squared,
90% interval coverage, mean uncertainties, and, when a reference domain is
supplied, the squared MMD between the two domains' evidential posterior
vectors.  CSV emitters use repr() formatting so every float round-trips
and reports stay diffable.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json

import numpy as np

from . import autodiff as ad
from .alignment import mmd2_biased
from .data import LabeledSet
from .evidential import NigOutput, predictive_interval, uncertainties
from .models import ModelBundle, model_forward

__all__ = [
    "mae",
    "mse",
    "r2",
    "coverage",
    "MetricsReport",
    "MetricsRow",
    "RunManifest",
    "evaluate",
    "uncertainty_histograms",
    "write_metrics_csv",
    "read_metrics_csv",
    "write_histogram_csv",
    "write_summary_csv",
    "build_report_table",
    "write_report_csv",
    "fingerprint_array",
    "fingerprint_file",
]

METRICS_COLUMNS = ("task", "method", "seed", "mae", "mse", "r2",
                   "coverage90", "posterior_gap")
HISTOGRAM_COLUMNS = ("domain", "sample_idx", "aleatoric", "epistemic", "total")
SUMMARY_STATS = ("q05", "q25", "q50", "q75", "q95", "mean")

EVAL_CHUNK = 512


def _check_pair(preds, labels):
    preds = np.asarray(preds, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if preds.size == 0:
        raise ValueError("empty inputs")
    if preds.size != labels.size:
        raise ValueError(f"{preds.size} predictions vs {labels.size} labels")
    return preds, labels


def mae(preds, labels) -> float:
    preds, labels = _check_pair(preds, labels)
    return float(np.mean(np.abs(preds - labels)))


def mse(preds, labels) -> float:
    preds, labels = _check_pair(preds, labels)
    return float(np.mean((preds - labels) ** 2))


def r2(preds, labels) -> float:
    """1 - SS_res/SS_tot; negative when worse than predicting the mean."""
    preds, labels = _check_pair(preds, labels)
    if preds.size < 2:
        raise ValueError("r2 needs at least 2 samples")
    ss_tot = float(np.sum((labels - labels.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("r2 undefined for constant labels")
    ss_res = float(np.sum((labels - preds) ** 2))
    return 1.0 - ss_res / ss_tot


def coverage(intervals, labels) -> float:
    """Fraction of labels inside their [lo, hi] interval."""
    lo, hi = intervals
    lo = np.asarray(lo, dtype=np.float64).ravel()
    hi = np.asarray(hi, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if not (lo.size == hi.size == labels.size):
        raise ValueError("intervals and labels differ in length")
    return float(np.mean((labels >= lo) & (labels <= hi)))


@dataclasses.dataclass(frozen=True)
class MetricsReport:
    """Pure function of (checkpoint, dataset); uncertainty fields are None
    for point-head models, posterior_gap is None without a reference set."""

    mae: float
    mse: float
    r2: float
    coverage90: float | None
    mean_aleatoric: float | None
    mean_epistemic: float | None
    mean_total: float | None
    posterior_gap: float | None

    def __post_init__(self):
        if self.mae < 0 or self.mse < 0:
            raise ValueError("mae and mse must be nonnegative")
        if self.r2 > 1.0:
            raise ValueError("r2 cannot exceed 1")
        if self.coverage90 is not None and not 0.0 <= self.coverage90 <= 1.0:
            raise ValueError("coverage must be a fraction")


@dataclasses.dataclass(frozen=True)
class MetricsRow:
    task: str
    method: str
    seed: int
    report: MetricsReport


def _forward_chunks(bundle: ModelBundle, inputs: np.ndarray):
    """Concatenated (gamma, nu, alpha, beta) or point predictions, without
    building a persistent graph."""
    parts = []
    with ad.no_grad():
        for start in range(0, inputs.shape[0], EVAL_CHUNK):
            _z, out = model_forward(inputs[start:start + EVAL_CHUNK], bundle)
            if isinstance(out, NigOutput):
                parts.append(np.hstack([out.gamma.data, out.nu.data,
                                        out.alpha.data, out.beta.data]))
            else:
                parts.append(out.data)
    return np.vstack(parts)


def _posterior_params(bundle, inputs) -> NigOutput:
    cols = _forward_chunks(bundle, inputs)
    return NigOutput.from_values(cols[:, 0], cols[:, 1], cols[:, 2], cols[:, 3])


def evaluate(bundle: ModelBundle, dataset: LabeledSet, level: float = 0.9,
             reference_inputs=None) -> MetricsReport:
    """Score a bundle on one labeled domain.

    reference_inputs, when given, are inputs from the other domain; the
    posterior_gap is then the squared MMD between the two domains'
    [nu, alpha, beta] vectors.
    """
    if len(dataset) == 0:
        raise ValueError("empty evaluation set")
    out = _forward_chunks(bundle, dataset.inputs)
    if bundle.head_kind != "evidential":
        preds = out[:, 0]
        return MetricsReport(mae=mae(preds, dataset.labels),
                             mse=mse(preds, dataset.labels),
                             r2=r2(preds, dataset.labels),
                             coverage90=None, mean_aleatoric=None,
                             mean_epistemic=None, mean_total=None,
                             posterior_gap=None)
    p = NigOutput.from_values(out[:, 0], out[:, 1], out[:, 2], out[:, 3])
    preds = out[:, 0]
    al, ep = uncertainties(p)
    gap = None
    if reference_inputs is not None:
        ref = _forward_chunks(bundle, np.asarray(reference_inputs))
        with ad.no_grad():
            gap = mmd2_biased(out[:, 1:4], ref[:, 1:4]).item()
    return MetricsReport(
        mae=mae(preds, dataset.labels),
        mse=mse(preds, dataset.labels),
        r2=r2(preds, dataset.labels),
        coverage90=coverage(predictive_interval(p, level), dataset.labels),
        mean_aleatoric=float(al.mean()),
        mean_epistemic=float(ep.mean()),
        mean_total=float((al + ep).mean()),
        posterior_gap=gap,
    )


def uncertainty_histograms(bundle: ModelBundle, domain_sets: dict):
    """Per-sample uncertainty rows plus per-domain summary quantiles.

    domain_sets maps a domain name to an input array.  Returns
    (rows, summary): rows follow HISTOGRAM_COLUMNS; summary rows are
    (domain, statistic, aleatoric, epistemic, total).
    """
    if bundle.head_kind != "evidential":
        raise ValueError("uncertainty diagnostics need an evidential head")
    if not domain_sets:
        raise ValueError("no domains given")
    rows = []
    summary = []
    for domain, inputs in domain_sets.items():
        inputs = np.asarray(inputs)
        if inputs.shape[0] == 0:
            raise ValueError(f"empty domain {domain!r}")
        p = _posterior_params(bundle, inputs)
        al, ep = uncertainties(p)
        total = al + ep
        for idx in range(al.size):
            rows.append((domain, idx, al[idx], ep[idx], total[idx]))
        qs = (0.05, 0.25, 0.50, 0.75, 0.95)
        for stat, q in zip(SUMMARY_STATS, qs):
            summary.append((domain, stat, float(np.quantile(al, q)),
                            float(np.quantile(ep, q)),
                            float(np.quantile(total, q))))
        summary.append((domain, "mean", float(al.mean()), float(ep.mean()),
                        float(total.mean())))
    return rows, summary


# -- artifacts --------------------------------------------------------------

def _fmt(x) -> str:
    """Full round-trip decimal formatting; None becomes the empty marker."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_metrics_csv(path, rows: list[MetricsRow]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRICS_COLUMNS)
        for row in rows:
            r = row.report
            writer.writerow([row.task, row.method, str(row.seed),
                             _fmt(r.mae), _fmt(r.mse), _fmt(r.r2),
                             _fmt(r.coverage90), _fmt(r.posterior_gap)])


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        header = tuple(reader.fieldnames or ())
        if header != METRICS_COLUMNS:
            raise ValueError(f"unexpected metrics header {header}")
        return list(reader)


def write_histogram_csv(path, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(HISTOGRAM_COLUMNS)
        for domain, idx, al, ep, total in rows:
            writer.writerow([domain, str(idx), _fmt(al), _fmt(ep), _fmt(total)])


def write_summary_csv(path, summary) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("domain", "statistic", "aleatoric", "epistemic", "total"))
        for domain, stat, al, ep, total in summary:
            writer.writerow([domain, stat, _fmt(al), _fmt(ep), _fmt(total)])


def build_report_table(metric_dicts: list[dict], metric: str = "mae"):
    """Pivot metrics rows into tasks x methods, aggregating seeds by median.

    Missing (task, method) cells stay as explicit empty markers.
    """
    if metric not in METRICS_COLUMNS[3:]:
        raise ValueError(f"unknown metric {metric!r}")
    tasks, methods = [], []
    cells: dict[tuple[str, str], list[float]] = {}
    for row in metric_dicts:
        task, method = row["task"], row["method"]
        if task not in tasks:
            tasks.append(task)
        if method not in methods:
            methods.append(method)
        if row[metric] != "":
            cells.setdefault((task, method), []).append(float(row[metric]))
    table = []
    for task in tasks:
        out_row = [task]
        for method in methods:
            vals = cells.get((task, method))
            out_row.append(_fmt(float(np.median(vals))) if vals else "")
        table.append(out_row)
    return ["task"] + methods, table


def write_report_csv(path, header, table) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(table)


def fingerprint_array(arr) -> str:
    a = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
    h = hashlib.sha256()
    h.update(str(a.shape).encode())
    h.update(a.tobytes())
    return h.hexdigest()


def fingerprint_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclasses.dataclass
class RunManifest:
    """Provenance sidecar: one manifest per emitted metrics file."""

    config: dict
    seed: int
    dataset_fingerprints: dict
    artifact_versions: dict
    wall_clock_s: float
    metrics_file: str | None = None

    @classmethod
    def create(cls, config: dict, seed: int, fingerprints: dict,
               wall_clock_s: float, metrics_file=None) -> "RunManifest":
        from . import __version__
        versions = {"package": __version__, "checkpoint_format": 1}
        return cls(config=config, seed=seed,
                   dataset_fingerprints=fingerprints,
                   artifact_versions=versions,
                   wall_clock_s=wall_clock_s, metrics_file=metrics_file)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path) as f:
            return cls(**json.load(f))
