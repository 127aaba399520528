"""Feature extractors and the regression head, bundled with their parameters.

Two extractor families: an MLP over vector inputs and a stacked LSTM over
fixed-length windows.  Either feeds a single affine head producing the four
raw evidential outputs (or one output for the plain squared-error
baseline).  Bundles carry named parameter tensors and serialize to a
versioned checkpoint file.
"""

from __future__ import annotations

import dataclasses
import json
import os

import numpy as np

from . import autodiff as ad
from .evidential import NigOutput, nig_from_raw

__all__ = [
    "MlpSpec",
    "SeqEncoderSpec",
    "ModelBundle",
    "build_bundle",
    "mlp_forward",
    "seq_forward",
    "model_forward",
    "save_checkpoint",
    "load_checkpoint",
]

_ACTIVATIONS = {"tanh": ad.tanh, "sigmoid": ad.sigmoid}

CHECKPOINT_MAGIC = "UGA-CHECKPOINT"
CHECKPOINT_VERSION = 1


@dataclasses.dataclass(frozen=True)
class MlpSpec:
    """Fully connected extractor: input -> hidden... -> feature widths."""

    layer_widths: tuple[int, ...]
    activation: str = "tanh"
    dropout_p: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) < 2:
            raise ValueError("MlpSpec needs an input and at least one layer width")
        if any(w <= 0 for w in self.layer_widths):
            raise ValueError("layer widths must be positive")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")

    @property
    def feature_dim(self) -> int:
        return self.layer_widths[-1]


@dataclasses.dataclass(frozen=True)
class SeqEncoderSpec:
    """Stacked LSTM over (window_len, input_dim) windows."""

    num_layers: int = 2
    hidden_dim: int = 64
    input_dim: int = 3
    window_len: int = 100

    def __post_init__(self):
        for name in ("num_layers", "hidden_dim", "input_dim", "window_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def feature_dim(self) -> int:
        return self.hidden_dim


@dataclasses.dataclass
class ModelBundle:
    """Extractor + head parameters with a fixed naming order.

    head_kind "evidential" maps the 4 raw head outputs through the NIG
    parameter mapping; "point" is the 1-output squared-error baseline.
    """

    spec: MlpSpec | SeqEncoderSpec
    head_kind: str
    params: dict[str, ad.Tensor]

    def __post_init__(self):
        if self.head_kind not in ("evidential", "point"):
            raise ValueError(f"unknown head_kind {self.head_kind!r}")
        head_w = self.params["head.W"]
        if head_w.shape[1] != self.head_dim:
            raise ValueError(
                f"head output dim {head_w.shape[1]} != {self.head_dim} "
                f"for head_kind {self.head_kind!r}")

    @property
    def head_dim(self) -> int:
        return 4 if self.head_kind == "evidential" else 1

    @property
    def extractor_kind(self) -> str:
        return "mlp" if isinstance(self.spec, MlpSpec) else "seq"

    def parameters(self) -> list[ad.Tensor]:
        return list(self.params.values())

    def named_parameters(self) -> list[tuple[str, ad.Tensor]]:
        return list(self.params.items())

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None


def _uniform_init(rng, fan_in: int, shape) -> np.ndarray:
    a = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-a, a, size=shape)


def build_bundle(spec, head_kind: str = "evidential", seed: int = 0) -> ModelBundle:
    """Initialize all parameters from the seed; fixed draw order.

    Weights are uniform(-a, a) with a = 1/sqrt(fan_in); biases are zero
    except the LSTM forget gate, which starts at 1.0.
    """
    rng = np.random.default_rng(seed)
    params: dict[str, ad.Tensor] = {}
    if isinstance(spec, MlpSpec):
        widths = spec.layer_widths
        for i, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
            params[f"mlp.{i}.W"] = ad.param(_uniform_init(rng, fan_in, (fan_in, fan_out)))
            params[f"mlp.{i}.b"] = ad.param(np.zeros((1, fan_out)))
    elif isinstance(spec, SeqEncoderSpec):
        h = spec.hidden_dim
        for layer in range(spec.num_layers):
            in_dim = spec.input_dim if layer == 0 else h
            params[f"lstm.{layer}.Wx"] = ad.param(_uniform_init(rng, in_dim, (in_dim, 4 * h)))
            params[f"lstm.{layer}.Wh"] = ad.param(_uniform_init(rng, h, (h, 4 * h)))
            bias = np.zeros((1, 4 * h))
            bias[0, h:2 * h] = 1.0  # forget gate
            params[f"lstm.{layer}.b"] = ad.param(bias)
    else:
        raise TypeError(f"unsupported spec type {type(spec).__name__}")
    head_dim = 4 if head_kind == "evidential" else 1
    params["head.W"] = ad.param(_uniform_init(rng, spec.feature_dim,
                                              (spec.feature_dim, head_dim)))
    params["head.b"] = ad.param(np.zeros((1, head_dim)))
    return ModelBundle(spec=spec, head_kind=head_kind, params=params)


def _as_batch(x, dim: int) -> ad.Tensor:
    if isinstance(x, ad.Tensor):
        t = x
    else:
        a = np.asarray(x, dtype=np.float64)
        if a.ndim == 1:
            a = a.reshape(1, -1)
        t = ad.constant(a)
    if len(t.shape) != 2 or t.shape[1] != dim:
        raise ad.ShapeError(f"expected (B, {dim}) input, got {t.shape}")
    return t


def _affine(x: ad.Tensor, W: ad.Tensor, b: ad.Tensor) -> ad.Tensor:
    rows = x.shape[0]
    return ad.matmul(x, W) + ad.matmul(ad.ones(rows, 1), b)


def mlp_forward(x, bundle: ModelBundle, training: bool = False, rng=None) -> ad.Tensor:
    """Affine + activation per layer; inverted dropout after each layer
    when training."""
    spec = bundle.spec
    if not isinstance(spec, MlpSpec):
        raise TypeError("mlp_forward needs an MlpSpec bundle")
    act = _ACTIVATIONS[spec.activation]
    h = _as_batch(x, spec.layer_widths[0])
    use_dropout = training and spec.dropout_p > 0.0
    if use_dropout and rng is None:
        raise ValueError("training with dropout needs an rng")
    for i in range(len(spec.layer_widths) - 1):
        h = act(_affine(h, bundle.params[f"mlp.{i}.W"], bundle.params[f"mlp.{i}.b"]))
        if use_dropout:
            keep = (rng.random(h.shape) >= spec.dropout_p) / (1.0 - spec.dropout_p)
            h = h * ad.constant(keep)
    return h


def _lstm_layer(steps: list[ad.Tensor], Wx, Wh, b, hidden: int) -> list[ad.Tensor]:
    batch = steps[0].shape[0]
    h = ad.zeros(batch, hidden)
    c = ad.zeros(batch, hidden)
    out = []
    for x_t in steps:
        pre = _affine(x_t, Wx, b) + ad.matmul(h, Wh)
        i_g = ad.sigmoid(ad.slice_last(pre, 0, hidden))
        f_g = ad.sigmoid(ad.slice_last(pre, hidden, 2 * hidden))
        g_g = ad.tanh(ad.slice_last(pre, 2 * hidden, 3 * hidden))
        o_g = ad.sigmoid(ad.slice_last(pre, 3 * hidden, 4 * hidden))
        c = f_g * c + i_g * g_g
        h = o_g * ad.tanh(c)
        out.append(h)
    return out


def seq_forward(window, bundle: ModelBundle) -> ad.Tensor:
    """Run the stacked LSTM; returns the top layer's final hidden state."""
    spec = bundle.spec
    if not isinstance(spec, SeqEncoderSpec):
        raise TypeError("seq_forward needs a SeqEncoderSpec bundle")
    w = np.asarray(window, dtype=np.float64) if not isinstance(window, ad.Tensor) else window.data
    if w.ndim == 2:
        w = w[np.newaxis]
    if w.ndim != 3 or w.shape[1] != spec.window_len or w.shape[2] != spec.input_dim:
        raise ad.ShapeError(
            f"expected (B, {spec.window_len}, {spec.input_dim}) window, got {w.shape}")
    steps = [ad.constant(w[:, t, :]) for t in range(spec.window_len)]
    for layer in range(spec.num_layers):
        steps = _lstm_layer(steps,
                            bundle.params[f"lstm.{layer}.Wx"],
                            bundle.params[f"lstm.{layer}.Wh"],
                            bundle.params[f"lstm.{layer}.b"],
                            spec.hidden_dim)
    return steps[-1]


def model_forward(x, bundle: ModelBundle, training: bool = False, rng=None):
    """(features z, head output); the head output is a NigOutput for
    evidential bundles and a (B, 1) prediction tensor for point bundles."""
    if bundle.extractor_kind == "mlp":
        z = mlp_forward(x, bundle, training=training, rng=rng)
    else:
        z = seq_forward(x, bundle)
    raw = _affine(z, bundle.params["head.W"], bundle.params["head.b"])
    if bundle.head_kind == "evidential":
        return z, nig_from_raw(raw)
    return z, raw


# -- checkpoint I/O ---------------------------------------------------------

def _spec_to_dict(spec) -> dict:
    d = dataclasses.asdict(spec)
    if isinstance(spec, MlpSpec):
        d["layer_widths"] = list(d["layer_widths"])
    return d


def _spec_from_dict(kind: str, d: dict):
    if kind == "mlp":
        return MlpSpec(layer_widths=tuple(d["layer_widths"]),
                       activation=d["activation"], dropout_p=d["dropout_p"])
    if kind == "seq":
        return SeqEncoderSpec(**d)
    raise ValueError(f"unknown extractor kind {kind!r}")


def save_checkpoint(bundle: ModelBundle, path) -> None:
    """Plain-text header + parameter values as little-endian float64."""
    lines = [
        f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}",
        f"extractor {bundle.extractor_kind}",
        f"head {bundle.head_kind}",
        "spec " + json.dumps(_spec_to_dict(bundle.spec), sort_keys=True),
        f"params {len(bundle.params)}",
    ]
    for name, t in bundle.named_parameters():
        shape = ",".join(str(s) for s in t.shape)
        lines.append(f"{name} {shape}")
    lines.append("END")
    header = ("\n".join(lines) + "\n").encode("utf-8")
    blob = b"".join(np.ascontiguousarray(t.data, dtype="<f8").tobytes()
                    for t in bundle.parameters())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(header)
        f.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path) -> ModelBundle:
    with open(path, "rb") as f:
        raw = f.read()
    end = raw.find(b"END\n")
    if end < 0:
        raise ValueError("corrupt checkpoint: missing END marker")
    header = raw[:end].decode("utf-8").splitlines()
    blob = raw[end + 4:]
    if header[0] != f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}":
        raise ValueError(f"unsupported checkpoint header {header[0]!r}")
    fields = dict(line.split(" ", 1) for line in header[1:5])
    spec = _spec_from_dict(fields["extractor"], json.loads(fields["spec"]))
    count = int(fields["params"])
    names = []
    shapes = []
    for line in header[5:5 + count]:
        name, shape_csv = line.split(" ")
        names.append(name)
        shapes.append(tuple(int(s) for s in shape_csv.split(",")))
    params: dict[str, ad.Tensor] = {}
    offset = 0
    for name, shape in zip(names, shapes):
        n = int(np.prod(shape))
        vals = np.frombuffer(blob, dtype="<f8", count=n, offset=offset)
        offset += n * 8
        params[name] = ad.param(vals.reshape(shape).astype(np.float64))
    if offset != len(blob):
        raise ValueError("corrupt checkpoint: trailing or missing data")
    return ModelBundle(spec=spec, head_kind=fields["head"], params=params)
