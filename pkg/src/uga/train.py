"""Joint source/target training with uncertainty-guided alignment.

Every iteration draws one labeled source and one unlabeled target
minibatch (with replacement), forwards both through the shared extractor,
and minimizes  supervised + lambda(p) * alignment  where p is training
progress and lambda follows the saturating ramp 2/(1+exp(-10p)) - 1.  The
supervised term is the evidential loss, except for the plain-MMD baseline
which trains a 1-output head with squared error.
"""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np

from . import autodiff as ad
from .alignment import (
    AlignmentKind,
    augmented_embedding,
    coral_distance,
    mmd2_biased,
    posterior_vector,
)
from .data import LabeledSet, UnlabeledSet
from .evidential import EvidentialConfig, evidential_loss
from .models import ModelBundle, build_bundle, model_forward

__all__ = [
    "TrainConfig",
    "DomainBatch",
    "HistoryRow",
    "lambda_schedule",
    "sgd_step",
    "adam_step",
    "SgdOptimizer",
    "AdamOptimizer",
    "make_optimizer",
    "assemble_loss",
    "train_uga",
]

HISTORY_COLUMNS = ("iteration", "supervised", "alignment", "lambda")


@dataclasses.dataclass
class TrainConfig:
    """Full run recipe; serializes to/from a flat JSON object.

    lr may be a single number or {"head": ..., "extractor": ...} for
    per-group rates.  clip_norm bounds the global gradient norm; null in
    JSON disables clipping.
    """

    alignment: AlignmentKind = AlignmentKind.NONE
    lambda_evi: float = 1.0
    optimizer: str = "adam"
    lr: float | dict = 1e-3
    weight_decay: float = 0.0
    iterations: int = 500
    batch_size: int = 64
    seed: int = 0
    aug_weight: float = 1.0
    momentum: float = 0.9
    clip_norm: float | None = 10.0

    def __post_init__(self):
        if isinstance(self.alignment, str):
            self.alignment = AlignmentKind(self.alignment)
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.lambda_evi < 0:
            raise ValueError("lambda_evi must be >= 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.iterations < 1 or self.batch_size < 1:
            raise ValueError("iterations and batch_size must be positive")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive or null")
        for lr in self.group_lrs().values():
            if lr <= 0:
                raise ValueError("learning rates must be positive")

    def group_lrs(self) -> dict:
        if isinstance(self.lr, dict):
            unknown = set(self.lr) - {"head", "extractor"}
            if unknown:
                raise ValueError(f"unknown lr groups {sorted(unknown)}")
            if set(self.lr) != {"head", "extractor"}:
                raise ValueError('per-group lr needs both "head" and "extractor"')
            return {k: float(v) for k, v in self.lr.items()}
        return {"head": float(self.lr), "extractor": float(self.lr)}

    def to_json(self) -> str:
        d = dataclasses.asdict(self)
        d["alignment"] = self.alignment.value
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        d = json.loads(text)
        if not isinstance(d, dict):
            raise ValueError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclasses.dataclass
class DomainBatch:
    """One paired minibatch: labeled source rows, unlabeled target rows."""

    src: LabeledSet
    tgt: UnlabeledSet


@dataclasses.dataclass(frozen=True)
class HistoryRow:
    iteration: int
    supervised: float
    alignment: float
    lam: float


def lambda_schedule(p: float) -> float:
    """Alignment ramp 2/(1+exp(-10p)) - 1; 0 at p=0, saturating toward 1."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("training progress p must be in [0, 1]")
    return 2.0 / (1.0 + math.exp(-10.0 * p)) - 1.0


# -- optimizers -------------------------------------------------------------

def _check_shapes(params, grads):
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ad.ShapeError(f"param {p.shape} vs grad {g.shape}")


def sgd_step(params, grads, lr, momentum=0.0, weight_decay=0.0, velocity=None):
    """v <- momentum*v + (g + wd*p); p <- p - lr*v.  Mutates params,
    returns the velocity buffers for the next call."""
    _check_shapes(params, grads)
    if velocity is None:
        velocity = [np.zeros_like(p) for p in params]
    for p, g, v in zip(params, grads, velocity):
        v[...] = momentum * v + (g + weight_decay * p)
        p -= lr * v
    return velocity


def adam_step(params, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8,
              weight_decay=0.0, state=None):
    """Bias-corrected Adam; weight decay is added to the gradient.
    Mutates params, returns updated (m, v, t) state."""
    _check_shapes(params, grads)
    if state is None:
        state = ([np.zeros_like(p) for p in params],
                 [np.zeros_like(p) for p in params], 0)
    ms, vs, t = state
    t += 1
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, ms, vs):
        g = g + weight_decay * p
        m[...] = beta1 * m + (1.0 - beta1) * g
        v[...] = beta2 * v + (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return ms, vs, t


class SgdOptimizer:
    def __init__(self, groups, momentum=0.9, weight_decay=0.0):
        self.groups = [(list(tensors), lr) for tensors, lr in groups]
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._velocity = [None] * len(self.groups)

    def step(self):
        for gi, (tensors, lr) in enumerate(self.groups):
            params = [t.data for t in tensors]
            grads = [t.grad if t.grad is not None else np.zeros_like(t.data)
                     for t in tensors]
            self._velocity[gi] = sgd_step(params, grads, lr, self.momentum,
                                          self.weight_decay, self._velocity[gi])


class AdamOptimizer:
    def __init__(self, groups, weight_decay=0.0):
        self.groups = [(list(tensors), lr) for tensors, lr in groups]
        self.weight_decay = weight_decay
        self._state = [None] * len(self.groups)

    def step(self):
        for gi, (tensors, lr) in enumerate(self.groups):
            params = [t.data for t in tensors]
            grads = [t.grad if t.grad is not None else np.zeros_like(t.data)
                     for t in tensors]
            self._state[gi] = adam_step(params, grads, lr,
                                        weight_decay=self.weight_decay,
                                        state=self._state[gi])


def make_optimizer(bundle: ModelBundle, cfg: TrainConfig):
    lrs = cfg.group_lrs()
    head = [t for n, t in bundle.named_parameters() if n.startswith("head.")]
    extractor = [t for n, t in bundle.named_parameters() if not n.startswith("head.")]
    groups = [(head, lrs["head"]), (extractor, lrs["extractor"])]
    if cfg.optimizer == "sgd":
        return SgdOptimizer(groups, momentum=cfg.momentum,
                            weight_decay=cfg.weight_decay)
    return AdamOptimizer(groups, weight_decay=cfg.weight_decay)


# -- loss assembly ----------------------------------------------------------

def assemble_loss(src_batch: LabeledSet, tgt_batch: UnlabeledSet,
                  bundle: ModelBundle, cfg: TrainConfig, p: float,
                  training: bool = False, src_rng=None, tgt_rng=None):
    """Returns (total loss tensor, supervised value, alignment value).

    The supervised term sees source labels only; the alignment term pairs
    the two domains per cfg.alignment and is scaled by lambda_schedule(p).
    """
    if len(src_batch) == 0:
        raise ValueError("empty source batch")
    if cfg.alignment is not AlignmentKind.NONE and len(tgt_batch) == 0:
        raise ValueError("empty target batch")

    z_s, head_s = model_forward(src_batch.inputs, bundle,
                                training=training, rng=src_rng)
    if bundle.head_kind == "evidential":
        sup = evidential_loss(src_batch.labels, head_s,
                              EvidentialConfig(lambda_evi=cfg.lambda_evi))
    else:
        resid = head_s - ad.constant(src_batch.labels.reshape(-1, 1))
        sup = ad.mean(resid * resid)

    lam = lambda_schedule(p)
    if cfg.alignment is AlignmentKind.NONE:
        return sup, sup.item(), 0.0

    z_t, head_t = model_forward(tgt_batch.inputs, bundle,
                                training=training, rng=tgt_rng)
    if cfg.alignment is AlignmentKind.PLAIN_MMD:
        align = mmd2_biased(z_s, z_t)
    elif cfg.alignment is AlignmentKind.CORAL:
        align = coral_distance(z_s, z_t)
    elif cfg.alignment is AlignmentKind.UGA_FEATURE:
        align = mmd2_biased(augmented_embedding(z_s, head_s, cfg.aug_weight),
                            augmented_embedding(z_t, head_t, cfg.aug_weight))
    elif cfg.alignment is AlignmentKind.UGA_POSTERIOR:
        align = mmd2_biased(posterior_vector(head_s), posterior_vector(head_t))
    else:  # pragma: no cover
        raise ValueError(f"unhandled alignment kind {cfg.alignment}")
    total = sup + lam * align
    return total, sup.item(), align.item()


def _global_grad_norm(tensors) -> float:
    total = 0.0
    for t in tensors:
        if t.grad is not None:
            total += float(np.sum(t.grad * t.grad))
    return math.sqrt(total)


def _clip_grads(tensors, max_norm: float) -> None:
    norm = _global_grad_norm(tensors)
    if norm > max_norm:
        scale = max_norm / norm
        for t in tensors:
            if t.grad is not None:
                t.grad = t.grad * scale


def head_kind_for(alignment: AlignmentKind) -> str:
    """The plain-MMD baseline trains without uncertainty (MSE head)."""
    return "point" if alignment is AlignmentKind.PLAIN_MMD else "evidential"


def train_uga(source: LabeledSet, target: UnlabeledSet, cfg: TrainConfig,
              model_spec) -> tuple[ModelBundle, list[HistoryRow]]:
    """Run the full loop; returns the trained bundle and per-iteration
    history (supervised loss, alignment loss, lambda)."""
    if len(source) == 0:
        raise ValueError("empty source set")
    needs_target = cfg.alignment is not AlignmentKind.NONE
    if needs_target and len(target) == 0:
        raise ValueError("adaptation run needs a non-empty target set")

    bundle = build_bundle(model_spec, head_kind=head_kind_for(cfg.alignment),
                          seed=cfg.seed)
    optimizer = make_optimizer(bundle, cfg)

    # Independent streams so a source-only run and an alignment run with a
    # zero lambda consume identical randomness for the shared draws.
    root = np.random.SeedSequence(cfg.seed)
    ss_sample, ss_src_drop, ss_tgt_drop = root.spawn(3)
    rng_sample = np.random.default_rng(ss_sample)
    rng_src = np.random.default_rng(ss_src_drop)
    rng_tgt = np.random.default_rng(ss_tgt_drop)

    has_target = len(target) > 0
    history: list[HistoryRow] = []
    for i in range(1, cfg.iterations + 1):
        idx_s = rng_sample.integers(0, len(source), size=cfg.batch_size)
        src_batch = LabeledSet(source.inputs[idx_s], source.labels[idx_s])
        if has_target:
            idx_t = rng_sample.integers(0, len(target), size=cfg.batch_size)
            tgt_batch = UnlabeledSet(target.inputs[idx_t])
        else:
            tgt_batch = UnlabeledSet(target.inputs)

        p = i / cfg.iterations
        bundle.zero_grad()
        loss, sup_v, align_v = assemble_loss(
            src_batch, tgt_batch, bundle, cfg, p,
            training=True, src_rng=rng_src, tgt_rng=rng_tgt)
        lam = lambda_schedule(p)
        if not (math.isfinite(sup_v) and math.isfinite(align_v)):
            raise RuntimeError(
                f"non-finite loss at iteration {i}: "
                f"supervised={sup_v}, alignment={align_v}, lambda={lam}")
        ad.backward(loss)
        params = bundle.parameters()
        if cfg.clip_norm is not None:
            _clip_grads(params, cfg.clip_norm)
        if not math.isfinite(_global_grad_norm(params)):
            raise RuntimeError(f"non-finite gradient at iteration {i}")
        optimizer.step()
        history.append(HistoryRow(i, sup_v, align_v, lam))
    return bundle, history
