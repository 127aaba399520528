"""Normal-Inverse-Gamma evidential head.

The model predicts four parameters (gamma, nu, alpha, beta) per sample.
gamma is the predicted mean; nu, alpha, beta control how much evidence the
model claims for that prediction.  The negative log-likelihood of the
marginal (Student-t) predictive plus an evidence penalty on wrong
predictions make up the training loss.  Aleatoric and epistemic variances
and Student-t predictive intervals are read off the same four parameters.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
import scipy.stats

from . import autodiff as ad

__all__ = [
    "NigOutput",
    "EvidentialConfig",
    "nig_from_raw",
    "nll_loss",
    "evidence_regularizer",
    "evidential_loss",
    "uncertainties",
    "predictive_interval",
]


@dataclasses.dataclass
class NigOutput:
    """A batch of Normal-Inverse-Gamma parameter sets, one row per sample.

    Each field is a (B, 1) tensor.  Valid outputs satisfy nu > 0,
    alpha > 1, beta > 0 with all values finite.
    """

    gamma: ad.Tensor
    nu: ad.Tensor
    alpha: ad.Tensor
    beta: ad.Tensor

    @classmethod
    def from_values(cls, gamma, nu, alpha, beta) -> "NigOutput":
        """Wrap plain numbers/arrays as constant tensors (no gradients)."""
        cols = [_as_column_array(v) for v in (gamma, nu, alpha, beta)]
        n = max(c.shape[0] for c in cols)
        cols = [np.broadcast_to(c, (n, 1)).copy() for c in cols]
        return cls(*(ad.constant(c) for c in cols))

    @property
    def batch_size(self) -> int:
        return self.gamma.shape[0]

    def validate(self) -> None:
        for name, t in (("gamma", self.gamma), ("nu", self.nu),
                        ("alpha", self.alpha), ("beta", self.beta)):
            if not np.all(np.isfinite(t.data)):
                raise ValueError(f"non-finite {name} in NigOutput")
        if np.any(self.nu.data <= 0):
            raise ValueError("NigOutput requires nu > 0")
        if np.any(self.alpha.data <= 1):
            raise ValueError("NigOutput requires alpha > 1")
        if np.any(self.beta.data <= 0):
            raise ValueError("NigOutput requires beta > 0")


@dataclasses.dataclass
class EvidentialConfig:
    """Weight of the evidence regularizer in the total loss."""

    lambda_evi: float = 1.0

    def __post_init__(self):
        if self.lambda_evi < 0:
            raise ValueError("lambda_evi must be >= 0")


def _as_column_array(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    elif a.ndim != 2 or a.shape[1] != 1:
        raise ad.ShapeError(f"expected scalar, vector, or column, got {a.shape}")
    return a


def _as_column_tensor(y, batch_size: int) -> ad.Tensor:
    if isinstance(y, ad.Tensor):
        if y.shape != (batch_size, 1):
            raise ad.ShapeError(f"label tensor shape {y.shape} != ({batch_size}, 1)")
        return y
    a = _as_column_array(y)
    if a.shape[0] == 1 and batch_size > 1:
        a = np.broadcast_to(a, (batch_size, 1)).copy()
    if a.shape[0] != batch_size:
        raise ad.ShapeError(f"{a.shape[0]} labels for batch of {batch_size}")
    if not np.all(np.isfinite(a)):
        raise ValueError("labels must be finite")
    return ad.constant(a)


def nig_from_raw(raw: ad.Tensor) -> NigOutput:
    """Map raw head outputs (B, 4) to valid NIG parameters.

    gamma = raw[:,0]; nu = softplus(raw[:,1]); alpha = softplus(raw[:,2]) + 1;
    beta = softplus(raw[:,3]).  The softplus/+1 construction guarantees
    nu > 0, alpha > 1, beta > 0 for any finite raw input.
    """
    if not isinstance(raw, ad.Tensor):
        raw = ad.constant(np.atleast_2d(np.asarray(raw, dtype=np.float64)))
    if len(raw.shape) == 1:
        raw = ad.reshape(raw, (1, raw.shape[0]))
    if len(raw.shape) != 2 or raw.shape[1] != 4:
        raise ad.ShapeError(f"raw head output must be (B, 4), got {raw.shape}")
    if not np.all(np.isfinite(raw.data)):
        raise ValueError("non-finite raw head output")
    gamma = ad.slice_last(raw, 0, 1)
    nu = ad.softplus(ad.slice_last(raw, 1, 2))
    # The extra 1e-15 keeps alpha strictly above 1 even when softplus
    # underflows (raw[2] < -37 makes 1 + softplus round to exactly 1.0).
    alpha = ad.softplus(ad.slice_last(raw, 2, 3)) + (1.0 + 1e-15)
    beta = ad.softplus(ad.slice_last(raw, 3, 4))
    return NigOutput(gamma, nu, alpha, beta)


def nll_loss(y, p: NigOutput) -> ad.Tensor:
    """Per-sample NIG negative log-likelihood, shape (B, 1).

    0.5*log(pi/nu) - alpha*log(2*beta*(1+nu)) + lgamma(alpha)
    - lgamma(alpha+0.5) + (alpha+0.5)*log((y-gamma)^2*nu + 2*beta*(1+nu))
    """
    p.validate()
    y = _as_column_tensor(y, p.batch_size)
    gamma, nu, alpha, beta = p.gamma, p.nu, p.alpha, p.beta
    omega = 2.0 * beta * (1.0 + nu)
    resid = y - gamma
    return (
        0.5 * (math.log(math.pi) - ad.log(nu))
        - alpha * ad.log(omega)
        + ad.lgamma(alpha)
        - ad.lgamma(alpha + 0.5)
        + (alpha + 0.5) * ad.log(resid * resid * nu + omega)
    )


def evidence_regularizer(y, p: NigOutput) -> ad.Tensor:
    """Per-sample evidence penalty |y - gamma| * (2*nu + alpha), shape (B, 1)."""
    p.validate()
    y = _as_column_tensor(y, p.batch_size)
    return ad.abs(y - p.gamma) * (2.0 * p.nu + p.alpha)


def evidential_loss(ys, ps: NigOutput, cfg: EvidentialConfig) -> ad.Tensor:
    """Batch mean of nll_loss + lambda_evi * evidence_regularizer (scalar)."""
    if ps.batch_size < 1:
        raise ValueError("empty batch")
    per_sample = nll_loss(ys, ps)
    if cfg.lambda_evi != 0.0:
        per_sample = per_sample + cfg.lambda_evi * evidence_regularizer(ys, ps)
    return ad.mean(per_sample)


def uncertainties(p: NigOutput) -> tuple[np.ndarray, np.ndarray]:
    """(aleatoric, epistemic) variances as flat arrays of length B.

    aleatoric = beta/(alpha-1) is the expected noise variance; epistemic =
    beta/(nu*(alpha-1)) is the variance of the predicted mean.
    """
    p.validate()
    alpha = p.alpha.data.ravel()
    beta = p.beta.data.ravel()
    nu = p.nu.data.ravel()
    aleatoric = beta / (alpha - 1.0)
    epistemic = beta / (nu * (alpha - 1.0))
    return aleatoric, epistemic


def predictive_interval(p: NigOutput, level: float) -> tuple[np.ndarray, np.ndarray]:
    """Central predictive interval at the given two-sided level.

    The NIG posterior predictive is Student-t with 2*alpha degrees of
    freedom, location gamma, and scale sqrt(beta*(1+nu)/(nu*alpha)).
    Returns (lo, hi) arrays of length B.
    """
    if not 0.0 <= level < 1.0:
        raise ValueError("level must be in [0, 1)")
    p.validate()
    gamma = p.gamma.data.ravel()
    nu = p.nu.data.ravel()
    alpha = p.alpha.data.ravel()
    beta = p.beta.data.ravel()
    scale = np.sqrt(beta * (1.0 + nu) / (nu * alpha))
    if level == 0.0:
        return gamma.copy(), gamma.copy()
    q = scipy.stats.t.ppf(0.5 * (1.0 + level), df=2.0 * alpha)
    return gamma - q * scale, gamma + q * scale
