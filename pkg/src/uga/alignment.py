"""Two-sample discrepancies used to align source and target domains.

The workhorse is a biased (V-statistic) multi-kernel MMD estimator over a
bandwidth bank centered on the median heuristic.  On top of it sit the two
uncertainty-guided objectives: feature alignment over embeddings augmented
with the evidential parameters, and posterior alignment over [nu, alpha,
beta] alone.  CORAL covariance matching is provided as a baseline.
"""

from __future__ import annotations

import dataclasses
import enum

import numpy as np
import scipy.spatial.distance

from . import autodiff as ad
from .evidential import NigOutput

__all__ = [
    "AlignmentKind",
    "KernelBank",
    "rbf_kernel",
    "median_bandwidth",
    "mmd2_biased",
    "augmented_embedding",
    "posterior_vector",
    "coral_distance",
]

BANK_FACTORS = (0.25, 0.5, 1.0, 2.0, 4.0)


class AlignmentKind(enum.Enum):
    NONE = "none"
    PLAIN_MMD = "plain_mmd"
    CORAL = "coral"
    UGA_FEATURE = "uga_feature"
    UGA_POSTERIOR = "uga_posterior"


@dataclasses.dataclass(frozen=True)
class KernelBank:
    """Bandwidths (sigma^2, squared-distance units) averaged by the MMD."""

    bandwidths: tuple[float, ...]

    def __post_init__(self):
        if len(self.bandwidths) == 0:
            raise ValueError("KernelBank needs at least one bandwidth")
        if any(s2 <= 0 for s2 in self.bandwidths):
            raise ValueError("bandwidths must be positive")

    @classmethod
    def median_scaled(cls, X, Y) -> "KernelBank":
        """Median-heuristic bandwidth scaled by powers of two (1/4 .. 4)."""
        s2 = median_bandwidth(X, Y)
        return cls(tuple(s2 * f for f in BANK_FACTORS))


def _as_matrix(X) -> np.ndarray:
    a = X.data if isinstance(X, ad.Tensor) else np.asarray(X, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ad.ShapeError(f"expected a 2-D sample matrix, got shape {a.shape}")
    return a


def rbf_kernel(x, y, sigma2: float) -> float:
    """Gaussian kernel exp(-|x - y|^2 / (2 sigma^2)) for a single pair."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if x.shape != y.shape:
        raise ad.ShapeError(f"kernel arguments differ in shape: {x.shape} vs {y.shape}")
    d2 = float(np.sum((x - y) ** 2))
    return float(np.exp(-d2 / (2.0 * sigma2)))


def median_bandwidth(X, Y) -> float:
    """Median of nonzero pairwise squared distances over the pooled samples.

    Self-pairs are excluded; if every pairwise distance is zero the declared
    fallback value 1.0 is returned.
    """
    pool = np.concatenate([_as_matrix(X), _as_matrix(Y)], axis=0)
    if pool.shape[0] < 2:
        raise ValueError("median_bandwidth needs at least 2 points")
    d2 = scipy.spatial.distance.pdist(pool, metric="sqeuclidean")
    d2 = d2[d2 > 0]
    if d2.size == 0:
        return 1.0
    return float(np.median(d2))


def _pairwise_sq_dists(A: ad.Tensor, B: ad.Tensor) -> ad.Tensor:
    n, d = A.shape
    m = B.shape[0]
    col = ad.ones(d, 1)
    sqa = ad.matmul(A * A, col)            # (n, 1)
    sqb = ad.matmul(B * B, col)            # (m, 1)
    cross = ad.matmul(A, ad.transpose(B))  # (n, m)
    return (ad.matmul(sqa, ad.ones(1, m))
            + ad.matmul(ad.ones(n, 1), ad.transpose(sqb))
            - 2.0 * cross)


def _mean_kernel(D: ad.Tensor, sigma2: float) -> ad.Tensor:
    n, m = D.shape
    k = ad.exp(D * (-1.0 / (2.0 * sigma2)))
    total = ad.matmul(ad.matmul(ad.ones(1, n), k), ad.ones(m, 1))
    return ad.reshape(total, ()) * (1.0 / (n * m))


def mmd2_biased(X, Y, bank: KernelBank | None = None) -> ad.Tensor:
    """Biased squared MMD between two sample sets, averaged over the bank.

    (1/n^2) sum k(x_i, x_j) + (1/m^2) sum k(y_i, y_j)
    - (2/nm) sum k(x_i, y_j), per bandwidth, then the bank mean.  Bandwidths
    are plain constants: no gradient flows through the median heuristic.
    The two arguments are ordered canonically before any arithmetic so the
    result is symmetric bit-for-bit.
    """
    X = X if isinstance(X, ad.Tensor) else ad.constant(_as_matrix(X))
    Y = Y if isinstance(Y, ad.Tensor) else ad.constant(_as_matrix(Y))
    if len(X.shape) == 1:
        X = ad.reshape(X, (X.shape[0], 1))
    if len(Y.shape) == 1:
        Y = ad.reshape(Y, (Y.shape[0], 1))
    if len(X.shape) != 2 or len(Y.shape) != 2:
        raise ad.ShapeError("mmd2_biased expects 2-D sample matrices")
    if X.shape[0] < 1 or Y.shape[0] < 1:
        raise ValueError("mmd2_biased needs at least one sample per set")
    if X.shape[1] != Y.shape[1]:
        raise ad.ShapeError(
            f"sample dimensions differ: {X.shape[1]} vs {Y.shape[1]}")
    if bank is None:
        bank = KernelBank.median_scaled(X.data, Y.data)

    # Canonical argument order (shape, then content) makes the float
    # summation sequence identical for (X, Y) and (Y, X).
    kx = (X.shape[0], X.data.tobytes())
    ky = (Y.shape[0], Y.data.tobytes())
    if ky < kx:
        X, Y = Y, X

    dxx = _pairwise_sq_dists(X, X)
    dyy = _pairwise_sq_dists(Y, Y)
    dxy = _pairwise_sq_dists(X, Y)
    acc = None
    for s2 in bank.bandwidths:
        term = (_mean_kernel(dxx, s2) + _mean_kernel(dyy, s2)
                - 2.0 * _mean_kernel(dxy, s2))
        acc = term if acc is None else acc + term
    return acc * (1.0 / len(bank.bandwidths))


def augmented_embedding(z, p: NigOutput, aug_weight: float = 1.0) -> ad.Tensor:
    """Concatenate features with the four NIG parameters: [z; g; nu; a; b].

    aug_weight scales the appended parameter block (1.0 leaves it as-is).
    Output has dim(z) + 4 columns; column dim(z) is always gamma.
    """
    z = z if isinstance(z, ad.Tensor) else ad.constant(_as_matrix(z))
    if not np.all(np.isfinite(z.data)):
        raise ValueError("non-finite feature input")
    p.validate()
    if z.shape[0] != p.batch_size:
        raise ad.ShapeError(
            f"feature batch {z.shape[0]} != parameter batch {p.batch_size}")
    block = ad.concat([p.gamma, p.nu, p.alpha, p.beta])
    if aug_weight != 1.0:
        block = block * float(aug_weight)
    return ad.concat([z, block])


def posterior_vector(p: NigOutput) -> ad.Tensor:
    """Rows [nu, alpha, beta]; gamma deliberately excluded."""
    p.validate()
    return ad.concat([p.nu, p.alpha, p.beta])


def _covariance(X: ad.Tensor) -> ad.Tensor:
    n = X.shape[0]
    mean_row = ad.matmul(ad.ones(1, n), X) * (1.0 / n)          # (1, d)
    centered = X - ad.matmul(ad.ones(n, 1), mean_row)
    return ad.matmul(ad.transpose(centered), centered) * (1.0 / (n - 1))


def coral_distance(X, Y) -> ad.Tensor:
    """Squared Frobenius gap between unbiased covariances, over 4 d^2."""
    X = X if isinstance(X, ad.Tensor) else ad.constant(_as_matrix(X))
    Y = Y if isinstance(Y, ad.Tensor) else ad.constant(_as_matrix(Y))
    if len(X.shape) != 2 or len(Y.shape) != 2:
        raise ad.ShapeError("coral_distance expects 2-D sample matrices")
    if X.shape[0] < 2 or Y.shape[0] < 2:
        raise ValueError("coral_distance needs at least 2 samples per set")
    if X.shape[1] != Y.shape[1]:
        raise ad.ShapeError(
            f"sample dimensions differ: {X.shape[1]} vs {Y.shape[1]}")
    d = X.shape[1]
    diff = _covariance(X) - _covariance(Y)
    return ad.sum(diff * diff) * (1.0 / (4.0 * d * d))
