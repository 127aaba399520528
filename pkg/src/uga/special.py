"""Log-gamma and digamma for positive float64 arguments.

Both functions are vectorized over numpy arrays and accurate enough to back
the evidential loss and its gradients: lgamma to ~1e-14 (mixed rel/abs) and
digamma to ~1e-13 on [1e-3, 1e6].
"""

from __future__ import annotations

import numpy as np

__all__ = ["lgamma", "digamma"]

# Lanczos approximation, g=7 with 9 coefficients (Numerical Recipes / GSL set).
_LANCZOS_G = 7.0
_LANCZOS_C = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)

# Asymptotic series for digamma: -B_{2n} / (2n x^{2n}), n = 1..7.
_DIGAMMA_SERIES = (
    -1.0 / 12.0,
    1.0 / 120.0,
    -1.0 / 252.0,
    1.0 / 240.0,
    -1.0 / 132.0,
    691.0 / 32760.0,
    -1.0 / 12.0,
)
_DIGAMMA_SHIFT = 10.0


def _check_positive(x: np.ndarray, name: str) -> None:
    if np.any(~np.isfinite(x)) or np.any(x <= 0.0):
        raise ValueError(f"{name} requires strictly positive finite input")


def _lanczos_lgamma(x: np.ndarray) -> np.ndarray:
    # Direct Lanczos form, accurate for x >= 0.5.
    acc = np.full_like(x, _LANCZOS_C[0])
    for i in range(1, len(_LANCZOS_C)):
        acc = acc + _LANCZOS_C[i] / (x - 1.0 + i)
    t = x + _LANCZOS_G - 0.5
    return _HALF_LOG_2PI + (x - 0.5) * np.log(t) - t + np.log(acc)


def lgamma(x):
    """ln Gamma(x) for x > 0; scalar in, scalar out; array in, array out."""
    arr = np.asarray(x, dtype=np.float64)
    _check_positive(arr, "lgamma")
    small = arr < 0.5
    # Shift x < 0.5 up by one and use lgamma(x) = lgamma(x+1) - log(x); no
    # reflection needed since the domain is restricted to positive reals.
    shifted = np.where(small, arr + 1.0, arr)
    out = _lanczos_lgamma(shifted)
    out = np.where(small, out - np.log(np.where(small, arr, 1.0)), out)
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(out)
    return out


def digamma(x):
    """psi(x) = d/dx ln Gamma(x) for x > 0.

    Upward recurrence psi(x) = psi(x+1) - 1/x until x >= 10, then the
    Bernoulli asymptotic series through 1/x^14.
    """
    arr = np.asarray(x, dtype=np.float64)
    _check_positive(arr, "digamma")
    work = arr.copy() if arr.ndim else arr.reshape(1).copy()
    acc = np.zeros_like(work)
    while True:
        mask = work < _DIGAMMA_SHIFT
        if not mask.any():
            break
        acc[mask] -= 1.0 / work[mask]
        work[mask] += 1.0
    inv2 = 1.0 / (work * work)
    series = np.zeros_like(work)
    power = inv2.copy()
    for coeff in _DIGAMMA_SERIES:
        series += coeff * power
        power = power * inv2
    out = acc + np.log(work) - 0.5 / work + series
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(out[0])
    return out.reshape(arr.shape)
