"""Special functions implemented locally: digamma via recurrence + series.

Implemented from the classical recurrence psi(x+1) = psi(x) + 1/x and the
asymptotic Bernoulli-number expansion, shifted so the series is evaluated at
arguments >= 10 where truncation error is far below 1e-12.  Kept separate so
both the autodiff engine (lgamma backward) and the distribution bounds can
use it without import cycles.
"""

from __future__ import annotations

import numpy as np

__all__ = ["digamma", "digamma_array"]

# Coefficients of the asymptotic expansion psi(x) ~ ln x - 1/(2x)
# - sum_n B_{2n} / (2n x^{2n}); terms through x^{-14}.
_ASYMPTOTIC = (
    (2, -1.0 / 12.0),
    (4, 1.0 / 120.0),
    (6, -1.0 / 252.0),
    (8, 1.0 / 240.0),
    (10, -1.0 / 132.0),
    (12, 691.0 / 32760.0),
    (14, -1.0 / 12.0),
)

_SHIFT = 10.0


def digamma_array(x) -> np.ndarray:
    """Vectorized digamma for strictly positive arguments."""
    original = np.asarray(x, dtype=np.float64)
    if np.any(original <= 0.0):
        raise ValueError("digamma requires strictly positive arguments")
    shape = original.shape
    x = original.reshape(-1).copy()
    acc = np.zeros_like(x)
    # Shift every entry up to >= _SHIFT using psi(x) = psi(x+1) - 1/x.
    while True:
        small = x < _SHIFT
        if not small.any():
            break
        acc[small] -= 1.0 / x[small]
        x[small] += 1.0
    result = np.log(x) - 0.5 / x
    x2 = 1.0 / (x * x)
    power = x2.copy()
    for exponent, coeff in _ASYMPTOTIC:
        result += coeff * power
        power = power * x2
    return (result + acc).reshape(shape)


def digamma(x: float) -> float:
    """Digamma of a positive scalar; raises for x <= 0."""
    return float(digamma_array(np.asarray(float(x))))
