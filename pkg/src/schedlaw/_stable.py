"""Cancellation-free helpers for integrands that vanish at the end of training."""

from __future__ import annotations

import math

_SERIES_CUTOFF = 0.5


def z_minus_sin(z: float) -> float:
    """``z - sin(z)``, accurate for small ``z`` where it behaves like ``z**3/6``."""
    if abs(z) >= _SERIES_CUTOFF:
        return z - math.sin(z)
    # z^3/3! - z^5/5! + ...
    z2 = z * z
    term = z * z2 / 6.0
    total = term
    n = 3
    while abs(term) > 1e-18 * abs(total):
        term *= -z2 / ((n + 1) * (n + 2))
        total += term
        n += 2
    return total


def cosine_sq_tail(z: float) -> float:
    """``8 (z - sin z) - (2z - sin 2z)``, which behaves like ``z**5 / 5`` near zero."""
    if abs(z) >= _SERIES_CUTOFF:
        return 8.0 * z_minus_sin(z) - z_minus_sin(2.0 * z)
    # sum_{n>=2} (-1)^(n+1) (8 - 2^(2n+1)) z^(2n+1) / (2n+1)!
    total = 0.0
    n = 2
    while True:
        k = 2 * n + 1
        term = (-1) ** (n + 1) * (8.0 - 2.0**k) * z**k / math.factorial(k)
        total += term
        if abs(term) <= 1e-18 * abs(total) or n > 30:
            break
        n += 1
    return total
