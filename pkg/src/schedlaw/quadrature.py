"""Adaptive Simpson quadrature."""

from __future__ import annotations

import math
from typing import Callable, Iterable

from .errors import QuadratureError

__all__ = ["adaptive_simpson"]


def _simpson(fa, fm, fb, a, b):
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def _integrate_piece(f, a, b, tol, max_depth):
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = _simpson(fa, fm, fb, a, b)
    total = 0.0
    worst = 0.0
    # Explicit stack: (a, b, fa, fm, fb, whole, tol, depth)
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a, b, fa, fm, fb, whole, tol, depth = stack.pop()
        m = 0.5 * (a + b)
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = _simpson(fa, flm, fm, a, m)
        right = _simpson(fm, frm, fb, m, b)
        delta = left + right - whole
        if not math.isfinite(delta):
            raise QuadratureError(f"non-finite integrand on [{a!r}, {b!r}]")
        if abs(delta) <= 15.0 * tol or depth >= max_depth:
            if depth >= max_depth:
                worst = max(worst, abs(delta) / 15.0)
            total += left + right + delta / 15.0
            continue
        stack.append((a, m, fa, flm, fm, left, 0.5 * tol, depth + 1))
        stack.append((m, b, fm, frm, fb, right, 0.5 * tol, depth + 1))
    return total, worst


def adaptive_simpson(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-6,
    max_depth: int = 50,
    breakpoints: Iterable[float] = (),
) -> float:
    """Integrate ``f`` over ``[a, b]`` to absolute tolerance ``tol``.

    ``breakpoints`` inside ``(a, b)`` split the interval so that kinks in the
    integrand fall on panel edges.  Raises :class:`QuadratureError` when the
    recursion bottoms out with an error estimate above ``tol``.
    """
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    cuts = sorted({float(p) for p in breakpoints if a < p < b})
    edges = [a, *cuts, b]
    total = 0.0
    worst = 0.0
    n = len(edges) - 1
    for lo, hi in zip(edges[:-1], edges[1:]):
        piece, err = _integrate_piece(f, lo, hi, tol / n, max_depth)
        total += piece
        worst += err
    if worst > tol:
        raise QuadratureError(f"adaptive Simpson did not converge (error estimate {worst:.3g} > {tol:.3g})")
    return sign * total
