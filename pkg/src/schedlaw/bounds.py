"""Convex SGD loss bounds for arbitrary learning-rate sequences.

Two bounds are provided for a step-size sequence ``eta_1..eta_T``:

* the averaged-iterate bound
  ``L* + D^2 / (2 S) + G^2 sum(eta^2) / (2 S)`` with ``S = sum(eta)``;
* the last-iterate (any-iterate) bound, which adds a double-sum correction
  term.  It can be rewritten as a single sum
  ``L* + D^2/(2S) + G^2/2 * (sum_{t<tau} eta_t^2 / sum_{k>t} eta_k + eta_tau)``.

Steps with zero learning rate at the end of the prefix do not move the
iterate, so by default the last-iterate bound at ``tau`` is evaluated at the
last step ``tau' <= tau`` with a positive learning rate (see
:func:`effective_tau`).  Passing ``inert_tail=False`` instead floors every
suffix sum at ``1e-12 * max(eta) * tau``.
"""

from __future__ import annotations

import enum
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from ._stable import cosine_sq_tail, z_minus_sin
from .errors import (
    DegenerateScheduleError,
    DomainError,
    NotDerivedError,
    NumericError,
    SingularityError,
    ValidationError,
)
from .quadrature import adaptive_simpson
from .schedule import DERIVED_KINDS, ScheduleKind, ScheduleSpec, as_lr_sequence, eval_discrete

__all__ = [
    "BoundCoefficients",
    "BoundKind",
    "BoundTrace",
    "effective_tau",
    "last_iterate_features",
    "bound_averaged",
    "bound_last",
    "bound_last_fast",
    "bound_trace",
    "log_tau_grid",
    "closed_form_bound",
    "closed_form_formula",
    "optimal_peak_lr",
    "numeric_optimal_peak_lr",
    "cosine_integrand",
    "cosine_integral_constant",
    "COSINE_COEFFICIENT",
]

FLOOR_REL = 1e-12

# Variance coefficient of the cosine schedule as printed in the closed form.
COSINE_COEFFICIENT = 1.061


@dataclass(frozen=True)
class BoundCoefficients:
    """``(L_star, D, G)``: irreducible loss, initial distance, gradient bound."""

    L_star: float
    D: float
    G: float

    def __post_init__(self):
        for name in ("L_star", "D", "G"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValidationError(f"{name}: must be finite, got {v!r}")
            object.__setattr__(self, name, float(v))
        if self.D < 0:
            raise ValidationError(f"D: must be non-negative, got {self.D!r}")
        if self.G < 0:
            raise ValidationError(f"G: must be non-negative, got {self.G!r}")


class BoundKind(str, enum.Enum):
    AVERAGED_ITERATE = "averaged_iterate"
    LAST_ITERATE = "last_iterate"


@dataclass(frozen=True)
class BoundTrace:
    tau_grid: np.ndarray
    values: np.ndarray
    kind: BoundKind

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("tau,bound\n")
        for tau, v in zip(self.tau_grid, self.values):
            buf.write(f"{int(tau)},{float(v)!r}\n")
        return buf.getvalue()


# --------------------------------------------------------------------------
# discrete bounds


def _check_tau(lrs: np.ndarray, tau) -> int:
    if isinstance(tau, bool) or not isinstance(tau, (int, np.integer)):
        raise ValidationError(f"tau: expected an integer, got {tau!r}")
    tau = int(tau)
    if not 1 <= tau <= lrs.size:
        raise DomainError(f"tau: must lie in [1, {lrs.size}], got {tau}")
    return tau


def effective_tau(lrs, tau: int) -> int:
    """Largest ``t <= tau`` with ``eta_t > 0``.

    ``w_t`` equals ``w_{t-1}`` whenever ``eta_t = 0``, so the bound at the
    effective step is a valid (and finite) bound for the iterate at ``tau``.
    """
    lrs = np.asarray(lrs, dtype=float)
    nz = np.flatnonzero(lrs[:tau] > 0)
    if nz.size == 0:
        raise DegenerateScheduleError(f"learning-rate prefix sum is zero up to tau={tau}")
    return int(nz[-1]) + 1


def _prefix(lrs: np.ndarray, tau: int, inert_tail: bool):
    if inert_tail:
        tau = effective_tau(lrs, tau)
    eta = lrs[:tau]
    total = float(eta.sum())
    if total <= 0:
        raise DegenerateScheduleError(f"learning-rate prefix sum is zero up to tau={tau}")
    return eta, total


def _floor(lrs_peak: float, tau: int) -> float:
    return FLOOR_REL * lrs_peak * tau


def _suffix_sums(x: np.ndarray) -> np.ndarray:
    # Accumulating from the end keeps small tail sums accurate.
    return np.cumsum(x[::-1])[::-1]


def last_iterate_features(lrs, tau: int, *, inert_tail: bool = True) -> tuple[float, float]:
    """Return ``(x1, x2)`` with ``bound_last = L* + D^2 x1 + G^2 x2``.

    ``x1 = 1 / (2 sum eta)`` and ``x2`` is half the bracketed variance term,
    evaluated with the double sum exactly as it appears in the bound.
    """
    lrs = as_lr_sequence(lrs)
    return _features(lrs, _check_tau(lrs, tau), inert_tail, float(lrs.max()))


def _features(lrs: np.ndarray, tau: int, inert_tail: bool, peak: float) -> tuple[float, float]:
    eta, total = _prefix(lrs, tau, inert_tail)
    n = eta.size
    eps = _floor(peak, n)
    suf1 = np.maximum(_suffix_sums(eta), eps)
    suf2 = _suffix_sums(eta * eta)
    head = float(suf2[0]) / total
    if n > 1:
        k = np.arange(n - 1)
        terms = eta[k] / suf1[k + 1] * (suf2[k] / suf1[k])
        if not np.all(np.isfinite(terms)):
            bad = int(np.flatnonzero(~np.isfinite(terms))[0]) + 1
            raise SingularityError(f"suffix sum underflow at k={bad}", k=bad)
        tail = float(terms.sum())
    else:
        tail = 0.0
    return 0.5 / total, 0.5 * (head + tail)


def bound_averaged(coeffs: BoundCoefficients, lrs, tau: int) -> float:
    """Averaged-iterate bound at step ``tau``."""
    lrs = as_lr_sequence(lrs)
    tau = _check_tau(lrs, tau)
    eta = lrs[:tau]
    total = float(eta.sum())
    if total <= 0:
        raise DegenerateScheduleError(f"learning-rate prefix sum is zero up to tau={tau}")
    sq = float(np.dot(eta, eta))
    return coeffs.L_star + coeffs.D**2 / (2 * total) + coeffs.G**2 * sq / (2 * total)


def bound_last(coeffs: BoundCoefficients, lrs, tau: int, *, inert_tail: bool = True) -> float:
    """Last-iterate bound at step ``tau`` via the double sum, ``O(tau)``."""
    x1, x2 = last_iterate_features(lrs, tau, inert_tail=inert_tail)
    return coeffs.L_star + coeffs.D**2 * x1 + coeffs.G**2 * x2


def bound_last_fast(coeffs: BoundCoefficients, lrs, tau: int, *, inert_tail: bool = True) -> float:
    """Last-iterate bound through the single-sum rewrite.

    The rewrite carries the residual ``x_tau / eta_tau = eta_tau`` so it
    matches :func:`bound_last` whether or not the final step size is zero.
    """
    lrs = as_lr_sequence(lrs)
    tau = _check_tau(lrs, tau)
    eta, total = _prefix(lrs, tau, inert_tail)
    n = eta.size
    eps = _floor(float(lrs.max()), n)
    if n > 1:
        suf = np.maximum(_suffix_sums(eta)[1:], eps)
        terms = eta[:-1] ** 2 / suf
        if not np.all(np.isfinite(terms)):
            bad = int(np.flatnonzero(~np.isfinite(terms))[0]) + 1
            raise SingularityError(f"suffix sum underflow at k={bad}", k=bad)
        var = float(terms.sum())
    else:
        var = 0.0
    var += float(eta[-1])
    return coeffs.L_star + coeffs.D**2 / (2 * total) + 0.5 * coeffs.G**2 * var


def _threads(workers: int | None) -> int:
    if workers is not None:
        return max(1, int(workers))
    try:
        return max(1, int(os.environ.get("SCHEDLAW_THREADS", "1")))
    except ValueError:
        return 1


def bound_trace(
    coeffs: BoundCoefficients,
    lrs,
    grid,
    kind: BoundKind | str = BoundKind.LAST_ITERATE,
    *,
    inert_tail: bool = True,
    workers: int | None = None,
) -> BoundTrace:
    """Evaluate a bound at every ``tau`` in ``grid``.

    Each grid point is computed independently, so the result does not depend
    on ``workers`` (default: ``SCHEDLAW_THREADS`` or 1).
    """
    lrs = as_lr_sequence(lrs)
    kind = BoundKind(kind)
    grid = np.asarray(grid)
    if grid.ndim != 1 or grid.size == 0:
        raise ValidationError("grid: expected a non-empty 1-D array of steps")
    if not np.all(grid == np.round(grid)):
        raise ValidationError("grid: steps must be integers")
    grid = grid.astype(np.int64)
    if np.any(np.diff(grid) <= 0):
        raise ValidationError("grid: must be strictly increasing")
    if grid[0] < 1 or grid[-1] > lrs.size:
        raise DomainError(f"grid: steps must lie in [1, {lrs.size}]")

    def one(tau):
        try:
            if kind is BoundKind.AVERAGED_ITERATE:
                return bound_averaged(coeffs, lrs, int(tau))
            return bound_last(coeffs, lrs, int(tau), inert_tail=inert_tail)
        except NumericError as exc:
            err = type(exc)(f"tau={int(tau)}: {exc}")
            err.tau = int(tau)
            raise err from exc

    n = _threads(workers)
    if n == 1:
        values = [one(t) for t in grid]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            values = list(pool.map(one, grid))
    return BoundTrace(tau_grid=grid, values=np.asarray(values, dtype=float), kind=kind)


def log_tau_grid(T: int, n: int = 1000) -> np.ndarray:
    """Up to ``n`` log-spaced integer steps in ``[1, T]``, always including ``T``."""
    if T < 1 or n < 1:
        raise ValidationError("log_tau_grid: T and n must be >= 1")
    grid = np.unique(np.round(np.geomspace(1, T, n)).astype(np.int64))
    if grid[-1] != T:
        grid = np.append(grid, T)
    return grid


# --------------------------------------------------------------------------
# closed forms


def _wsd_factor(c: float) -> float:
    return 1.0 + 0.5 * math.log((1.0 + c) / (1.0 - c))


def _need_c(kind: ScheduleKind, c):
    if kind is ScheduleKind.WSD and (c is None or not 0 < c < 1):
        raise ValidationError(f"c: WSD requires 0 < c < 1, got {c!r}")


_FORMULAS = {
    ScheduleKind.CONSTANT: "L_* + D^2/(2 T eta_peak) + (eta_peak G^2/2) ln T",
    ScheduleKind.SQRT_INVERSE: "L_* + D^2/(4 sqrt(T) eta_peak) + eta_peak G^2 ln T/(4 sqrt(T))",
    ScheduleKind.LINEAR_DECAY: "L_* + D^2/(T eta_peak) + eta_peak G^2",
    ScheduleKind.COSINE_DECAY: "L_* + D^2/(T eta_peak) + eta_peak G^2 * 1.061",
    ScheduleKind.WSD: "L_* + D^2/((1+c) T eta_peak) + eta_peak G^2 [1 + 1/2 ln((1+c)/(1-c))]",
}


def closed_form_formula(kind) -> str:
    kind = ScheduleKind.parse(kind)
    if kind not in _FORMULAS:
        raise NotDerivedError(f"no closed-form bound for {kind.value}")
    return _FORMULAS[kind]


def _closed_form_parts(kind: ScheduleKind, T: float, c: float | None) -> tuple[float, float]:
    """``(a, b)`` such that the closed-form bound is ``L* + a D^2/eta + b eta G^2``."""
    if kind is ScheduleKind.CONSTANT:
        return 1.0 / (2.0 * T), 0.5 * math.log(T)
    if kind is ScheduleKind.SQRT_INVERSE:
        r = math.sqrt(T)
        return 1.0 / (4.0 * r), math.log(T) / (4.0 * r)
    if kind is ScheduleKind.LINEAR_DECAY:
        return 1.0 / T, 1.0
    if kind is ScheduleKind.COSINE_DECAY:
        return 1.0 / T, COSINE_COEFFICIENT
    if kind is ScheduleKind.WSD:
        return 1.0 / ((1.0 + c) * T), _wsd_factor(c)
    raise NotDerivedError(f"no closed-form bound for {kind.value}")


def closed_form_bound(kind, coeffs: BoundCoefficients, eta_peak: float, T: int, c: float | None = None) -> float:
    """Asymptotic last-iterate bound of a schedule family, as printed."""
    kind = ScheduleKind.parse(kind)
    if kind not in DERIVED_KINDS:
        raise NotDerivedError(f"no closed-form bound for {kind.value}")
    _need_c(kind, c)
    if not eta_peak > 0:
        raise DomainError(f"eta_peak: must be positive, got {eta_peak!r}")
    if T < 2:
        raise DomainError(f"T: closed forms need T >= 2, got {T!r}")
    a, b = _closed_form_parts(kind, T, c)
    return coeffs.L_star + a * coeffs.D**2 / eta_peak + b * eta_peak * coeffs.G**2


def _check_nondegenerate(coeffs: BoundCoefficients):
    if coeffs.D <= 0 or coeffs.G <= 0:
        raise DomainError("optimal peak learning rate needs D > 0 and G > 0 (the bound is monotone in eta otherwise)")


def optimal_peak_lr(
    kind,
    coeffs: BoundCoefficients,
    T: int,
    *,
    c: float | None = None,
    cycles: int | None = None,
    warmup_frac: float = 0.0,
    numeric: bool = False,
) -> tuple[float, float]:
    """Minimizer and minimum of the bound over the peak learning rate.

    Closed-form kinds use ``eta* = sqrt(a/b) D/G`` and
    ``bound* = L* + 2 D G sqrt(a b)``.  Cyclic schedules, warmup, or
    ``numeric=True`` fall back to :func:`numeric_optimal_peak_lr`.
    """
    kind = ScheduleKind.parse(kind)
    _check_nondegenerate(coeffs)
    if T < 2:
        raise DomainError(f"T: need T >= 2, got {T!r}")
    if numeric or kind not in DERIVED_KINDS or warmup_frac > 0:
        spec = ScheduleSpec(kind, 1.0, T, c=c, warmup_frac=warmup_frac, cycles=cycles)
        return numeric_optimal_peak_lr(spec, coeffs)
    _need_c(kind, c)
    a, b = _closed_form_parts(kind, T, c)
    eta = math.sqrt(a / b) * coeffs.D / coeffs.G
    return eta, coeffs.L_star + 2.0 * coeffs.D * coeffs.G * math.sqrt(a * b)


def numeric_optimal_peak_lr(
    spec: ScheduleSpec,
    coeffs: BoundCoefficients,
    tau: int | None = None,
    n_grid: int = 200,
    span: tuple[float, float] = (1e-6, 1e2),
) -> tuple[float, float]:
    """Minimize ``bound_last`` at ``tau`` (default ``T``) over the peak learning rate.

    A geometric grid of ``n_grid`` points spanning ``span * (D/G)/sqrt(T)`` is
    scanned, then the best bracket is refined by golden-section search in
    ``log(eta)``.  ``spec.eta_peak`` is ignored.
    """
    _check_nondegenerate(coeffs)
    T = spec.T
    tau = T if tau is None else tau
    unit = eval_discrete(spec.with_horizon(T, 1.0))
    scale = coeffs.D / coeffs.G / math.sqrt(T)
    etas = scale * np.geomspace(span[0], span[1], n_grid)

    def f(log_eta):
        return bound_last(coeffs, math.exp(log_eta) * unit, tau)

    logs = np.log(etas)
    vals = np.array([f(v) for v in logs])
    i = int(np.argmin(vals))
    if i == 0 or i == n_grid - 1:
        raise NumericError(f"bound minimum lies on the edge of the eta grid (eta={etas[i]:.3g})")
    res = optimize.minimize_scalar(
        f, bracket=(logs[i - 1], logs[i], logs[i + 1]), method="golden", tol=1e-10
    )
    if res.fun <= vals[i]:
        return float(math.exp(res.x)), float(res.fun)
    return float(etas[i]), float(vals[i])


# --------------------------------------------------------------------------
# cosine constant

_COSINE_SPLIT = 1e-4
# Leading behaviour of the integrand as u = 1 - x -> 0: (144/160) pi^2 u.
_COSINE_TAIL_SLOPE = 0.9 * math.pi**2


def cosine_integrand(x: float) -> float:
    """Integrand whose integral over ``[0, 1]`` gives the cosine constant.

    ``(1 + cos pi x) B(x) / A(x)^2`` with ``A`` and ``B`` the normalized
    suffix integrals of ``s`` and ``s^2``; evaluated in ``u = 1 - x`` to avoid
    cancellation.
    """
    u = 1.0 - x
    if u <= 0:
        return 0.0
    z = math.pi * u
    one_plus_cos = 2.0 * math.sin(0.5 * z) ** 2
    a = z_minus_sin(z) / (2.0 * math.pi)
    b = cosine_sq_tail(z) / (16.0 * math.pi)
    return one_plus_cos * b / (a * a)


def cosine_integral_constant(tol: float = 1e-6) -> float:
    """Numerically integrate :func:`cosine_integrand` over ``[0, 1]`` (about 2.7443).

    The last ``1e-4`` of the interval uses the analytic linear limit of the
    integrand; ``3/8 + value/4`` reproduces the 1.061 cosine coefficient.
    """
    body = adaptive_simpson(cosine_integrand, 0.0, 1.0 - _COSINE_SPLIT, tol=tol)
    tail = 0.5 * _COSINE_TAIL_SLOPE * _COSINE_SPLIT**2
    return body + tail
