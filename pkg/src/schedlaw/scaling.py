"""Horizon scaling law: ``loss(T) ~ L_inf + Q(eta_ref) / sqrt(T)``.

With the peak learning rate set to ``eta_ref / sqrt(T)`` the loss gap of a
qualified schedule is ``Q(eta_ref) / sqrt(T)`` where
``Q(eta_ref) = q1^2 / eta_ref + eta_ref * q2^2`` is minimized at
``eta_ref = q1 / q2`` with value ``2 q1 q2``.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import DomainError, InsufficientDataError, ValidationError

__all__ = [
    "RunRecord",
    "QCurve",
    "LineFit",
    "ScalingFit",
    "ExtrapolationWarning",
    "DEFAULT_T_MIN",
    "q_curve",
    "fit_q_curve",
    "fit_sqrtT_line",
    "select_eta_ref",
    "fit_scaling",
    "transfer_lr",
    "flops_to_tokens",
    "tokens_to_steps",
    "predict_loss",
    "prediction_table_csv",
    "read_records_csv",
]


def _default_t_min() -> int:
    # Smallest T with 1/sqrt(T) < 0.02.
    return int(math.floor(1.0 / 0.02**2)) + 1


DEFAULT_T_MIN = _default_t_min()


class ExtrapolationWarning(UserWarning):
    """Learning rate transferred toward a shorter horizon than it was tuned on."""


@dataclass(frozen=True)
class RunRecord:
    final_loss: float
    T: int | None = None
    tokens: float | None = None
    batch_size: int | None = None
    model_size: float | None = None
    eta_ref: float | None = None
    eta_peak: float | None = None

    def __post_init__(self):
        if self.T is None and self.tokens is None:
            raise ValidationError("RunRecord: one of T or tokens is required")
        if self.T is not None and self.tokens is not None:
            if self.batch_size is None or not math.isclose(self.tokens, self.batch_size * self.T, rel_tol=1e-12):
                raise ValidationError("RunRecord: tokens must equal batch_size * T when both are given")
        if not math.isfinite(self.final_loss) or self.final_loss < 0:
            raise ValidationError(f"final_loss: must be finite and non-negative, got {self.final_loss!r}")
        horizon = self.T if self.T is not None else self.tokens
        if horizon is None or horizon <= 0:
            raise ValidationError("RunRecord: horizon must be positive")

    @property
    def unit(self) -> str:
        return "steps" if self.T is not None else "tokens"

    @property
    def horizon(self) -> float:
        return float(self.T if self.T is not None else self.tokens)


@dataclass(frozen=True)
class QCurve:
    q1: float
    q2: float

    def __post_init__(self):
        if not (self.q1 > 0 and self.q2 > 0):
            raise ValidationError("QCurve: q1 and q2 must be positive")

    def __call__(self, eta_ref):
        return q_curve(self.q1, self.q2, eta_ref)

    @property
    def eta_ref_star(self) -> float:
        return self.q1 / self.q2

    @property
    def Q_star(self) -> float:
        return 2.0 * self.q1 * self.q2


@dataclass
class LineFit:
    L_inf: float
    Q: float
    r2: float
    points_used: int
    points_excluded: int = 0
    unit: str = "steps"


@dataclass
class ScalingFit:
    per_eta_ref: dict[float, LineFit]
    eta_ref_star: float
    Q_star: float
    L_inf_star: float
    T_min_cutoff: float
    unit: str = "steps"
    q_curve: QCurve | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "per_eta_ref": {
                repr(float(k)): {"L_inf": v.L_inf, "Q": v.Q, "r2": v.r2, "points_used": v.points_used}
                for k, v in sorted(self.per_eta_ref.items())
            },
            "eta_ref_star": self.eta_ref_star,
            "Q_star": self.Q_star,
            "L_inf_star": self.L_inf_star,
            "T_min_cutoff": self.T_min_cutoff,
            "unit": self.unit,
            "q1": None if self.q_curve is None else self.q_curve.q1,
            "q2": None if self.q_curve is None else self.q_curve.q2,
        }


def q_curve(q1: float, q2: float, eta_ref):
    """``q1^2 / eta_ref + eta_ref * q2^2``."""
    eta = np.asarray(eta_ref, dtype=float)
    if np.any(~(eta > 0)):
        raise DomainError(f"eta_ref: must be positive, got {eta_ref!r}")
    if not (q1 > 0 and q2 > 0):
        raise DomainError("q1, q2: must be positive")
    out = q1 * q1 / eta + eta * q2 * q2
    return float(out) if out.ndim == 0 else out


def fit_sqrtT_line(records, T_min_cutoff: float | None = None) -> LineFit:
    """Least-squares line ``final_loss = L_inf + Q / sqrt(horizon)``.

    Records below ``T_min_cutoff`` (default: first horizon with
    ``1/sqrt(T) < 0.02``) are excluded; the intercept is constrained to be
    non-negative.  All records must share one horizon unit.
    """
    records = list(records)
    units = {r.unit for r in records}
    if len(units) > 1:
        raise ValidationError("records: mixing step- and token-denominated horizons in one fit")
    cutoff = DEFAULT_T_MIN if T_min_cutoff is None else T_min_cutoff
    kept = [r for r in records if r.horizon >= cutoff]
    horizons = np.array([r.horizon for r in kept])
    if len(kept) < 3 or np.unique(horizons).size < 3:
        raise InsufficientDataError(
            f"need at least 3 records with distinct horizons >= {cutoff:g}, got {len(kept)}"
        )
    x = 1.0 / np.sqrt(horizons)
    y = np.array([r.final_loss for r in kept])
    A = np.column_stack([np.ones_like(x), x])
    (L_inf, Q), *_ = np.linalg.lstsq(A, y, rcond=None)
    if L_inf < 0:
        # Constrained optimum sits on the boundary: regression through the origin.
        L_inf = 0.0
        Q = float(x @ y / (x @ x))
    pred = L_inf + Q * x
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return LineFit(
        L_inf=float(L_inf),
        Q=float(Q),
        r2=r2,
        points_used=len(kept),
        points_excluded=len(records) - len(kept),
        unit=units.pop() if units else "steps",
    )


def fit_q_curve(eta_refs, Qs) -> QCurve:
    """Least-squares ``QCurve`` through ``(eta_ref, Q)`` pairs in log space.

    Initialized from the linear problem ``eta Q = q1^2 + q2^2 eta^2``.
    """
    eta = np.asarray(eta_refs, dtype=float)
    Q = np.asarray(Qs, dtype=float)
    if np.unique(eta).size < 3:
        raise InsufficientDataError("QCurve interpolation needs at least 3 distinct eta_ref values")
    if np.any(eta <= 0) or np.any(Q <= 0):
        raise DomainError("eta_ref and Q must be positive for log-space fitting")
    A = np.column_stack([np.ones_like(eta), eta**2])
    (a, b), *_ = np.linalg.lstsq(A, eta * Q, rcond=None)
    scale = float(np.median(eta * Q))
    a = a if a > 0 else 1e-6 * scale
    b = b if b > 0 else 1e-6 * scale / float(np.median(eta**2))
    p0 = np.log([math.sqrt(a), math.sqrt(b)])

    def resid(p):
        q1, q2 = np.exp(p)
        return np.log(q1 * q1 / eta + eta * q2 * q2) - np.log(Q)

    sol = optimize.least_squares(resid, p0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    q1, q2 = np.exp(sol.x)
    return QCurve(float(q1), float(q2))


def select_eta_ref(fits: dict, interpolate: bool = False) -> tuple[float, float]:
    """Pick the reference learning rate minimizing ``Q``.

    ``fits`` maps ``eta_ref`` to either a ``Q`` value or a :class:`LineFit`.
    Grid mode breaks ties toward the smaller ``eta_ref``.
    """
    if len(fits) < 2:
        raise InsufficientDataError(f"need at least 2 eta_ref entries, got {len(fits)}")
    items = sorted((float(k), float(v.Q if isinstance(v, LineFit) else v)) for k, v in fits.items())
    if interpolate:
        curve = fit_q_curve([k for k, _ in items], [q for _, q in items])
        return curve.eta_ref_star, curve.Q_star
    best = min(items, key=lambda kv: (kv[1], kv[0]))
    return best


def fit_scaling(
    records,
    T_min_cutoff: float | None = None,
    interpolate: bool = False,
) -> ScalingFit:
    """Per-``eta_ref`` line fits plus the selected optimum."""
    records = list(records)
    if any(r.eta_ref is None for r in records):
        raise ValidationError("records: every record needs eta_ref for a scaling fit")
    units = {r.unit for r in records}
    if len(units) > 1:
        raise ValidationError("records: mixing step- and token-denominated horizons in one fit")
    groups: dict[float, list[RunRecord]] = {}
    for r in records:
        groups.setdefault(float(r.eta_ref), []).append(r)
    per = {k: fit_sqrtT_line(v, T_min_cutoff) for k, v in sorted(groups.items())}
    notes = []
    curve = None
    if len(per) == 1:
        (eta_star, line), = per.items()
        Q_star = line.Q
        notes.append("single eta_ref: no selection performed")
    else:
        eta_star, Q_star = select_eta_ref(per, interpolate=interpolate)
        if interpolate:
            curve = fit_q_curve(list(per), [v.Q for v in per.values()])
    if eta_star in per:
        L_star = per[eta_star].L_inf
    else:
        # Interpolated optimum: intercept of the nearest grid point in log space.
        nearest = min(per, key=lambda k: abs(math.log(k) - math.log(eta_star)))
        L_star = per[nearest].L_inf
        notes.append(f"L_inf taken from nearest grid eta_ref={nearest!r}")
    return ScalingFit(
        per_eta_ref=per,
        eta_ref_star=float(eta_star),
        Q_star=float(Q_star),
        L_inf_star=float(L_star),
        T_min_cutoff=DEFAULT_T_MIN if T_min_cutoff is None else T_min_cutoff,
        unit=units.pop(),
        q_curve=curve,
        notes=notes,
    )


def transfer_lr(eta_peak_small: float, T_small: float, T_target: float) -> float:
    """``eta_peak_small / sqrt(T_target / T_small)``."""
    if not (eta_peak_small > 0 and T_small > 0 and T_target > 0):
        raise DomainError("transfer_lr: all arguments must be positive")
    if T_target < T_small:
        warnings.warn(
            f"transferring to a shorter horizon ({T_target:g} < {T_small:g})", ExtrapolationWarning, stacklevel=2
        )
    return eta_peak_small / math.sqrt(T_target / T_small)


def flops_to_tokens(flops: float, model_size: float) -> float:
    """Training tokens from ``FLOPs ~ 6 * tokens * model_size``."""
    if not (flops > 0 and model_size > 0):
        raise DomainError("flops and model_size must be positive")
    return flops / (6.0 * model_size)


def tokens_to_steps(tokens: float, batch_size: float) -> float:
    if not (tokens > 0 and batch_size > 0):
        raise DomainError("tokens and batch_size must be positive")
    return tokens / batch_size


def predict_loss(fit: ScalingFit, T_target: float) -> float:
    if not T_target >= 1:
        raise DomainError(f"T_target: must be >= 1, got {T_target!r}")
    return fit.L_inf_star + fit.Q_star / math.sqrt(T_target)


def prediction_table_csv(fit: ScalingFit, horizons) -> str:
    buf = io.StringIO()
    buf.write("T,predicted_loss\n")
    for T in horizons:
        buf.write(f"{T:g},{predict_loss(fit, T)!r}\n")
    return buf.getvalue()


# --------------------------------------------------------------------------
# CSV: eta_ref,T_or_tokens,unit,final_loss[,batch_size][,model_size]


def read_records_csv(text: str) -> list[RunRecord]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip().lower() for h in next(reader)]
    except StopIteration:
        raise ValidationError("records CSV: empty file") from None
    required = ("eta_ref", "t_or_tokens", "unit", "final_loss")
    for col in required:
        if col not in header:
            raise ValidationError(f"records CSV: missing column '{col}'")
    idx = {h: i for i, h in enumerate(header)}
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue

        def opt(name, cast):
            i = idx.get(name)
            if i is None or i >= len(row) or not row[i].strip():
                return None
            return cast(float(row[i]))

        try:
            eta_ref = float(row[idx["eta_ref"]]) if row[idx["eta_ref"]].strip() else None
            horizon = float(row[idx["t_or_tokens"]])
            unit = row[idx["unit"]].strip().lower()
            loss = float(row[idx["final_loss"]])
            batch = opt("batch_size", int)
            size = opt("model_size", float)
        except (ValueError, IndexError):
            raise ValidationError(f"records CSV: cannot parse line {lineno}: {','.join(row)!r}") from None
        if unit in ("steps", "step", "iterations", "t"):
            if not float(horizon).is_integer():
                raise ValidationError(f"records CSV: line {lineno}: step horizon must be an integer")
            rec = RunRecord(final_loss=loss, T=int(horizon), batch_size=batch, model_size=size, eta_ref=eta_ref)
        elif unit in ("tokens", "token"):
            rec = RunRecord(final_loss=loss, tokens=horizon, batch_size=batch, model_size=size, eta_ref=eta_ref)
        else:
            raise ValidationError(f"records CSV: line {lineno}: unit must be 'steps' or 'tokens', got {unit!r}")
        out.append(rec)
    if not out:
        raise ValidationError("records CSV: no data rows")
    return out
