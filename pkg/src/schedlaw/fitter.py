"""Recover bound coefficients from an observed loss trace.

The last-iterate bound is linear in ``(L_inf, D^2, G^2)``:

    loss(tau) ~ L_inf + D^2 * x1(tau) + G^2 * x2(tau)

so the coefficients follow from a non-negative least-squares fit against the
design rows ``(x1, x2)`` built from the learning-rate sequence.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bounds import _features
from .errors import InsufficientDataError, SplitError, ValidationError
from .nnls import nnls
from .schedule import ScheduleSpec, as_lr_sequence, eval_discrete

__all__ = [
    "CollinearityWarning",
    "LossTrace",
    "FitReport",
    "smooth",
    "default_window",
    "r2_score",
    "build_design",
    "nnls_fit",
    "fit_predict",
    "read_trace_csv",
    "trace_to_csv",
]


class CollinearityWarning(RuntimeWarning):
    """The scaled design matrix is rank deficient."""


@dataclass
class LossTrace:
    steps: np.ndarray
    losses: np.ndarray
    lrs: np.ndarray | None = None
    smoothing_window: int | None = None

    def __post_init__(self):
        steps = np.asarray(self.steps)
        if steps.ndim != 1 or not np.all(steps == np.round(steps)):
            raise ValidationError("steps: expected a 1-D array of integers")
        self.steps = steps.astype(np.int64)
        self.losses = np.asarray(self.losses, dtype=float)
        if self.losses.shape != self.steps.shape:
            raise ValidationError("losses: must have the same length as steps")
        if np.any(np.diff(self.steps) <= 0):
            raise ValidationError("steps: must be strictly increasing")
        if not np.all(np.isfinite(self.losses)):
            raise ValidationError("losses: must be finite")
        if self.lrs is not None:
            self.lrs = np.asarray(self.lrs, dtype=float)
            if self.lrs.shape != self.steps.shape:
                raise ValidationError("lrs: must have one entry per logged step")
        if self.smoothing_window is not None and int(self.smoothing_window) < 1:
            raise ValidationError("smoothing_window: must be >= 1")

    def __len__(self):
        return self.steps.size

    @property
    def window(self) -> int:
        return default_window(len(self)) if self.smoothing_window is None else int(self.smoothing_window)


@dataclass
class FitReport:
    L_inf: float
    D_tilde: float
    G_tilde: float
    r2_fit: float
    r2_predict: float
    split_step: int | None
    residuals: np.ndarray
    r2_fit_raw: float = float("nan")
    r2_predict_raw: float = float("nan")
    kkt_residual: float = 0.0
    collinear: bool = False
    n_fit: int = 0
    n_predict: int = 0
    notes: list[str] = field(default_factory=list)

    def predict(self, design: np.ndarray) -> np.ndarray:
        design = np.atleast_2d(design)
        return self.L_inf + self.D_tilde**2 * design[:, 0] + self.G_tilde**2 * design[:, 1]

    def to_dict(self) -> dict:
        return {
            "L_inf": self.L_inf,
            "D": self.D_tilde,
            "G": self.G_tilde,
            "r2_fit": self.r2_fit,
            "r2_predict": self.r2_predict,
            "r2_fit_raw": self.r2_fit_raw,
            "r2_predict_raw": self.r2_predict_raw,
            "split_step": self.split_step,
            "kkt_residual": self.kkt_residual,
            "collinear": self.collinear,
            "n_fit": self.n_fit,
            "n_predict": self.n_predict,
        }


def default_window(n: int) -> int:
    return max(1, n // 200)


def smooth(values, window: int) -> np.ndarray:
    """Centered moving average; the window shrinks symmetrically at the edges."""
    y = np.asarray(values, dtype=float)
    window = int(window)
    if window <= 1 or y.size == 0:
        return y.copy()
    half = window // 2
    csum = np.concatenate([[0.0], np.cumsum(y)])
    idx = np.arange(y.size)
    reach = np.minimum(np.minimum(idx, y.size - 1 - idx), half)
    lo = idx - reach
    hi = idx + reach + 1
    return (csum[hi] - csum[lo]) / (hi - lo)


def r2_score(y, pred) -> float:
    """Coefficient of determination; a zero-variance target scores 1 only when matched exactly."""
    y = np.asarray(y, dtype=float)
    pred = np.asarray(pred, dtype=float)
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res <= 1e-24 * max(1.0, float(np.sum(y * y))) else 0.0
    return 1.0 - ss_res / ss_tot


def build_design(lrs, tau_grid) -> np.ndarray:
    """Design matrix with one ``(x1, x2)`` row per ``tau`` in ``tau_grid``."""
    lrs = as_lr_sequence(lrs)
    grid = np.asarray(tau_grid)
    if grid.ndim != 1 or grid.size == 0:
        raise ValidationError("tau_grid: expected a non-empty 1-D array")
    if grid.min() < 1 or grid.max() > lrs.size:
        raise ValidationError(f"tau_grid: steps must lie in [1, {lrs.size}]")
    if not np.all(grid == np.round(grid)):
        raise ValidationError("tau_grid: steps must be integers")
    peak = float(lrs.max())
    return np.array([_features(lrs, int(t), True, peak) for t in grid], dtype=float)


def nnls_fit(rows, losses) -> FitReport:
    """Fit ``losses ~ L_inf + D^2 x1 + G^2 x2`` with all three coefficients >= 0.

    Columns are scaled to unit max before solving.  A rank-deficient design
    emits :class:`CollinearityWarning`; the solve then uses minimum-norm
    sub-problem solutions and the report is flagged ``collinear``.
    """
    X = np.asarray(rows, dtype=float)
    y = np.asarray(losses, dtype=float)
    if X.ndim != 2 or X.shape[1] != 2:
        raise ValidationError("rows: expected an (n, 2) design matrix")
    if X.shape[0] != y.size:
        raise ValidationError("losses: must align with design rows")
    if X.shape[0] < 3:
        raise InsufficientDataError(f"need at least 3 rows to fit, got {X.shape[0]}")
    A = np.column_stack([np.ones(X.shape[0]), X])
    scale = np.abs(A).max(axis=0)
    scale[scale == 0] = 1.0
    As = A / scale
    collinear = np.linalg.matrix_rank(As) < As.shape[1]
    if collinear:
        warnings.warn("design matrix is rank deficient; using minimum-norm solution", CollinearityWarning, stacklevel=2)
    res = nnls(As, y)
    coef = res.x / scale
    L_inf, d2, g2 = (float(v) for v in coef)
    pred = A @ coef
    resid = y - pred
    return FitReport(
        L_inf=L_inf,
        D_tilde=math.sqrt(d2),
        G_tilde=math.sqrt(g2),
        r2_fit=r2_score(y, pred),
        r2_predict=float("nan"),
        split_step=None,
        residuals=resid,
        kkt_residual=res.kkt,
        collinear=bool(collinear or res.rank_deficient),
        n_fit=int(y.size),
    )


def _resolve_lrs(trace: LossTrace, lrs, schedule: ScheduleSpec | None):
    """Return ``(full lr sequence, tau index per logged row)``."""
    if lrs is not None:
        full = as_lr_sequence(lrs)
        return full, trace.steps
    if schedule is not None:
        return eval_discrete(schedule), trace.steps
    if trace.lrs is not None:
        # Per-row learning rates: rows are consecutive optimizer steps, the
        # step labels only order them.
        full = as_lr_sequence(trace.lrs)
        return full, np.arange(1, len(trace) + 1)
    raise ValidationError("lrs: trace has no lr column; supply a schedule")


def fit_predict(
    trace: LossTrace,
    lrs=None,
    split_frac: float = 0.5,
    schedule: ScheduleSpec | None = None,
) -> FitReport:
    """Fit on the first ``split_frac`` of the horizon and score the rest.

    The learning rates come from ``lrs`` (full sequence), ``schedule``, or
    the trace's own lr column, in that order of preference.  Fitting uses
    the smoothed losses; R^2 is reported on smoothed (``r2_*``) and raw
    (``r2_*_raw``) targets.
    """
    if not 0.0 < split_frac < 1.0:
        raise ValidationError(f"split_frac: must lie in (0, 1), got {split_frac!r}")
    full, taus = _resolve_lrs(trace, lrs, schedule)
    keep = taus >= 1
    notes = []
    if not keep.all():
        notes.append(f"dropped {int((~keep).sum())} row(s) logged before step 1")
    if taus[keep].size and taus[keep].max() > full.size:
        raise ValidationError(f"steps: trace runs past the learning-rate horizon T={full.size}")
    taus = taus[keep]
    raw = trace.losses[keep]
    smoothed = smooth(raw, trace.window)
    T = full.size
    split_step = int(math.floor(split_frac * T))
    fit_mask = taus <= split_step
    pred_mask = ~fit_mask
    if pred_mask.sum() < 3:
        raise SplitError(f"held-out segment has {int(pred_mask.sum())} point(s); need at least 3")
    if fit_mask.sum() < 3:
        raise SplitError(f"fit segment has {int(fit_mask.sum())} point(s); need at least 3")
    design = build_design(full, taus)
    report = nnls_fit(design[fit_mask], smoothed[fit_mask])
    pred = report.predict(design)
    report.split_step = split_step
    report.residuals = smoothed - pred
    report.r2_predict = r2_score(smoothed[pred_mask], pred[pred_mask])
    report.r2_fit_raw = r2_score(raw[fit_mask], pred[fit_mask])
    report.r2_predict_raw = r2_score(raw[pred_mask], pred[pred_mask])
    report.n_predict = int(pred_mask.sum())
    report.notes.extend(notes)
    return report


# --------------------------------------------------------------------------
# CSV


def read_trace_csv(text: str, smoothing_window: int | None = None) -> LossTrace:
    """Parse ``step,loss[,lr]`` CSV text (header required)."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip().lower() for h in next(reader)]
    except StopIteration:
        raise ValidationError("trace CSV: empty file") from None
    for col in ("step", "loss"):
        if col not in header:
            raise ValidationError(f"trace CSV: missing column '{col}'")
    i_step, i_loss = header.index("step"), header.index("loss")
    i_lr = header.index("lr") if "lr" in header else None
    steps, losses, lrs = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            steps.append(int(float(row[i_step])))
            losses.append(float(row[i_loss]))
            if i_lr is not None:
                lrs.append(float(row[i_lr]))
        except (ValueError, IndexError):
            raise ValidationError(f"trace CSV: cannot parse line {lineno}: {','.join(row)!r}") from None
    if not steps:
        raise ValidationError("trace CSV: no data rows")
    return LossTrace(
        steps=np.array(steps),
        losses=np.array(losses),
        lrs=np.array(lrs) if i_lr is not None else None,
        smoothing_window=smoothing_window,
    )


def trace_to_csv(trace: LossTrace) -> str:
    buf = io.StringIO()
    if trace.lrs is None:
        buf.write("step,loss\n")
        for s, v in zip(trace.steps, trace.losses):
            buf.write(f"{int(s)},{float(v)!r}\n")
    else:
        buf.write("step,loss,lr\n")
        for s, v, lr in zip(trace.steps, trace.losses, trace.lrs):
            buf.write(f"{int(s)},{float(v)!r},{float(lr)!r}\n")
    return buf.getvalue()
