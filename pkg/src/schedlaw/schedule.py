"""Learning-rate schedule families.

A schedule is a multiplier ``s_t(T)`` in ``[0, 1]`` scaled by a peak learning
rate, so that ``eta_t = eta_peak * s_t(T)``.  Discrete values are indexed
``t = 1..T`` (``eta_t`` is the step size used to produce ``w_t``); the
continuous extension lives on ``[0, T]`` and uses the same formulas.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Any

import numpy as np

from .errors import DomainError, ValidationError

__all__ = [
    "ScheduleKind",
    "ScheduleSpec",
    "eval_discrete",
    "eval_continuous",
    "as_lr_sequence",
    "lr_sequence_to_csv",
]


class ScheduleKind(str, enum.Enum):
    CONSTANT = "constant"
    SQRT_INVERSE = "sqrt_inverse"
    LINEAR_DECAY = "linear_decay"
    COSINE_DECAY = "cosine_decay"
    WSD = "wsd"
    CYCLIC = "cyclic"

    @classmethod
    def parse(cls, value: "str | ScheduleKind") -> "ScheduleKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {
            "const": "constant",
            "sqrtinverse": "sqrt_inverse",
            "sqrt_inv": "sqrt_inverse",
            "inverse_sqrt": "sqrt_inverse",
            "lineardecay": "linear_decay",
            "linear": "linear_decay",
            "cosinedecay": "cosine_decay",
            "cosine": "cosine_decay",
            "warmup_stable_decay": "wsd",
        }
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ValidationError(f"kind: unknown schedule kind {value!r} (expected one of {choices})") from None


# Kinds with a closed-form last-iterate bound.
DERIVED_KINDS = (
    ScheduleKind.CONSTANT,
    ScheduleKind.SQRT_INVERSE,
    ScheduleKind.LINEAR_DECAY,
    ScheduleKind.COSINE_DECAY,
    ScheduleKind.WSD,
)


@dataclass(frozen=True)
class ScheduleSpec:
    """Immutable description of a learning-rate schedule.

    Parameters
    ----------
    kind:
        Schedule family.
    eta_peak:
        Peak learning rate (must be positive).
    T:
        Horizon in iterations.
    c:
        Fraction of the horizon spent in the stable phase; WSD only.
    warmup_frac:
        Fraction of ``T`` spent in a linear warmup from zero.  The base
        schedule is evaluated on the remaining sub-horizon.
    cycles:
        Number of triangular cycles; Cyclic only.
    """

    kind: ScheduleKind
    eta_peak: float
    T: int
    c: float | None = None
    warmup_frac: float = 0.0
    cycles: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ScheduleKind.parse(self.kind))
        eta = self.eta_peak
        if isinstance(eta, bool) or not isinstance(eta, (int, float, np.floating, np.integer)):
            raise ValidationError(f"eta_peak: expected a number, got {eta!r}")
        if not math.isfinite(eta) or eta <= 0:
            raise ValidationError(f"eta_peak: must be positive and finite, got {eta!r}")
        object.__setattr__(self, "eta_peak", float(eta))
        if isinstance(self.T, bool) or not isinstance(self.T, (int, np.integer)) or self.T < 1:
            raise ValidationError(f"T: must be an integer >= 1, got {self.T!r}")
        object.__setattr__(self, "T", int(self.T))
        if self.kind is ScheduleKind.WSD:
            if self.c is None or not (0.0 < float(self.c) < 1.0):
                raise ValidationError(f"c: WSD requires 0 < c < 1, got {self.c!r}")
            object.__setattr__(self, "c", float(self.c))
        elif self.c is not None:
            raise ValidationError(f"c: only valid for WSD, not {self.kind.value}")
        wf = float(self.warmup_frac)
        if not (0.0 <= wf < 1.0):
            raise ValidationError(f"warmup_frac: must lie in [0, 1), got {self.warmup_frac!r}")
        object.__setattr__(self, "warmup_frac", wf)
        if wf > 0 and self.warmup_steps >= self.T:
            raise ValidationError(f"warmup_frac: warmup of {self.warmup_steps} steps leaves no room in T={self.T}")
        if self.kind is ScheduleKind.CYCLIC:
            if isinstance(self.cycles, bool) or not isinstance(self.cycles, (int, np.integer)) or self.cycles < 1:
                raise ValidationError(f"cycles: Cyclic requires a positive integer, got {self.cycles!r}")
            object.__setattr__(self, "cycles", int(self.cycles))
        elif self.cycles is not None:
            raise ValidationError(f"cycles: only valid for cyclic, not {self.kind.value}")

    @property
    def warmup_steps(self) -> int:
        return math.ceil(self.warmup_frac * self.T) if self.warmup_frac > 0 else 0

    def with_horizon(self, T: int, eta_peak: float | None = None) -> "ScheduleSpec":
        return replace(self, T=T, eta_peak=self.eta_peak if eta_peak is None else eta_peak)

    # serialization -------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value, "eta_peak": self.eta_peak, "T": self.T}
        if self.c is not None:
            out["c"] = self.c
        if self.warmup_frac:
            out["warmup_frac"] = self.warmup_frac
        if self.cycles is not None:
            out["cycles"] = self.cycles
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScheduleSpec":
        if not isinstance(data, dict):
            raise ValidationError("schedule: expected a JSON object")
        known = {"kind", "eta_peak", "T", "c", "warmup_frac", "cycles"}
        extra = set(data) - known
        if extra:
            raise ValidationError(f"schedule: unknown field(s) {sorted(extra)}")
        for field in ("kind", "eta_peak", "T"):
            if field not in data:
                raise ValidationError(f"{field}: missing from schedule spec")
        T = data["T"]
        if isinstance(T, float) and T.is_integer():
            T = int(T)
        return cls(
            kind=data["kind"],
            eta_peak=data["eta_peak"],
            T=T,
            c=data.get("c"),
            warmup_frac=data.get("warmup_frac", 0.0),
            cycles=data.get("cycles"),
        )

    @classmethod
    def from_json(cls, text: str) -> "ScheduleSpec":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"schedule: invalid JSON ({exc})") from None
        return cls.from_dict(data)

    def __repr__(self) -> str:
        return f"ScheduleSpec({asdict(self)})"


def _base_multiplier(kind: ScheduleKind, t, T: float, c: float | None, cycles: int | None):
    """Base schedule ``s_t(T)`` without warmup, vectorized over ``t``."""
    t = np.asarray(t, dtype=float)
    if kind is ScheduleKind.CONSTANT:
        return np.ones_like(t)
    if kind is ScheduleKind.SQRT_INVERSE:
        return 1.0 / np.sqrt(t + 1.0)
    if kind is ScheduleKind.LINEAR_DECAY:
        return np.clip(1.0 - t / T, 0.0, 1.0)
    if kind is ScheduleKind.COSINE_DECAY:
        return 0.5 * (1.0 + np.cos(np.pi * t / T))
    if kind is ScheduleKind.WSD:
        stable = c * T
        return np.where(t < stable, 1.0, np.clip((T - t) / (T - stable), 0.0, 1.0))
    if kind is ScheduleKind.CYCLIC:
        period = T / cycles
        phase = np.mod(t, period) / period
        # t == T lands on phase 0 of a new cycle, which is the intended endpoint anyway.
        return 1.0 - np.abs(2.0 * phase - 1.0)
    raise ValidationError(f"kind: unsupported {kind!r}")


def _multiplier(spec: ScheduleSpec, t):
    t = np.asarray(t, dtype=float)
    W = spec.warmup_steps
    if W == 0:
        return _base_multiplier(spec.kind, t, spec.T, spec.c, spec.cycles)
    sub_T = spec.T - W
    ramp = t / W
    base = _base_multiplier(spec.kind, np.maximum(t - W, 0.0), sub_T, spec.c, spec.cycles)
    return np.where(t <= W, ramp, base)


def eval_discrete(spec: ScheduleSpec) -> np.ndarray:
    """Learning rates ``eta_1..eta_T`` as a float array of length ``T``."""
    t = np.arange(1, spec.T + 1, dtype=float)
    return spec.eta_peak * _multiplier(spec, t)


def eval_continuous(spec: ScheduleSpec, t):
    """Continuous extension ``eta(t)`` on ``[0, T]``; accepts scalars or arrays."""
    arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > spec.T):
        raise DomainError(f"t: must lie in [0, {spec.T}], got {t!r}")
    out = spec.eta_peak * _multiplier(spec, arr)
    return float(out) if np.ndim(out) == 0 else out


def as_lr_sequence(values) -> np.ndarray:
    """Validate and return a learning-rate sequence as a 1-D float array."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError("lrs: expected a non-empty 1-D sequence")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValidationError("lrs: entries must be finite and non-negative")
    if not np.any(arr > 0):
        raise ValidationError("lrs: at least one learning rate must be positive")
    return arr


def lr_sequence_to_csv(lrs) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step", "lr"])
    for i, v in enumerate(np.asarray(lrs, dtype=float), start=1):
        writer.writerow([i, repr(float(v))])
    return buf.getvalue()
