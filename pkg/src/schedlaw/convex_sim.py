"""Seeded SGD on convex problems with exactly known ``D``, ``G`` and ``L*``.

Every built-in problem has ``L* = 0`` at ``w_star`` and a deterministic
subgradient of norm at most ``G - noise_scale``; adding noise drawn
uniformly from the ball of radius ``noise_scale`` keeps every stochastic
gradient inside the ``G`` ball without biasing it.  A projection onto the
``G`` ball is still applied as a guard and counted in the result.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .fitter import LossTrace

__all__ = [
    "ProblemKind",
    "ConvexProblem",
    "SimResult",
    "SweepResult",
    "make_problem",
    "sgd_run",
    "sgd_sweep",
]

_CHUNK = 4096


class ProblemKind(str, enum.Enum):
    L1_DISTANCE = "l1_distance"
    HUBER_QUADRATIC = "huber_quadratic"
    PIECEWISE_LINEAR_MAX = "piecewise_linear_max"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        key = {"l1distance": "l1_distance", "huberquadratic": "huber_quadratic",
               "piecewiselinearmax": "piecewise_linear_max", "l1": "l1_distance"}.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValidationError(f"problem: unknown kind {value!r}") from None


@dataclass(frozen=True)
class ConvexProblem:
    kind: ProblemKind
    w_star: np.ndarray
    w0: np.ndarray
    G_true: float
    noise_scale: float = 0.0
    L_star: float = 0.0
    huber_delta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ProblemKind.parse(self.kind))
        w_star = np.atleast_1d(np.asarray(self.w_star, dtype=float))
        w0 = np.atleast_1d(np.asarray(self.w0, dtype=float))
        if w_star.shape != w0.shape or w_star.ndim != 1:
            raise ValidationError("w0 and w_star must be vectors of the same dimension")
        object.__setattr__(self, "w_star", w_star)
        object.__setattr__(self, "w0", w0)
        if not self.G_true > 0:
            raise ValidationError("G_true: must be positive")
        if self.noise_scale < 0:
            raise ValidationError("noise_scale: must be non-negative")
        if self.noise_scale >= self.G_true:
            raise ValidationError(
                f"noise_scale={self.noise_scale!r} leaves no room under the gradient bound G={self.G_true!r}"
            )

    @property
    def d(self) -> int:
        return self.w0.size

    @property
    def D_true(self) -> float:
        return float(np.linalg.norm(self.w0 - self.w_star))

    @property
    def slope(self) -> float:
        """Norm bound of the deterministic subgradient."""
        return self.G_true - self.noise_scale

    def loss(self, W) -> np.ndarray:
        """Loss of each row of ``W`` (or of a single vector)."""
        Z = np.asarray(W, dtype=float) - self.w_star
        a = self.slope
        if self.kind is ProblemKind.L1_DISTANCE:
            return a / math.sqrt(self.d) * np.abs(Z).sum(axis=-1)
        if self.kind is ProblemKind.PIECEWISE_LINEAR_MAX:
            return a * np.abs(Z).max(axis=-1)
        r = np.sqrt((Z * Z).sum(axis=-1))
        delta = self.huber_delta
        return a * np.where(r <= delta, r * r / (2 * delta), r - 0.5 * delta)

    def subgradient(self, W) -> np.ndarray:
        Z = np.asarray(W, dtype=float) - self.w_star
        a = self.slope
        if self.kind is ProblemKind.L1_DISTANCE:
            return a / math.sqrt(self.d) * np.sign(Z)
        if self.kind is ProblemKind.PIECEWISE_LINEAR_MAX:
            Z2 = np.atleast_2d(Z)
            rows = np.arange(Z2.shape[0])
            idx = np.argmax(np.abs(Z2), axis=1)
            out = np.zeros_like(Z2)
            out[rows, idx] = a * np.sign(Z2[rows, idx])
            return out.reshape(Z.shape)
        r = np.sqrt((Z * Z).sum(axis=-1, keepdims=True))
        delta = self.huber_delta
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(r > 0, Z / np.where(r > 0, r, 1.0), 0.0)
        return a * np.minimum(r / delta, 1.0) * unit


def make_problem(
    kind="l1_distance",
    d: int = 10,
    D_target: float = 1.0,
    G_target: float = 1.0,
    noise_scale: float = 0.0,
    seed: int = 0,
) -> ConvexProblem:
    """Problem with ``||w0 - w_star|| = D_target`` and gradient bound ``G_target``."""
    if not (D_target > 0 and G_target > 0):
        raise ValidationError("D_target and G_target must be positive")
    if d < 1:
        raise ValidationError("d: must be >= 1")
    rng = np.random.default_rng(seed)
    w_star = rng.normal(size=d)
    direction = rng.normal(size=d)
    direction /= np.linalg.norm(direction)
    return ConvexProblem(
        kind=kind,
        w_star=w_star,
        w0=w_star + D_target * direction,
        G_true=G_target,
        noise_scale=noise_scale,
        huber_delta=0.1 * D_target,
    )


@dataclass
class SimResult:
    trace: LossTrace
    averaged_trace: LossTrace
    seed: int
    weighted_losses: np.ndarray
    projections: int = 0


@dataclass
class SweepResult:
    steps: np.ndarray
    seeds: list[int]
    last: np.ndarray  # (n_seeds, n_grid)
    averaged: np.ndarray
    weighted: np.ndarray
    projections: np.ndarray
    notes: list[str] = field(default_factory=list)

    def mean_and_stderr(self, which: str = "last"):
        data = getattr(self, which)
        n = data.shape[0]
        mean = data.mean(axis=0)
        stderr = data.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
        return mean, stderr

    def result(self, i: int) -> SimResult:
        return SimResult(
            trace=LossTrace(self.steps, self.last[i]),
            averaged_trace=LossTrace(self.steps, self.averaged[i]),
            seed=self.seeds[i],
            weighted_losses=self.weighted[i],
            projections=int(self.projections[i]),
        )


def _ball_noise(rng: np.random.Generator, n: int, d: int, radius: float) -> np.ndarray:
    z = rng.normal(size=(n, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    r = radius * rng.uniform(size=(n, 1)) ** (1.0 / d)
    return z * r


def _check_grid(record_grid, T) -> np.ndarray:
    grid = np.asarray(record_grid)
    if grid.ndim != 1 or grid.size == 0 or not np.all(grid == np.round(grid)):
        raise ValidationError("record_grid: expected a non-empty 1-D array of integer steps")
    grid = grid.astype(np.int64)
    if np.any(np.diff(grid) <= 0):
        raise ValidationError("record_grid: must be strictly increasing")
    if grid[0] < 1 or grid[-1] > T:
        raise ValidationError(f"record_grid: steps must lie in [1, {T}]")
    return grid


def sgd_sweep(problem: ConvexProblem, lrs, seeds, record_grid=None) -> SweepResult:
    """Run ``w_{t+1} = w_t - eta_{t+1} g(w_t)`` for every seed in lockstep.

    Each seed owns an isolated generator, so a seed's trajectory does not
    depend on which other seeds share the batch.
    """
    lrs = np.asarray(lrs, dtype=float)
    if lrs.ndim != 1 or lrs.size == 0 or np.any(lrs < 0) or not np.all(np.isfinite(lrs)):
        raise ValidationError("lrs: expected a non-empty sequence of finite non-negative values")
    T = lrs.size
    grid = _check_grid(np.arange(1, T + 1) if record_grid is None else record_grid, T)
    seeds = [int(s) for s in seeds]
    S, d = len(seeds), problem.d
    gens = [np.random.default_rng(s) for s in seeds]
    G = problem.G_true
    radius = problem.noise_scale

    W = np.tile(problem.w0, (S, 1))
    wsum = np.zeros((S, d))
    lsum = np.zeros(S)
    etasum = 0.0
    proj = np.zeros(S, dtype=np.int64)
    last = np.empty((S, grid.size))
    avg = np.empty((S, grid.size))
    weighted = np.empty((S, grid.size))
    init_loss = problem.loss(problem.w0)
    slot = 0
    noise = None
    for t in range(T):
        if radius > 0 and t % _CHUNK == 0:
            n = min(_CHUNK, T - t)
            noise = np.stack([_ball_noise(g, n, d, radius) for g in gens], axis=1)  # (n, S, d)
        eta = lrs[t]
        if eta > 0:
            wsum += eta * W
            lsum += eta * problem.loss(W)
            etasum += eta
            g = problem.subgradient(W)
            if radius > 0:
                g = g + noise[t % _CHUNK]
            norms = np.sqrt((g * g).sum(axis=1))
            over = norms > G
            if over.any():
                g[over] *= (G / norms[over])[:, None]
                proj += over
            W = W - eta * g
        if t + 1 == grid[slot]:
            last[:, slot] = problem.loss(W)
            if etasum > 0:
                avg[:, slot] = problem.loss(wsum / etasum)
                weighted[:, slot] = lsum / etasum
            else:
                avg[:, slot] = init_loss
                weighted[:, slot] = init_loss
            slot += 1
            if slot == grid.size:
                break
    return SweepResult(steps=grid, seeds=seeds, last=last, averaged=avg, weighted=weighted, projections=proj)


def sgd_run(problem: ConvexProblem, lrs, seed: int = 0, record_grid=None) -> SimResult:
    """Single seeded SGD run; see :func:`sgd_sweep`."""
    return sgd_sweep(problem, lrs, [seed], record_grid).result(0)
