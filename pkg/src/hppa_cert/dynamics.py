"""
Trajectories of PPA, Halpern, HPPA and the Browder approximant path.

    PPA       x_{n+1} = J_{beta_n A} x_n + e_n
    Halpern   x_{n+1} = alpha_n u + (1 - alpha_n) J_{beta A} x_n
    HPPA      x_{n+1} = alpha_n u + (1 - alpha_n) J_{beta_n A} x_n + e_n
    Browder   z_n = alpha_n u + (1 - alpha_n) J_{beta A} z_n

Trajectories keep the per-step scalars (alpha_n, beta_n, ||e_n||) next to the
points so that every recurrence can be re-checked without the schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .operators import MonotoneOperator, OperatorError, as_point
from .schedules import ParamSchedule

DEFAULT_NMAX_CAP = 1_000_000
ALPHA_FLOOR = 1e-9
PICARD_BUDGET = 50_000_000

KINDS = ("PPA", "Halpern", "HPPA", "BrowderPath")


class TrajectoryError(RuntimeError):
    pass


class NonFiniteIterate(TrajectoryError):
    def __init__(self, step: int):
        super().__init__(f"non-finite iterate produced at step {step}")
        self.step = step


class IterationBudgetExceeded(TrajectoryError):
    pass


@dataclass(frozen=True)
class Trajectory:
    """Points ``x_0..x_N`` with the scalars used at every index.

    ``alpha[n]``, ``beta[n]`` and ``err_norm[n]`` are the values of the
    schedule at index ``n`` for ``n = 0..N`` (the last row is not consumed by
    any step but is kept so exports are rectangular).
    """

    points: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    err_norm: np.ndarray
    kind: str
    u: np.ndarray | None
    operator: dict
    schedule: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        n = self.points.shape[0]
        for name in ("alpha", "beta", "err_norm"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have one entry per point")
        for arr in (self.points, self.alpha, self.beta, self.err_norm):
            arr.setflags(write=False)

    @property
    def n_steps(self) -> int:
        return self.points.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def replace_points(self, points: np.ndarray) -> "Trajectory":
        return Trajectory(np.array(points, dtype=float), self.alpha.copy(), self.beta.copy(),
                          self.err_norm.copy(), self.kind, self.u, self.operator, self.schedule)


def _check_nmax(n_max: int, cap: int):
    if int(n_max) != n_max or n_max < 0:
        raise ValueError("n_max must be a nonnegative integer")
    if n_max > cap:
        raise ValueError(f"n_max={n_max} exceeds the budget cap {cap}")


def _first_nonfinite(points: np.ndarray) -> int | None:
    bad = ~np.isfinite(points).all(axis=1)
    return int(np.argmax(bad)) if bad.any() else None


def anchored_loop(op: MonotoneOperator, alpha, beta, err, u, x0, skip_resolvent_at=None):
    """Run ``x_{n+1} = alpha_n u + (1-alpha_n) J_{beta_n} x_n + e_n`` for ``len(err)`` steps.

    ``skip_resolvent_at`` replaces ``J x_n`` by ``x_n`` at that single step;
    it exists only for fault-injection experiments.
    """
    n_max = len(err)
    pts = np.empty((n_max + 1, x0.size))
    pts[0] = x0
    x = x0
    kernel = op._resolvent
    for n in range(n_max):
        jx = x if n == skip_resolvent_at else kernel(beta[n], x)
        x = alpha[n] * u + (1.0 - alpha[n]) * jx + err[n]
        pts[n + 1] = x
    bad = _first_nonfinite(pts)
    if bad is not None:
        raise NonFiniteIterate(bad - 1)
    return pts


def run_hppa(op: MonotoneOperator, schedule: ParamSchedule, u, x0, n_max: int,
             nmax_cap: int = DEFAULT_NMAX_CAP) -> Trajectory:
    _check_nmax(n_max, nmax_cap)
    u = as_point(u, op.dim)
    x0 = as_point(x0, op.dim)
    idx = np.arange(n_max + 1)
    alpha = np.asarray(schedule.alpha(idx), dtype=float)
    beta = np.asarray(schedule.beta(idx), dtype=float)
    if np.any(beta <= 0):
        raise OperatorError("schedule produced a non-positive beta_n")
    err = schedule.errors(n_max, op.dim)
    pts = anchored_loop(op, alpha, beta, err, u, x0)
    err_norm = np.concatenate([np.linalg.norm(err, axis=1), schedule.err_norms(n_max + 1)[n_max:]])
    return Trajectory(pts, alpha, beta, err_norm, "HPPA", u, op.describe(), schedule.describe())


def run_ppa(op: MonotoneOperator, schedule: ParamSchedule, x0, n_max: int,
            nmax_cap: int = DEFAULT_NMAX_CAP) -> Trajectory:
    """Rockafellar's iteration; recorded with ``alpha_n = 0``."""
    _check_nmax(n_max, nmax_cap)
    x0 = as_point(x0, op.dim)
    idx = np.arange(n_max + 1)
    beta = np.asarray(schedule.beta(idx), dtype=float)
    if np.any(beta <= 0):
        raise OperatorError("schedule produced a non-positive beta_n")
    err = schedule.errors(n_max, op.dim)
    alpha = np.zeros(n_max + 1)
    pts = anchored_loop(op, alpha, beta, err, np.zeros_like(x0), x0)
    err_norm = np.concatenate([np.linalg.norm(err, axis=1), schedule.err_norms(n_max + 1)[n_max:]])
    return Trajectory(pts, alpha, beta, err_norm, "PPA", None, op.describe(), schedule.describe())


def run_halpern(op: MonotoneOperator, beta: float, schedule: ParamSchedule, u, x0, n_max: int,
                nmax_cap: int = DEFAULT_NMAX_CAP) -> Trajectory:
    """Halpern iteration for the nonexpansive map ``J_{beta A}``; errors in the schedule are ignored."""
    _check_nmax(n_max, nmax_cap)
    if not beta > 0:
        raise OperatorError("beta must be positive")
    u = as_point(u, op.dim)
    x0 = as_point(x0, op.dim)
    alpha = np.asarray(schedule.alpha(np.arange(n_max + 1)), dtype=float)
    betas = np.full(n_max + 1, float(beta))
    pts = anchored_loop(op, alpha, betas, np.zeros((n_max, op.dim)), u, x0)
    return Trajectory(pts, alpha, betas, np.zeros(n_max + 1), "Halpern", u, op.describe(),
                      schedule.describe())


# ---------------------------------------------------------------- Browder approximants


def picard_count(alpha: float, residual: float, tol: float) -> int:
    """Steps after which ``(1-alpha)^m * residual / alpha <= tol``."""
    if residual == 0.0 or alpha >= 1.0:
        return 0
    return max(0, math.ceil(math.log(tol * alpha / residual) / math.log1p(-alpha)))


def browder_approximant(op: MonotoneOperator, beta: float, alpha: float, u, tol: float = 1e-12,
                        method: str = "picard", warm_start=None,
                        budget: int = PICARD_BUDGET) -> np.ndarray:
    """Fixed point of ``S(x) = alpha*u + (1-alpha)*J_{beta A} x``.

    ``method="picard"`` iterates the contraction from ``warm_start`` (default
    ``u``) for the a-priori number of steps that puts the iterate within
    ``tol`` of the fixed point.  ``method="closed"`` uses the operator's
    explicit solution.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not (0 < alpha <= 1):
        raise OperatorError("alpha must lie in (0, 1]")
    u = as_point(u, op.dim)
    if alpha == 1:
        return u.copy()
    if method == "closed":
        return op.approximant(beta, alpha, u)
    if method != "picard":
        raise ValueError(f"unknown method {method!r}")
    if alpha < ALPHA_FLOOR:
        raise IterationBudgetExceeded(f"alpha={alpha:g} is below the Picard floor {ALPHA_FLOOR:g}")
    w = u.copy() if warm_start is None else as_point(warm_start, op.dim).copy()
    kernel = op._resolvent
    step = alpha * u
    s_w = step + (1.0 - alpha) * kernel(beta, w)
    count = picard_count(alpha, float(np.linalg.norm(s_w - w)), tol)
    if count > budget:
        raise IterationBudgetExceeded(f"Picard would need {count} steps (budget {budget})")
    w = s_w
    for _ in range(max(count - 1, 0)):
        w = step + (1.0 - alpha) * kernel(beta, w)
    return w


def browder_path(op: MonotoneOperator, beta: float, schedule: ParamSchedule, u, tol: float = 1e-12,
                 n_max: int = 0, method: str = "closed",
                 nmax_cap: int = DEFAULT_NMAX_CAP) -> Trajectory:
    """``z_0..z_{n_max}`` for ``alpha_n`` from the schedule.

    The default solves every ``z_n`` in closed form at once.  With
    ``method="picard"`` each ``z_n`` is computed by the contraction,
    warm-started at ``z_{n-1}``; the cost grows like ``log(1/tol)/alpha_n``.
    """
    _check_nmax(n_max, nmax_cap)
    u = as_point(u, op.dim)
    alpha = np.asarray(schedule.alpha(np.arange(n_max + 1)), dtype=float)
    if method == "closed":
        pts = op.approximant(beta, alpha, u)
    elif method == "picard":
        pts = np.empty((n_max + 1, op.dim))
        prev = None
        for n in range(n_max + 1):
            prev = browder_approximant(op, beta, float(alpha[n]), u, tol, "picard", warm_start=prev)
            pts[n] = prev
    else:
        raise ValueError(f"unknown method {method!r}")
    return Trajectory(np.array(pts, dtype=float), alpha, np.full(n_max + 1, float(beta)),
                      np.zeros(n_max + 1), "BrowderPath", u, op.describe(), schedule.describe())
