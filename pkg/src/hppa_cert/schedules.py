"""
Closed-form parameter sequences (alpha_n), (beta_n), (e_n).

Each family knows which of the convergence conditions C0..C6 it satisfies, so
the flags on a :class:`ParamSchedule` are derived, never asserted by the user.

    C0  alpha_n -> 0                     C4  beta_n -> beta > 0
    C1  sum alpha_n = inf                C5  sum ||e_n|| < inf
    C2  prod (1 - alpha_n) = 0           C6  ||e_n|| / alpha_n -> 0
    C3  |alpha_{n+1}-alpha_n| / alpha_n^2 -> 0
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np


class ScheduleError(ValueError):
    pass


def _idx(n):
    return np.asarray(n, dtype=float)


def _as_fraction(x) -> Fraction | None:
    """Exact value of a parameter given as int, float, Fraction or 'p/q' string."""
    if isinstance(x, bool):
        return None
    if isinstance(x, (int, float, Fraction)):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    return None


# ---------------------------------------------------------------- alpha


@dataclass(frozen=True)
class AlphaConstant:
    """``alpha_n = a``; ``a`` may be given exactly as an int, Fraction or ``"p/q"``."""

    a: float | Fraction | str
    family = "constant"

    def __post_init__(self):
        if not (0 < self.value <= 1):
            raise ScheduleError("constant alpha must lie in (0, 1]")

    @property
    def value(self) -> float:
        return float(Fraction(self.a)) if isinstance(self.a, str) else float(self.a)

    def __call__(self, n):
        return np.full(np.shape(n), self.value) if np.ndim(n) else self.value

    def exact(self, n: int) -> Fraction | None:
        return _as_fraction(self.a)

    def next_ratio_gap(self, n):
        return np.zeros(np.shape(n)) if np.ndim(n) else 0.0

    @property
    def conditions(self):
        return {"c0": False, "c1": True, "c2": True, "c3": True}

    def describe(self):
        a = self.a if isinstance(self.a, (int, float)) else str(self.a)
        return {"family": self.family, "a": a}


@dataclass(frozen=True)
class AlphaPower:
    """``alpha_n = (n + n0)^(-q)`` with ``q`` in (0, 1] and ``n0 >= 1``."""

    q: float = 0.75
    n0: int = 2
    family = "power"

    def __post_init__(self):
        if not (0 < self.q <= 1):
            raise ScheduleError("power alpha needs q in (0, 1]")
        if int(self.n0) != self.n0 or self.n0 < 1:
            raise ScheduleError("power alpha needs an integer offset n0 >= 1")

    def __call__(self, n):
        return (_idx(n) + self.n0) ** (-self.q)

    def exact(self, n: int) -> Fraction | None:
        if self.q == 1:
            return Fraction(1, n + int(self.n0))
        return None

    def next_ratio_gap(self, n):
        """``|alpha_{n+1} - alpha_n| / alpha_n^2`` without cancellation."""
        m = _idx(n) + self.n0
        return -np.expm1(self.q * np.log1p(-1.0 / (m + 1.0))) * m ** self.q

    @property
    def conditions(self):
        return {"c0": True, "c1": True, "c2": True, "c3": self.q < 1}

    def describe(self):
        return {"family": self.family, "q": self.q, "n0": int(self.n0)}


@dataclass(frozen=True)
class AlphaHarmonic:
    """``alpha_n = 1/(n+1)``; note ``alpha_0 = 1``."""

    family = "harmonic"

    def __call__(self, n):
        return 1.0 / (_idx(n) + 1.0)

    def exact(self, n: int) -> Fraction:
        return Fraction(1, n + 1)

    def next_ratio_gap(self, n):
        m = _idx(n) + 1.0
        return m / (m + 1.0)

    @property
    def conditions(self):
        return {"c0": True, "c1": True, "c2": True, "c3": False}

    def describe(self):
        return {"family": self.family}


# ---------------------------------------------------------------- beta


@dataclass(frozen=True)
class BetaConstant:
    beta: float
    family = "constant"

    def __post_init__(self):
        if not (self.beta > 0):
            raise ScheduleError("beta must be positive")

    def __call__(self, n):
        return np.full(np.shape(n), float(self.beta)) if np.ndim(n) else float(self.beta)

    def deviation(self, n):
        return np.zeros(np.shape(n)) if np.ndim(n) else 0.0

    def describe(self):
        return {"family": self.family, "beta": self.beta}


@dataclass(frozen=True)
class BetaAlternating:
    """``beta_n = beta + (-1)^n / (n+1)``; positive for all n iff ``beta > 1/2``."""

    beta: float = 1.0
    family = "alternating"

    def __post_init__(self):
        if not (self.beta > 0.5):
            raise ScheduleError("alternating beta needs beta > 1/2 so that beta_1 > 0")

    def _signed(self, n):
        n = _idx(n)
        return np.where(np.mod(n, 2) == 0, 1.0, -1.0) / (n + 1.0)

    def __call__(self, n):
        return self.beta + self._signed(n)

    def deviation(self, n):
        return 1.0 / (_idx(n) + 1.0)

    def describe(self):
        return {"family": self.family, "beta": self.beta}


@dataclass(frozen=True)
class BetaPowerApproach:
    """``beta_n = beta + (n+1)^(-q)``."""

    beta: float = 1.0
    q: float = 1.0
    family = "power_approach"

    def __post_init__(self):
        if not (self.beta > 0 and self.q > 0):
            raise ScheduleError("power-approach beta needs beta > 0 and q > 0")

    def __call__(self, n):
        return self.beta + (_idx(n) + 1.0) ** (-self.q)

    def deviation(self, n):
        return (_idx(n) + 1.0) ** (-self.q)

    def describe(self):
        return {"family": self.family, "beta": self.beta, "q": self.q}


# ---------------------------------------------------------------- errors


@dataclass(frozen=True)
class ErrZero:
    family = "zero"

    def norm(self, n):
        return np.zeros(np.shape(n)) if np.ndim(n) else 0.0

    def tail_bound(self, n: int) -> float:
        return 0.0

    def describe(self):
        return {"family": self.family}


@dataclass(frozen=True)
class ErrGeometric:
    """``||e_n|| = m * rho^n``."""

    m: float
    rho: float
    direction: str = "fixed"
    vector: tuple | None = None
    family = "geometric"

    def __post_init__(self):
        if not (self.m >= 0 and 0 < self.rho < 1):
            raise ScheduleError("geometric errors need m >= 0 and rho in (0, 1)")

    def norm(self, n):
        return self.m * self.rho ** _idx(n)

    def tail_bound(self, n: int) -> float:
        """``sum_{i > n} ||e_i||``."""
        return self.m * self.rho ** (n + 1) / (1.0 - self.rho)

    def describe(self):
        return {"family": self.family, "m": self.m, "rho": self.rho, "direction": self.direction,
                "vector": list(self.vector) if self.vector is not None else None}


@dataclass(frozen=True)
class ErrPower:
    """``||e_n|| = m * (n+1)^(-q)``."""

    m: float
    q: float
    direction: str = "fixed"
    vector: tuple | None = None
    family = "power"

    def __post_init__(self):
        if not (self.m >= 0 and self.q > 0):
            raise ScheduleError("power errors need m >= 0 and q > 0")

    def norm(self, n):
        return self.m * (_idx(n) + 1.0) ** (-self.q)

    def tail_bound(self, n: int) -> float | None:
        if self.q <= 1:
            return None
        # integral comparison: sum_{i>n} (i+1)^-q <= int_{n+1}^inf x^-q dx
        return self.m * (n + 1.0) ** (1.0 - self.q) / (self.q - 1.0)

    def describe(self):
        return {"family": self.family, "m": self.m, "q": self.q, "direction": self.direction,
                "vector": list(self.vector) if self.vector is not None else None}


DIRECTIONS = ("fixed", "alternating", "random")


def error_vectors(err, n_max: int, dim: int, seed: int | None = None) -> np.ndarray:
    """Rows ``e_0 .. e_{n_max-1}`` of shape ``(n_max, dim)``."""
    norms = np.asarray(err.norm(np.arange(n_max)), dtype=float)
    if err.family == "zero":
        return np.zeros((n_max, dim))
    direction = err.direction
    if direction not in DIRECTIONS:
        raise ScheduleError(f"unknown error direction {direction!r}")
    if direction == "random":
        if seed is None:
            raise ScheduleError("a seed is required for pseudo-random error directions")
        g = np.random.default_rng(seed).standard_normal((n_max, dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return g * norms[:, None]
    v = np.ones(dim) if err.vector is None else np.asarray(err.vector, dtype=float)
    if v.shape != (dim,) or not np.linalg.norm(v) > 0:
        raise ScheduleError("error direction vector must be nonzero with the operator dimension")
    v = v / np.linalg.norm(v)
    signs = np.ones(n_max)
    if direction == "alternating":
        signs[1::2] = -1.0
    return (norms * signs)[:, None] * v


# ---------------------------------------------------------------- schedule


@dataclass(frozen=True)
class ParamSchedule:
    alpha: AlphaConstant | AlphaPower | AlphaHarmonic
    beta: BetaConstant | BetaAlternating | BetaPowerApproach
    err: ErrZero | ErrGeometric | ErrPower = field(default_factory=ErrZero)
    seed: int | None = None

    def __post_init__(self):
        if getattr(self.err, "direction", None) == "random" and self.seed is None:
            raise ScheduleError("a seed is required for pseudo-random error directions")

    @property
    def beta_limit(self) -> float:
        return float(self.beta.beta)

    @property
    def alpha_nonincreasing(self) -> bool:
        # every supported alpha family is nonincreasing
        return True

    @property
    def flags(self) -> dict:
        out = dict(self.alpha.conditions)
        out["c4"] = True
        e = self.err
        if e.family == "zero":
            out["c5"] = out["c6"] = True
        elif e.family == "geometric":
            out["c5"] = True
            out["c6"] = True
        else:
            out["c5"] = e.q > 1
            if self.alpha.family == "constant":
                out["c6"] = True
            else:
                qa = self.alpha.q if self.alpha.family == "power" else 1.0
                out["c6"] = e.q > qa
        return {k: out[k] for k in ("c0", "c1", "c2", "c3", "c4", "c5", "c6")}

    def alphas(self, n_max: int) -> np.ndarray:
        return np.asarray(self.alpha(np.arange(n_max)), dtype=float)

    def betas(self, n_max: int) -> np.ndarray:
        return np.asarray(self.beta(np.arange(n_max)), dtype=float)

    def err_norms(self, n_max: int) -> np.ndarray:
        return np.asarray(self.err.norm(np.arange(n_max)), dtype=float)

    def errors(self, n_max: int, dim: int) -> np.ndarray:
        return error_vectors(self.err, n_max, dim, self.seed)

    def describe(self) -> dict:
        return {"alpha": self.alpha.describe(), "beta": self.beta.describe(),
                "err": self.err.describe(), "seed": self.seed}


_ALPHA = {"constant": (AlphaConstant, {"a"}), "power": (AlphaPower, {"q", "n0"}),
          "harmonic": (AlphaHarmonic, set())}
_BETA = {"constant": (BetaConstant, {"beta"}), "alternating": (BetaAlternating, {"beta"}),
         "power_approach": (BetaPowerApproach, {"beta", "q"})}
_ERR = {"zero": (ErrZero, set()), "geometric": (ErrGeometric, {"m", "rho", "direction", "vector"}),
        "power": (ErrPower, {"m", "q", "direction", "vector"})}


def _build(table, spec, what):
    if not isinstance(spec, dict) or "family" not in spec:
        raise ScheduleError(f"{what} spec needs a 'family' field")
    fam = spec["family"]
    if fam not in table:
        raise ScheduleError(f"unknown {what} family {fam!r}; expected one of {sorted(table)}")
    cls, allowed = table[fam]
    kwargs = {k: v for k, v in spec.items() if k != "family"}
    extra = set(kwargs) - allowed
    if extra:
        raise ScheduleError(f"unknown keys for {what} family {fam!r}: {sorted(extra)}")
    if "vector" in kwargs and kwargs["vector"] is not None:
        kwargs["vector"] = tuple(float(v) for v in kwargs["vector"])
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ScheduleError(f"bad parameters for {what} family {fam!r}: {exc}") from None


def schedule_from_spec(spec: dict, seed: int | None = None) -> ParamSchedule:
    extra = set(spec) - {"alpha", "beta", "err"}
    if extra:
        raise ScheduleError(f"unknown schedule keys: {sorted(extra)}")
    alpha = _build(_ALPHA, spec.get("alpha"), "alpha")
    beta = _build(_BETA, spec.get("beta"), "beta")
    err = _build(_ERR, spec.get("err", {"family": "zero"}), "err")
    return ParamSchedule(alpha, beta, err, seed=seed)


def section5_schedule() -> ParamSchedule:
    """``alpha_n = (n+2)^(-3/4)``, ``beta_n = 1 + (-1)^n/(n+1)``, ``e_n = 0``."""
    return ParamSchedule(AlphaPower(q=0.75, n0=2), BetaAlternating(1.0), ErrZero())


def perturbed_section5_schedule(m: float = 1e-3, direction: str = "fixed",
                                seed: int | None = None) -> ParamSchedule:
    """Same as :func:`section5_schedule` with ``||e_n|| = m * 2^-n``."""
    return ParamSchedule(AlphaPower(q=0.75, n0=2), BetaAlternating(1.0),
                         ErrGeometric(m=m, rho=0.5, direction=direction), seed=seed)


def exact_alpha(schedule_alpha, n: int) -> Fraction | None:
    try:
        return schedule_alpha.exact(n)
    except (ValueError, ZeroDivisionError):
        return None


def log_survival(alpha, count: int, chunk: int = 1 << 20) -> float:
    """``-sum_{j<count} log(1 - alpha_j)`` accumulated chunkwise with ``math.fsum``."""
    parts = []
    for start in range(0, count, chunk):
        a = np.asarray(alpha(np.arange(start, min(count, start + chunk))), dtype=float)
        if np.any(a >= 1.0):
            return math.inf
        parts.append(float(np.sum(-np.log1p(-a))))
    return math.fsum(parts)
