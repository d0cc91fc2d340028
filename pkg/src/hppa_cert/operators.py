"""
Maximally monotone operators on R^d with closed-form resolvents.

Only resolvents, zero-set projections and the fixed point of the anchored
step map ``x -> alpha*u + (1-alpha)*J_{beta A} x`` are exposed; ``A`` itself
is never evaluated.  Every map accepts a single point of shape ``(d,)`` or a
stack of points of shape ``(n, d)``; ``gamma``/``alpha`` may be scalars or
per-row arrays of shape ``(n,)``.
"""

from __future__ import annotations

import numpy as np

MAX_DIM = 1024


class OperatorError(ValueError):
    pass


class DimensionMismatch(OperatorError):
    pass


def as_point(x, dim: int | None = None) -> np.ndarray:
    """Coerce to a finite float vector (or stack of vectors)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if not np.all(np.isfinite(arr)):
        raise OperatorError("point has non-finite coordinates")
    if dim is not None and arr.shape[-1] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {arr.shape[-1]}")
    return arr


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=float)
    arr.setflags(write=False)
    return arr


def _column(param, x: np.ndarray):
    """Broadcast a scalar or per-row parameter against ``x``."""
    p = np.asarray(param, dtype=float)
    if p.ndim == 0 or x.ndim == 1:
        return p
    return p.reshape(p.shape + (1,) * (x.ndim - p.ndim))


class MonotoneOperator:
    """Common surface; subclasses implement the ``_raw`` kernels without validation."""

    kind = "abstract"

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def _resolvent(self, gamma, x):
        raise NotImplementedError

    def _project(self, u):
        raise NotImplementedError

    def _approximant(self, beta, alpha, u):
        raise NotImplementedError

    def resolvent(self, gamma, x) -> np.ndarray:
        x = as_point(x, self.dim)
        g = np.asarray(gamma, dtype=float)
        if not np.all(g > 0) or not np.all(np.isfinite(g)):
            raise OperatorError(f"resolvent parameter must be positive, got {gamma!r}")
        return self._resolvent(_column(g, x), x)

    def project_zero_set(self, u) -> np.ndarray:
        return self._project(as_point(u, self.dim))

    def approximant(self, beta: float, alpha, u) -> np.ndarray:
        """Closed-form fixed point of ``z = alpha*u + (1-alpha)*J_{beta A} z``."""
        u = as_point(u, self.dim)
        a = np.asarray(alpha, dtype=float)
        if not (beta > 0):
            raise OperatorError("beta must be positive")
        if not np.all((a > 0) & (a <= 1)):
            raise OperatorError("alpha must lie in (0, 1]")
        if a.ndim == 1 and u.ndim == 1:
            u = np.broadcast_to(u, a.shape + u.shape)
        return self._approximant(float(beta), _column(a, u), u)

    def describe(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.describe()})"


class QuadraticShift(MonotoneOperator):
    """``A(x) = x - c``, the gradient of ``0.5*||x - c||^2``."""

    kind = "QuadraticShift"

    def __init__(self, c):
        self.c = _frozen(as_point(c))
        if self.c.ndim != 1 or self.c.size > MAX_DIM:
            raise OperatorError("c must be a vector of dimension <= %d" % MAX_DIM)

    @property
    def dim(self):
        return self.c.size

    def _resolvent(self, gamma, x):
        return (x + gamma * self.c) / (1.0 + gamma)

    def _project(self, u):
        return np.broadcast_to(self.c, u.shape).copy()

    def _approximant(self, beta, alpha, u):
        return self.c + alpha * (1.0 + beta) / (alpha + beta) * (u - self.c)

    def describe(self):
        return {"type": self.kind, "c": self.c.tolist()}


class AffinePD(MonotoneOperator):
    """``A(x) = M(x - c)`` with ``M`` symmetric positive definite.

    ``M`` is diagonalised once, so ``(I + gamma M)^{-1}`` is available for every
    ``gamma`` without refactoring.
    """

    kind = "AffinePD"

    def __init__(self, M, c):
        M = np.array(M, dtype=float)
        c = as_point(c)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] != c.size:
            raise DimensionMismatch("M must be square and match the dimension of c")
        if c.size > MAX_DIM:
            raise OperatorError("dimension cap is %d" % MAX_DIM)
        if not np.all(np.isfinite(M)):
            raise OperatorError("M has non-finite entries")
        if not np.allclose(M, M.T, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(M).max())):
            raise OperatorError("M must be symmetric")
        lam, Q = np.linalg.eigh(0.5 * (M + M.T))
        if lam.min() <= 0:
            raise OperatorError("M must be positive definite (min eigenvalue %g)" % lam.min())
        self.M = _frozen(M)
        self.c = _frozen(c)
        self._lam = _frozen(lam)
        self._Q = _frozen(Q)

    @property
    def dim(self):
        return self.c.size

    def _spectral(self, factor, v):
        # Q diag(factor) Q^T v, row-wise for stacks
        return ((v - self.c) @ self._Q * factor) @ self._Q.T

    def _resolvent(self, gamma, x):
        return self.c + self._spectral(1.0 / (1.0 + gamma * self._lam), x)

    def _project(self, u):
        return np.broadcast_to(self.c, u.shape).copy()

    def _approximant(self, beta, alpha, u):
        factor = alpha * (1.0 + beta * self._lam) / (alpha + beta * self._lam)
        return self.c + self._spectral(factor, u)

    def describe(self):
        return {"type": self.kind, "M": self.M.tolist(), "c": self.c.tolist()}


class NormalConeBox(MonotoneOperator):
    """Normal cone of the box ``[lo, hi]``; resolvent and projection are clamping."""

    kind = "NormalConeBox"

    def __init__(self, lo, hi):
        lo, hi = as_point(lo), as_point(hi)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionMismatch("lo and hi must be vectors of equal dimension")
        if np.any(lo > hi):
            raise OperatorError("box requires lo <= hi coordinatewise")
        self.lo, self.hi = _frozen(lo), _frozen(hi)

    @property
    def dim(self):
        return self.lo.size

    def _resolvent(self, gamma, x):
        return np.clip(x, self.lo, self.hi)

    def _project(self, u):
        return np.clip(u, self.lo, self.hi)

    def _approximant(self, beta, alpha, u):
        # P_C(alpha*u + (1-alpha)*P_C u) = P_C u, so the fixed point is explicit
        return alpha * u + (1.0 - alpha) * np.clip(u, self.lo, self.hi)

    def describe(self):
        return {"type": self.kind, "lo": self.lo.tolist(), "hi": self.hi.tolist()}


class NormalConeBall(MonotoneOperator):
    """Normal cone of the closed ball ``B(center, r)``."""

    kind = "NormalConeBall"

    def __init__(self, center, r: float):
        center = as_point(center)
        if center.ndim != 1:
            raise OperatorError("center must be a vector")
        if not (r > 0 and np.isfinite(r)):
            raise OperatorError("radius must be positive")
        self.center = _frozen(center)
        self.r = float(r)

    @property
    def dim(self):
        return self.center.size

    def _ball(self, x):
        v = x - self.center
        dist = np.linalg.norm(v, axis=-1, keepdims=True)
        scale = np.where(dist > self.r, self.r / np.where(dist > 0, dist, 1.0), 1.0)
        return self.center + v * scale

    def _resolvent(self, gamma, x):
        return self._ball(x)

    def _project(self, u):
        return self._ball(u)

    def _approximant(self, beta, alpha, u):
        return alpha * u + (1.0 - alpha) * self._ball(u)

    def describe(self):
        return {"type": self.kind, "center": self.center.tolist(), "r": self.r}


class AbsSubdiff(MonotoneOperator):
    """Subdifferential of ``lam * ||x||_1``; the resolvent soft-thresholds by ``gamma*lam``."""

    kind = "AbsSubdiff"

    def __init__(self, lam: float, dim: int = 1):
        if not (lam > 0 and np.isfinite(lam)):
            raise OperatorError("lambda must be positive")
        if not (1 <= int(dim) <= MAX_DIM):
            raise OperatorError("dimension must be in [1, %d]" % MAX_DIM)
        self.lam = float(lam)
        self._dim = int(dim)

    @property
    def dim(self):
        return self._dim

    def _resolvent(self, gamma, x):
        t = gamma * self.lam
        return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)

    def _project(self, u):
        return np.zeros_like(u)

    def _approximant(self, beta, alpha, u):
        t = beta * self.lam
        inner = alpha * u
        outer = np.sign(u) * (np.abs(u) - (1.0 - alpha) * t / alpha)
        return np.where(np.abs(inner) <= t, inner, outer)

    def describe(self):
        return {"type": self.kind, "lam": self.lam, "dim": self._dim}


def resolvent(op: MonotoneOperator, gamma, x) -> np.ndarray:
    return op.resolvent(gamma, x)


def project_zero_set(op: MonotoneOperator, u) -> np.ndarray:
    return op.project_zero_set(u)


def check_resolvent_identity(op: MonotoneOperator, beta: float, gamma: float, x) -> float:
    """Norm of ``J_beta(x) - J_gamma((gamma/beta) x + (1 - gamma/beta) J_beta(x))``."""
    if not (beta > 0 and gamma > 0):
        raise OperatorError("beta and gamma must be positive")
    x = as_point(x, op.dim)
    jb = op.resolvent(beta, x)
    ratio = gamma / beta
    return float(np.linalg.norm(jb - op.resolvent(gamma, ratio * x + (1.0 - ratio) * jb)))


_VARIANTS = {
    "QuadraticShift": (QuadraticShift, ("c",)),
    "AffinePD": (AffinePD, ("M", "c")),
    "NormalConeBox": (NormalConeBox, ("lo", "hi")),
    "NormalConeBall": (NormalConeBall, ("center", "r")),
    "AbsSubdiff": (AbsSubdiff, ("lam", "dim")),
}


def operator_from_spec(spec: dict) -> MonotoneOperator:
    """Build an operator from ``{"type": name, **params}`` (the config block format)."""
    if not isinstance(spec, dict) or "type" not in spec:
        raise OperatorError("operator spec needs a 'type' field")
    name = spec["type"]
    if name not in _VARIANTS:
        raise OperatorError(f"unknown operator type {name!r}; expected one of {sorted(_VARIANTS)}")
    cls, fields = _VARIANTS[name]
    extra = set(spec) - set(fields) - {"type"}
    if extra:
        raise OperatorError(f"unknown keys for {name}: {sorted(extra)}")
    missing = [f for f in fields if f not in spec and not (name == "AbsSubdiff" and f == "dim")]
    if missing:
        raise OperatorError(f"{name} is missing {missing}")
    return cls(**{f: spec[f] for f in fields if f in spec})
