"""
Exact evaluation of the quantitative rates for HPPA.

Every rate is a natural number computed with Python ints, so values far
beyond 2**64 (the Section-5 style rates start around 10**20) stay exact.
Functions that take "counterfunction-like" arguments accept anything callable
on naturals; :class:`~hppa_cert.counterfunctions.Counterfunction` is the usual
choice because it also supports closed-form iteration.

Naming follows the quantities they compute:

* ``xu_*``         convergence rates for ``s_{n+1} <= (1-a_n)s_n + a_n b_n + c_n``
* ``theta_v1/v2``  rates of convergence of ``||x_n - z_n||`` (sum / frac error branch)
* ``asreg_rates``  rates of asymptotic regularity
* ``omega_*``      rates of metastability of the Browder path
* ``phi_v1/v2``    rates of metastability of ``(x_n)``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import ROUND_CEILING, Context, Decimal
from fractions import Fraction
from typing import Callable

from .counterfunctions import (DEFAULT_BUDGET, Counterfunction, IterationBudget, iterate,
                               iterate_tilde)
from .schedules import log_survival

NatFn = Callable[[int], int]
QuasiRate = Callable[[int, Counterfunction], int]

_E_UPPER = (2718281829, 10**9)
_E_LOWER = (2718281828, 10**9)
EXACT_PRODUCT_LIMIT = 5000
LOG_SLACK_REL = 1e-10
LOG_SLACK_ABS = 1e-12
MAX_LOG_SURVIVAL = 1e6


class MissingModulus(ValueError):
    """A rate was requested without the moduli its formula needs."""


class ProductUnderflow(ArithmeticError):
    """``1/prod(1 - alpha_j)`` is too large to materialise; ``log_value`` bounds its log."""

    def __init__(self, log_value: float):
        super().__init__(f"1/prod(1 - alpha_j) exceeds exp({log_value:.6g})")
        self.log_value = log_value


def _nat(n, what="value") -> int:
    if isinstance(n, bool) or int(n) != n or n < 0:
        raise ValueError(f"{what} must be a natural number, got {n!r}")
    return int(n)


def _pos(n, what="value") -> int:
    n = _nat(n, what)
    if n == 0:
        raise ValueError(f"{what} must be positive")
    return n


# ---------------------------------------------------------------- ceil(ln m)


def _smallest_power_above(m: int, num: int, den: int, guess: int) -> int:
    """Least t >= 0 with ``m * den**t <= num**t``."""
    t = max(0, guess)
    while t > 0 and m * den ** (t - 1) <= num ** (t - 1):
        t -= 1
    while m * den ** t > num ** t:
        t += 1
    return t


def ceil_ln(m: int) -> int:
    """Upper bound on ``ceil(ln m)`` that is exact except inside a tiny band.

    ``t_up`` uses an upper rational bound on e and can only undershoot, ``t_low``
    uses a lower bound and can only overshoot; when they differ the larger one
    is returned, which is never below the true ceiling.
    """
    m = _nat(m, "m")
    if m == 0:
        raise ValueError("ln 0 is undefined")
    guess = math.ceil(math.log(m))
    t_up = _smallest_power_above(m, *_E_UPPER, guess)
    if t_up == 0:
        return 0
    return _smallest_power_above(m, *_E_LOWER, t_up)


# ---------------------------------------------------------------- moduli pack


@dataclass(frozen=True)
class ModuliPack:
    """Quantitative hypotheses of one instance.

    ``sigma0``..``sigma6`` are the moduli of the conditions C0..C6 (any may be
    absent), ``b`` bounds ``||x0 - p||`` and ``||u - p||``, ``ell`` satisfies
    ``beta >= 1/(ell+1)``, ``D``/``Dstar`` bound the error sums and error
    ratios.  ``quasi_chi``/``quasi_h`` feed the quasi-rate branch used when
    ``alpha`` is not known to be nonincreasing.
    """

    b: int
    ell: int = 0
    sigma0: Counterfunction | None = None
    sigma1: Counterfunction | None = None
    sigma2: Counterfunction | None = None
    sigma3: Counterfunction | None = None
    sigma4: Counterfunction | None = None
    sigma5: Counterfunction | None = None
    sigma6: Counterfunction | None = None
    D: int | None = None
    Dstar: int | None = None
    delta0: NatFn | None = None
    delta0star: NatFn | None = None
    alpha_nonincreasing: bool = True
    beta_limit: Fraction = Fraction(1)
    quasi_chi: QuasiRate | None = field(default=None, compare=False)
    quasi_h: Counterfunction | None = field(default=None, compare=False)

    def __post_init__(self):
        _pos(self.b, "b")
        _nat(self.ell, "ell")
        if self.D is not None:
            _pos(self.D, "D")
        if self.Dstar is not None:
            _pos(self.Dstar, "Dstar")
        beta = Fraction(self.beta_limit)
        if beta <= 0:
            raise ValueError("beta_limit must be positive")
        object.__setattr__(self, "beta_limit", beta)

    def require(self, *names: str, why: str = ""):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            suffix = f" for {why}" if why else ""
            raise MissingModulus(f"moduli pack lacks {', '.join(missing)}{suffix}")

    def describe(self) -> dict:
        out = {"b": str(self.b), "ell": str(self.ell)}
        for i in range(7):
            s = getattr(self, f"sigma{i}")
            out[f"sigma{i}"] = s.describe() if isinstance(s, Counterfunction) else (
                None if s is None else "callable")
        out["D"] = None if self.D is None else str(self.D)
        out["Dstar"] = None if self.Dstar is None else str(self.Dstar)
        out["delta0"] = None if self.delta0 is None else "supplied"
        out["delta0star"] = None if self.delta0star is None else "supplied"
        out["alpha_nonincreasing"] = self.alpha_nonincreasing
        out["beta_limit"] = str(self.beta_limit)
        out["quasi_rate"] = self.quasi_chi is not None
        return out


# ---------------------------------------------------------------- Browder path metastability


def omega_nonincreasing(d: int, k: int, g: Counterfunction, budget: int = DEFAULT_BUDGET) -> int:
    """``g_tilde^(d^2 (k+1)^2)(0)`` with ``g_tilde(n) = n + g(n)``."""
    d, k = _pos(d, "d"), _nat(k, "k")
    return iterate_tilde(g, 0, d * d * (k + 1) ** 2, budget)


def _running_max(f: NatFn, n: int, budget: int, what: str) -> int:
    if n + 1 > budget:
        raise IterationBudget(what, n + 1, budget)
    return max(f(i) for i in range(n + 1))


def omega_general(chi: QuasiRate, h: Counterfunction, d: int, k: int, g: Counterfunction,
                  budget: int = DEFAULT_BUDGET) -> int:
    """Metastability rate of the Browder path from a quasi-rate ``chi`` of ``alpha_n -> 0``.

    ``h`` must satisfy ``alpha_n >= 1/(h(n)+1)``.  The running maxima over
    ``h`` and over ``chi(., g)`` collapse to a single evaluation when the
    function carries a true ``monotone`` attribute.
    """
    d, k = _pos(d, "d"), _nat(k, "k")

    def chi_g(n: int) -> int:
        return _nat(chi(n, g), "quasi-rate value")

    def h_max(m: int) -> int:
        if getattr(h, "monotone", False):
            return h(m)
        return _running_max(h, m, budget, "running maximum of h")

    def g_h(n: int) -> int:
        c = chi_g(n)
        return h_max(c + g(c))

    start = iterate(g_h, 0, 4 * d * d * (k + 1) ** 2, budget, "iterating g_{h,chi_g}")
    if getattr(chi, "monotone", False):
        return chi_g(start)
    return _running_max(chi_g, start, budget, "running maximum of chi_g")


# ---------------------------------------------------------------- quantitative Xu lemma


def xu_delta(psi: NatFn, chi: NatFn, k: int) -> int:
    """``max{psi(3k+2), chi(3k+2) + 1}``."""
    j = 3 * _nat(k, "k") + 2
    return max(psi(j), chi(j) + 1)


def xu_sigma(M: int, theta: NatFn, psi: NatFn, chi: NatFn, k: int) -> int:
    """Rate of ``s_n -> 0`` from a rate of divergence ``theta`` of ``sum a_n``."""
    M, k = _pos(M, "M"), _nat(k, "k")
    return theta(xu_delta(psi, chi, k) + ceil_ln(3 * M * (k + 1))) + 1


def xu_sigma_tilde(M: int, theta: NatFn, psi: NatFn, chi: NatFn, delta0: NatFn, k: int) -> int:
    """Rate of ``s_n -> 0`` from a rate ``theta`` of ``prod (1 - a_n) -> 0``."""
    M, k = _pos(M, "M"), _nat(k, "k")
    d0 = _pos(delta0(k), "delta0(k)")
    return max(theta(3 * M * d0 * (k + 1) - 1), xu_delta(psi, chi, k)) + 1


def xu_delta_star(psi_star: NatFn, k: int) -> int:
    return psi_star(2 * _nat(k, "k") + 1)


def xu_sigma_star(M: int, theta: NatFn, psi_star: NatFn, k: int) -> int:
    """Error-free variant of :func:`xu_sigma`."""
    M, k = _pos(M, "M"), _nat(k, "k")
    return theta(xu_delta_star(psi_star, k) + ceil_ln(2 * M * (k + 1))) + 1


def xu_sigma_star_tilde(M: int, theta: NatFn, psi_star: NatFn, delta0star: NatFn, k: int) -> int:
    """Error-free variant of :func:`xu_sigma_tilde`."""
    M, k = _pos(M, "M"), _nat(k, "k")
    d0 = _pos(delta0star(k), "delta0star(k)")
    return max(theta(2 * M * d0 * (k + 1) - 1), xu_delta_star(psi_star, k)) + 1


# ---------------------------------------------------------------- ||x_n - z_n|| rates

BRANCHES = ("C1", "C2")


def _branch(branch: str) -> str:
    if branch not in BRANCHES:
        raise ValueError(f"branch must be one of {BRANCHES}, got {branch!r}")
    return branch


def psi_v1(pack: ModuliPack, k: int) -> int:
    """``max{sigma4(6b(l+1)(k+1)-1), sigma3(6b(k+1)-1)}``."""
    pack.require("sigma3", "sigma4", why="psi")
    b, ell, k = pack.b, pack.ell, _nat(k, "k")
    return max(pack.sigma4(6 * b * (ell + 1) * (k + 1) - 1), pack.sigma3(6 * b * (k + 1) - 1))


def psi_v2(pack: ModuliPack, k: int) -> int:
    """``max{sigma4(9b(l+1)(k+1)-1), sigma3(9b(k+1)-1), sigma6(3k+2)}``."""
    pack.require("sigma3", "sigma4", "sigma6", why="psi*")
    b, ell, k = pack.b, pack.ell, _nat(k, "k")
    return max(pack.sigma4(9 * b * (ell + 1) * (k + 1) - 1), pack.sigma3(9 * b * (k + 1) - 1),
               pack.sigma6(3 * k + 2))


def delta_v1(pack: ModuliPack, k: int) -> int:
    pack.require("sigma5", why="delta")
    return xu_delta(lambda j: psi_v1(pack, j), pack.sigma5, k)


def delta_v2(pack: ModuliPack, k: int) -> int:
    return xu_delta_star(lambda j: psi_v2(pack, j), k)


def theta_v1(pack: ModuliPack, k: int, branch: str = "C1") -> int:
    """Rate of ``||x_n - z_n|| -> 0`` under summable errors (C5)."""
    pack.require("sigma3", "sigma4", "sigma5", "D", why="theta_v1")
    M = pack.D + 5 * pack.b
    psi = lambda j: psi_v1(pack, j)  # noqa: E731
    if _branch(branch) == "C1":
        pack.require("sigma1", why="theta_v1 branch C1")
        return xu_sigma(M, pack.sigma1, psi, pack.sigma5, k)
    pack.require("sigma2", "delta0", why="theta_v1 branch C2")
    return xu_sigma_tilde(M, pack.sigma2, psi, pack.sigma5, pack.delta0, k)


def theta_v2(pack: ModuliPack, k: int, branch: str = "C1") -> int:
    """Rate of ``||x_n - z_n|| -> 0`` under ``||e_n||/alpha_n -> 0`` (C6)."""
    pack.require("sigma3", "sigma4", "sigma6", "Dstar", why="theta_v2")
    M = 2 * pack.Dstar + 6 * pack.b
    psi = lambda j: psi_v2(pack, j)  # noqa: E731
    if _branch(branch) == "C1":
        pack.require("sigma1", why="theta_v2 branch C1")
        return xu_sigma_star(M, pack.sigma1, psi, k)
    pack.require("sigma2", "delta0star", why="theta_v2 branch C2")
    return xu_sigma_star_tilde(M, pack.sigma2, psi, pack.delta0star, k)


def theta_function(pack: ModuliPack, version: int = 1, branch: str = "C1") -> Counterfunction:
    """``k -> theta_v{version}(pack, k, branch)`` as a monotone counterfunction."""
    fn = theta_v1 if version == 1 else theta_v2
    return Counterfunction.from_callable(lambda k: fn(pack, k, branch), monotone=True,
                                         name=f"theta_v{version}[{branch}]")


# ---------------------------------------------------------------- asymptotic regularity


@dataclass(frozen=True)
class AsregRates:
    """Rates of asymptotic regularity at one ``k``.

    ``sigma_j`` is for ``J_{beta A}``, ``sigma_fam`` for the family
    ``(J_{beta_n A})`` and ``sigma_at[M]`` for a fixed ``J_{beta_i A}`` with
    ``|beta - beta_i| <= M``.
    """

    k: int
    sigma_j: int
    sigma_fam: int
    sigma_at: dict


def asreg_sigma(sigma0: NatFn, b: int, Lambda: NatFn, k: int) -> int:
    """``max{sigma0(6b(k+1)-1), Lambda(4k+3)}``."""
    b, k = _pos(b, "b"), _nat(k, "k")
    return max(sigma0(6 * b * (k + 1) - 1), Lambda(4 * k + 3))


def asreg_rates(sigma0: NatFn, sigma4: NatFn, b: int, ell: int, Lambda: NatFn, k: int,
                M_values=(1,)) -> AsregRates:
    k, ell = _nat(k, "k"), _nat(ell, "ell")
    sigma = lambda j: asreg_sigma(sigma0, b, Lambda, j)  # noqa: E731
    fam = max(sigma4(ell), sigma(2 * k + 1))
    at = {_nat(M, "M_i"): sigma((1 + (ell + 1) * M) * (k + 1) - 1) for M in M_values}
    return AsregRates(k, sigma(k), fam, at)


# ---------------------------------------------------------------- metastability of (x_n)


def gamma_combine(Omega: Callable[[int, Counterfunction], int], phi: NatFn, k: int,
                  g: Counterfunction) -> int:
    """Metastability rate for ``(v_n)`` from one for ``(u_n)`` and a rate ``phi`` of ``||u_n - v_n|| -> 0``."""
    k = _nat(k, "k")
    threshold = phi(3 * k + 2)
    return max(threshold, Omega(3 * k + 2, Counterfunction.shifted(g, threshold)))


def _omega_for(pack: ModuliPack, quasi: bool, budget: int):
    d = 3 * pack.b
    if quasi or not pack.alpha_nonincreasing:
        if pack.quasi_chi is None or pack.quasi_h is None:
            raise MissingModulus("alpha is not known to be nonincreasing and no quasi-rate "
                                 "(quasi_chi, quasi_h) is supplied")
        return lambda j, gg: omega_general(pack.quasi_chi, pack.quasi_h, d, j, gg, budget)
    return lambda j, gg: omega_nonincreasing(d, j, gg, budget)


def phi_v1(pack: ModuliPack, k: int, g: Counterfunction, branch: str = "C1",
           quasi: bool = False, budget: int = DEFAULT_BUDGET) -> int:
    """Rate of metastability of ``(x_n)`` built from :func:`theta_v1`."""
    omega = _omega_for(pack, quasi, budget)
    return gamma_combine(omega, lambda j: theta_v1(pack, j, branch), k, g)


def phi_v2(pack: ModuliPack, k: int, g: Counterfunction, branch: str = "C1",
           quasi: bool = False, budget: int = DEFAULT_BUDGET) -> int:
    """Rate of metastability of ``(x_n)`` built from :func:`theta_v2`."""
    omega = _omega_for(pack, quasi, budget)
    return gamma_combine(omega, lambda j: theta_v2(pack, j, branch), k, g)


def delta_L(theta: NatFn, b: int, L: int, k: int) -> int:
    """Rate of L-metastability ``theta(3k+2) + 81 b^2 (k+1)^2 L``."""
    b, L, k = _pos(b, "b"), _nat(L, "L"), _nat(k, "k")
    return theta(3 * k + 2) + 81 * b * b * (k + 1) ** 2 * L


# ---------------------------------------------------------------- side quantities


def _ceil_exp(x: float) -> int:
    """``ceil(exp(x))`` for ``x >= 0`` with enough decimal precision to be exact."""
    if x > MAX_LOG_SURVIVAL:
        raise ProductUnderflow(x)
    digits = int(x / math.log(10)) + 30
    ctx = Context(prec=digits, Emax=digits + 10)
    return int(ctx.exp(Decimal(x)).to_integral_value(rounding=ROUND_CEILING))


def delta0_from_schedule(alpha, delta: NatFn | int, k: int, budget: int = 10**8) -> int:
    """A valid ``delta0(k)``: an integer ``>= 1/prod_{j<delta(k)} (1 - alpha_j)``.

    Exact rationals are used when the schedule provides them and the product
    is short; otherwise ``-sum log(1 - alpha_j)`` is accumulated in floating
    point and inflated before exponentiating, so the result can only be too
    large, which keeps it valid.
    """
    count = _nat(delta if isinstance(delta, int) else delta(_nat(k, "k")), "delta(k)")
    if count == 0:
        return 1
    exact = [alpha.exact(j) for j in range(count)] if count <= EXACT_PRODUCT_LIMIT else None
    if exact is not None and all(a is not None for a in exact):
        prod = Fraction(1)
        for j, a in enumerate(exact):
            if a >= 1:
                raise ValueError(f"alpha_{j} = 1 makes the product vanish")
            prod *= 1 - a
        return math.ceil(1 / prod)
    if count > budget:
        raise IterationBudget("accumulating log(1 - alpha_j)", count, budget)
    s = log_survival(alpha, count)
    if math.isinf(s):
        raise ValueError("some alpha_j = 1 makes the product vanish")
    return _ceil_exp(s * (1 + LOG_SLACK_REL) + LOG_SLACK_ABS)


def iterate_bound(b: int, D: int, branch: str) -> int:
    """Bound on ``||x_n - p||``: ``b + D`` for summable errors, ``max{2(b + D*), b}`` otherwise."""
    b, D = _pos(b, "b"), _pos(D, "D")
    if branch == "sum":
        return b + D
    if branch == "frac":
        return max(2 * (b + D), b)
    raise ValueError("branch must be 'sum' or 'frac'")
