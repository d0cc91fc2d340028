"""
The worked example: ``alpha_n = (n+2)^(-3/4)``, ``beta_n = 1 + (-1)^n/(n+1)``, ``e_n = 0``.

Closed-form polynomial rates depending only on ``b`` are provided next to the
generic formulas they are claimed to dominate; each closed form asserts that
relation whenever it is evaluated.  A perturbed variant with
``||e_n|| = 10^-3 * 2^-n`` exercises the error branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import moduli
from .certify import (CertReport, b_for_instance, check_asymptotic_regularity, check_b,
                      check_lemma_inequalities, check_rate_of_convergence, inject_fault,
                      metastability_witness_record, soundness_check, validate_moduli)
from .counterfunctions import Counterfunction, parse
from .dynamics import browder_path, run_hppa
from .moduli import ModuliPack
from .operators import MonotoneOperator, as_point
from .schedules import perturbed_section5_schedule, section5_schedule
from .tolerance import Tolerance

DEFAULT_GS = ("0", "1", "10", "identity")
DEFAULT_LS = (0, 1, 10, 1000)


def _b(b) -> int:
    if isinstance(b, bool) or int(b) != b or b < 1:
        raise ValueError("b must be a positive integer")
    return int(b)


def section5_pack(b: int) -> ModuliPack:
    b = _b(b)
    C = Counterfunction
    return ModuliPack(
        b=b, ell=0,
        sigma0=C.succ_power(2), sigma1=C.succ_power(4), sigma2=C.identity(),
        sigma3=C.succ_power(4, add=1), sigma4=C.identity(),
        sigma5=C.constant(0), sigma6=C.constant(0),
        D=1, Dstar=1, alpha_nonincreasing=True, beta_limit=Fraction(1))


PERTURBED_M = Fraction(1, 1000)


def _perturbed_sigma5(k: int) -> int:
    # sum_{i>s} 10^-3 2^-i = 10^-3 2^-s <= 1/(k+1)  <=>  1000 * 2^s >= k+1
    s = 0
    while 1000 * 2**s < k + 1:
        s += 1
    return s


def _error_ratio(n: int) -> float:
    return 1e-3 * 2.0 ** (-n) * (n + 2) ** 0.75


def _perturbed_sigma6(k: int) -> int:
    # ||e_n||/alpha_n is decreasing in n, so the first index below 1/(k+1) works for all later n
    n = 0
    while _error_ratio(n) * (1 + 1e-12) > 1.0 / (k + 1):
        n += 1
    return n


def perturbed_pack(b: int) -> ModuliPack:
    """Moduli for the perturbed schedule: the same as the error-free ones except the error moduli."""
    base = section5_pack(b)
    C = Counterfunction
    return ModuliPack(
        b=base.b, ell=0, sigma0=base.sigma0, sigma1=base.sigma1, sigma2=base.sigma2,
        sigma3=base.sigma3, sigma4=base.sigma4,
        sigma5=C.from_callable(_perturbed_sigma5, monotone=True, name="sigma5[geometric 1e-3]"),
        sigma6=C.from_callable(_perturbed_sigma6, monotone=True, name="sigma6[geometric 1e-3]"),
        D=2, Dstar=1, alpha_nonincreasing=True, beta_limit=Fraction(1))


# ---------------------------------------------------------------- closed-form rates


def _theta0_raw(b: int, k: int) -> int:
    m = 18 * b * (k + 1)
    return (m**4 + m + 1) ** 4 + 1


def theta0(b: int, k: int) -> int:
    """``(18^4 b^4 (k+1)^4 + 18b(k+1) + 1)^4 + 1``, a rate of ``||x_n - z_n|| -> 0``."""
    b = _b(b)
    value = _theta0_raw(b, k)
    generic = moduli.theta_v1(section5_pack(b), k, "C1")
    assert generic <= value, "closed-form rate fails to dominate the generic one"
    return value


@dataclass(frozen=True)
class SigmaBars:
    bar: int
    bar_star: int


def _sigma_bar_raw(b: int, k: int) -> int:
    m = 72 * b * (k + 1)
    return (m**4 + m + 1) ** 4 + 1


def sigma_bars(b: int, k: int) -> SigmaBars:
    """Polynomial rates of asymptotic regularity for ``J_{beta A}`` and the family ``(J_{beta_n A})``."""
    b = _b(b)
    C = 72 * b
    bar = _sigma_bar_raw(b, k)
    bar_star = (16 * C**4 * (k + 1) ** 4 + 2 * C * (k + 1) + 1) ** 4 + 1
    assert bar_star == _sigma_bar_raw(b, 2 * k + 1)
    pack = section5_pack(b)
    theta = lambda j: _theta0_raw(b, j)  # noqa: E731
    rates = moduli.asreg_rates(pack.sigma0, pack.sigma4, b, pack.ell, theta, k, M_values=(1,))
    assert rates.sigma_j <= bar and rates.sigma_fam <= bar_star
    return SigmaBars(bar, bar_star)


def delta_bar_L(b: int, L: int, k: int) -> int:
    """Rate of L-metastability ``(54^4 b^4 (k+1)^4 + 54b(k+1) + 1)^4 + 81 b^2 (k+1)^2 L + 1``."""
    b = _b(b)
    if isinstance(L, bool) or int(L) != L or L < 0:
        raise ValueError("L must be a natural number")
    m = 54 * b * (k + 1)
    value = (m**4 + m + 1) ** 4 + 81 * b * b * (k + 1) ** 2 * L + 1
    assert moduli.delta_L(lambda j: _theta0_raw(b, j), b, L, k) == value
    return value


def rate_rows(b: int, k_max: int, Ls=DEFAULT_LS) -> list:
    """``(rate_name, k, L, value)`` rows of every closed-form rate for ``k <= k_max``."""
    rows = []
    for k in range(k_max + 1):
        rows.append(("theta0", k, "", theta0(b, k)))
        bars = sigma_bars(b, k)
        rows.append(("sigma_bar", k, "", bars.bar))
        rows.append(("sigma_bar_star", k, "", bars.bar_star))
        for L in Ls:
            rows.append(("delta_bar_L", k, str(L), delta_bar_L(b, L, k)))
    return rows


# ---------------------------------------------------------------- end-to-end run


def run_section5(op: MonotoneOperator, u, x0, budget: int, k_max: int = 5, gs=DEFAULT_GS,
                 perturbed: bool = False, tol: Tolerance | None = None, fault: bool = False,
                 modulus_horizon: int | None = None, seed: int | None = None):
    """Trajectory, Browder path, every lemma check, modulus validation and witness search.

    Returns ``(report, artifacts)`` where ``artifacts`` holds the trajectory,
    the Browder path and the rate rows for export.
    """
    tol = tol or Tolerance.from_env()
    u = as_point(u, op.dim)
    x0 = as_point(x0, op.dim)
    budget = int(budget)
    schedule = perturbed_section5_schedule(direction="random" if seed is not None else "fixed",
                                           seed=seed) if perturbed else section5_schedule()
    b = b_for_instance(op, u, x0)
    pack = perturbed_pack(b) if perturbed else section5_pack(b)
    traj = run_hppa(op, schedule, u, x0, budget)
    zpath = browder_path(op, 1.0, schedule, u, n_max=budget)

    perturb = None
    if fault:
        index = min(budget - 1, max(1, budget // 2))
        traj, zpath, perturb = inject_fault("step_bound", traj, zpath, op, u, index)

    report = CertReport(instance={"example": "section5", "perturbed": perturbed, "operator": op.describe(),
                                  "u": u.tolist(), "x0": x0.tolist(), "b": str(b), "budget": budget,
                                  "k_max": k_max, "fault_injected": fault}, tolerance=tol)
    report.checks.append(check_b(b, op, u, x0))
    report.extend(check_lemma_inequalities(traj, zpath, op, u, tol, perturb))
    report.extend(validate_moduli(pack, schedule, modulus_horizon or budget, tol))

    x = traj.points
    dist_xz = np.linalg.norm(x - zpath.points, axis=1)
    theta = (lambda j: moduli.theta_v1(pack, j)) if perturbed else (lambda j: theta0(b, j))
    report.extend(check_rate_of_convergence(dist_xz, 0.0, theta, k_max, budget, tol,
                                            name="rate_of_convergence", rate_name="theta"))
    asreg = (lambda j: moduli.asreg_sigma(pack.sigma0, b, theta, j))
    report.extend(check_asymptotic_regularity(traj, op, 1.0, asreg, k_max, budget, tol,
                                              rate_name="sigma_bar"))

    for k in range(k_max + 1):
        for desc in gs:
            g = parse(desc)
            bound = moduli.phi_v1(pack, k, g) if perturbed else _phi_section5(b, pack, k, g)
            report.witnesses.append(metastability_witness_record(x, k, g, budget, bound))
            L = g.constant_value
            if L is not None and not perturbed:
                report.witnesses.append(metastability_witness_record(
                    x, k, g, budget, delta_bar_L(b, L, k), kind="L-metastability"))
    report.checks.append(soundness_check(report.witnesses))
    artifacts = {"trajectory": traj, "browder": zpath, "b": b, "pack": pack,
                 "rates": rate_rows(b, k_max), "residuals": None}
    return report, artifacts


def _phi_section5(b: int, pack: ModuliPack, k: int, g: Counterfunction) -> int:
    """Metastability bound built on the closed-form rate; never below the generic one."""
    omega = lambda j, gg: moduli.omega_nonincreasing(3 * b, j, gg)  # noqa: E731
    return moduli.gamma_combine(omega, lambda j: _theta0_raw(b, j), k, g)


def strong_convergence_profile(op: MonotoneOperator, u, x0, checkpoints=(10**2, 10**3, 10**4, 10**5)):
    """``||x_n - P u||`` at the checkpoints for the error-free schedule."""
    u = as_point(u, op.dim)
    traj = run_hppa(op, section5_schedule(), u, x0, max(checkpoints))
    p = op.project_zero_set(u)
    return [float(np.linalg.norm(traj.points[n] - p)) for n in checkpoints]


def residual_ratio(op: MonotoneOperator, u, x0, early: int = 100, late: int = 100_000) -> float:
    """``r_early / r_late`` for ``r_n = ||x_n - J_{1 A} x_n||`` on the error-free schedule."""
    traj = run_hppa(op, section5_schedule(), u, x0, late)
    x = traj.points
    r = np.linalg.norm(x - op.resolvent(1.0, x), axis=1)
    return float(r[early] / r[late]) if r[late] > 0 else math.inf
