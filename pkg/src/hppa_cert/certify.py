"""
Empirical certification of trajectories and moduli.

Every inequality check evaluates ``lhs <= rhs`` row-wise under a
:class:`~hppa_cert.tolerance.Tolerance` and keeps the worst relative excess.
Bounds that are too large to be tested inside the recorded horizon are
reported as vacuous passes, next to the empirical witness that was observed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .counterfunctions import Counterfunction
from .dynamics import Trajectory
from .export import decimal_str
from .moduli import ModuliPack, delta_v1, delta_v2
from .operators import MonotoneOperator, as_point
from .schedules import ParamSchedule, log_survival
from .tolerance import Tolerance

MAX_OFFENDERS = 20
DEFAULT_WINDOW_CAP = 10_000

# descriptive anchors for every checked statement
ANCHORS = {
    "step_bound": "||x_{n+1}-p|| <= a_n||u-p|| + (1-a_n)||x_n-p|| + ||e_n||",
    "cumulative_bound": "||x_n-p|| <= max{||u-p||,||x_0-p||} + sum_{i<n} ||e_i||",
    "iterate_bound_sum": "||x_n-p|| <= D1 = max{||u-p||,||x_0-p||} + D (D bounds partial error sums)",
    "iterate_bound_frac": "||x_n-p|| <= D2 = max{2(||u-p||+D), ||x_0-p||} (D bounds ||e_n||/a_n)",
    "browder_near_zero": "||z_n-p|| <= 2||u-p||",
    "browder_near_anchor": "||z_n-u|| <= 3||u-p||",
    "browder_resolvent_near_anchor": "||J_{beta A} z_n - u|| <= 3||u-p||",
    "joint_step": "||x_{n+1}-z_n|| <= (1-a_n)||x_n-z_n|| + a_n|beta-beta_n|/beta ||u-J z_n|| + ||e_n||",
    "browder_consecutive": "||z_n-z_{n+1}|| <= |a_n-a_{n+1}|/a_n ||u-J z_{n+1}||",
    "sigma0": "(C0_q) a_n <= 1/(k+1) for n >= sigma0(k)",
    "sigma1": "(C1_q) sum_{i<=sigma1(k)} a_i >= k",
    "sigma2": "(C2_q) prod_{i<=sigma2(k)} (1-a_i) <= 1/(k+1)",
    "sigma3": "(C3_q) |a_{n+1}-a_n|/a_n^2 <= 1/(k+1) for n >= sigma3(k)",
    "sigma4": "(C4_q) |beta_n-beta| <= 1/(k+1) for n >= sigma4(k)",
    "sigma5": "(C5_q) sum_{i>sigma5(k)} ||e_i|| <= 1/(k+1)",
    "sigma6": "(C6_q) ||e_n||/a_n <= 1/(k+1) for n >= sigma6(k)",
    "ell": "beta >= 1/(ell+1)",
    "D": "D >= sum_{i<=sigma5(0)} ||e_i|| + 1",
    "Dstar": "D* >= max_{i<=sigma6(0)} max{||e_i||/a_i, 1}",
    "delta0": "1/delta0(k) <= prod_{j<delta(k)} (1-a_j)",
    "delta0star": "1/delta0*(k) <= prod_{j<delta*(k)} (1-a_j)",
    "alpha_nonincreasing": "a_{n+1} <= a_n",
    "b": "b >= max{||x_0-p||, ||u-p||}",
    "rate_of_convergence": "|a_n - a| <= 1/(k+1) for n >= rate(k)",
    "asymptotic_regularity": "||x_n - J x_n|| <= 1/(k+1) for n >= rate(k)",
    "residual_spike": "residual ||x_n - J x_n|| has no isolated upward spike",
    "finite_product": "s_{n+m+1} <= P s_n + (1-P)/(p+1) + sum c_i, P = prod_{i=n}^{n+m}(1-a_i)",
    "metastability": "exists N <= Phi(k,g) with ||x_i-x_j|| <= 1/(k+1) on [N, N+g(N)]",
}


class CertificationError(ValueError):
    pass


class WindowExceedsData(CertificationError):
    """The window ``[N, N+g(N)]`` runs past the recorded values (not the same as "no witness")."""

    def __init__(self, N: int, end: int, length: int):
        super().__init__(f"window [{N}, {end}] exceeds the {length} recorded values")
        self.N, self.end, self.length = N, end, length


# ---------------------------------------------------------------- report types


@dataclass
class CheckResult:
    name: str
    paper_anchor: str
    n_range: tuple
    max_violation: float
    passed: bool
    worst_index: int | None = None
    vacuous: bool = False
    diagnostic: bool = False
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "paper_anchor": self.paper_anchor,
            "n_range": list(self.n_range),
            "max_violation": float(self.max_violation),
            "pass": bool(self.passed),
            "vacuous": bool(self.vacuous),
            "diagnostic": bool(self.diagnostic),
            "worst_index": self.worst_index,
            "details": self.details,
        }


@dataclass
class WitnessRecord:
    kind: str
    k: int
    g: str
    empirical_N: int | None
    bound: int | None
    bound_exceeds_budget: bool
    note: str = ""

    @property
    def sound(self) -> bool | None:
        """``N <= bound`` when both are known, else ``None``."""
        if self.empirical_N is None or self.bound is None:
            return None
        return self.empirical_N <= self.bound

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "k": self.k,
            "g": self.g,
            "empirical_N": self.empirical_N,
            "bound": None if self.bound is None else decimal_str(self.bound),
            "bound_exceeds_budget": self.bound_exceeds_budget,
            "sound": self.sound,
            "note": self.note,
        }


@dataclass
class CertReport:
    instance: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    witnesses: list = field(default_factory=list)
    tolerance: Tolerance = field(default_factory=Tolerance)

    def extend(self, other: "CertReport") -> "CertReport":
        self.checks.extend(other.checks)
        self.witnesses.extend(other.witnesses)
        return self

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c.passed and not c.diagnostic]

    @property
    def unsound_witnesses(self) -> list:
        return [w for w in self.witnesses if w.sound is False]

    @property
    def passed(self) -> bool:
        """True iff every non-vacuous, non-diagnostic check passed and no witness beats its bound."""
        return not self.failures and not self.unsound_witnesses

    def check(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "instance": self.instance,
            "tolerance": self.tolerance.as_dict(),
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "witnesses": [w.to_dict() for w in self.witnesses],
        }


# ---------------------------------------------------------------- inequality evaluation


def inequality_result(name: str, lhs, rhs, tol: Tolerance, offset: int = 0,
                      anchor: str | None = None, details: dict | None = None) -> CheckResult:
    """Evaluate ``lhs[i] <= rhs[i]``; index ``i`` is reported as ``offset + i``."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.broadcast_to(np.asarray(rhs, dtype=float), lhs.shape)
    anchor = anchor or ANCHORS.get(name, name)
    if lhs.size == 0:
        return CheckResult(name, anchor, (offset, offset - 1), 0.0, True, None, vacuous=True,
                           details=details or {})
    excess = tol.relative_excess(lhs, rhs)
    excess = np.where(np.isnan(excess), np.inf, excess)
    worst = int(np.argmax(excess))
    viol = max(float(excess[worst]), 0.0)
    info = dict(details or {})
    bad = np.flatnonzero(excess > tol.rtol)
    if bad.size:
        info["violations"] = int(bad.size)
        info["first_violation"] = int(offset + bad[0])
    return CheckResult(name, anchor, (offset, offset + lhs.size - 1), viol, viol <= tol.rtol,
                       offset + worst, details=info)


def _perturb(lhs: np.ndarray, name: str, perturb: dict | None) -> np.ndarray:
    """Apply a left-hand-side fault ``perturb[name] = (row, amount)`` (fault-injection hook)."""
    if perturb and name in perturb:
        row, amount = perturb[name]
        lhs = lhs.copy()
        lhs[row] += amount
    return lhs


def _norms(v) -> np.ndarray:
    return np.linalg.norm(np.atleast_2d(v), axis=1)


def check_lemma_inequalities(traj: Trajectory, zpath: Trajectory | None, op: MonotoneOperator,
                             u, tol: Tolerance | None = None,
                             perturb: dict | None = None) -> CertReport:
    """Check the iterate bounds and, with a Browder path, the approximant bounds and the joint recurrences.

    ``perturb`` maps a check name to ``(row, amount)`` added to that check's
    left-hand side; it exists to prove that every checker can fail.
    """
    tol = tol or Tolerance()
    if traj.kind not in ("HPPA", "Halpern"):
        raise CertificationError("lemma checks need an anchored (HPPA or Halpern) trajectory")
    u = as_point(u, op.dim)
    x = traj.points
    N = traj.n_steps
    a, beta_n, e = traj.alpha, traj.beta, traj.err_norm
    p = op.project_zero_set(u)
    r_u = float(np.linalg.norm(u - p))
    dist = _norms(x - p)
    start = max(r_u, float(dist[0]))
    report = CertReport(instance={"operator": op.describe(), "kind": traj.kind, "n_max": N},
                        tolerance=tol)
    add = report.checks.append

    lhs = _perturb(dist[1:], "step_bound", perturb)
    add(inequality_result("step_bound", lhs, a[:N] * r_u + (1 - a[:N]) * dist[:N] + e[:N], tol))

    partial = np.concatenate([[0.0], np.cumsum(e[:N])])
    lhs = _perturb(dist, "cumulative_bound", perturb)
    add(inequality_result("cumulative_bound", lhs, start + partial, tol))

    D_sum = float(partial[-1])
    lhs = _perturb(dist, "iterate_bound_sum", perturb)
    add(inequality_result("iterate_bound_sum", lhs, np.full(N + 1, start + D_sum), tol,
                          details={"D": D_sum}))
    if np.all(a[:N] > 0):
        D_frac = float(np.max(e[:N] / a[:N])) if N else 0.0
        D2 = max(2 * (r_u + D_frac), float(dist[0]))
        lhs = _perturb(dist, "iterate_bound_frac", perturb)
        add(inequality_result("iterate_bound_frac", lhs, np.full(N + 1, D2), tol,
                              details={"D": D_frac}))

    if zpath is None:
        return report
    if zpath.kind != "BrowderPath" or len(zpath) < len(traj):
        raise CertificationError("Browder path must be at least as long as the trajectory")
    z = zpath.points[: N + 1]
    if not np.allclose(zpath.alpha[: N + 1], a, rtol=0, atol=0):
        raise CertificationError("trajectory and Browder path use different alpha_n")
    beta = float(zpath.beta[0])
    jz = op.resolvent(beta, z)
    u_jz = _norms(u - jz)

    for name, vals, bound in (("browder_near_zero", _norms(z - p), 2 * r_u),
                              ("browder_near_anchor", _norms(z - u), 3 * r_u),
                              ("browder_resolvent_near_anchor", u_jz, 3 * r_u)):
        add(inequality_result(name, _perturb(vals, name, perturb), np.full(N + 1, bound), tol))

    lhs = _perturb(_norms(x[1:] - z[:N]), "joint_step", perturb)
    rhs = ((1 - a[:N]) * _norms(x[:N] - z[:N])
           + a[:N] * np.abs(beta - beta_n[:N]) / beta * u_jz[:N] + e[:N])
    add(inequality_result("joint_step", lhs, rhs, tol))

    lhs = _perturb(_norms(z[:N] - z[1:]), "browder_consecutive", perturb)
    rhs = np.abs(a[:N] - a[1:]) / a[:N] * u_jz[1:]
    add(inequality_result("browder_consecutive", lhs, rhs, tol))
    return report


# ---------------------------------------------------------------- fault injection


def displace(traj: Trajectory, index: int, center, distance: float) -> Trajectory:
    """Copy of ``traj`` with point ``index`` moved radially so that ``||x_index - center|| = distance``."""
    pts = np.array(traj.points)
    center = np.asarray(center, dtype=float)
    if center.ndim == 2:
        center = center[index]
    v = pts[index] - center
    nv = np.linalg.norm(v)
    direction = v / nv if nv > 0 else np.eye(pts.shape[1])[0]
    pts[index] = center + distance * direction
    return traj.replace_points(pts)


def shift_point(traj: Trajectory, index: int, delta: float = 1.0) -> Trajectory:
    """Copy of ``traj`` with ``delta`` added to every coordinate of point ``index``."""
    pts = np.array(traj.points)
    pts[index] += delta
    return traj.replace_points(pts)


def inject_fault(check: str, traj: Trajectory, zpath: Trajectory | None, op: MonotoneOperator,
                 u, index: int, magnitude: float = 1e-3):
    """Corrupt one point so that ``check`` is violated at row ``index`` by about ``magnitude``.

    Returns ``(traj, zpath, perturb)``.  Where moving a point cannot break the
    inequality (a bounded resolvent range), the fault is injected on the
    checked left-hand side through ``perturb`` instead.
    """
    u = as_point(u, op.dim)
    p = op.project_zero_set(u)
    r_u = float(np.linalg.norm(u - p))
    a, e = traj.alpha, traj.err_norm
    dist = _norms(traj.points - p)
    start = max(r_u, float(dist[0]))

    def bump(rhs):
        return rhs + magnitude * max(1.0, abs(rhs))

    n = index
    if check == "step_bound":
        rhs = a[n] * r_u + (1 - a[n]) * dist[n] + e[n]
        return displace(traj, n + 1, p, bump(rhs)), zpath, None
    if check in ("cumulative_bound", "iterate_bound_sum"):
        rhs = start + float(np.sum(e[: traj.n_steps if check == "iterate_bound_sum" else n]))
        return displace(traj, n, p, bump(rhs)), zpath, None
    if check == "iterate_bound_frac":
        N = traj.n_steps
        D = float(np.max(e[:N] / a[:N])) if N else 0.0
        return displace(traj, n, p, bump(max(2 * (r_u + D), float(dist[0])))), zpath, None
    if zpath is None:
        raise CertificationError(f"{check} needs a Browder path")
    if check == "browder_near_zero":
        return traj, displace(zpath, n, p, bump(2 * r_u)), None
    if check == "browder_near_anchor":
        return traj, displace(zpath, n, u, bump(3 * r_u)), None
    beta = float(zpath.beta[0])
    z = zpath.points
    if check == "joint_step":
        jz = op.resolvent(beta, z[n])
        rhs = ((1 - a[n]) * np.linalg.norm(traj.points[n] - z[n])
               + a[n] * abs(beta - traj.beta[n]) / beta * np.linalg.norm(u - jz) + e[n])
        return displace(traj, n + 1, z[n], bump(rhs)), zpath, None
    if check == "browder_consecutive":
        jz1 = op.resolvent(beta, z[n + 1])
        rhs = abs(a[n] - a[n + 1]) / a[n] * np.linalg.norm(u - jz1)
        return traj, displace(zpath, n, z[n + 1], bump(rhs)), None
    if check == "browder_resolvent_near_anchor":
        target = bump(3 * r_u)
        for scale in 2.0 ** np.arange(1, 60):
            moved = displace(zpath, n, u, scale * max(target, 1.0))
            if np.linalg.norm(u - op.resolvent(beta, moved.points[n])) > target:
                return traj, moved, None
        current = float(np.linalg.norm(u - op.resolvent(beta, z[n])))
        return traj, zpath, {check: (n, target - current)}
    raise ValueError(f"no fault recipe for {check!r}")


# ---------------------------------------------------------------- modulus validation


def _suffix_max(arr: np.ndarray) -> np.ndarray:
    return np.maximum.accumulate(arr[::-1])[::-1]


def _suffix_argmax(arr: np.ndarray) -> np.ndarray:
    """``out[j]`` is an index ``n >= j`` where ``arr[n] = max(arr[j:])``."""
    rev = arr[::-1]
    running = np.maximum.accumulate(rev)
    pos = np.arange(len(rev))
    latest = np.maximum.accumulate(np.where(rev == running, pos, 0))
    return (len(arr) - 1 - latest)[::-1]


def _k_values(sigma: Callable[[int], int], horizon: int, k_cap: int):
    """``(k, sigma(k))`` for k = 0, 1, ... while ``sigma(k) <= horizon`` (monotone sigma)."""
    ks, vals = [], []
    monotone = getattr(sigma, "monotone", True)
    for k in range(k_cap + 1):
        s = sigma(k)
        if s > horizon:
            if monotone:
                break
            continue
        ks.append(k)
        vals.append(s)
    return np.array(ks, dtype=np.int64), np.array(vals, dtype=np.int64)


def _modulus_result(name: str, ks, lhs, rhs, worst_n, tol: Tolerance, horizon: int) -> CheckResult:
    res = inequality_result(name, lhs, rhs, tol, details={"k_checked": int(len(ks)), "horizon": horizon})
    res.n_range = (0, horizon)
    if len(ks):
        excess = tol.relative_excess(lhs, rhs)
        bad = np.flatnonzero(excess > tol.rtol)[:MAX_OFFENDERS]
        res.worst_index = int(worst_n[int(np.argmax(excess))])
        res.details["k_max_checked"] = int(ks[-1])
        if bad.size:
            res.details["offending"] = [[int(ks[i]), int(worst_n[i])] for i in bad]
    return res


def _tail_check(name, sigma, arr, horizon, tol, k_cap):
    """``max_{sigma(k) <= n <= horizon} arr[n] <= 1/(k+1)``."""
    ks, s = _k_values(sigma, horizon, k_cap)
    suf = _suffix_max(arr)
    lhs = suf[s] if len(ks) else np.zeros(0)
    worst = _suffix_argmax(arr)[s] if len(ks) else s
    return _modulus_result(name, ks, lhs, 1.0 / (ks + 1.0), worst, tol, horizon)


def validate_moduli(pack: ModuliPack, schedule: ParamSchedule, horizon: int,
                    tol: Tolerance | None = None, k_cap: int | None = None) -> CertReport:
    """Check every supplied modulus against the schedule on ``n <= horizon``."""
    tol = tol or Tolerance()
    horizon = int(horizon)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    k_cap = horizon if k_cap is None else int(k_cap)
    idx = np.arange(horizon + 2)
    alpha = np.asarray(schedule.alpha(idx), dtype=float)
    report = CertReport(instance={"pack": pack.describe(), "schedule": schedule.describe(),
                                  "horizon": horizon}, tolerance=tol)
    add = report.checks.append
    n = np.arange(horizon + 1)
    a = alpha[: horizon + 1]

    if pack.sigma0 is not None:
        add(_tail_check("sigma0", pack.sigma0, a, horizon, tol, k_cap))
    if pack.sigma1 is not None:
        ks, s = _k_values(pack.sigma1, horizon, k_cap)
        prefix = np.cumsum(a)
        # sum >= k  <=>  k <= sum
        add(_modulus_result("sigma1", ks, ks.astype(float), prefix[s] if len(ks) else np.zeros(0),
                            s, tol, horizon))
    if pack.sigma2 is not None:
        ks, s = _k_values(pack.sigma2, horizon, k_cap)
        if np.any(a >= 1):
            log_p = np.full(horizon + 1, -np.inf)
            first = int(np.argmax(a >= 1))
            log_p[:first] = np.cumsum(np.log1p(-a[:first]))
        else:
            log_p = np.cumsum(np.log1p(-a))
        lhs = np.exp(log_p[s]) if len(ks) else np.zeros(0)
        add(_modulus_result("sigma2", ks, lhs, 1.0 / (ks + 1.0), s, tol, horizon))
    if pack.sigma3 is not None:
        gap = np.asarray(schedule.alpha.next_ratio_gap(n), dtype=float)
        add(_tail_check("sigma3", pack.sigma3, gap, horizon, tol, k_cap))
    if pack.sigma4 is not None:
        dev = np.asarray(schedule.beta.deviation(n), dtype=float)
        add(_tail_check("sigma4", pack.sigma4, dev, horizon, tol, k_cap))
    e = schedule.err_norms(horizon + 1)
    if pack.sigma5 is not None:
        ks, s = _k_values(pack.sigma5, horizon, k_cap)
        tail_in = np.concatenate([np.cumsum(e[::-1])[::-1][1:], [0.0]])
        beyond = schedule.err.tail_bound(horizon)
        if beyond is None:
            raise CertificationError("error family has no analytic tail bound; sigma5 cannot be validated")
        lhs = tail_in[s] + beyond if len(ks) else np.zeros(0)
        add(_modulus_result("sigma5", ks, lhs, 1.0 / (ks + 1.0), s, tol, horizon))
    if pack.sigma6 is not None:
        add(_tail_check("sigma6", pack.sigma6, e / a, horizon, tol, k_cap))

    beta = Fraction(schedule.beta_limit)
    ok = beta >= Fraction(1, pack.ell + 1)
    add(CheckResult("ell", ANCHORS["ell"], (0, 0), 0.0 if ok else float(1 - beta * (pack.ell + 1)), ok,
                    details={"beta": str(beta), "ell": pack.ell}))
    if pack.D is not None and pack.sigma5 is not None:
        s0 = pack.sigma5(0)
        need = math.fsum(schedule.err_norms(s0 + 1)) + 1.0
        add(inequality_result("D", [need], [float(pack.D)], tol, details={"D": str(pack.D)}))
    if pack.Dstar is not None and pack.sigma6 is not None:
        s0 = pack.sigma6(0)
        ratio = schedule.err_norms(s0 + 1) / schedule.alphas(s0 + 1)
        need = max(1.0, float(np.max(ratio)))
        add(inequality_result("Dstar", [need], [float(pack.Dstar)], tol,
                              details={"Dstar": str(pack.Dstar)}))
    for name, d0, delta_fn in (("delta0", pack.delta0, delta_v1), ("delta0star", pack.delta0star, delta_v2)):
        if d0 is None:
            continue
        rows_l, rows_r, ks = [], [], []
        for k in range(k_cap + 1):
            try:
                dk = delta_fn(pack, k)
            except ValueError:
                break
            if dk > horizon:
                break
            ks.append(k)
            rows_l.append(1.0 / d0(k))
            rows_r.append(math.exp(-log_survival(schedule.alpha, dk)))
        add(_modulus_result(name, np.array(ks), np.array(rows_l), np.array(rows_r),
                            np.array(ks), tol, horizon))
    if pack.alpha_nonincreasing:
        add(inequality_result("alpha_nonincreasing", alpha[1:horizon + 1], alpha[:horizon], tol))
    return report


def check_b(b: int, op: MonotoneOperator, u, x0) -> CheckResult:
    """``b >= max{||x0 - p||, ||u - p||}`` with ``p`` the projection of ``u`` onto the zero set."""
    u = as_point(u, op.dim)
    x0 = as_point(x0, op.dim)
    p = op.project_zero_set(u)
    need = max(float(np.linalg.norm(x0 - p)), float(np.linalg.norm(u - p)))
    ok = b >= need
    return CheckResult("b", ANCHORS["b"], (0, 0), 0.0 if ok else need - b, ok,
                       details={"b": str(b), "max_norm": need})


def b_for_instance(op: MonotoneOperator, u, x0) -> int:
    """Smallest admissible positive integer ``b``."""
    u = as_point(u, op.dim)
    x0 = as_point(x0, op.dim)
    p = op.project_zero_set(u)
    need = max(float(np.linalg.norm(x0 - p)), float(np.linalg.norm(u - p)))
    return max(1, math.ceil(need))


# ---------------------------------------------------------------- witnesses


def _within_diameter(window: np.ndarray, eps: float) -> bool:
    if window.shape[1] == 1:
        col = window[:, 0]
        return float(col.max() - col.min()) <= eps
    radius = float(np.max(np.linalg.norm(window - window[0], axis=1)))
    if radius > eps:
        return False
    if 2 * radius <= eps:
        return True
    block = 512
    for i in range(0, len(window), block):
        chunk = window[i:i + block]
        d2 = np.sum((chunk[:, None, :] - window[None, :, :]) ** 2, axis=-1)
        if float(np.sqrt(d2.max())) > eps:
            return False
    return True


def empirical_metastability_witness(values, k: int, g: Counterfunction, budget: int,
                                    window_cap: int = DEFAULT_WINDOW_CAP) -> int | None:
    """Least ``N <= budget`` whose window ``[N, N+g(N)]`` has diameter ``<= 1/(k+1)``.

    Returns ``None`` when no ``N <= budget`` works; raises
    :class:`WindowExceedsData` when a window needed by the scan runs past the
    recorded values or beyond ``window_cap`` points.
    """
    pts = np.asarray(values, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    eps = 1.0 / (k + 1)
    length = pts.shape[0]
    for N in range(int(budget) + 1):
        end = N + g(N)
        if end >= length or end - N + 1 > window_cap:
            raise WindowExceedsData(N, end, length)
        if _within_diameter(pts[N:end + 1], eps):
            return N
    return None


def _first_stable_index(dev: np.ndarray, eps: float) -> int | None:
    """Least N with ``dev[n] <= eps`` for every recorded ``n >= N``."""
    ok = _suffix_max(dev) <= eps
    if not ok.any():
        return None
    return int(np.argmax(ok))


def check_rate_of_convergence(values, target, rate: Callable[[int], int], k_max: int, budget: int,
                              tol: Tolerance | None = None, name: str = "rate_of_convergence",
                              kind: str = "convergence", rate_name: str | None = None) -> CertReport:
    """Check ``|a_n - target| <= 1/(k+1)`` for recorded ``n >= rate(k)``, ``k <= k_max``.

    ``k`` with ``rate(k) > budget`` (or beyond the recorded values) is a
    vacuous pass; an empirical witness is recorded for every ``k`` either way.
    """
    tol = tol or Tolerance()
    vals = np.asarray(values, dtype=float)
    if vals.ndim == 1:
        dev = np.abs(vals - target)
    else:
        dev = np.linalg.norm(vals - np.asarray(target, dtype=float), axis=1)
    if not np.all(np.isfinite(dev)):
        raise CertificationError("values must be finite")
    report = CertReport(tolerance=tol)
    label = rate_name or getattr(rate, "name", None) or "rate"
    length = len(dev)
    for k in range(int(k_max) + 1):
        bound = rate(k)
        eps = 1.0 / (k + 1)
        emp = _first_stable_index(dev, eps)
        beyond = bound > budget or bound >= length
        if beyond:
            report.checks.append(CheckResult(f"{name}[k={k}]", ANCHORS.get(name, name), (bound, bound), 0.0,
                                             True, None, vacuous=True,
                                             details={"bound": decimal_str(bound), "note": "bound beyond budget, vacuous"}))
        else:
            res = inequality_result(f"{name}[k={k}]", dev[bound:], eps, tol, offset=bound,
                                    anchor=ANCHORS.get(name, name), details={"bound": decimal_str(bound)})
            report.checks.append(res)
        report.witnesses.append(WitnessRecord(kind, k, label, emp, bound, bound > budget))
    return report


def residuals(traj: Trajectory, op: MonotoneOperator, beta_or_schedule="limit") -> np.ndarray:
    """``||x_n - J x_n||`` for a fixed ``beta`` (number), ``"family"`` (``beta_n``) or ``"limit"``."""
    x = traj.points
    if isinstance(beta_or_schedule, str):
        if beta_or_schedule == "family":
            gammas = traj.beta
        elif beta_or_schedule == "limit":
            gammas = float(traj.schedule["beta"]["beta"])
        else:
            raise ValueError("beta selector must be a number, 'family' or 'limit'")
    elif isinstance(beta_or_schedule, ParamSchedule):
        gammas = beta_or_schedule.beta_limit
    else:
        gammas = float(beta_or_schedule)
    return _norms(x - op.resolvent(gammas, x))


def residual_spikes(res: np.ndarray, rel: float = 0.1, floor: float = 1e-9) -> list:
    """Indices where the residual jumps above both neighbours by more than ``rel`` (relative)."""
    if len(res) < 3:
        return []
    mid, left, right = res[1:-1], res[:-2], res[2:]
    peak = np.maximum(left, right)
    hit = (mid > peak * (1 + rel)) & (mid > floor)
    return [int(i + 1) for i in np.flatnonzero(hit)]


def check_asymptotic_regularity(traj: Trajectory, op: MonotoneOperator, beta_or_schedule,
                                rate: Callable[[int], int], k_max: int, budget: int,
                                tol: Tolerance | None = None, skip_initial: int = 10,
                                rate_name: str | None = None) -> CertReport:
    """Residual convergence check plus a diagnostic for isolated residual spikes."""
    tol = tol or Tolerance()
    res = residuals(traj, op, beta_or_schedule)
    report = check_rate_of_convergence(res, 0.0, rate, k_max, budget, tol,
                                       name="asymptotic_regularity", kind="asreg", rate_name=rate_name)
    spikes = [i for i in residual_spikes(res) if i >= skip_initial]
    report.checks.append(CheckResult("residual_spike", ANCHORS["residual_spike"], (skip_initial, len(res) - 1),
                                     float(len(spikes)), not spikes, spikes[0] if spikes else None,
                                     diagnostic=True, details={"spikes": spikes[:MAX_OFFENDERS]}))
    return report


def metastability_witness_record(values, k: int, g: Counterfunction, budget: int, bound: int | None,
                                 kind: str = "metastability",
                                 window_cap: int = DEFAULT_WINDOW_CAP) -> WitnessRecord:
    try:
        N = empirical_metastability_witness(values, k, g, budget, window_cap)
        note = "" if N is not None else "no witness within budget"
    except WindowExceedsData as exc:
        N, note = None, str(exc)
    return WitnessRecord(kind, k, g.describe(), N, bound,
                         bound is not None and bound > budget, note)


# ---------------------------------------------------------------- synthetic Xu recurrence


def _seq(spec, n_max: int) -> np.ndarray:
    idx = np.arange(n_max)
    if callable(spec):
        return np.asarray(spec(idx), dtype=float) * np.ones(n_max)
    return np.full(n_max, float(spec))


def synthetic_xu_oracle(a_spec, b_spec, c_spec, n_max: int, s0: float = 1.0) -> np.ndarray:
    """``s_{n+1} = (1 - a_n) s_n + a_n b_n + c_n`` (the worst case of the recurrence inequality)."""
    a, b, c = _seq(a_spec, n_max), _seq(b_spec, n_max), _seq(c_spec, n_max)
    if np.any((a < 0) | (a > 1)):
        raise ValueError("a_n must lie in [0, 1]")
    if np.any(c < 0) or s0 < 0:
        raise ValueError("c_n and s_0 must be nonnegative")
    s = np.empty(n_max + 1)
    s[0] = s0
    for n in range(n_max):
        s[n + 1] = (1 - a[n]) * s[n] + a[n] * b[n] + c[n]
    return s


def check_finite_product(s, a_spec, b_spec, c_spec, p: int, N: int, m_max: int,
                         n_stop: int | None = None, tol: Tolerance | None = None) -> CheckResult:
    """Check the finite-horizon product bound for ``N <= n <= n_stop`` and ``m <= m_max``.

    Requires ``b_n <= 1/(p+1)`` for ``n >= N`` on the checked range.
    """
    tol = tol or Tolerance()
    s = np.asarray(s, dtype=float)
    total = len(s) - 1
    n_stop = total - m_max - 1 if n_stop is None else n_stop
    if n_stop < N:
        raise ValueError("range too short for the requested m_max")
    a, b, c = _seq(a_spec, total), _seq(b_spec, total), _seq(c_spec, total)
    if np.any(b[N:] > 1.0 / (p + 1) + 1e-15):
        raise ValueError("b_n exceeds 1/(p+1) beyond N")
    ns = np.arange(N, n_stop + 1)
    prod = np.ones(len(ns))
    csum = np.zeros(len(ns))
    worst = -np.inf
    worst_at = None
    for m in range(m_max + 1):
        prod = prod * (1 - a[ns + m])
        csum = csum + c[ns + m]
        lhs = s[ns + m + 1]
        rhs = prod * s[ns] + (1 - prod) / (p + 1) + csum
        ex = tol.relative_excess(lhs, rhs)
        i = int(np.argmax(ex))
        if ex[i] > worst:
            worst, worst_at = float(ex[i]), (int(ns[i]), m)
    viol = max(worst, 0.0)
    return CheckResult("finite_product", ANCHORS["finite_product"], (N, int(n_stop)), viol,
                       viol <= tol.rtol, worst_at[0], details={"worst_m": worst_at[1], "p": p})


# ---------------------------------------------------------------- soundness


def soundness_check(witnesses: Sequence[WitnessRecord]) -> CheckResult:
    """Every found witness is at most its bound."""
    bad = [w for w in witnesses if w.sound is False]
    return CheckResult("witness_soundness", "N_emp <= bound for every witness found", (0, len(witnesses)),
                       float(len(bad)), not bad,
                       details={"checked": sum(w.sound is not None for w in witnesses),
                                "unsound": [w.to_dict() for w in bad[:MAX_OFFENDERS]]})
