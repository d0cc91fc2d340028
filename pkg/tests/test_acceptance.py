"""End-to-end acceptance suite; each test is tagged with the criterion it covers."""

import json
import math
from fractions import Fraction
import time

import numpy as np
import pytest

from hppa_cert import cli
from hppa_cert.certify import (WindowExceedsData, check_asymptotic_regularity,
                               check_lemma_inequalities, check_rate_of_convergence,
                               empirical_metastability_witness, inject_fault, synthetic_xu_oracle,
                               validate_moduli)
from hppa_cert.counterfunctions import Counterfunction, parse
from hppa_cert.dynamics import browder_path, run_hppa
from hppa_cert.moduli import gamma_combine, xu_sigma, xu_sigma_star, xu_sigma_star_tilde, xu_sigma_tilde
from hppa_cert.operators import QuadraticShift
from hppa_cert.schedules import perturbed_section5_schedule, section5_schedule
from hppa_cert.showcase import (delta_bar_L, residual_ratio, run_section5, section5_pack, sigma_bars,
                                strong_convergence_profile, theta0)
from hppa_cert.tolerance import Tolerance

import oracle
from instances import DIMS, VARIANTS, anchor_and_start, variant

STRICT = Tolerance(atol=1e-12, rtol=1e-9)
HORIZON = 100_000
# Frozen after a pilot run that observed r_100 / r_100000 of about 172.6.
RESIDUAL_FACTOR = 10.0
METASTABILITY_GS = ("0", "1", "10", "identity")
LEMMA_CHECKS = ("step_bound", "cumulative_bound", "iterate_bound_sum", "iterate_bound_frac",
                "browder_near_zero", "browder_near_anchor", "browder_resolvent_near_anchor",
                "joint_step", "browder_consecutive")


def timed(limit_seconds):
    """Fail the test when it runs past its runtime budget."""
    def wrap(fn):
        def inner(*args, **kwargs):
            start = time.perf_counter()
            fn(*args, **kwargs)
            elapsed = time.perf_counter() - start
            assert elapsed < limit_seconds, f"took {elapsed:.1f}s, limit {limit_seconds}s"
        inner.__name__ = fn.__name__
        inner.__wrapped__ = fn
        return inner
    return wrap


# ---------------------------------------------------------------- 1: closed forms


@pytest.mark.criterion(1, "closed-form rates match an arbitrary-precision oracle")
@timed(5)
def test_closed_form_fidelity():
    for b in (1, 2, 5, 10):
        for k in range(101):
            assert theta0(b, k) == oracle.evaluate(oracle.THETA0, b, k)
            bars = sigma_bars(b, k)
            assert bars.bar == oracle.evaluate(oracle.SIGMA_BAR, b, k)
            assert bars.bar_star == oracle.evaluate(oracle.SIGMA_BAR_STAR, b, k)
            for L in (0, 1, 10, 1000):
                assert delta_bar_L(b, L, k) == oracle.evaluate(oracle.DELTA_BAR_L, b, k, L)
    assert theta0(1, 0) == 104995**4 + 1


# ---------------------------------------------------------------- 2: worked-example moduli


@pytest.mark.criterion(2, "worked-example moduli validate on a 1e5 horizon")
@timed(10)
def test_worked_example_moduli():
    report = validate_moduli(section5_pack(1), section5_schedule(), HORIZON, STRICT)
    assert report.passed, [(c.name, c.details) for c in report.failures]
    names = {c.name for c in report.checks}
    assert {f"sigma{i}" for i in range(7)} | {"ell", "D", "Dstar"} <= names


# ---------------------------------------------------------------- 3: lemma inequalities


@pytest.mark.criterion(3, "lemma inequalities hold on every variant and detect faults")
@pytest.mark.parametrize("name", VARIANTS)
@timed(40)
def test_lemma_suite(name):
    for dim in DIMS:
        op = variant(name, dim)
        u, x0 = anchor_and_start(dim)
        for schedule in (section5_schedule(), perturbed_section5_schedule()):
            traj = run_hppa(op, schedule, u, x0, HORIZON)
            zpath = browder_path(op, 1.0, schedule, u, n_max=HORIZON)
            report = check_lemma_inequalities(traj, zpath, op, u, STRICT)
            assert report.passed, (dim, schedule.describe(), [c.name for c in report.failures])
            assert all(c.max_violation <= 1e-9 for c in report.checks)
        # fault detection on the error-free trajectory of this dimension
        schedule = section5_schedule()
        traj = run_hppa(op, schedule, u, x0, 5000)
        zpath = browder_path(op, 1.0, schedule, u, n_max=5000)
        for check in LEMMA_CHECKS:
            bad_traj, bad_z, perturb = inject_fault(check, traj, zpath, op, u, 2500, magnitude=1e-3)
            result = check_lemma_inequalities(bad_traj, bad_z, op, u, STRICT, perturb).check(check)
            assert not result.passed, (name, dim, check)


# ---------------------------------------------------------------- 4: Xu rates


def _xu_instance(rng):
    """Random recurrence with moduli that are valid by construction.

    ``a_n = a`` constant, ``b_n = B/(n+1)^r`` and ``c_n = C rho^n``.
    """
    a = float(rng.uniform(0.05, 0.9))
    B = float(rng.uniform(0.1, 2.0))
    r = float(rng.uniform(0.5, 1.5))
    C = float(rng.uniform(0.0, 1.0))
    rho = float(rng.uniform(0.1, 0.8))
    s0 = float(rng.uniform(0.0, 3.0))
    M = math.ceil(s0 + B + C / (1 - rho))

    def theta_sum(n):  # sum_{i<=N} a >= n
        return max(math.ceil(n / a) - 1, 0)

    def theta_prod(k):  # (1-a)^(N+1) <= 1/(k+1)
        N = max(math.ceil(math.log(k + 1) / -math.log1p(-a)) - 1, 0)
        while (1 - a) ** (N + 1) > 1 / (k + 1):
            N += 1
        return N

    def psi(k):  # B/(n+1)^r <= 1/(k+1) for n >= psi(k)
        n = max(math.ceil((B * (k + 1)) ** (1 / r)) - 1, 0)
        while B / (n + 1) ** r > 1 / (k + 1):
            n += 1
        return n

    def chi(k):  # tail sum_{i>N} C rho^i <= 1/(k+1)
        N = 0
        while C * rho ** (N + 1) / (1 - rho) > 1 / (k + 1):
            N += 1
        return N

    def delta0(delta):  # 1/delta0 <= P_{delta-1} = (1-a)^delta
        return math.ceil(1 / (1 - Fraction(a)) ** delta) + 1

    return dict(a=a, b=lambda n: B / (n + 1.0) ** r, c=lambda n: C * rho ** n, s0=s0, M=M,
                theta_sum=theta_sum, theta_prod=theta_prod, psi=psi, chi=chi, delta0=delta0)


def _main_xu_instance():
    return dict(a=0.5, b=lambda n: 1.0 / (n + 1.0), c=lambda n: 2.0 ** (-n), s0=1.0, M=4,
                theta_sum=lambda n: 2 * n, theta_prod=lambda k: k.bit_length(), psi=lambda p: p,
                chi=lambda k: k + 2, delta0=lambda delta: 2**delta)


def _xu_rates(inst):
    M, psi, chi = inst["M"], inst["psi"], inst["chi"]
    zero = lambda k: 0  # noqa: E731

    def delta(k, cauchy):
        return max(psi(3 * k + 2), cauchy(3 * k + 2) + 1)

    return {
        "sigma": (lambda k: xu_sigma(M, inst["theta_sum"], psi, chi, k), True),
        "sigma_tilde": (lambda k: xu_sigma_tilde(M, inst["theta_prod"], psi, chi,
                                                 lambda j: inst["delta0"](delta(j, chi)), k), True),
        "sigma_star": (lambda k: xu_sigma_star(M, inst["theta_sum"], psi, k), False),
        "sigma_star_tilde": (lambda k: xu_sigma_star_tilde(M, inst["theta_prod"], psi,
                                                           lambda j: inst["delta0"](psi(2 * j + 1)), k),
                             False),
    }, zero


def _assert_xu_sound(inst, k_max=60):
    with_errors = synthetic_xu_oracle(inst["a"], inst["b"], inst["c"], HORIZON, inst["s0"])
    without_errors = synthetic_xu_oracle(inst["a"], inst["b"], 0.0, HORIZON, inst["s0"])
    assert with_errors.max() <= inst["M"] and without_errors.max() <= inst["M"]
    rates, _ = _xu_rates(inst)
    checked = 0
    for name, (rate, uses_errors) in rates.items():
        values = with_errors if uses_errors else without_errors
        report = check_rate_of_convergence(values, 0.0, rate, k_max, HORIZON, STRICT, name=name)
        assert report.passed, [(c.name, c.worst_index) for c in report.failures]
        checked += sum(not c.vacuous for c in report.checks)
    return checked


@pytest.mark.criterion(4, "quantitative Xu-lemma rates are sound on synthetic recurrences")
@timed(30)
def test_xu_rate_soundness():
    assert _assert_xu_sound(_main_xu_instance()) > 0
    rng = np.random.default_rng(20240601)
    non_vacuous = 0
    for _ in range(10):
        inst = _xu_instance(rng)
        # the constructed moduli are checked against the sequences themselves
        n = np.arange(2000)
        for k in range(20):
            assert np.all(inst["b"](n[inst["psi"](k):]) <= 1 / (k + 1) + 1e-15)
            assert inst["c"](n[inst["chi"](k) + 1:]).sum() <= 1 / (k + 1) + 1e-12
            assert np.sum(np.full(inst["theta_sum"](k) + 1, inst["a"])) >= k - 1e-9
        non_vacuous += _assert_xu_sound(inst)
    assert non_vacuous > 0


# ---------------------------------------------------------------- 5: metastability


@pytest.mark.criterion(5, "metastability witnesses never beat their bounds")
@timed(60)
def test_metastability_soundness():
    report, _ = run_section5(QuadraticShift([0.0]), [1.0], [1.0], HORIZON, k_max=5, gs=METASTABILITY_GS,
                             tol=STRICT)
    assert report.passed, [c.name for c in report.failures]
    assert not report.unsound_witnesses
    found = [w for w in report.witnesses if w.empirical_N is not None]
    assert found and all(w.empirical_N <= w.bound for w in found)
    assert report.check("witness_soundness").passed


def _empirical_omega(values, budget):
    def omega(k, g):
        N = empirical_metastability_witness(values, k, g, budget)
        if N is None:
            raise WindowExceedsData(budget, budget, len(values))
        return N
    return omega


@pytest.mark.criterion(5, "metastability witnesses never beat their bounds")
@timed(60)
def test_gamma_combine_brute_force():
    rng = np.random.default_rng(7)
    length = 10_000
    n = np.arange(length)
    steps = rng.choice([-1.0, 1.0], size=length) / (n + 1.0) ** 1.2
    u_seq = np.cumsum(steps)
    scale = 0.05
    v_seq = u_seq + scale * rng.uniform(-1, 1, size=length) / np.sqrt(n + 1.0)
    # |u_n - v_n| <= scale/sqrt(n+1) <= 1/(j+1) once n + 1 >= (scale (j+1))^2
    phi = lambda j: max(math.ceil((scale * (j + 1)) ** 2) - 1, 0)  # noqa: E731
    omega = _empirical_omega(u_seq, length // 3)
    gs = [parse(L) for L in range(11)] + [Counterfunction.identity()]
    verified = 0
    for k in range(6):
        for g in gs:
            try:
                bound = gamma_combine(omega, phi, k, g)
            except WindowExceedsData:
                continue
            N = empirical_metastability_witness(v_seq, k, g, bound)
            assert N is not None and N <= bound, (k, g, N, bound)
            verified += 1
    assert verified >= 60


# ---------------------------------------------------------------- 6: asymptotic regularity


@pytest.mark.criterion(6, "residuals decay and the large asymptotic-regularity rate is vacuous")
@timed(30)
def test_asymptotic_regularity_trend():
    op = QuadraticShift([0.0])
    assert residual_ratio(op, [1.0], [1.0], early=100, late=HORIZON) >= RESIDUAL_FACTOR
    traj = run_hppa(op, section5_schedule(), [1.0], [1.0], HORIZON)
    report = check_asymptotic_regularity(traj, op, 1.0, lambda k: sigma_bars(1, k).bar, 9, HORIZON, STRICT)
    k9 = report.check("asymptotic_regularity[k=9]")
    assert k9.passed and k9.vacuous
    witness = next(w for w in report.witnesses if w.k == 9)
    assert witness.empirical_N is not None and witness.empirical_N <= HORIZON
    assert witness.bound_exceeds_budget and witness.bound == sigma_bars(1, 9).bar


# ---------------------------------------------------------------- 7: strong convergence


@pytest.mark.criterion(7, "distance to the projected anchor is nonincreasing at decade checkpoints")
@pytest.mark.parametrize("name", VARIANTS)
@timed(20)
def test_strong_convergence(name):
    for dim in DIMS:
        u, x0 = anchor_and_start(dim)
        profile = strong_convergence_profile(variant(name, dim), u, x0)
        assert all(later <= earlier * (1 + 1e-9) + 1e-12 for earlier, later in zip(profile, profile[1:])), \
            (dim, profile)


# ---------------------------------------------------------------- 8: determinism


@pytest.mark.criterion(8, "identical seeded configs produce byte-identical outputs")
def test_determinism(tmp_path):
    config = {
        "operator": {"type": "AffinePD", "M": [[2.0, 0.5], [0.5, 1.0]], "c": [0.1, -0.2]},
        "schedule": {"alpha": {"family": "power", "q": 0.75, "n0": 2},
                     "beta": {"family": "alternating", "beta": 1.0},
                     "err": {"family": "geometric", "m": 1e-3, "rho": 0.5, "direction": "random"}},
        "u": [3.0, 2.0], "x0": [-1.0, -2.0], "budget": 3000, "k_max": 2, "seed": 11,
        "moduli": "section5_perturbed",
    }
    outputs = []
    for run in range(2):
        out = tmp_path / f"run{run}"
        path = tmp_path / f"cfg{run}.json"
        path.write_text(json.dumps(dict(config, out=str(out))))
        assert cli.main(["iterate", "--config", str(path)]) == 0
        cli.main(["certify", "--config", str(path)])
        report = json.loads((out / "report.json").read_text())
        report["instance"]["config"].pop("out")
        report["instance"].pop("config_hash")
        outputs.append(((out / "trajectory.csv").read_bytes(), (out / "residuals.csv").read_bytes(),
                        json.dumps(report, sort_keys=True)))
    assert outputs[0] == outputs[1]
    same = tmp_path / "same.json"
    same.write_text(json.dumps(dict(config, out=str(tmp_path / "same"))))
    cli.main(["certify", "--config", str(same)])
    first = (tmp_path / "same" / "report.json").read_bytes()
    cli.main(["certify", "--config", str(same)])
    assert (tmp_path / "same" / "report.json").read_bytes() == first
