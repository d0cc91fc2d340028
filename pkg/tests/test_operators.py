import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hppa_cert.operators import (AbsSubdiff, AffinePD, DimensionMismatch, NormalConeBall, NormalConeBox,
                                 OperatorError, QuadraticShift, as_point, check_resolvent_identity,
                                 operator_from_spec, project_zero_set, resolvent)
from instances import DIMS, VARIANTS, variant

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def test_resolvent_examples():
    assert resolvent(QuadraticShift([0.0]), 1.0, [2.0]) == pytest.approx([1.0])
    assert resolvent(NormalConeBox([-1.0], [1.0]), 7.0, [5.0]) == pytest.approx([1.0])
    assert resolvent(AbsSubdiff(1.0), 1.0, [0.5]) == pytest.approx([0.0])


def test_soft_threshold_keeps_sign():
    out = resolvent(AbsSubdiff(1.0, 3), 0.5, [2.0, -2.0, 0.25])
    assert out == pytest.approx([1.5, -1.5, 0.0])


def test_projection_examples():
    assert project_zero_set(QuadraticShift([3.0, 4.0]), [0.0, 0.0]) == pytest.approx([3.0, 4.0])
    assert project_zero_set(NormalConeBox([-1.0], [1.0]), [0.5]) == pytest.approx([0.5])
    ball = NormalConeBall([0.0, 0.0], 1.0)
    assert project_zero_set(ball, [3.0, 4.0]) == pytest.approx([0.6, 0.8])


def test_resolvent_identity_examples():
    for name in VARIANTS:
        op = variant(name, 2)
        assert check_resolvent_identity(op, 1.0, 1.0, [0.3, -1.7]) == 0.0
    assert check_resolvent_identity(QuadraticShift([0.0]), 2.0, 1.0, [3.0]) <= 1e-12
    assert check_resolvent_identity(AbsSubdiff(1.0), 3.0, 0.5, [5.0]) <= 1e-12


def test_affine_resolvent_matches_linear_solve():
    op = variant("AffinePD", 8)
    x = np.linspace(-3, 3, 8)
    gamma = 0.7
    direct = np.linalg.solve(np.eye(8) + gamma * op.M, x + gamma * op.M @ op.c)
    assert op.resolvent(gamma, x) == pytest.approx(direct, abs=1e-12)


def test_invalid_parameters_rejected():
    with pytest.raises(OperatorError):
        NormalConeBox([1.0], [0.0])
    with pytest.raises(OperatorError):
        NormalConeBall([0.0], 0.0)
    with pytest.raises(OperatorError):
        AbsSubdiff(0.0)
    with pytest.raises(OperatorError):
        AffinePD([[1.0, 2.0], [0.0, 1.0]], [0.0, 0.0])
    with pytest.raises(OperatorError):
        AffinePD([[1.0, 0.0], [0.0, -1.0]], [0.0, 0.0])
    with pytest.raises(OperatorError):
        resolvent(QuadraticShift([0.0]), 0.0, [1.0])


def test_points_must_be_finite_and_match_dimension():
    with pytest.raises(OperatorError):
        as_point([np.nan])
    with pytest.raises(DimensionMismatch):
        resolvent(QuadraticShift([0.0, 0.0]), 1.0, [1.0])


def test_operator_from_spec_round_trip():
    op = operator_from_spec({"type": "AbsSubdiff", "lam": 2.0, "dim": 3})
    assert op.dim == 3
    again = operator_from_spec(op.describe())
    assert again.describe() == op.describe()
    with pytest.raises(OperatorError):
        operator_from_spec({"type": "Nope"})
    with pytest.raises(OperatorError):
        operator_from_spec({"type": "QuadraticShift", "c": [0.0], "extra": 1})


@pytest.mark.parametrize("name", VARIANTS)
@pytest.mark.parametrize("dim", DIMS)
def test_fixed_points_are_projections(name, dim):
    op = variant(name, dim)
    rng = np.random.default_rng(dim)
    for _ in range(10):
        u = rng.normal(scale=4.0, size=dim)
        p = op.project_zero_set(u)
        for gamma in (0.1, 1.0, 13.0):
            assert np.linalg.norm(op.resolvent(gamma, p) - p) <= 1e-10
        assert np.linalg.norm(op.project_zero_set(p) - p) <= 1e-10


@pytest.mark.parametrize("name", VARIANTS)
def test_resolvent_identity_random(name):
    op = variant(name, 2)
    rng = np.random.default_rng(7)
    for _ in range(100):
        beta, gamma = rng.uniform(0.05, 10.0, size=2)
        x = rng.normal(scale=5.0, size=2)
        assert check_resolvent_identity(op, beta, gamma, x) <= 1e-10


@pytest.mark.parametrize("name", VARIANTS)
@settings(max_examples=60, deadline=None)
@given(x=st.lists(finite, min_size=2, max_size=2), y=st.lists(finite, min_size=2, max_size=2),
       gamma=st.floats(0.01, 20.0))
def test_firm_nonexpansiveness(name, x, y, gamma):
    op = variant(name, 2)
    x, y = np.array(x), np.array(y)
    jx, jy = op.resolvent(gamma, x), op.resolvent(gamma, y)
    d = jx - jy
    assert d @ d <= d @ (x - y) + 1e-9 * (1 + (x - y) @ (x - y))


@pytest.mark.parametrize("name", VARIANTS)
@settings(max_examples=60, deadline=None)
@given(u=st.lists(finite, min_size=2, max_size=2), v=st.lists(finite, min_size=2, max_size=2))
def test_projection_idempotent_and_nonexpansive(name, u, v):
    op = variant(name, 2)
    u, v = np.array(u), np.array(v)
    pu, pv = op.project_zero_set(u), op.project_zero_set(v)
    assert np.linalg.norm(op.project_zero_set(pu) - pu) <= 1e-10
    assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-10


@pytest.mark.parametrize("name", VARIANTS)
def test_resolvent_vectorised_over_rows(name):
    op = variant(name, 2)
    xs = np.array([[1.0, -2.0], [0.5, 3.0], [-4.0, 0.0]])
    gammas = np.array([0.5, 1.0, 2.0])
    stacked = op.resolvent(gammas, xs)
    for row, gamma, x in zip(stacked, gammas, xs):
        assert row == pytest.approx(op.resolvent(gamma, x), abs=1e-14)
