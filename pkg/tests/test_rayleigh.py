import math

import numpy as np
import pytest
from builders import model_problem, sine, zero_trace_random
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import DISCRETE_LAMBDA1_256

from varexp import (
    SolverConfig,
    directional_derivative,
    global_minimize_at_lambda,
    lambda1_minimize,
    rayleigh_quotient,
    sobolev0_norm,
)
from varexp.errors import ZeroDenominator

PI2 = math.pi**2


@pytest.fixture(scope="module")
def validation256():
    prob = model_problem(256, q=2)
    return prob, lambda1_minimize(prob)


def test_quotient_of_first_mode_is_pi_squared():
    prob = model_problem(256, q=2)
    assert rayleigh_quotient(prob, sine(prob.mesh)) == pytest.approx(PI2, rel=1e-4)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t=st.floats(1e-2, 1e2))
def test_constant_exponent_homogeneity(seed, t):
    prob = model_problem(32, p=2, q=4)
    u = zero_trace_random(prob.mesh, np.random.default_rng(seed))
    assert rayleigh_quotient(prob, t * u) == pytest.approx(t ** (2 - 4) * rayleigh_quotient(prob, u), rel=1e-10)


def test_zero_field_has_no_quotient():
    prob = model_problem(16)
    with pytest.raises(ZeroDenominator):
        rayleigh_quotient(prob, np.zeros(17))


def test_validation_mode_converges_to_pi_squared(validation256):
    _, res = validation256
    lam, minimizer, flag = res
    assert not flag
    assert lam == pytest.approx(PI2, rel=0.01)
    # the discrete problem is a generalized eigenproblem; match it closely
    assert lam == pytest.approx(DISCRETE_LAMBDA1_256, rel=1e-4)
    assert minimizer is not None


def test_estimate_is_an_infimum_of_probed_values(validation256):
    prob, res = validation256
    assert all(res.lambda1_est <= q for _, q in res.sweep)
    assert res.lambda1_est == pytest.approx(rayleigh_quotient(prob, res.minimizer), rel=1e-12)
    assert len(res.sweep) == len(SolverConfig().scales)


def test_validation_minimizer_is_first_mode(validation256):
    prob, res = validation256
    u = res.minimizer * np.sign(res.minimizer[prob.mesh.interior].sum())
    u = u / np.abs(u).max()
    assert np.abs(u - sine(prob.mesh)).max() < 1e-3


def test_doubling_reaction_halves_lambda1():
    a = lambda1_minimize(model_problem(64, q=2)).lambda1_est
    b = lambda1_minimize(model_problem(64, q=2, c=2.0)).lambda1_est
    assert b == pytest.approx(a / 2, rel=1e-6)


def test_constant_exponent_model_is_degenerate():
    res = lambda1_minimize(model_problem(64))
    assert res.degeneracy_flag
    assert res.minimizer is None
    assert res.loglog_slope() == pytest.approx(-2.0, abs=0.05)
    assert res.lambda1_est == min(q for _, q in res.sweep)
    summary = res.summary()
    assert summary["degeneracy_flag"] is True


def test_lambda1_is_deterministic():
    prob = model_problem(32, q=2)
    a, b = lambda1_minimize(prob), lambda1_minimize(prob)
    assert a.sweep == b.sweep
    assert np.array_equal(a.minimizer, b.minimizer)


# ------------------------------------------------------------------ global minimization

def test_below_lambda1_only_zero_is_found():
    rep = global_minimize_at_lambda(model_problem(64, q=2), 0.5 * PI2)
    assert rep.status == "degenerate_zero"


def test_above_lambda1_quadratic_model_diverges():
    rep = global_minimize_at_lambda(model_problem(64, q=2), 1.5 * PI2)
    assert rep.status == "diverged_to_minus_infinity"
    assert rep.energy.total < -SolverConfig().coercivity_cap


@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_superlinear_model_is_not_coercive(lam):
    rep = global_minimize_at_lambda(model_problem(64), lam)
    assert rep.status == "diverged_to_minus_infinity"


def test_sublinear_reaction_has_negative_global_minimum():
    prob = model_problem(64, p=3, q=2)
    rep = global_minimize_at_lambda(prob, 20.0)
    assert rep.status == "converged"
    assert rep.energy.total < 0
    assert rep.grad_norm <= 1e-8
    assert sobolev0_norm(rep.solution, prob.p) > 1e-6
    plam = prob.with_lambda(20.0)
    rng = np.random.default_rng(5)
    for _ in range(100):
        v = zero_trace_random(plam.mesh, rng)
        assert abs(directional_derivative(plam, rep.solution, v)) <= 1e-8 * sobolev0_norm(v, prob.p)


def test_lambda_must_be_positive():
    with pytest.raises(ValueError):
        global_minimize_at_lambda(model_problem(16), 0.0)
