import math

import numpy as np
import pytest
from builders import model_problem, sine, zero_trace_random
from hypothesis import given, settings
from hypothesis import strategies as st

from varexp import (
    Problem,
    build_exponent,
    build_mesh,
    directional_derivative,
    energy,
    grad_norm,
    gradient_vector,
    make_kernel,
    model_reaction,
    monotone_gap,
    ps_diagnostics,
)
from varexp.errors import MeshMismatch

FAMILIES = ("pxLaplacian", "weightedPxLaplacian", "pxMeanCurvature")


def test_zero_field_has_zero_energy():
    prob = model_problem(16)
    e = energy(prob, np.zeros(17))
    assert (e.e0, e.j, e.total) == (0.0, 0.0, 0.0)


def test_dirichlet_energy_of_parabola():
    for cells, tol in ((64, 1e-4), (256, 1e-5)):
        prob = model_problem(cells, c=0.0)
        x = prob.mesh.nodes[:, 0]
        e = energy(prob, x * (1 - x))
        assert e.e0 == pytest.approx(1 / 6, abs=tol) and e.j == 0.0


def test_quartic_reaction_energy_of_sine():
    errs = []
    for cells in (64, 128):
        prob = model_problem(cells)
        errs.append(abs(energy(prob, sine(prob.mesh)).j - 3 / 32))
    assert errs[1] < 1e-3 and errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_total_is_difference():
    prob = model_problem(32, p="2 + x", q="4 + x")
    e = energy(prob, 3 * sine(prob.mesh))
    assert e.total == e.e0 - e.j


def test_directional_derivative_trivial_cases():
    prob = model_problem(32, p=2.5)
    rng = np.random.default_rng(0)
    u = zero_trace_random(prob.mesh, rng)
    assert directional_derivative(prob, u, np.zeros(33)) == 0.0
    assert directional_derivative(prob, np.zeros(33), u) == 0.0


@pytest.mark.parametrize("dim", [1, 2])
def test_assembled_gradient_matches_hat_directions(dim):
    mesh = build_mesh([0, 1], 8) if dim == 1 else build_mesh([[0, 1], [0, 1]], [4, 3])
    prob = Problem(make_kernel("pxMeanCurvature", build_exponent("2.5 + x", mesh)),
                   model_reaction(build_exponent("4 + x", mesh)))
    u = zero_trace_random(mesh, np.random.default_rng(1))
    g = gradient_vector(prob, u)
    for i in mesh.interior:
        hat = np.zeros(mesh.n_nodes)
        hat[i] = 1.0
        d = directional_derivative(prob, u, hat)
        assert g[i] == pytest.approx(d, rel=1e-12, abs=1e-14)
    assert np.all(g[mesh.boundary] == 0)


def test_gradient_descent_step_decreases_energy():
    rng = np.random.default_rng(2)
    for family in FAMILIES:
        prob = model_problem(32, p="2 + 0.5*x", q=4, family=family)
        u = sine(prob.mesh) + 0.1 * zero_trace_random(prob.mesh, rng)
        g = gradient_vector(prob, u)
        assert energy(prob, u - 1e-4 * g).total < energy(prob, u).total


def test_grad_norm_bounds_pairing():
    prob = model_problem(40, p=3)
    rng = np.random.default_rng(3)
    u = zero_trace_random(prob.mesh, rng)
    gn = grad_norm(prob, gradient_vector(prob, u))
    for _ in range(20):
        v = zero_trace_random(prob.mesh, rng)
        l2 = math.sqrt(prob.mesh.cell_measure * np.sum(v * v))
        assert abs(directional_derivative(prob, u, v)) <= gn * l2 * (1 + 1e-12)


def test_monotone_gap_examples():
    prob = model_problem(128, p=2)
    x = prob.mesh.nodes[:, 0]
    u, v = sine(prob.mesh), x * (1 - x)
    assert monotone_gap(prob, u, u) == 0.0
    # p = 2: the gap is int (u' - v')^2 = pi^2/2 - 2 (4/pi) + 1/3
    exact = math.pi**2 / 2 - 8 / math.pi + 1 / 3
    assert monotone_gap(prob, u, v) == pytest.approx(exact, abs=1e-3)


def test_problem_rejects_mixed_meshes():
    m1, m2 = build_mesh([0, 1], 8), build_mesh([0, 1], 9)
    with pytest.raises(MeshMismatch):
        Problem(make_kernel("pxLaplacian", build_exponent(2, m1)), model_reaction(build_exponent(4, m2)))


def test_with_lambda_scales_reaction_only():
    prob = model_problem(32)
    u = 2 * sine(prob.mesh)
    e, e3 = energy(prob, u), energy(prob.with_lambda(3.0), u)
    assert e3.e0 == e.e0 and e3.j == pytest.approx(3 * e.j, rel=1e-15)


def test_ps_diagnostics_cases():
    prob = model_problem(32)
    u = sine(prob.mesh)
    e = energy(prob, u)
    rep = ps_diagnostics(prob, [(u, e, 0.0)] * 4)
    assert rep.bounded and rep.differences_vanish and rep.difference_modulars == [0.0] * 3
    blowup = [(10.0**k * u, energy(prob, 10.0**k * u), 1.0) for k in range(8)]
    assert not ps_diagnostics(prob, blowup).bounded
    with pytest.raises(ValueError):
        ps_diagnostics(prob, [])


def _rand_problem(data):
    dim = data.draw(st.sampled_from([1, 2]))
    mesh = build_mesh([0, 1], data.draw(st.integers(3, 20))) if dim == 1 else \
        build_mesh([[0, 1], [0, 1]], [data.draw(st.integers(2, 8)), data.draw(st.integers(2, 8))])
    family = data.draw(st.sampled_from(FAMILIES))
    lo = data.draw(st.floats(1.5, 4.0))
    hi = data.draw(st.floats(lo, 4.0))
    p = build_exponent(f"{lo} + {hi - lo} * (0.5 + 0.5*sin(3*x + 1))", mesh)
    q = build_exponent(f"{hi + 0.5} + 0.5*x", mesh)
    return Problem(make_kernel(family, p), model_reaction(q, c="1 + x"))


@settings(max_examples=60, deadline=None)
@given(data=st.data(), seed=st.integers(0, 2**31))
def test_directional_derivative_matches_central_difference(data, seed):
    prob = _rand_problem(data)
    rng = np.random.default_rng(seed)
    u = zero_trace_random(prob.mesh, rng)
    v = zero_trace_random(prob.mesh, rng)
    h = 1e-5
    fd = (energy(prob, u + h * v).total - energy(prob, u - h * v).total) / (2 * h)
    d = directional_derivative(prob, u, v)
    assert abs(d - fd) <= 1e-6 * (1 + abs(d))


@settings(max_examples=60, deadline=None)
@given(data=st.data(), seed=st.integers(0, 2**31))
def test_energy_structure(data, seed):
    prob = _rand_problem(data)
    rng = np.random.default_rng(seed)
    u = zero_trace_random(prob.mesh, rng, 2.0)
    v = zero_trace_random(prob.mesh, rng, 2.0)
    assert energy(prob, -u) == energy(prob, u)
    mid = energy(prob, 0.5 * (u + v)).e0
    assert mid <= 0.5 * (energy(prob, u).e0 + energy(prob, v).e0) + 1e-12
    assert monotone_gap(prob, u, v) > 0
    assert monotone_gap(prob, u, v) == pytest.approx(monotone_gap(prob, v, u), rel=1e-12)
