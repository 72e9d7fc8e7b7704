import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varexp import GridFunction, build_mesh, enforce_zero_trace, gradient, integrate
from varexp.errors import DegenerateBox, MeshMismatch, NonFinite


def test_unit_interval_four_cells():
    m = build_mesh([0, 1], 4)
    assert np.allclose(m.nodes[:, 0], [0, 0.25, 0.5, 0.75, 1])
    assert list(m.boundary) == [0, 4]
    assert m.n_nodes == 5 and m.n_cells == 4


def test_rectangle_counts():
    m = build_mesh([[0, 1], [0, 2]], [2, 4])
    assert m.n_nodes == 15
    assert m.boundary.size == 12
    assert m.interior.size == 3


def test_lexicographic_order_first_axis_slowest():
    m = build_mesh([[0, 1], [0, 1]], [2, 2])
    assert np.allclose(m.nodes[:3], [[0, 0], [0, 0.5], [0, 1]])
    assert np.allclose(m.nodes[3], [0.5, 0])


@pytest.mark.parametrize("box,cells", [([0, 0], 4), ([1, 0], 4), ([0, 1], 1), ([[0, 1], [0, 0]], [2, 2]),
                                       ([0, np.inf], 4)])
def test_degenerate_boxes_rejected(box, cells):
    with pytest.raises(DegenerateBox):
        build_mesh(box, cells)


def test_gradient_of_linear_is_slope():
    m = build_mesh([0, 1], 8)
    assert np.allclose(gradient(m, m.nodes[:, 0]), 1.0, atol=0, rtol=1e-14)
    assert np.array_equal(gradient(m, np.full(m.n_nodes, 3.7)), np.zeros((8, 1)))


def test_gradient_of_square_on_first_cell():
    m = build_mesh([0, 1], 4)
    x = m.nodes[:, 0]
    assert gradient(m, x**2)[0, 0] == pytest.approx(0.25, abs=1e-15)


def test_gradient_2d_linear_per_axis():
    m = build_mesh([[0, 1], [0, 2]], [3, 5])
    x, y = m.nodes.T
    g = gradient(m, 2 * x - 3 * y + 1)
    assert np.allclose(g[:, 0], 2.0, rtol=1e-13)
    assert np.allclose(g[:, 1], -3.0, rtol=1e-13)


def test_integrate_examples():
    m = build_mesh([0, 1], 4)
    assert integrate(m, np.ones(4)) == pytest.approx(1.0, abs=1e-15)
    assert integrate(m, m.midpoints[:, 0]) == 0.5
    m2 = build_mesh([[0, 2], [0, 1]], [3, 4])
    assert integrate(m2, np.full(m2.n_cells, 3.0)) == pytest.approx(6.0, rel=1e-15)


def test_enforce_zero_trace_examples():
    m = build_mesh([0, 1], 10)
    u = enforce_zero_trace(m, np.ones(m.n_nodes))
    assert u[m.boundary].tolist() == [0.0, 0.0] and np.all(u[m.interior] == 1.0)
    x = m.nodes[:, 0]
    assert np.allclose(enforce_zero_trace(m, x * (1 - x)), x * (1 - x), atol=1e-16)
    assert np.array_equal(enforce_zero_trace(m, np.zeros(m.n_nodes)), np.zeros(m.n_nodes))


def test_laplacian_matches_stiffness():
    m = build_mesh([0, 1], 6)
    K = m.laplacian.toarray()
    T = (np.diag(np.full(5, 2.0)) - np.diag(np.ones(4), 1) - np.diag(np.ones(4), -1)) * 6
    assert np.allclose(K, T)


def test_grid_function_validation():
    m = build_mesh([0, 1], 4)
    with pytest.raises(MeshMismatch):
        GridFunction(m, np.zeros(3))
    with pytest.raises(NonFinite):
        GridFunction(m, np.array([0, 1, np.nan, 0, 0.0]))
    gf = GridFunction(m, np.zeros((4, 1)), "cells")
    assert gf.is_vector


@settings(max_examples=40, deadline=None)
@given(nx=st.integers(2, 12), ny=st.integers(2, 12), lx=st.floats(0.1, 5), ly=st.floats(0.1, 5),
       a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_mesh_invariants(nx, ny, lx, ly, a, b):
    m = build_mesh([[0, lx], [0, ly]], [nx, ny])
    assert m.n_nodes == (nx + 1) * (ny + 1)
    on_face = (np.isclose(m.nodes[:, 0], 0) | np.isclose(m.nodes[:, 0], lx)
               | np.isclose(m.nodes[:, 1], 0) | np.isclose(m.nodes[:, 1], ly))
    assert np.array_equal(np.flatnonzero(on_face), m.boundary)
    assert integrate(m, np.ones(m.n_cells)) == pytest.approx(lx * ly, rel=1e-14)
    x, y = m.nodes.T
    g = gradient(m, a * x + b * y)
    assert np.allclose(g, [a, b], atol=1e-12 * (1 + abs(a) + abs(b)))
    u = np.sin(x + 2 * y)
    once = enforce_zero_trace(m, u)
    assert np.array_equal(once, enforce_zero_trace(m, once))
