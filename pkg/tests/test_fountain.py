import numpy as np
import pytest
from builders import model_problem
from oracles import n_bump, tridiagonal_modes

from varexp import (
    Problem,
    build_exponent,
    build_mesh,
    build_subspace_ladder,
    custom_reaction,
    energy,
    fountain_search,
    gradient_vector,
    grad_norm,
    make_kernel,
)
from varexp.errors import LadderTooLarge, OddnessRequired


@pytest.fixture(scope="module")
def three_levels():
    prob = model_problem(128)
    ladder = build_subspace_ladder(prob, 3)
    return prob, ladder, fountain_search(prob, ladder)


def test_ladder_matches_sine_modes():
    prob = model_problem(64)
    ladder = build_subspace_ladder(prob, 3)
    x = prob.mesh.nodes[:, 0]
    for k, (b, ref) in enumerate(zip(ladder.basis, tridiagonal_modes(64, 3)), start=1):
        bi = b[prob.mesh.interior]
        assert min(np.abs(bi - ref).max(), np.abs(bi + ref).max()) < 1e-10
        assert np.allclose(b, np.sin(k * np.pi * x) / np.abs(np.sin(k * np.pi * x)).max(), atol=2e-3)
    assert np.all(np.diff(ladder.eigenvalues) > 0)


def test_ladder_spaces_and_alpha():
    prob = model_problem(64)
    ladder = build_subspace_ladder(prob, 5)
    assert ladder.K == 5
    assert len(ladder.Y(2)) == 2 and len(ladder.Z(2)) == 4
    assert ladder.Z(5) == (ladder.basis[4],)
    assert np.all(np.diff(ladder.alpha) <= 0)
    assert ladder.alpha[-1] > 0
    assert ladder.gram_cond < 1e12


def test_full_ladder_last_space_is_a_line():
    prob = model_problem(8)
    ladder = build_subspace_ladder(prob, 7)
    assert len(ladder.Z(7)) == 1
    assert ladder.alpha[-1] == ladder.alpha.min()


def test_ladder_too_large():
    prob = model_problem(8)
    with pytest.raises(LadderTooLarge):
        build_subspace_ladder(prob, 8)
    with pytest.raises(LadderTooLarge):
        build_subspace_ladder(prob, 0)


def test_bump_family(three_levels):
    prob, _, res = three_levels
    assert len(res) == 3
    assert [r.extras["sign_changes"] for r in res] == [0, 1, 2]
    energies = [r.energy.total for r in res]
    assert np.all(np.diff(energies) > 0)
    for n, r in enumerate(res, start=1):
        peak, e = n_bump(n)
        # an n-bump on mesh h is a 1-bump on mesh n h: relative error ~ (n h)^2
        tol = 3e-4 * n**2
        assert r.status == "converged"
        assert np.abs(r.solution).max() == pytest.approx(peak, rel=tol)
        assert r.energy.total == pytest.approx(e, rel=tol)


def test_table_rows(three_levels):
    _, _, res = three_levels
    rows = res.table()
    assert [row[3] for row in rows] == [0, 1, 2]
    assert all(row[2] <= 1e-8 for row in rows)


def test_solutions_come_in_symmetric_pairs(three_levels):
    prob, _, res = three_levels
    for r in res:
        u = r.solution
        assert energy(prob, -u).total == pytest.approx(r.energy.total, rel=1e-14)
        assert grad_norm(prob, gradient_vector(prob, -u)) == pytest.approx(r.grad_norm, rel=1e-12, abs=1e-18)


def test_distinct_up_to_sign(three_levels):
    prob, _, res = three_levels
    h = prob.mesh.cell_measure
    for i in range(len(res)):
        for j in range(i):
            a, b = res[i].solution, res[j].solution
            d = min(np.linalg.norm(a - b), np.linalg.norm(a + b)) * np.sqrt(h)
            assert d > 1e-3 * np.sqrt(h) * max(np.linalg.norm(a), np.linalg.norm(b))


def test_non_odd_reaction_rejected():
    mesh = build_mesh((0.0, 1.0), 16)
    p = build_exponent(2, mesh)
    q = build_exponent(4, mesh)
    reaction = custom_reaction(q, lambda x, t: np.maximum(t, 0) ** 3, lambda x, t: np.maximum(t, 0) ** 4 / 4,
                               C=1.0, mu=4.0, odd=False)
    prob = Problem(make_kernel("pxLaplacian", p), reaction)
    ladder = build_subspace_ladder(model_problem(16), 2)
    with pytest.raises(OddnessRequired):
        fountain_search(prob, ladder)
