"""Nested subspaces and a symmetric multi-solution search.

The search is an energy-level heuristic: level ``k`` runs the minimax
solver from the ``k``-th ladder direction with the distinct solutions found
at lower levels as support, so each level targets the next critical value.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import eigsh

from varexp.errors import LadderTooLarge, OddnessRequired, VarExpError
from varexp.modular import luxemburg_norm, sobolev0_norm
from varexp.problem import verify_reaction_hypotheses
from varexp.solvers.common import SolverConfig, sign_changes
from varexp.solvers.mountain_pass import mountain_pass_solve, verify_mp_geometry

log = logging.getLogger(__name__)

__all__ = ["SubspaceLadder", "FountainResult", "build_subspace_ladder", "fountain_search", "laplacian_modes"]

COND_TOL = 1e12
_DENSE_LIMIT = 2500


def laplacian_modes(mesh, k):
    """First ``k`` Dirichlet Laplacian eigenvectors as nodal fields (ascending)."""
    lap = mesh.laplacian
    n = lap.shape[0]
    if k > n:
        raise LadderTooLarge(f"K = {k} exceeds the {n} interior nodes")
    if n <= _DENSE_LIMIT:
        vals, vecs = sla.eigh(lap.toarray(), subset_by_index=(0, k - 1))
    else:
        vals, vecs = eigsh(lap, k=k, sigma=0, which="LM")
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    modes = []
    for col in vecs.T:
        b = np.zeros(mesh.n_nodes)
        b[mesh.interior] = col
        b /= np.abs(b).max()
        # sign convention: the first node reaching half the peak is positive
        first = np.flatnonzero(np.abs(b) >= 0.5)[0]
        modes.append(b * np.sign(b[first]))
    return vals, modes


@dataclass(frozen=True)
class SubspaceLadder:
    """Basis b_1..b_K; Y_k = span(b_1..b_k), Z_k = span(b_k..b_K)."""

    basis: tuple
    eigenvalues: np.ndarray
    alpha: np.ndarray
    gram_cond: float

    @property
    def K(self):
        return len(self.basis)

    def Y(self, k):
        return self.basis[:k]

    def Z(self, k):
        return self.basis[k - 1:]


def build_subspace_ladder(prob, K, n_samples=200, seed=0):
    """Ladder of the first ``K`` Laplacian modes with sampled alpha_k.

    ``alpha_k`` estimates sup{|u|_q : u in Z_k, ||u|| = 1} from random
    combinations plus the individual modes.  Because Z_{k+1} is contained in
    Z_k, samples of the smaller space also count for the larger one, which
    makes the estimates nonincreasing in k by construction.
    """
    K = int(K)
    if K < 1:
        raise LadderTooLarge("K must be at least 1")
    vals, basis = laplacian_modes(prob.mesh, K)
    B = np.stack(basis, axis=1)
    gram = B.T @ B
    cond = float(np.linalg.cond(gram))
    if cond > COND_TOL:
        raise LadderTooLarge(f"ladder basis is numerically dependent (cond {cond:.2e})")
    rng = np.random.default_rng(seed)
    alpha = np.zeros(K)
    running = 0.0
    for k in range(K, 0, -1):
        Zk = B[:, k - 1:]
        cands = [Zk[:, i] for i in range(Zk.shape[1])]
        cands += [Zk @ rng.standard_normal(Zk.shape[1]) for _ in range(n_samples)]
        for u in cands:
            u = u / sobolev0_norm(u, prob.p)
            running = max(running, luxemburg_norm(u, prob.q).value)
        alpha[k - 1] = running
    return SubspaceLadder(tuple(basis), np.asarray(vals), alpha, cond)


@dataclass
class FountainResult:
    solutions: list
    diagnostics: list = field(default_factory=list)
    hypotheses: object = None

    def __iter__(self):
        return iter(self.solutions)

    def __len__(self):
        return len(self.solutions)

    def __getitem__(self, i):
        return self.solutions[i]

    def table(self):
        return [(r.extras["level"], r.energy.total, r.grad_norm, r.extras["sign_changes"]) for r in self.solutions]


def _l2(u, mesh):
    return float(np.sqrt(np.sum(u * u) * mesh.cell_measure))


def _same_up_to_sign(u, w, mesh, tol):
    scale = max(_l2(u, mesh), _l2(w, mesh))
    return min(_l2(u - w, mesh), _l2(u + w, mesh)) <= tol * scale


def fountain_search(prob, ladder, cfg=None):
    """Critical points at increasing energy levels for an odd reaction.

    Each level ``k`` starts from ``+b_k`` and ``-b_k``.  Solutions equal up to
    sign (relative L2 distance at most ``dedup_tol``) or with equal energy
    are merged, and the result is sorted by energy.  Failed levels are
    recorded in ``diagnostics`` rather than raised.
    """
    cfg = cfg or SolverConfig()
    if not prob.reaction.odd:
        raise OddnessRequired("the symmetric search needs an odd reaction")
    hyp = verify_reaction_hypotheses(prob.reaction, prob.p)
    for name in ("f1", "f2"):
        if hyp[name].status == "violated":
            log.warning("hypothesis %s violated on sample: %s", name, hyp[name].witness)
    mesh = prob.mesh
    geometry = verify_mp_geometry(prob, ladder.basis[0], cfg=cfg)
    found, diagnostics = [], []
    for k in range(1, ladder.K + 1):
        support = [r.solution for r in found]
        for sign in (1.0, -1.0):
            try:
                rep = mountain_pass_solve(prob, geometry, cfg, support=support,
                                          direction=sign * ladder.basis[k - 1])
            except VarExpError as exc:
                diagnostics.append({"level": k, "sign": sign, "error": type(exc).__name__, "message": str(exc)})
                continue
            if sobolev0_norm(rep.solution, prob.p) <= cfg.nontrivial_tol:
                diagnostics.append({"level": k, "sign": sign, "error": "trivial"})
                continue
            if any(_same_up_to_sign(rep.solution, r.solution, mesh, cfg.dedup_tol) for r in found):
                continue
            rep.extras.update(level=k, sign=sign, sign_changes=sign_changes(rep.solution, mesh))
            found.append(rep)
    found.sort(key=lambda r: (r.energy.total, tuple(r.solution)))
    distinct = []
    for r in found:
        if distinct and abs(r.energy.total - distinct[-1].energy.total) <= 1e-9 * abs(r.energy.total):
            continue
        distinct.append(r)
    if not distinct:
        log.warning("fountain search found no nontrivial solution")
    return FountainResult(distinct, diagnostics, hyp)
