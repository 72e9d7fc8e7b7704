"""Discrete energy E(u) = int Phi(x, |grad u|) - int F(x, u) and its derivative.

The derivative is the exact derivative of the discrete energy, assembled in
one sweep over cells, so line searches see a perfectly consistent pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from varexp.errors import MeshMismatch
from varexp.modular import sobolev0_norm

__all__ = [
    "Problem",
    "EnergyBreakdown",
    "PSReport",
    "energy",
    "directional_derivative",
    "gradient_vector",
    "grad_norm",
    "monotone_gap",
    "ps_diagnostics",
]


@dataclass(frozen=True, eq=False)
class Problem:
    """-div(A(x, |grad u|) grad u) = f(x, u) in the box, u = 0 on its boundary."""

    kernel: object
    reaction: object

    def __post_init__(self):
        if self.kernel.mesh != self.reaction.mesh:
            raise MeshMismatch("kernel and reaction are defined on different meshes")

    @property
    def mesh(self):
        return self.kernel.mesh

    @property
    def p(self):
        return self.kernel.p

    @property
    def q(self):
        return self.reaction.q

    def with_lambda(self, lam):
        """The problem with right-hand side ``lam * f``."""
        return Problem(self.kernel, self.reaction.scaled(lam))

    @cached_property
    def _ops(self):
        mesh = self.mesh
        return mesh.gradient_operators, [op.T.tocsr() for op in mesh.gradient_operators], \
            mesh.average_operator, mesh.average_operator.T.tocsr()


@dataclass(frozen=True)
class EnergyBreakdown:
    e0: float
    j: float
    total: float

    @classmethod
    def from_parts(cls, e0, j):
        return cls(float(e0), float(j), float(e0) - float(j))


def _grad(prob, u):
    ops = prob._ops[0]
    return np.stack([op @ u for op in ops], axis=1)


def _flux(prob, grad_u):
    s = np.sqrt((grad_u**2).sum(axis=1))
    a = prob.kernel.value(s, prob.p.cells, prob.mesh.midpoints)
    return a[:, None] * grad_u


def energy(prob, u):
    """Operator part, reaction part and total energy of nodal ``u``."""
    u = np.asarray(u, dtype=float)
    mesh = prob.mesh
    g = _grad(prob, u)
    s = np.sqrt((g**2).sum(axis=1))
    e0 = prob.kernel.potential(s, prob.p.cells, mesh.midpoints).sum() * mesh.cell_measure
    uc = prob._ops[2] @ u
    j = prob.reaction.primitive(uc, "cells").sum() * mesh.cell_measure
    return EnergyBreakdown.from_parts(e0, j)


def directional_derivative(prob, u, v):
    """E'(u)(v) evaluated cell by cell."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    mesh = prob.mesh
    flux = _flux(prob, _grad(prob, u))
    avg = prob._ops[2]
    fu = prob.reaction.value(avg @ u, "cells")
    return float(((flux * _grad(prob, v)).sum() - (fu * (avg @ v)).sum()) * mesh.cell_measure)


def gradient_vector(prob, u, operator_only=False):
    """Nodal vector g with g_i = E'(u)(delta_i) for interior i, zero on the boundary."""
    u = np.asarray(u, dtype=float)
    mesh = prob.mesh
    ops, ops_t, avg, avg_t = prob._ops
    flux = _flux(prob, _grad(prob, u)) * mesh.cell_measure
    g = ops_t[0] @ flux[:, 0]
    for k in range(1, mesh.dim):
        g += ops_t[k] @ flux[:, k]
    if not operator_only:
        g -= avg_t @ (prob.reaction.value(avg @ u, "cells") * mesh.cell_measure)
    g[mesh.boundary] = 0.0
    return g


def grad_norm(prob, g):
    """Euclidean norm of the assembled gradient divided by sqrt(cell measure).

    A discrete L2 norm of the residual density; it bounds |E'(u)(v)| by
    ``grad_norm * ||v||_{L2,h}``.
    """
    return float(np.linalg.norm(g) / math.sqrt(prob.mesh.cell_measure))


def monotone_gap(prob, u, v):
    """(E0'(u) - E0'(v))(u - v) for the operator part only."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    gu, gv = _grad(prob, u), _grad(prob, v)
    diff = _flux(prob, gu) - _flux(prob, gv)
    return float((diff * (gu - gv)).sum() * prob.mesh.cell_measure)


@dataclass(frozen=True)
class PSReport:
    sup_norm: float
    bounded: bool
    last_grad_norm: float
    energy_range: tuple
    difference_modulars: list
    differences_vanish: bool

    def to_dict(self):
        return {
            "sup_norm": self.sup_norm,
            "bounded": self.bounded,
            "last_grad_norm": self.last_grad_norm,
            "energy_range": list(self.energy_range),
            "difference_modulars": list(self.difference_modulars),
            "differences_vanish": self.differences_vanish,
        }


def ps_diagnostics(prob, trace, norm_cap=1e6, vanish_tol=1e-8):
    """Palais-Smale style diagnostics for a sequence of iterates.

    ``trace`` is a sequence of ``(u, energy, grad_norm)``.  Reports the
    supremum of the Sobolev norm (flagged unbounded above ``norm_cap``), the
    final gradient norm, and the modulars of successive gradient
    differences, the discrete stand-in for strong convergence.
    """
    trace = list(trace)
    if not trace:
        raise ValueError("trace is empty")
    mesh = prob.mesh
    pc = prob.p.cells
    norms = [sobolev0_norm(u, prob.p) for u, _, _ in trace]
    diffs = []
    for (a, _, _), (b, _, _) in zip(trace[:-1], trace[1:]):
        d = _grad(prob, np.asarray(b, float) - np.asarray(a, float))
        s = np.sqrt((d**2).sum(axis=1))
        diffs.append(float((s**pc).sum() * mesh.cell_measure))
    energies = [float(getattr(e, "total", e)) for _, e, _ in trace]
    sup = float(max(norms))
    return PSReport(
        sup_norm=sup,
        bounded=bool(math.isfinite(sup) and sup <= norm_cap),
        last_grad_norm=float(trace[-1][2]),
        energy_range=(min(energies), max(energies)),
        difference_modulars=diffs,
        differences_vanish=bool(not diffs or diffs[-1] <= vanish_tol),
    )
