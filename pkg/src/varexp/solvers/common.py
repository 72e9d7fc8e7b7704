"""Shared solver machinery: configuration, reports, Sobolev preconditioning
and Armijo backtracking."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.ndimage as ndi
from scipy.sparse.linalg import splu

from varexp.energy import EnergyBreakdown, energy, grad_norm, gradient_vector

__all__ = [
    "SolverConfig",
    "TraceRecord",
    "SolveReport",
    "SobolevPreconditioner",
    "armijo_backtrack",
    "sign_changes",
    "smooth_random_field",
    "LBFGSMemory",
    "TRACE_HEADER",
]

TRACE_HEADER = ("iter", "e0", "j", "total", "grad_norm")


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and budgets shared by all solvers.

    ``grad_tol=None`` means 1e-8 on 1-D meshes and 1e-6 on 2-D meshes.
    ``max_step`` caps the trial step of every line search; inside it the
    minimax solver starts from a Barzilai-Borwein estimate.
    """

    grad_tol: Optional[float] = None
    nontrivial_tol: float = 1e-6
    dedup_tol: float = 1e-3
    coercivity_cap: float = 1e6
    max_iter: int = 100_000
    armijo_c: float = 1e-4
    shrink: float = 0.5
    max_step: float = 1.0
    path_points: int = 33
    relax_every: int = 10
    sphere_samples: int = 64
    ridge_safety: float = 0.5
    t_max: float = 1e8
    seed: int = 0
    n_starts: int = 3
    scales: tuple = tuple(np.logspace(-3, 3, 13))
    quotient_max_iter: int = 400
    quotient_rtol: float = 1e-13
    degeneracy_ratio: float = 1e-2
    keep_iterates: bool = False

    def tol_for(self, mesh):
        if self.grad_tol is not None:
            return self.grad_tol
        return 1e-8 if mesh.dim == 1 else 1e-6

    def updated(self, **overrides):
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown solver options: {sorted(unknown)}")
        if "scales" in overrides:
            overrides["scales"] = tuple(float(s) for s in overrides["scales"])
        return replace(self, **overrides)


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    e0: float
    j: float
    total: float
    grad_norm: float

    def row(self):
        return (self.iter, self.e0, self.j, self.total, self.grad_norm)


@dataclass
class SolveReport:
    solution: np.ndarray
    energy: EnergyBreakdown
    grad_norm: float
    iterations: int
    status: str
    trace: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def summary(self):
        return {
            "status": self.status,
            "energy": {"e0": self.energy.e0, "j": self.energy.j, "total": self.energy.total},
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            **{k: v for k, v in self.extras.items() if not isinstance(v, np.ndarray)},
        }

    def trace_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for rec in self.trace:
            w.writerow([rec.iter, repr(rec.e0), repr(rec.j), repr(rec.total), repr(rec.grad_norm)])
        return buf.getvalue()


class SobolevPreconditioner:
    """Applies the inverse Dirichlet Laplacian to a nodal gradient.

    The result is the Sobolev (H^1_0) gradient; it also provides the matching
    inner product ``<u, v>_K = u^T K v`` on interior values.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        self.interior = mesh.interior

    @cached_property
    def _lu(self):
        return splu(self.mesh.laplacian)

    def __call__(self, g):
        out = np.zeros(self.mesh.n_nodes)
        out[self.interior] = self._lu.solve(np.asarray(g, float)[self.interior])
        return out

    def inner(self, u, v):
        ui = np.asarray(u, float)[self.interior]
        vi = np.asarray(v, float)[self.interior]
        return float(ui @ (self.mesh.laplacian @ vi))

    def norm(self, u):
        return float(np.sqrt(max(self.inner(u, u), 0.0)))


def armijo_backtrack(value_at, f0, slope, step, c=1e-4, shrink=0.5, min_step=1e-14):
    """Backtrack until ``value_at(step) <= f0 - c * step * slope``.

    ``slope`` is the (positive) predicted decrease rate.  Returns
    ``(step, value, payload)`` where ``value_at`` returns ``(value, payload)``;
    ``step`` is ``None`` when no acceptable step exists above ``min_step``.
    The test allows ``64 eps |f0|`` of slack: near a critical point the
    required decrease drops below the rounding level of ``f0`` and would
    otherwise reject every step.
    """
    slack = 64 * np.finfo(float).eps * abs(f0)
    while step >= min_step:
        val, payload = value_at(step)
        if np.isfinite(val) and val <= f0 - c * step * slope + slack:
            return step, val, payload
        step *= shrink
    return None, f0, None


class LBFGSMemory:
    """Limited-memory inverse Hessian with the Sobolev preconditioner as seed.

    ``direction(g)`` is the two-loop recursion applied to ``g``; pairs with
    nonpositive curvature are skipped.
    """

    def __init__(self, precond, size=8):
        self.P = precond
        self.size = size
        self.pairs = []

    def update(self, s, y):
        sy = float(s @ y)
        if sy > 1e-14 * np.linalg.norm(s) * np.linalg.norm(y):
            self.pairs.append((s, y, 1.0 / sy))
            del self.pairs[:-self.size]

    def direction(self, g):
        q = np.array(g, dtype=float)
        alphas = []
        for s, y, rho in reversed(self.pairs):
            a = rho * float(s @ q)
            alphas.append(a)
            q -= a * y
        r = self.P(q)
        if self.pairs:
            s, y, _ = self.pairs[-1]
            # rescale the seed to the latest curvature along the K-metric
            r *= float(s @ y) / float(y @ self.P(y))
        for (s, y, rho), a in zip(self.pairs, reversed(alphas)):
            b = rho * float(y @ r)
            r += (a - b) * s
        return r


def sign_changes(u, mesh, rel_tol=1e-6):
    """Number of nodal domains minus one (sign changes along a 1-D mesh)."""
    u = np.asarray(u, float)
    scale = np.abs(u).max()
    if scale == 0:
        return 0
    grid = u.reshape(mesh.shape)
    pos = grid > rel_tol * scale
    neg = grid < -rel_tol * scale
    n = ndi.label(pos)[1] + ndi.label(neg)[1]
    return max(n - 1, 0)


def smooth_random_field(mesh, rng, precond=None):
    """Zero-trace random field smoothed by one inverse-Laplacian solve."""
    precond = precond or SobolevPreconditioner(mesh)
    g = np.zeros(mesh.n_nodes)
    g[mesh.interior] = rng.standard_normal(mesh.interior.size)
    u = precond(g)
    return u / np.abs(u).max()


def make_report(prob, u, status, iterations, trace, iterates=(), g=None, **extras):
    g = gradient_vector(prob, u) if g is None else g
    return SolveReport(np.asarray(u, float).copy(), energy(prob, u), grad_norm(prob, g), iterations,
                       status, list(trace), list(iterates), dict(extras))


def record(prob, it, e, gn):
    return TraceRecord(it, e.e0, e.j, e.total, gn)
