"""Operator kernels A(x, s), reactions f(x, t), and sampling-based checks of
their structural hypotheses.

Kernels and reactions are immutable evaluators.  Their vectorized methods
take the local exponent values (and coordinates, used only by custom hooks)
so the same code serves nodes, cell midpoints and sample grids.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from varexp.errors import BothZero, MeshMismatch, SingularOriginWarning
from varexp.exponent import sample_field

__all__ = [
    "S_EPS",
    "PHI_QUAD_TOL",
    "FAMILIES",
    "OperatorKernel",
    "Reaction",
    "SamplingPlan",
    "HypothesisStatus",
    "HypothesisReport",
    "make_kernel",
    "custom_kernel",
    "model_reaction",
    "custom_reaction",
    "kernel_eval",
    "potential_phi",
    "reaction_eval",
    "reaction_primitive",
    "verify_kernel_hypotheses",
    "verify_reaction_hypotheses",
    "simon_gap",
    "simon_gap_samples",
]

S_EPS = 1e-12
PHI_QUAD_TOL = 1e-10
VERIFY_RTOL = 1e-12
FAMILIES = ("pxLaplacian", "weightedPxLaplacian", "pxMeanCurvature", "custom")


def _expand(v, like):
    """Broadcast per-site values against a sample array of shape (n,) or (n, m)."""
    v = np.asarray(v, dtype=float)
    if np.ndim(like) == 2 and v.ndim == 1:
        return v[:, None]
    return v


class OperatorKernel:
    """The map (x, s) -> A(x, s) together with dA/ds and the potential
    Phi(x, t) = int_0^t s A(x, s) ds.

    Use :func:`make_kernel` or :func:`custom_kernel` to construct one.
    """

    def __init__(self, family, p, a1, a2, a3, A=None, dA=None, phi=None):
        if family not in FAMILIES:
            raise ValueError(f"unknown kernel family {family!r}; expected one of {FAMILIES}")
        self.family = family
        self.p = p
        self.a1 = np.asarray(a1, dtype=float)
        self.a2 = float(a2)
        self.a3 = float(a3)
        self._A = A
        self._dA = dA
        self._phi = phi

    def __repr__(self):
        return f"OperatorKernel({self.family!r}, {self.p!r})"

    @property
    def mesh(self):
        return self.p.mesh

    def value(self, s, pv, x=None):
        """A(x, s); power families use max(s, S_EPS) where p < 2."""
        s = np.asarray(s, dtype=float)
        pv = _expand(pv, s)
        if self.family == "custom":
            return np.asarray(self._A(s, pv, x), dtype=float)
        if self.family == "pxMeanCurvature":
            return (1.0 + s * s) ** ((pv - 2.0) / 2.0)
        sr = np.where(pv < 2.0, np.maximum(s, S_EPS), s)
        base = sr ** (pv - 2.0)
        return pv * base if self.family == "weightedPxLaplacian" else base

    def ds(self, s, pv, x=None):
        """Partial derivative dA/ds."""
        s = np.asarray(s, dtype=float)
        pv = _expand(pv, s)
        if self.family == "custom":
            if self._dA is not None:
                return np.asarray(self._dA(s, pv, x), dtype=float)
            # central difference; accuracy about 1e-6 relative at best
            h = 1e-6 * np.maximum(1.0, s)
            lo = np.maximum(s - h, 0.0)
            return (self._A(s + h, pv, x) - self._A(lo, pv, x)) / (s + h - lo)
        if self.family == "pxMeanCurvature":
            return (pv - 2.0) * s * (1.0 + s * s) ** ((pv - 4.0) / 2.0)
        sr = np.where(pv < 2.0, np.maximum(s, S_EPS), s)
        base = (pv - 2.0) * sr ** (pv - 3.0)
        return pv * base if self.family == "weightedPxLaplacian" else base

    def potential(self, t, pv, x=None):
        """Phi(x, t), exact for the named families."""
        t = np.asarray(t, dtype=float)
        pv = _expand(pv, t)
        if self.family == "pxLaplacian":
            return t**pv / pv
        if self.family == "weightedPxLaplacian":
            return t**pv
        if self.family == "pxMeanCurvature":
            return np.expm1(0.5 * pv * np.log1p(t * t)) / pv
        if self._phi is not None:
            return np.asarray(self._phi(t, pv, x), dtype=float)
        return self._potential_quad(t, pv, x)

    def _potential_quad(self, t, pv, x):
        # Phi(t) = t^2 int_0^1 r A(t r) dr keeps the tolerance relative for small t
        t_b, p_b = np.broadcast_arrays(t, pv)
        out = np.empty(t_b.shape)
        xs = None if x is None else np.asarray(x)
        for idx in np.ndindex(t_b.shape):
            xi = None if xs is None else xs[idx[0]]
            pi, ti = p_b[idx], float(t_b[idx])
            if ti == 0.0:
                out[idx] = 0.0
                continue
            val = integrate.quad(
                lambda r: r * float(self._A(np.asarray(ti * r), pi, xi)), 0.0, 1.0,
                epsabs=0.0, epsrel=PHI_QUAD_TOL, limit=200)[0]
            out[idx] = ti * ti * val
        return out


def make_kernel(family, p, a1=None, a2=None, a3=None):
    """One of the three named kernel families on the exponent field ``p``.

    Defaults for the growth constants are chosen so that (A2) and (A3) hold
    by construction:

    * ``a2 = 1 + max p`` (``max(1 + p+, 2**((p+ - 2)/2))`` for mean curvature);
    * ``a1 = 0`` except for mean curvature with p+ > 2, where the small-s
      regime needs ``a1 = 2**((p+ - 2)/2)``;
    * ``a3 = min(1, p- - 1) * min(1, 2**((p- - 2)/2))``.
    """
    if family == "custom" or family not in FAMILIES:
        raise ValueError(f"make_kernel builds named families only, got {family!r}")
    pp, pm = p.p_plus, p.p_minus
    if a2 is None:
        a2 = 1.0 + pp
        if family == "pxMeanCurvature":
            a2 = max(a2, 2.0 ** ((pp - 2.0) / 2.0))
    if a1 is None:
        a1 = 2.0 ** ((pp - 2.0) / 2.0) if (family == "pxMeanCurvature" and pp > 2.0) else 0.0
    if a3 is None:
        a3 = min(1.0, pm - 1.0) * min(1.0, 2.0 ** ((pm - 2.0) / 2.0))
    a1 = np.broadcast_to(np.asarray(a1, dtype=float), (p.mesh.n_nodes,))
    return OperatorKernel(family, p, a1, a2, a3)


def custom_kernel(p, A, a1, a2, a3, dA=None, phi=None):
    """Kernel from user callables ``A(s, p, x)`` (and optionally ``dA``, ``phi``).

    Without ``phi`` the potential is computed by adaptive quadrature to
    ``PHI_QUAD_TOL``; without ``dA`` a central difference is used.
    """
    a1 = np.broadcast_to(np.asarray(a1, dtype=float), (p.mesh.n_nodes,))
    return OperatorKernel("custom", p, a1, a2, a3, A=A, dA=dA, phi=phi)


class Reaction:
    """The nonlinearity f(x, t) and its primitive F(x, t) = int_0^t f(x, s) ds.

    The model family is ``f = c(x) |t|^(q(x)-2) t`` with ``c >= 0``.
    Custom reactions supply ``f(x, t)`` and ``F(x, t)`` callables.
    """

    def __init__(self, q, c_nodes, c_cells, C, mu, R, odd, f=None, F=None):
        self.q = q
        self.c_nodes = np.asarray(c_nodes, dtype=float)
        self.c_cells = np.asarray(c_cells, dtype=float)
        self.C = float(C)
        self.mu = float(mu)
        self.R = float(R)
        self.odd = bool(odd)
        self._f = f
        self._F = F

    def __repr__(self):
        kind = "custom" if self.is_custom else "model"
        return f"Reaction({kind}, q=[{self.q.p_minus:g}, {self.q.p_plus:g}], mu={self.mu:g}, odd={self.odd})"

    @property
    def mesh(self):
        return self.q.mesh

    @property
    def is_custom(self):
        return self._f is not None

    def _site(self, loc):
        if loc == "cells":
            return self.q.cells, self.c_cells, self.mesh.midpoints
        return self.q.values, self.c_nodes, self.mesh.nodes

    def value(self, t, loc="cells"):
        t = np.asarray(t, dtype=float)
        qv, cv, x = self._site(loc)
        if self.is_custom:
            return np.asarray(self._f(x, t), dtype=float)
        qv, cv = _expand(qv, t), _expand(cv, t)
        a = np.abs(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = cv * np.where(a > 0, a ** (qv - 2.0), 0.0) * t
        return out

    def primitive(self, t, loc="cells"):
        t = np.asarray(t, dtype=float)
        qv, cv, x = self._site(loc)
        if self.is_custom:
            return np.asarray(self._F(x, t), dtype=float)
        qv, cv = _expand(qv, t), _expand(cv, t)
        return cv * np.abs(t) ** qv / qv

    def scaled(self, factor):
        """The reaction ``factor * f`` (used for E_lambda = I - lambda J)."""
        factor = float(factor)
        f = F = None
        if self.is_custom:
            f0, F0 = self._f, self._F
            f = lambda x, t: factor * f0(x, t)  # noqa: E731
            F = lambda x, t: factor * F0(x, t)  # noqa: E731
        return Reaction(self.q, factor * self.c_nodes, factor * self.c_cells,
                        abs(factor) * self.C, self.mu, self.R, self.odd, f, F)


def model_reaction(q, c=1.0, C=None, mu=None, R=1.0):
    """Model reaction ``c(x)|t|^(q-2) t``; ``C`` defaults to max c, ``mu`` to q-."""
    c_nodes, c_cells = sample_field(c, q.mesh)
    if np.any(c_nodes < 0) or np.any(c_cells < 0):
        raise ValueError("reaction coefficient c must be nonnegative")
    if C is None:
        C = max(float(c_nodes.max()), float(c_cells.max()), np.finfo(float).tiny)
    if mu is None:
        mu = q.p_minus
    return Reaction(q, c_nodes, c_cells, C, mu, R, odd=True)


def custom_reaction(q, f, F, C, mu, R=1.0, odd=False):
    """Reaction from callables ``f(x, t)`` and ``F(x, t)``.

    ``x`` is the coordinate array of the evaluation sites and ``t`` an array
    whose leading axis matches it.
    """
    zeros = np.zeros(q.mesh.n_nodes)
    return Reaction(q, zeros, np.zeros(q.mesh.n_cells), C, mu, R, odd, f=f, F=F)


# ---------------------------------------------------------------- pointwise API

def kernel_eval(k, node, s):
    """A(x_node, s); warns SingularOriginWarning at s = 0 with p(x) < 2."""
    pv = k.p.values[node]
    if s == 0 and pv < 2 and k.family in ("pxLaplacian", "weightedPxLaplacian"):
        warnings.warn(f"A(x, 0) is singular for p(x) = {pv:g} < 2; evaluated at s = {S_EPS:g}",
                      SingularOriginWarning, stacklevel=2)
    return float(k.value(np.asarray([s], float), np.asarray([pv]), k.mesh.nodes[[node]])[0])


def potential_phi(k, node, t):
    pv = k.p.values[node]
    return float(k.potential(np.asarray([t], float), np.asarray([pv]), k.mesh.nodes[[node]])[0])


def _node_view(r, node, t):
    # evaluate a reaction at a single node without touching the others
    t_arr = np.zeros(r.mesh.n_nodes)
    t_arr[node] = t
    return t_arr


def reaction_eval(r, node, t):
    return float(r.value(_node_view(r, node, t), "nodes")[node])


def reaction_primitive(r, node, t):
    return float(r.primitive(_node_view(r, node, t), "nodes")[node])


# ------------------------------------------------------------- verification

@dataclass(frozen=True)
class SamplingPlan:
    """Sample grids for hypothesis checks; every mesh node is always used."""

    s_values: np.ndarray = field(default_factory=lambda: np.logspace(-12, 3, 64))
    t_max: float = 1e3
    n_t: int = 64
    t_small: np.ndarray = field(default_factory=lambda: np.logspace(-6, -2, 17))


@dataclass(frozen=True)
class HypothesisStatus:
    status: str
    margin: float
    witness: Optional[dict]
    samples: int
    note: str = ""

    def to_dict(self):
        return {"status": self.status, "margin": self.margin, "witness": self.witness,
                "samples": self.samples, "note": self.note}


@dataclass(frozen=True)
class HypothesisReport:
    statuses: dict

    def __getitem__(self, key):
        return self.statuses[key]

    @property
    def any_violated(self):
        return any(s.status == "violated" for s in self.statuses.values())

    def to_dict(self):
        return {k: v.to_dict() for k, v in self.statuses.items()}


def _rel_margin(lhs, rhs):
    """(rhs - lhs) scaled to [-1, 1]; zero when both sides vanish."""
    scale = np.abs(lhs) + np.abs(rhs)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(scale > 0, (rhs - lhs) / np.where(scale > 0, scale, 1.0), 0.0)


def _status(margin, coords, grid, gridname, note="", tol=VERIFY_RTOL):
    margin = np.asarray(margin, dtype=float)
    i = np.unravel_index(int(np.argmin(margin)), margin.shape)
    worst = float(margin[i])
    witness = {"x": [float(c) for c in coords[i[0]]], gridname: float(grid[i[-1]] if margin.ndim == 2 else grid[i[0]]),
               "margin": worst}
    status = "violated" if worst < -tol else "holds_on_sample"
    return HypothesisStatus(status, worst, witness, int(margin.size), note)


def verify_kernel_hypotheses(k, plan=None):
    """Check (A2)-(A4) on every node times a log-spaced s grid."""
    plan = plan or SamplingPlan()
    s = np.broadcast_to(plan.s_values, (k.mesh.n_nodes, plan.s_values.size))
    pv = k.p.values
    x = k.mesh.nodes
    A = k.value(s, pv, x)
    dA = k.ds(s, pv, x)
    pe = pv[:, None]
    out = {}
    out["A2"] = _status(_rel_margin(A * s, k.a1[:, None] + k.a2 * s ** (pe - 1.0)), x, plan.s_values, "s")
    out["A3"] = _status(_rel_margin(k.a3 * np.minimum(1.0, s ** (pe - 2.0)), np.minimum(A, A + s * dA)),
                        x, plan.s_values, "s")
    # a quadrature potential is only accurate to PHI_QUAD_TOL relative
    quad_phi = k.family == "custom" and k._phi is None
    tol = 10 * PHI_QUAD_TOL if quad_phi else VERIFY_RTOL
    out["A4"] = _status(_rel_margin(s * s * A, k.p.p_plus * k.potential(s, pv, x)), x, plan.s_values, "t",
                        "potential by quadrature" if quad_phi else "", tol)
    return HypothesisReport(out)


def verify_reaction_hypotheses(r, p, plan=None):
    """Check (f1)-(f4) for reaction ``r`` against operator exponent ``p``."""
    if p.mesh != r.mesh:
        raise MeshMismatch("reaction and exponent live on different meshes")
    plan = plan or SamplingPlan()
    x = r.mesh.nodes
    n = r.mesh.n_nodes
    qe = r.q.values[:, None]
    out = {}

    ts = np.logspace(-6, math.log10(plan.t_max), plan.n_t)
    t_sym = np.concatenate([-ts[::-1], ts])
    T = np.broadcast_to(t_sym, (n, t_sym.size))
    f = r.value(T, "nodes")
    out["f1"] = _status(_rel_margin(np.abs(f), r.C * np.abs(T) ** (qe - 1.0)), x, t_sym, "t")

    t_ar = np.logspace(math.log10(r.R), math.log10(max(plan.t_max, r.R * 10)), plan.n_t)
    T = np.broadcast_to(t_ar, (n, t_ar.size))
    fa, Fa = r.value(T, "nodes"), r.primitive(T, "nodes")
    margin = _rel_margin(r.mu * Fa, T * fa)
    margin = np.where(Fa > 0, margin, -1.0)
    st = _status(margin, x, t_ar, "t")
    if r.mu <= p.p_plus:
        st = HypothesisStatus("violated", r.mu - p.p_plus, {"mu": r.mu, "p_plus": p.p_plus,
                              "margin": r.mu - p.p_plus}, st.samples, "mu must exceed p+")
    out["f2"] = st

    small = np.concatenate([-plan.t_small[::-1], plan.t_small])
    T = np.broadcast_to(small, (n, small.size))
    ratio = np.abs(r.value(T, "nodes")) / np.abs(T) ** (p.p_plus - 1.0)
    per_t = ratio.max(axis=0)
    per_abs = np.maximum(per_t[: plan.t_small.size][::-1], per_t[plan.t_small.size:])
    smallest = float(per_abs[0])
    if np.all(per_abs == 0):
        rate = math.inf
    elif per_abs[0] == 0:
        rate = math.inf
    else:
        # empirical decay exponent of the ratio as |t| -> 0
        rate = math.log(per_abs[-1] / per_abs[0]) / math.log(plan.t_small[-1] / plan.t_small[0])
    margin = min(rate, 1.0) - 1e-6
    out["f3"] = HypothesisStatus(
        "holds_on_sample" if margin >= 0 else "violated", float(margin),
        {"t": float(plan.t_small[0]), "ratio": smallest, "decay_rate": rate, "margin": float(margin)},
        int(ratio.size), "margin is the fitted decay exponent minus 1e-6")

    f = r.value(np.broadcast_to(t_sym, (n, t_sym.size)), "nodes")
    tf = t_sym[None, :] * f
    if not np.any(f != 0):
        out["f4"] = HypothesisStatus("violated", -1.0, {"reason": "identically zero on sample", "margin": -1.0},
                                     int(f.size))
    else:
        out["f4"] = _status(_rel_margin(0.0, tf), x, t_sym, "t")
    return HypothesisReport(out)


# ---------------------------------------------------------------- gap bounds

def simon_gap_samples(k, pv, xi, zeta, x=None):
    """Vectorized gap (A(|xi|)xi - A(|zeta|)zeta).(xi - zeta) and its lower-bound shape.

    ``xi`` and ``zeta`` have shape ``(n, dim)``; ``pv`` shape ``(n,)``.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
    pv = np.asarray(pv, dtype=float)
    nx = np.linalg.norm(xi, axis=1)
    nz = np.linalg.norm(zeta, axis=1)
    ax = k.value(nx, pv, x)
    az = k.value(nz, pv, x)
    diff = xi - zeta
    gap = np.einsum("ij,ij->i", ax[:, None] * xi - az[:, None] * zeta, diff)
    d = np.linalg.norm(diff, axis=1)
    with np.errstate(divide="ignore"):
        sub = d**2 * np.minimum(1.0, np.where(nx + nz > 0, (nx + nz), 1.0) ** (pv - 2.0))
    bound = np.where(pv >= 2.0, d**pv, sub)
    return gap, bound


def simon_gap(k, node, xi, zeta):
    """Monotonicity gap at node ``node`` and the matching power bound."""
    xi = np.asarray(xi, dtype=float).reshape(1, -1)
    zeta = np.asarray(zeta, dtype=float).reshape(1, -1)
    if not np.any(xi) and not np.any(zeta):
        raise BothZero("xi and zeta are both zero")
    gap, bound = simon_gap_samples(k, k.p.values[[node]], xi, zeta, k.mesh.nodes[[node]])
    return float(gap[0]), float(bound[0])

