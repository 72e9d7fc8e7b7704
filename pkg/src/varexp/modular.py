"""The p(x)-modular, the Luxemburg norm and derived quantities.

All integrals are midpoint sums over mesh cells with the exponent taken at the
same midpoints.  Nodal fields are first averaged to cell midpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from varexp.errors import BracketFailure, MeshMismatch, NonzeroBoundary
from varexp.mesh import as_values

__all__ = [
    "NORM_TOL",
    "BOUNDARY_TOL",
    "NormResult",
    "modular",
    "luxemburg_norm",
    "luxemburg_cells",
    "sobolev0_norm",
    "holder_pairing_bound",
]

NORM_TOL = 1e-10
BOUNDARY_TOL = 1e-12
_MAX_EXPANSIONS = 200
_MAX_BISECTIONS = 400


@dataclass(frozen=True)
class NormResult:
    value: float
    modular_at_value: float
    bisection_iterations: int

    def __float__(self):
        return self.value


def _cell_data(u, p):
    gf = as_values(u, p.mesh)
    vals = gf.cell_values()
    if vals.ndim == 2:
        vals = np.sqrt((vals**2).sum(axis=1))
    return np.abs(vals), p.cells


def modular(u, p):
    """Midpoint approximation of the integral of |u|^p(x)."""
    a, pc = _cell_data(u, p)
    return float(np.sum(a**pc) * p.mesh.cell_measure)


def _log_modular(tau, log_a, pc, log_w):
    # log of sum w |a|^p exp(-p tau), overflow-safe
    z = log_w + pc * (log_a - tau)
    zmax = z.max()
    return zmax + math.log(np.exp(z - zmax).sum())


def luxemburg_cells(a, pc, weight, tol=NORM_TOL):
    """Luxemburg norm of cell data ``a`` with cell exponents ``pc``.

    Bisection in ``log(mu)`` on the strictly decreasing map
    ``mu -> rho(u / mu)``.  The starting bracket comes from the two-sided
    power bounds between norm and modular, which always contain the root.
    """
    a = np.abs(np.asarray(a, dtype=float))
    if not np.all(np.isfinite(a)):
        raise BracketFailure("data is not finite")
    nz = a > 0
    if not np.any(nz):
        return NormResult(0.0, 0.0, 0)
    log_a = np.log(a[nz])
    pc = np.asarray(pc, dtype=float)[nz]
    log_w = math.log(weight)

    def resid(tau):
        return _log_modular(tau, log_a, pc, log_w)

    log_rho = resid(0.0)
    if not math.isfinite(log_rho):
        raise BracketFailure("modular is not finite")
    ends = (log_rho / pc.max(), log_rho / pc.min())
    lo, hi = min(ends), max(ends)
    f_lo, f_hi = resid(lo), resid(hi)
    step = max(hi - lo, 1e-12)
    n = 0
    while f_lo < 0.0:
        lo -= step
        step *= 2.0
        f_lo = resid(lo)
        n += 1
        if n > _MAX_EXPANSIONS:
            raise BracketFailure("could not bracket the Luxemburg norm from below")
    step = max(hi - lo, 1e-12)
    while f_hi > 0.0:
        hi += step
        step *= 2.0
        f_hi = resid(hi)
        n += 1
        if n > _MAX_EXPANSIONS:
            raise BracketFailure("could not bracket the Luxemburg norm from above")

    best_tau, best_f = (lo, f_lo) if abs(f_lo) <= abs(f_hi) else (hi, f_hi)
    iters = 0
    while abs(math.expm1(best_f)) > tol and iters < _MAX_BISECTIONS:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        f_mid = resid(mid)
        iters += 1
        if abs(f_mid) < abs(best_f):
            best_tau, best_f = mid, f_mid
        if f_mid > 0.0:
            lo = mid
        else:
            hi = mid
    return NormResult(math.exp(best_tau), math.exp(best_f), iters)


def luxemburg_norm(u, p, tol=NORM_TOL):
    """Luxemburg norm inf{mu > 0 : rho(u/mu) <= 1} of a grid function."""
    a, pc = _cell_data(u, p)
    return luxemburg_cells(a, pc, p.mesh.cell_measure, tol)


def _check_trace(u, mesh):
    gf = as_values(u, mesh)
    if gf.location != "nodes" or gf.is_vector:
        raise MeshMismatch("expected a nodal scalar field")
    bmax = np.abs(gf.values[mesh.boundary]).max()
    if bmax > BOUNDARY_TOL:
        raise NonzeroBoundary(f"boundary values up to {bmax:.3e} exceed {BOUNDARY_TOL:g}")
    return gf.values


def sobolev0_norm(u, p, tol=NORM_TOL):
    """Sum over axes of the Luxemburg norms of the discrete partial derivatives."""
    mesh = p.mesh
    vals = _check_trace(u, mesh)
    return float(sum(
        luxemburg_cells(op @ vals, p.cells, mesh.cell_measure, tol).value
        for op in mesh.gradient_operators))


def holder_pairing_bound(u, v, p):
    """Both sides of the variable-exponent Holder inequality.

    Returns ``(|int u v|, (1/p- + 1/p'-) |u|_p |v|_p')`` with ``p'`` the
    conjugate exponent.
    """
    mesh = p.mesh
    uc = as_values(u, mesh).cell_values()
    vc = as_values(v, mesh).cell_values()
    conj = p.conjugate()
    lhs = abs(mesh.integrate(uc * vc))
    factor = 1.0 / p.p_minus + 1.0 / conj.p_minus
    rhs = factor * luxemburg_norm(u, p).value * luxemburg_norm(v, conj).value
    return lhs, rhs
