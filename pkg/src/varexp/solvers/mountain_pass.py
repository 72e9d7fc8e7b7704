"""Mountain-pass geometry and a numerical minimax solver.

The solver keeps a direction ``v`` and the path segment from 0 to a valley
point ``t_e v``.  Each outer step locates the path maximizer, moves it along
the negative Sobolev gradient and re-selects the maximizer on the deformed
ray; every ``relax_every`` steps the valley endpoint is re-relaxed.  With a
nonempty ``support`` (previously found critical points) the maximizer is
taken over ``span(support) + R_+ v`` instead, which targets critical points
of higher Morse index.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar

from varexp.energy import energy, grad_norm, gradient_vector
from varexp.errors import DegenerateCollapse, MaxIter, NoMountainRidge, NonzeroBoundary, NoValley
from varexp.modular import BOUNDARY_TOL, sobolev0_norm
from varexp.solvers.common import (
    SobolevPreconditioner,
    SolverConfig,
    armijo_backtrack,
    make_report,
    record,
    smooth_random_field,
)

log = logging.getLogger(__name__)

__all__ = ["MPGeometry", "verify_mp_geometry", "mountain_pass_solve"]


@dataclass(frozen=True)
class MPGeometry:
    r: float
    rho: float
    e: np.ndarray
    t_star: float
    sampled_floor: float = float("nan")
    radii: tuple = ()
    floors: tuple = ()

    def summary(self):
        return {"r": self.r, "rho": self.rho, "t_star": self.t_star, "sampled_floor": self.sampled_floor,
                "e_energy_sign": "negative"}


def _zero_trace(prob, u):
    u = np.asarray(u, float)
    if np.abs(u[prob.mesh.boundary]).max() > BOUNDARY_TOL:
        raise NonzeroBoundary("direction must vanish on the boundary")
    if not np.any(u):
        raise ValueError("direction must be nonzero")
    return u


def verify_mp_geometry(prob, phi, sphere_samples=None, cfg=None):
    """Find a valley point ``t* phi`` with negative energy and a ridge radius.

    ``t*`` is found by doubling ``t`` from 1 until ``E(t phi) < 0``.  The ridge
    radius ``r`` maximizes, over a log-spaced grid below ``||t* phi||``, the
    minimum energy over random smooth sphere samples (plus ``phi`` itself).
    Sampled minima overestimate the true infimum over the sphere, so the
    reported ``rho`` is ``cfg.ridge_safety`` times that sampled floor.
    """
    cfg = cfg or SolverConfig()
    n_samples = cfg.sphere_samples if sphere_samples is None else int(sphere_samples)
    phi = _zero_trace(prob, phi)
    t = 1.0
    while energy(prob, t * phi).total >= 0.0:
        t *= 2.0
        if t > cfg.t_max:
            raise NoValley(f"E(t phi) >= 0 for all t <= {cfg.t_max:g}; is q- > p+?")
    e = t * phi
    e_norm = sobolev0_norm(e, prob.p)

    rng = np.random.default_rng(cfg.seed)
    precond = SobolevPreconditioner(prob.mesh)
    dirs = [phi] + [smooth_random_field(prob.mesh, rng, precond) for _ in range(n_samples)]
    dirs = [d / sobolev0_norm(d, prob.p) for d in dirs]
    radii = np.geomspace(1e-4 * e_norm, 0.9 * e_norm, 40)
    floors = np.array([min(energy(prob, r * d).total for d in dirs) for r in radii])
    i = int(np.argmax(floors))
    if floors[i] <= 0.0:
        raise NoMountainRidge("no sampled radius has a positive energy floor")
    return MPGeometry(r=float(radii[i]), rho=float(cfg.ridge_safety * floors[i]), e=e, t_star=t,
                      sampled_floor=float(floors[i]), radii=tuple(radii), floors=tuple(floors))


class _Minimax:
    """Peak selection over span(support) + t v, t > 0."""

    def __init__(self, prob, support, cfg, precond):
        self.prob = prob
        self.cfg = cfg
        self.P = precond
        self.W = [np.asarray(w, float) for w in support]
        if self.W:
            gram = np.array([[precond.inner(a, b) for b in self.W] for a in self.W])
            self._gram_inv = np.linalg.inv(gram)
        self.t_end = None

    def E(self, u):
        return energy(self.prob, u).total

    def orthonormalize(self, v):
        if self.W:
            coef = self._gram_inv @ np.array([self.P.inner(w, v) for w in self.W])
            v = v - sum(c * w for c, w in zip(coef, self.W))
        return v / self.P.norm(v)

    def relax(self, v, t_hint):
        """Re-place the valley endpoint of the path along direction ``v``."""
        t = max(2.0 * t_hint, 1e-12)
        while self.E(t * v) >= 0.0:
            t *= 2.0
            if t > self.cfg.t_max:
                raise NoValley("path endpoint lost its negative energy")
        self.t_end = t

    def ray_peak(self, v, t_hint):
        if self.t_end is None or self.E(self.t_end * v) >= 0.0:
            self.relax(v, t_hint)
        ts = np.linspace(0.0, self.t_end, self.cfg.path_points)
        vals = np.array([self.E(t * v) for t in ts])
        m = int(np.argmax(vals))
        if m == 0:
            return 0.0, vals[0]
        lo, hi = ts[m - 1], ts[min(m + 1, ts.size - 1)]
        res = minimize_scalar(lambda t: -self.E(t * v), bracket=(lo, ts[m], hi), method="golden")
        t = float(res.x) if -res.fun >= vals[m] else float(ts[m])
        t = self._polish(v, t, lo, hi)
        return t, self.E(t * v)

    def _polish(self, v, t, lo, hi):
        # golden section leaves |dt| ~ sqrt(eps); finish on the exact derivative
        def slope(s):
            return float(gradient_vector(self.prob, s * v) @ v)

        width = max(1e-6 * t, 1e-300)
        a, b = t - width, t + width
        for _ in range(60):
            if slope(a) > 0 > slope(b):
                return brentq(slope, a, b, xtol=1e-15 * t, rtol=4 * np.finfo(float).eps)
            a, b = max(lo, t - 2 * (t - a)), min(hi, b + 2 * (b - t))
            if a == lo and b == hi and not slope(a) > 0 > slope(b):
                break
        return t

    def peak(self, v, t0, c0):
        """Return ``(u, value, t, c)`` for the local maximizer near ``(t0, c0)``."""
        if not self.W:
            t, val = self.ray_peak(v, t0)
            return t * v, val, t, np.zeros(0)
        if t0 is None:
            t0, _ = self.ray_peak(v, 1.0)
            c0 = np.zeros(len(self.W))
        basis = [v] + self.W

        def neg(z):
            u = z[0] * v + sum(c * w for c, w in zip(z[1:], self.W))
            g = gradient_vector(self.prob, u)
            return -self.E(u), -np.array([g @ b for b in basis])

        z0 = np.concatenate([[t0], c0])
        res = minimize(neg, z0, jac=True, method="BFGS", options={"gtol": 1e-11, "maxiter": 500})
        z = self._newton(basis, res.x)
        u = z[0] * v + sum(c * w for c, w in zip(z[1:], self.W))
        return u, self.E(u), float(z[0]), z[1:]

    def _newton(self, basis, z, steps=6):
        # BFGS stalls at the rounding level of E; Newton on the exact
        # gradient with a differenced Hessian drives it to that of dE
        B = np.stack(basis, axis=1)

        def coord_grad(zz):
            return B.T @ gradient_vector(self.prob, B @ zz)

        g = coord_grad(z)
        for _ in range(steps):
            H = np.empty((z.size, z.size))
            for j in range(z.size):
                h = 1e-6 * max(1.0, abs(z[j]))
                e = np.zeros(z.size)
                e[j] = h
                H[:, j] = (coord_grad(z + e) - coord_grad(z - e)) / (2 * h)
            H = 0.5 * (H + H.T)
            try:
                dz = np.linalg.solve(H, -g)
            except np.linalg.LinAlgError:
                break
            z_new = z + dz
            g_new = coord_grad(z_new)
            if not np.linalg.norm(g_new) < np.linalg.norm(g):
                break
            z, g = z_new, g_new
        return z


def mountain_pass_solve(prob, geometry, cfg=None, support=(), direction=None):
    """Minimax descent from the path 0 -> ``geometry.e``.

    Returns a :class:`SolveReport` with status ``converged`` once the path
    maximizer has ``grad_norm <= grad_tol``.  Raises :class:`MaxIter` when
    the iteration budget is exhausted and :class:`DegenerateCollapse` when
    the path maximum falls below ``geometry.rho``.
    """
    cfg = cfg or SolverConfig()
    mesh = prob.mesh
    tol = cfg.tol_for(mesh)
    P = SobolevPreconditioner(mesh)
    mm = _Minimax(prob, support, cfg, P)

    v = mm.orthonormalize(np.asarray(geometry.e if direction is None else direction, float))
    u, val, t, c = mm.peak(v, None if support else 1.0, None)
    if not support:
        mm.relax(v, t)
        u, val, t, c = mm.peak(v, t, c)
    trace, iterates = [], []
    step = 1.0
    prev = None
    floor = geometry.rho
    for it in range(cfg.max_iter + 1):
        if t <= 0.0 or val < floor:
            rep = make_report(prob, u, "degenerate_collapse", it, trace, iterates)
            raise DegenerateCollapse(f"path maximum {val:.6g} fell below ridge level {floor:.6g}", rep)
        g = gradient_vector(prob, u)
        gn = grad_norm(prob, g)
        trace.append(record(prob, it, energy(prob, u), gn))
        if cfg.keep_iterates:
            iterates.append(u.copy())
        if gn <= tol:
            return make_report(prob, u, "converged", it, trace, iterates, g,
                               nontrivial=bool(sobolev0_norm(u, prob.p) > cfg.nontrivial_tol))
        if it == cfg.max_iter:
            break
        d = P(g)
        slope = float(g @ d)
        if not support and it and it % cfg.relax_every == 0:
            mm.relax(v, t)

        def trial(alpha, v=v, t=t, c=c):
            w = mm.orthonormalize(v - (alpha / t) * d)
            uu, vv, tt, cc = mm.peak(w, t, c)
            return vv, (w, uu, tt, cc)

        step = min(cfg.max_step, 2.0 * step)
        if prev is not None:
            # Barzilai-Borwein step in the preconditioner metric
            s_, y_ = u - prev[0], g - prev[1]
            sy = float(s_ @ y_)
            if sy > 0.0:
                step = float(np.clip(P.inner(s_, s_) / sy, 1e-4, cfg.max_step))
        alpha, new_val, payload = armijo_backtrack(trial, val, slope, step, cfg.armijo_c, cfg.shrink)
        if alpha is None:
            log.info("line search stalled at grad_norm %.3e", gn)
            break
        step = alpha
        prev = (u, g)
        v, u, t, c = payload
        val = new_val
    rep = make_report(prob, u, "max_iter", len(trace), trace, iterates)
    raise MaxIter(f"no convergence: grad_norm {rep.grad_norm:.3e} > {tol:g}", rep)
