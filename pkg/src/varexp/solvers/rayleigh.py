"""Rayleigh quotient I(u)/J(u), its scale sweep and global minimization of
E_lambda = I - lambda J.

On a sphere ``||u|| = s`` in the Sobolev norm the quotient is minimized in
the unconstrained variable ``w`` through ``R(w) = Q(s w / ||w||)``, which is
invariant under positive scaling of ``w``; its gradient follows from the
implicit derivative of the Luxemburg norm,

    d mu / d a_c = p_c |a_c|^(p_c - 1) sgn(a_c) mu^(-p_c)
                   / sum_c p_c |a_c|^(p_c) mu^(-p_c - 1),

so descent never leaves the sphere except through the final rescaling.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from varexp.energy import energy, grad_norm, gradient_vector
from varexp.errors import ZeroDenominator
from varexp.modular import luxemburg_cells, sobolev0_norm
from varexp.problem import verify_kernel_hypotheses, verify_reaction_hypotheses
from varexp.solvers.common import (
    LBFGSMemory,
    SobolevPreconditioner,
    SolverConfig,
    armijo_backtrack,
    make_report,
    record,
    smooth_random_field,
)

log = logging.getLogger(__name__)

__all__ = ["Lambda1Result", "rayleigh_quotient", "lambda1_minimize", "global_minimize_at_lambda"]

J_FLOOR = 1e-300


def rayleigh_quotient(prob, u):
    """``e0 / j`` for nodal ``u``; raises ZeroDenominator when ``j`` vanishes."""
    e = energy(prob, u)
    if not e.j > J_FLOOR:
        raise ZeroDenominator(f"reaction energy j = {e.j:.3e} is not positive")
    return e.e0 / e.j


def _quotient_and_gradient(prob, u):
    e = energy(prob, u)
    if not e.j > J_FLOOR:
        raise ZeroDenominator(f"reaction energy j = {e.j:.3e} is not positive")
    g_op = gradient_vector(prob, u, operator_only=True)
    g_j = g_op - gradient_vector(prob, u)
    q = e.e0 / e.j
    return q, (g_op - q * g_j) / e.j


def _norm_and_gradient(prob, w):
    """Sobolev norm of ``w`` and its gradient with respect to nodal values."""
    mesh = prob.mesh
    pc = prob.p.cells
    total, grad = 0.0, np.zeros(mesh.n_nodes)
    for op in mesh.gradient_operators:
        a = op @ w
        mu = luxemburg_cells(a, pc, mesh.cell_measure).value
        if mu == 0.0:
            continue
        r = np.abs(a) / mu
        num = pc * r ** (pc - 1.0) * np.sign(a) / mu
        den = np.sum(pc * r**pc) / mu
        total += mu
        grad += op.T @ (num / den)
    grad[mesh.boundary] = 0.0
    return total, grad


class _SphereQuotient:
    def __init__(self, prob, scale):
        self.prob = prob
        self.s = float(scale)

    def value(self, w):
        n = sobolev0_norm(w, self.prob.p)
        return rayleigh_quotient(self.prob, self.s * w / n)

    def value_and_gradient(self, w):
        n, gn = _norm_and_gradient(self.prob, w)
        u = self.s * w / n
        q, gq = _quotient_and_gradient(self.prob, u)
        return q, (self.s / n) * (gq - gn * float(gq @ w) / n)


def _minimize_on_sphere(prob, scale, w, cfg, precond):
    """Preconditioned descent of the quotient at fixed Sobolev norm ``scale``."""
    f = _SphereQuotient(prob, scale)
    w = w / sobolev0_norm(w, prob.p)
    val, g = f.value_and_gradient(w)
    step = 1.0
    it = 0
    for it in range(1, cfg.quotient_max_iter + 1):
        d = precond(g)
        slope = float(g @ d)
        if not slope > 0.0:
            break

        def trial(alpha, w=w, d=d):
            cand = w - alpha * d
            try:
                return f.value(cand), cand
            except (ZeroDenominator, ArithmeticError):
                return math.inf, None

        alpha, new_val, cand = armijo_backtrack(trial, val, slope, 2.0 * step, cfg.armijo_c, cfg.shrink)
        if alpha is None:
            break
        step = alpha
        w = cand / sobolev0_norm(cand, prob.p)
        done = val - new_val <= cfg.quotient_rtol * abs(val)
        val, g = f.value_and_gradient(w)
        if done:
            break
    return val, scale * w, it


@dataclass
class Lambda1Result:
    """Infimum estimate of the quotient over all probed scales.

    Unpacks as ``(lambda1_est, minimizer, degeneracy_flag)``.
    """

    lambda1_est: float
    minimizer: np.ndarray | None
    degeneracy_flag: bool
    sweep: list = field(default_factory=list)
    best_scale: float = float("nan")
    hypotheses: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.lambda1_est, self.minimizer, self.degeneracy_flag))

    def loglog_slope(self):
        s = np.log([r[0] for r in self.sweep])
        q = np.log([r[1] for r in self.sweep])
        return float(np.polyfit(s, q, 1)[0])

    def summary(self):
        return {"lambda1_est": self.lambda1_est, "degeneracy_flag": self.degeneracy_flag,
                "best_scale": self.best_scale, "loglog_slope": self.loglog_slope(),
                "sweep": [list(r) for r in self.sweep], "hypotheses": self.hypotheses}


def _degenerate(values, ratio):
    """No interior minimum: strictly monotone sweep with a collapsing ratio."""
    v = np.asarray(values, float)
    if v.size < 3 or not np.all(np.isfinite(v)) or np.any(v <= 0):
        return False
    rel = np.diff(v) / v[:-1]
    monotone = np.all(rel <= -1e-3) or np.all(rel >= 1e-3)
    return bool(monotone and v.min() / v.max() < ratio)


def lambda1_minimize(prob, cfg=None):
    """Minimize I/J over random starts at each scale in ``cfg.scales``.

    The estimate is the smallest quotient seen at any probed point, so it
    never exceeds the quotient of a probed field.  ``degeneracy_flag`` is
    set when the per-scale minima are strictly monotone and collapse towards
    zero, i.e. no interior minimum along the sweep.
    """
    cfg = cfg or SolverConfig()
    mesh = prob.mesh
    P = SobolevPreconditioner(mesh)
    rng = np.random.default_rng(cfg.seed)
    hyp = {
        "kernel": verify_kernel_hypotheses(prob.kernel).to_dict(),
        "reaction": verify_reaction_hypotheses(prob.reaction, prob.p).to_dict(),
    }
    scales = sorted(float(s) for s in cfg.scales)
    best = (math.inf, None, float("nan"))
    sweep = []
    warm = None
    for s in scales:
        starts = [smooth_random_field(mesh, rng, P) for _ in range(cfg.n_starts)]
        if warm is not None:
            starts.append(warm)
        level = (math.inf, None)
        for w0 in starts:
            try:
                val, u, _ = _minimize_on_sphere(prob, s, w0, cfg, P)
            except ZeroDenominator:
                continue
            if val < level[0]:
                level = (val, u)
        if level[1] is None:
            log.warning("quotient undefined at every start for scale %g", s)
            continue
        sweep.append((s, level[0]))
        warm = level[1] / s
        if level[0] < best[0]:
            best = (level[0], level[1], s)
    flag = _degenerate([q for _, q in sweep], cfg.degeneracy_ratio)
    minimizer = None if flag or best[1] is None else best[1]
    return Lambda1Result(float(best[0]), minimizer, flag, sweep, best[2], hyp)


def _descend(prob, u, cfg, P, tol):
    """Limited-memory descent seeded with the Sobolev preconditioner."""
    trace = []
    e = energy(prob, u)
    g = gradient_vector(prob, u)
    mem = LBFGSMemory(P)
    for it in range(cfg.max_iter + 1):
        gn = grad_norm(prob, g)
        trace.append(record(prob, it, e, gn))
        if gn <= tol:
            return u, it, trace, True
        if sobolev0_norm(u, prob.p) <= cfg.nontrivial_tol:
            return u, it, trace, False
        d = mem.direction(g)
        slope = float(g @ d)
        if not slope > 0.0:
            mem.pairs.clear()
            d = P(g)
            slope = float(g @ d)

        def trial(alpha, u=u, d=d):
            cand = u - alpha * d
            ec = energy(prob, cand)
            return ec.total, (cand, ec)

        alpha, _, payload = armijo_backtrack(trial, e.total, slope, 1.0, cfg.armijo_c, cfg.shrink)
        if alpha is None:
            if not mem.pairs:
                return u, it, trace, False
            mem.pairs.clear()
            continue
        u_new, e = payload
        g_new = gradient_vector(prob, u_new)
        mem.update(u_new - u, g_new - g)
        u, g = u_new, g_new
    return u, cfg.max_iter, trace, False


def global_minimize_at_lambda(prob, lam, cfg=None, start=None):
    """Global minimization of ``E_lambda = I - lam J``.

    A coercivity probe first doubles ``t`` along several unit directions
    (``start`` if given, the first Laplacian mode and smooth random fields);
    energies below ``-coercivity_cap`` give status
    ``diverged_to_minus_infinity``.  Otherwise preconditioned descent runs
    from the same directions; the lowest result is returned with status
    ``converged`` (negative energy, small gradient), ``degenerate_zero``
    (collapse to the zero function) or ``max_iter``.
    """
    cfg = cfg or SolverConfig()
    if not lam > 0:
        raise ValueError("lambda must be positive")
    plam = prob.with_lambda(lam)
    mesh = plam.mesh
    P = SobolevPreconditioner(mesh)
    rng = np.random.default_rng(cfg.seed)
    tol = cfg.tol_for(mesh)

    first = np.zeros(mesh.n_nodes)
    first[mesh.interior] = 1.0
    first = P(first)
    dirs = [] if start is None else [np.asarray(start, float)]
    dirs += [first] + [smooth_random_field(mesh, rng, P) for _ in range(cfg.n_starts)]
    dirs = [d / sobolev0_norm(d, plam.p) for d in dirs]

    for d in dirs:
        t = 1.0
        while t <= cfg.t_max:
            e = energy(plam, t * d)
            if e.total < -cfg.coercivity_cap:
                return make_report(plam, t * d, "diverged_to_minus_infinity", 0, [record(plam, 0, e, math.nan)],
                                   lam=float(lam), probe_t=t)
            t *= 2.0

    best = None
    for d in dirs:
        u, it, trace, ok = _descend(plam, d, cfg, P, tol)
        e = energy(plam, u)
        if best is None or e.total < best[1].total:
            best = (u, e, it, trace, ok)
    u, e, it, trace, ok = best
    if sobolev0_norm(u, plam.p) <= cfg.nontrivial_tol or (e.total >= 0.0 and not ok):
        status = "degenerate_zero"
    elif ok and e.total < 0.0:
        status = "converged"
    elif ok:
        status = "degenerate_zero"
    else:
        status = "max_iter"
    return make_report(plam, u, status, it, trace, lam=float(lam))
