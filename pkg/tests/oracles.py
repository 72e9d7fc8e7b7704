"""Independent reference computations for the tests.

None of these use the package under test.  Values computed here are frozen
into the tests as constants; the functions stay importable so the constants
can be regenerated and cross-checked.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.linalg import eigh
from scipy.optimize import brentq

# frozen oracle values (regenerate with the functions below)
CUBIC_FIRST_ZERO = 3.1181694995108398        # first positive zero of U'' = -U^3, U(0)=0, U'(0)=1
CUBIC_PEAK = 3.708149354602747               # max of the positive solution of -u'' = u^3 on (0,1)
CUBIC_ENERGY = 15.756060010769575            # int u'^2/2 - u^4/4 of that solution
MIXED_LUX_NORM = 0.6390700345253795          # root of mu^-2/24 + 15 mu^-3/64 = 1
DISCRETE_LAMBDA1_256 = 9.869851709484408     # discrete_lambda1(256)
VALLEY_ROOT = math.sqrt(8.0 * math.pi**2 / 3.0)  # t with E(t sin(pi x)) = 0 for p = 2, q = 4


@lru_cache(maxsize=None)
def cubic_shooting():
    """Shoot U'' = -U^3 from U(0) = 0, U'(0) = 1 to its first positive zero.

    Scaling: if U solves it with first zero X, then u(x) = X U(X x) solves
    -u'' = u^3 on (0, 1) with zero boundary values, and the n-bump solution
    is n X U(n X x).  Returns ``(X, peak, energy)`` of the 1-bump solution.
    """
    sol = solve_ivp(lambda x, y: [y[1], -y[0] ** 3], [0.0, 10.0], [0.0, 1.0],
                    rtol=1e-13, atol=1e-15, events=lambda x, y: y[0], dense_output=True)
    zeros = [z for z in sol.t_events[0] if z > 1e-9]
    X = float(zeros[0])
    peak = X * float(sol.sol(X / 2)[0])
    # E = int u'^2/2 - u^4/4 = (1/4) int u'^2 since int u'^2 = int u^4
    dU2 = quad(lambda y: float(sol.sol(y)[1]) ** 2, 0.0, X, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    energy = 0.25 * X**3 * dU2
    return X, peak, energy


def n_bump(n):
    """Peak amplitude and energy of the n-bump solution of -u'' = u^3 on (0,1)."""
    _, peak, energy = cubic_shooting()
    return n * peak, n**4 * energy


def mixed_luxemburg_root():
    """Luxemburg norm of u(x) = x with p = 2 on (0, 1/2) and 3 on (1/2, 1)."""
    return brentq(lambda m: 1.0 / (24 * m**2) + 15.0 / (64 * m**3) - 1.0, 0.1, 10.0, xtol=1e-15)


def discrete_dirichlet_pencil(cells):
    """Stiffness and midpoint-averaged mass matrices of the 1-D unit interval.

    K tridiag(-1, 2, -1)/h and M = h A^T A with A averaging neighbouring
    interior nodes; both on interior nodes only.
    """
    h = 1.0 / cells
    n = cells - 1
    K = (np.diag(np.full(n, 2.0)) - np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)) / h
    A = np.zeros((cells, n))
    for c in range(cells):
        for node in (c - 1, c):
            if 0 <= node < n:
                A[c, node] = 0.5
    return K, h * A.T @ A


def discrete_lambda1(cells):
    """Smallest eigenvalue of the pencil (K, M): the discrete I/J minimum for p = q = 2."""
    K, M = discrete_dirichlet_pencil(cells)
    return float(eigh(K, M, eigvals_only=True, subset_by_index=(0, 0))[0])


def tridiagonal_modes(cells, k):
    """First ``k`` eigenvectors of tridiag(-1, 2, -1), scaled to max |.| = 1."""
    n = cells - 1
    T = np.diag(np.full(n, 2.0)) - np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)
    _, vecs = eigh(T, subset_by_index=(0, k - 1))
    return [v / np.abs(v).max() for v in vecs.T]


def log_holder_pairs(xs, ps):
    """Exhaustive pair scan for max |p(x) - p(y)| (-log|x - y|), 0 < |x-y| <= 1/2."""
    best = 0.0
    for i in range(len(xs)):
        for j in range(len(xs)):
            d = abs(xs[i] - xs[j])
            if 0 < d <= 0.5:
                best = max(best, abs(ps[i] - ps[j]) * -math.log(d))
    return best


def mean_curvature_phi(p, t):
    """Quadrature of int_0^t s (1 + s^2)^((p-2)/2) ds."""
    return quad(lambda s: s * (1 + s * s) ** ((p - 2) / 2), 0.0, t, epsabs=1e-13, epsrel=1e-13)[0]
