"""Variable exponents p(x), q(x) sampled on a mesh and their admissibility."""

from __future__ import annotations

import ast
from dataclasses import dataclass

import numpy as np

from varexp.errors import AnyValueAtMostOne, MeshMismatch, NonFinite
from varexp.mesh import Mesh

__all__ = [
    "ExponentField",
    "AdmissibilityReport",
    "evaluate_expression",
    "sample_field",
    "build_exponent",
    "critical_exponent",
    "log_holder_estimate",
    "check_admissibility",
]

_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "tanh": np.tanh, "arctan": np.arctan,
    "minimum": np.minimum, "maximum": np.maximum, "where": np.where,
    "heaviside": lambda x: np.heaviside(x, 0.5),
}
_CONSTS = {"pi": np.pi, "e": np.e}
_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Compare, ast.Name,
    ast.Load, ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow,
    ast.USub, ast.UAdd, ast.Mod, ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.Eq,
    ast.NotEq, ast.BoolOp, ast.And, ast.Or, ast.IfExp,
)


def evaluate_expression(expr, coords):
    """Evaluate a closed-form expression such as ``"2 + 0.5*sin(pi*x)"``.

    ``coords`` is an ``(n, dim)`` array; the names ``x`` and ``y`` refer to its
    columns.  Only arithmetic, comparisons and the functions in ``_FUNCS`` are
    accepted.  Comparisons yield 0/1, so ``"2 + (x > 0.5)"`` is a valid
    piecewise exponent.
    """
    tree = ast.parse(str(expr), mode="eval")
    names = {"x": coords[:, 0]}
    if coords.shape[1] > 1:
        names["y"] = coords[:, 1]
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ValueError(f"disallowed syntax {type(node).__name__} in expression {expr!r}")
        if isinstance(node, ast.Name) and node.id not in names and node.id not in _FUNCS and node.id not in _CONSTS:
            raise ValueError(f"unknown name {node.id!r} in expression {expr!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ValueError(f"unknown function in expression {expr!r}")
    scope = {**_FUNCS, **_CONSTS, **names}
    with np.errstate(all="ignore"):
        value = eval(compile(tree, "<expression>", "eval"), {"__builtins__": {}}, scope)
    return np.broadcast_to(np.asarray(value, dtype=float), (coords.shape[0],)).copy()


def sample_field(spec, mesh):
    """Nodal and cell-midpoint samples of a scalar field specification.

    ``spec`` may be a number, an expression string, a callable of the
    coordinate array, or a per-node table.  Tables are averaged over cell
    corners to obtain midpoint values.
    """
    if isinstance(spec, (int, float, np.floating, np.integer)):
        return np.full(mesh.n_nodes, float(spec)), np.full(mesh.n_cells, float(spec))
    if isinstance(spec, str):
        return evaluate_expression(spec, mesh.nodes), evaluate_expression(spec, mesh.midpoints)
    if callable(spec):
        nodes = np.broadcast_to(np.asarray(spec(mesh.nodes), dtype=float), (mesh.n_nodes,)).copy()
        cells = np.broadcast_to(np.asarray(spec(mesh.midpoints), dtype=float), (mesh.n_cells,)).copy()
        return nodes, cells
    table = np.asarray(spec, dtype=float).ravel()
    if table.size != mesh.n_nodes:
        raise MeshMismatch(f"table has {table.size} values, mesh has {mesh.n_nodes} nodes")
    return table.copy(), mesh.cell_average(table)


@dataclass(frozen=True, eq=False)
class ExponentField:
    """An exponent sampled at mesh nodes and at cell midpoints.

    The midpoint samples are the ones used in quadrature.  The extrema are
    taken over both sample sets so that ``p_minus <= p <= p_plus`` holds
    wherever the field is ever evaluated.
    """

    mesh: Mesh
    values: np.ndarray
    cells: np.ndarray

    def __post_init__(self):
        for arr in (self.values, self.cells):
            arr.setflags(write=False)

    @property
    def p_minus(self):
        return float(min(self.values.min(), self.cells.min()))

    @property
    def p_plus(self):
        return float(max(self.values.max(), self.cells.max()))

    @property
    def is_constant(self):
        return self.p_minus == self.p_plus

    def conjugate(self):
        """The pointwise conjugate exponent p/(p-1)."""
        return ExponentField(self.mesh, self.values / (self.values - 1.0), self.cells / (self.cells - 1.0))

    def __repr__(self):
        return f"ExponentField(p_minus={self.p_minus:g}, p_plus={self.p_plus:g}, mesh={self.mesh!r})"


@dataclass(frozen=True)
class AdmissibilityReport:
    c_plus_ok: bool
    growth_gap_ok: bool
    subcritical_ok: bool
    a5_ok: bool
    log_holder_estimate: float

    @property
    def all_ok(self):
        return self.c_plus_ok and self.growth_gap_ok and self.subcritical_ok and self.a5_ok


def build_exponent(spec, mesh):
    """Sample an exponent and check that it lies in C_+ (all values > 1)."""
    nodes, cells = sample_field(spec, mesh)
    if not (np.all(np.isfinite(nodes)) and np.all(np.isfinite(cells))):
        raise NonFinite(f"exponent {spec!r} is not finite on the mesh")
    bad = np.flatnonzero(nodes <= 1.0)
    if bad.size or np.any(cells <= 1.0):
        where = mesh.nodes[bad[0]] if bad.size else "a cell midpoint"
        raise AnyValueAtMostOne(f"exponent {spec!r} takes a value <= 1 at {where}")
    return ExponentField(mesh, nodes, cells)


def critical_exponent(p, dim=None):
    """Sobolev conjugate N p / (N - p), with ``inf`` where p >= N.

    Returns ``(nodal, cell)`` arrays; the sentinel is IEEE ``inf`` so that
    strict comparisons against it are exact.
    """
    n = p.mesh.dim if dim is None else int(dim)
    if n < 1:
        raise ValueError("dimension must be >= 1")

    def conj(v):
        out = np.full_like(v, np.inf)
        sub = v < n
        out[sub] = n * v[sub] / (n - v[sub])
        return out

    return conj(p.values), conj(p.cells)


def log_holder_estimate(p, mesh=None):
    """Largest |p(x) - p(y)| * (-log|x - y|) over node pairs with 0 < |x-y| <= 1/2.

    A finite-sample diagnostic for the log-Holder constant, not a proof.
    """
    mesh = p.mesh if mesh is None else mesh
    x = mesh.nodes
    v = p.values
    if v.size < 2:
        return 0.0
    best = 0.0
    # row blocks keep memory bounded on large meshes
    block = max(1, 2_000_000 // v.size)
    for start in range(0, v.size, block):
        xs = x[start:start + block]
        d = np.sqrt(((xs[:, None, :] - x[None, :, :]) ** 2).sum(axis=-1))
        dp = np.abs(v[start:start + block, None] - v[None, :])
        ok = (d > 0) & (d <= 0.5)
        if np.any(ok):
            with np.errstate(divide="ignore"):
                val = np.where(ok, dp * -np.log(np.where(ok, d, 1.0)), 0.0)
            best = max(best, float(val.max()))
    return best


def check_admissibility(p, q, dim=None):
    """Evaluate the exponent conditions on (p, q) node by node."""
    if p.mesh != q.mesh:
        raise MeshMismatch("p and q live on different meshes")
    pstar_nodes, pstar_cells = critical_exponent(p, dim)
    c_plus = bool(np.all(p.values > 1) and np.all(q.values > 1) and np.all(p.cells > 1) and np.all(q.cells > 1))
    return AdmissibilityReport(
        c_plus_ok=c_plus,
        growth_gap_ok=bool(p.p_plus < q.p_minus),
        # equality with p* is flagged as non-subcritical
        subcritical_ok=bool(np.all(q.values < pstar_nodes) and np.all(q.cells < pstar_cells)),
        a5_ok=bool(2.0 * (q.p_plus - q.p_minus) < p.p_minus),
        log_holder_estimate=log_holder_estimate(p),
    )
