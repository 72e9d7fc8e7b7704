"""Uniform tensor meshes on intervals and rectangles.

Unknowns live at mesh nodes; gradients, exponents used in quadrature and all
integrands live at cell midpoints.  Every integral in the package is the
midpoint rule over the same cells, so the discrete energy and its assembled
derivative are exactly compatible.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from varexp.errors import DegenerateBox, MeshMismatch, NonFinite

__all__ = ["Mesh", "GridFunction", "as_values", "build_mesh", "gradient", "integrate", "enforce_zero_trace"]


class Mesh:
    """Tensor-product mesh of a box in one or two dimensions.

    Nodes are ordered lexicographically with the first axis varying slowest,
    i.e. node ``(i, j)`` has flat index ``i * (n_y + 1) + j``.
    """

    def __init__(self, box, cells):
        box = np.atleast_2d(np.asarray(box, dtype=float))
        cells = tuple(int(c) for c in np.atleast_1d(cells))
        if box.shape[1] != 2 or box.shape[0] not in (1, 2):
            raise DegenerateBox(f"box must be [[lo, hi]] or [[lo, hi], [lo, hi]], got {box.tolist()}")
        if len(cells) != box.shape[0]:
            raise DegenerateBox(f"{len(cells)} cell counts given for a {box.shape[0]}-d box")
        if not np.all(np.isfinite(box)) or np.any(box[:, 1] <= box[:, 0]):
            raise DegenerateBox(f"box sides must be finite with positive length, got {box.tolist()}")
        if min(cells) < 2:
            raise DegenerateBox(f"need at least 2 cells per axis, got {cells}")
        self.box = box
        self.cells = cells
        self.dim = len(cells)
        self.shape = tuple(c + 1 for c in cells)
        self.h = (box[:, 1] - box[:, 0]) / np.asarray(cells)
        self.cell_measure = float(np.prod(self.h))
        self.axes = [np.linspace(lo, hi, c + 1) for (lo, hi), c in zip(box, cells)]

    def __repr__(self):
        return f"Mesh(box={self.box.tolist()}, cells={list(self.cells)})"

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Mesh):
            return NotImplemented
        return self.cells == other.cells and np.array_equal(self.box, other.box)

    def __hash__(self):
        return hash((self.cells, tuple(self.box.ravel())))

    @property
    def n_nodes(self):
        return int(np.prod(self.shape))

    @property
    def n_cells(self):
        return int(np.prod(self.cells))

    @property
    def measure(self):
        return float(np.prod(self.box[:, 1] - self.box[:, 0]))

    @cached_property
    def nodes(self):
        """Node coordinates, shape ``(n_nodes, dim)``."""
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @cached_property
    def midpoints(self):
        """Cell-midpoint coordinates, shape ``(n_cells, dim)``."""
        mids = [0.5 * (a[1:] + a[:-1]) for a in self.axes]
        grids = np.meshgrid(*mids, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @cached_property
    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        for axis in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[axis] = 0
            mask[tuple(idx)] = True
            idx[axis] = -1
            mask[tuple(idx)] = True
        return mask.ravel()

    @cached_property
    def boundary(self):
        return np.flatnonzero(self.boundary_mask)

    @cached_property
    def interior(self):
        return np.flatnonzero(~self.boundary_mask)

    @cached_property
    def _corners(self):
        # flat node indices of the 2**dim corners of every cell
        offsets = list(itertools.product((0, 1), repeat=self.dim))
        base = np.meshgrid(*[np.arange(c) for c in self.cells], indexing="ij")
        corners = []
        for off in offsets:
            idx = tuple(b + o for b, o in zip(base, off))
            corners.append(np.ravel_multi_index(idx, self.shape).ravel())
        return offsets, corners

    @cached_property
    def average_operator(self):
        """Sparse ``(n_cells, n_nodes)`` map from nodal values to cell means."""
        _, corners = self._corners
        w = 1.0 / len(corners)
        rows = np.tile(np.arange(self.n_cells), len(corners))
        cols = np.concatenate(corners)
        vals = np.full(cols.size, w)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_cells, self.n_nodes))

    @cached_property
    def gradient_operators(self):
        """One sparse ``(n_cells, n_nodes)`` difference operator per axis.

        In 1-D this is the forward difference; in 2-D the two edge differences
        of a cell along an axis are averaged (the bilinear gradient at the
        cell centre).
        """
        offsets, corners = self._corners
        ops = []
        for axis in range(self.dim):
            rows, cols, vals = [], [], []
            weight = 1.0 / (2 ** (self.dim - 1) * self.h[axis])
            for off, idx in zip(offsets, corners):
                sign = 1.0 if off[axis] == 1 else -1.0
                rows.append(np.arange(self.n_cells))
                cols.append(idx)
                vals.append(np.full(idx.size, sign * weight))
            ops.append(sp.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(self.n_cells, self.n_nodes)))
        return ops

    @cached_property
    def laplacian(self):
        """Standard (2*dim+1)-point Dirichlet stiffness matrix on interior nodes.

        Scaled as a finite-element stiffness matrix, so ``u @ L @ u`` is the
        discrete ``int |grad u|^2``; used as the Sobolev preconditioner.
        """
        tri = []
        for c, h in zip(self.cells, self.h):
            m = c - 1
            tri.append(sp.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1]) / h**2)
        if self.dim == 1:
            mat = tri[0] * self.cell_measure
        else:
            ix = sp.identity(self.cells[0] - 1)
            iy = sp.identity(self.cells[1] - 1)
            mat = (sp.kron(tri[0], iy) + sp.kron(ix, tri[1])) * self.cell_measure
        return sp.csc_matrix(mat)

    def grad(self, u):
        """Cell gradients of nodal ``u`` as an ``(n_cells, dim)`` array."""
        return np.stack([op @ u for op in self.gradient_operators], axis=1)

    def cell_average(self, u):
        return self.average_operator @ u

    def integrate(self, cell_values):
        return float(np.sum(cell_values) * self.cell_measure)


def build_mesh(box, cells):
    """Uniform mesh of ``box`` (``[lo, hi]`` or a list of per-axis bounds)."""
    box = np.asarray(box, dtype=float)
    if box.ndim == 1:
        box = box[None, :]
    return Mesh(box, cells)


def gradient(mesh, u):
    """Per-cell constant gradient of the nodal field ``u``."""
    return mesh.grad(np.asarray(u, dtype=float))


def integrate(mesh, cell_values):
    """Midpoint-rule integral of a per-cell field."""
    return mesh.integrate(np.asarray(cell_values, dtype=float))


def enforce_zero_trace(mesh, u):
    """Copy of ``u`` with boundary nodes set to zero."""
    out = np.array(u, dtype=float, copy=True)
    out[mesh.boundary] = 0.0
    return out


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values attached to a mesh, either at nodes or at cells.

    Scalar fields have shape ``(n,)``; vector fields ``(n, dim)``.
    """

    mesh: Mesh
    values: np.ndarray
    location: str = "nodes"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        n = self.mesh.n_nodes if self.location == "nodes" else self.mesh.n_cells
        if self.location not in ("nodes", "cells") or vals.shape[0] != n or vals.ndim > 2:
            raise MeshMismatch(f"{vals.shape} values do not fit {self.location} of {self.mesh!r}")
        if not np.all(np.isfinite(vals)):
            raise NonFinite("grid function has non-finite entries")
        object.__setattr__(self, "values", vals)

    @property
    def is_vector(self):
        return self.values.ndim == 2

    def cell_values(self):
        """Midpoint values: identity for cell fields, corner mean for nodal ones."""
        if self.location == "cells":
            return self.values
        return self.mesh.average_operator @ self.values


def as_values(u, mesh):
    """Coerce ``u`` to a :class:`GridFunction` on ``mesh``.

    Bare arrays are taken as nodal if their length matches the node count and
    as cell data otherwise.
    """
    if isinstance(u, GridFunction):
        if u.mesh != mesh:
            raise MeshMismatch(f"field lives on {u.mesh!r}, expected {mesh!r}")
        return u
    arr = np.asarray(u, dtype=float)
    if arr.shape[:1] == (mesh.n_nodes,):
        return GridFunction(mesh, arr, "nodes")
    return GridFunction(mesh, arr, "cells")
