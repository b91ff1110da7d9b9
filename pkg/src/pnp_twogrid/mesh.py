"""Structured Kuhn tetrahedral meshes of the unit cube.

Every cube cell of an ``n x n x n`` grid is split into the six tetrahedra
that share its main diagonal.  The pattern is the same in every cell, so a
mesh of resolution ``k*n`` refines the mesh of resolution ``n`` and P1
functions on the coarse mesh are exactly representable on the fine one.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "Mesh",
    "NodalField",
    "build_unit_cube_mesh",
    "locate_point",
    "prolongate",
    "write_mesh",
]

_PERMUTATIONS = list(itertools.permutations(range(3)))
_PERM_LOOKUP = {perm: i for i, perm in enumerate(_PERMUTATIONS)}


def _local_tets():
    """Corner offsets of the six Kuhn tetrahedra in a unit cell.

    Vertices follow the monotone path (0,0,0) -> e_a -> e_a+e_b -> (1,1,1).
    Odd permutations get their last two vertices swapped so every tet is
    positively oriented.  ``order[k]`` gives the path position of stored
    vertex ``k``.
    """
    offsets = np.zeros((6, 4, 3), dtype=np.int64)
    orders = np.zeros((6, 4), dtype=np.int64)
    for t, perm in enumerate(_PERMUTATIONS):
        path = np.zeros((4, 3), dtype=np.int64)
        for step, axis in enumerate(perm):
            path[step + 1] = path[step]
            path[step + 1, axis] = 1
        order = np.arange(4)
        if np.linalg.det(path[1:] - path[0]) < 0:
            order = np.array([0, 1, 3, 2])
        offsets[t] = path[order]
        orders[t] = order
    return offsets, orders


_CELL_OFFSETS, _PATH_ORDER = _local_tets()


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform Kuhn mesh of [0,1]^3 with ``n`` cells per axis.

    Node ``(i, j, k)`` sits at ``(i, j, k) / n`` and has global index
    ``i + (n+1)*j + (n+1)**2*k``.  Tet ``6*c + l`` is local tet ``l`` of
    cube cell ``c = ci + n*cj + n*n*ck``.
    """

    resolution: int
    nodes: np.ndarray = field(repr=False)
    tets: np.ndarray = field(repr=False)
    boundary_mask: np.ndarray = field(repr=False)
    interior_index: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.resolution

    @property
    def h(self) -> float:
        return 1.0 / self.resolution

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def num_tets(self) -> int:
        return self.tets.shape[0]

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    @property
    def num_interior(self) -> int:
        return self.interior_nodes.size

    @cached_property
    def lattice(self) -> np.ndarray:
        """Integer grid coordinates of the nodes, shape (N, 3)."""
        return _lattice(self.resolution)

    @cached_property
    def jacobians(self) -> np.ndarray:
        """Edge matrices ``[X1-X0, X2-X0, X3-X0]`` as columns, shape (T, 3, 3)."""
        x = self.nodes[self.tets]
        return np.transpose(x[:, 1:] - x[:, :1], (0, 2, 1))

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.linalg.det(self.jacobians) / 6.0

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Constant gradients of the four barycentric functions per tet, (T, 4, 3)."""
        inv = np.linalg.inv(self.jacobians)
        grads = np.empty((self.num_tets, 4, 3))
        grads[:, 1:] = inv
        grads[:, 0] = -inv.sum(axis=1)
        return grads

    def field(self, values) -> "NodalField":
        return NodalField(self, np.asarray(values, dtype=float))

    def zeros(self) -> "NodalField":
        return NodalField(self, np.zeros(self.num_nodes))

    def interpolate(self, f) -> "NodalField":
        """Nodal interpolant of ``f(x, y, z)`` (vectorized over node arrays)."""
        x, y, z = self.nodes.T
        return NodalField(self, np.asarray(f(x, y, z), dtype=float) * np.ones(self.num_nodes))


@dataclass(frozen=True, eq=False)
class NodalField:
    """Coefficients of a P1 function, one value per mesh node."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.mesh.num_nodes,):
            raise ValueError(
                f"field has shape {self.values.shape}, mesh has {self.mesh.num_nodes} nodes"
            )

    def interior(self) -> np.ndarray:
        return self.values[self.mesh.interior_nodes]

    def __add__(self, other: "NodalField") -> "NodalField":
        _same_mesh(self, other)
        return NodalField(self.mesh, self.values + other.values)

    def __sub__(self, other: "NodalField") -> "NodalField":
        _same_mesh(self, other)
        return NodalField(self.mesh, self.values - other.values)

    def __mul__(self, scalar: float) -> "NodalField":
        return NodalField(self.mesh, scalar * self.values)

    __rmul__ = __mul__

    def evaluate(self, points) -> np.ndarray:
        """Value of the P1 function at ``points`` (shape (m, 3) or (3,))."""
        pts = np.atleast_2d(points)
        tet, lam = locate_point(self.mesh, pts)
        vals = np.einsum("mk,mk->m", lam, self.values[self.mesh.tets[tet]])
        return vals if np.ndim(points) > 1 else vals[0]


def _same_mesh(a: NodalField, b: NodalField) -> None:
    if a.mesh is not b.mesh:
        raise ValueError("fields live on different meshes")


def _lattice(n: int) -> np.ndarray:
    r = np.arange(n + 1)
    k, j, i = np.meshgrid(r, r, r, indexing="ij")
    return np.column_stack([i.ravel(), j.ravel(), k.ravel()])


def build_unit_cube_mesh(n: int) -> Mesh:
    """Kuhn mesh of the unit cube with ``n`` cells per axis."""
    if int(n) != n or n < 1:
        raise ValueError(f"resolution must be a positive integer, got {n!r}")
    n = int(n)
    m = n + 1
    lattice = _lattice(n)
    nodes = lattice / n
    boundary = np.any((lattice == 0) | (lattice == n), axis=1)

    r = np.arange(n)
    ck, cj, ci = np.meshgrid(r, r, r, indexing="ij")
    corner = np.column_stack([ci.ravel(), cj.ravel(), ck.ravel()])  # (C, 3)
    verts = corner[:, None, None, :] + _CELL_OFFSETS[None]  # (C, 6, 4, 3)
    tets = verts[..., 0] + m * verts[..., 1] + m * m * verts[..., 2]
    tets = tets.reshape(-1, 4)

    interior_index = np.full(nodes.shape[0], -1, dtype=np.int64)
    interior_index[~boundary] = np.arange(np.count_nonzero(~boundary))
    return Mesh(n, nodes, tets, boundary, interior_index)


def _locate_scaled(n: int, s: np.ndarray):
    """Locate points given in grid units ``s = n*x``; returns (tet, lambda)."""
    cell = np.clip(np.floor(s), 0, n - 1).astype(np.int64)
    t = s - cell
    # descending sort of the fractional coordinates picks the Kuhn tet
    perm = np.argsort(-t, axis=1, kind="stable")
    code = perm[:, 0] * 9 + perm[:, 1] * 3 + perm[:, 2]
    table = np.full(27, -1, dtype=np.int64)
    for p, idx in _PERM_LOOKUP.items():
        table[p[0] * 9 + p[1] * 3 + p[2]] = idx
    local = table[code]
    ts = np.take_along_axis(t, perm, axis=1)
    path_lam = np.column_stack(
        [1.0 - ts[:, 0], ts[:, 0] - ts[:, 1], ts[:, 1] - ts[:, 2], ts[:, 2]]
    )
    lam = np.take_along_axis(path_lam, _PATH_ORDER[local], axis=1)
    c = cell[:, 0] + n * (cell[:, 1] + n * cell[:, 2])
    return 6 * c + local, lam


def locate_point(mesh: Mesh, x):
    """Find a containing tet and barycentric coordinates for each point.

    Parameters
    ----------
    mesh : Mesh
    x : array_like, shape (3,) or (m, 3)
        Points in the closed unit cube.

    Returns
    -------
    tet : int or (m,) int ndarray
    lam : (4,) or (m, 4) ndarray
        Barycentric coordinates ordered like ``mesh.tets[tet]``.
    """
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != 3:
        raise ValueError("points must be 3D")
    if np.any(pts < 0.0) or np.any(pts > 1.0) or not np.all(np.isfinite(pts)):
        raise ValueError("point outside the closed unit cube")
    tet, lam = _locate_scaled(mesh.resolution, mesh.resolution * pts)
    if single:
        return int(tet[0]), lam[0]
    return tet, lam


def prolongate(coarse_field: NodalField, fine_mesh: Mesh) -> NodalField:
    """Represent a coarse P1 function on a nested finer mesh.

    Fine nodes are located on the coarse mesh in exact integer arithmetic,
    so the result equals the coarse function at every point of the cube.
    """
    coarse = coarse_field.mesh
    nc, nf = coarse.resolution, fine_mesh.resolution
    if nf % nc:
        raise ValueError(f"fine resolution {nf} is not a multiple of coarse resolution {nc}")
    k = nf // nc
    if k == 1:
        return NodalField(fine_mesh, coarse_field.values.copy())
    lat = fine_mesh.lattice
    cell = np.minimum(lat // k, nc - 1)
    s = cell + (lat - k * cell) / k
    tet, lam = _locate_scaled(nc, s)
    values = np.einsum("mk,mk->m", lam, coarse_field.values[coarse.tets[tet]])
    return NodalField(fine_mesh, values)


def write_mesh(mesh: Mesh, path) -> None:
    """Plain-text dump: header line, one node per line, one tet per line."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.num_nodes} {mesh.num_tets}\n")
        for p, b in zip(mesh.nodes, mesh.boundary_mask):
            fh.write(f"{p[0]!r} {p[1]!r} {p[2]!r} {int(b)}\n")
        for t in mesh.tets:
            fh.write(f"{t[0]} {t[1]} {t[2]} {t[3]}\n")
