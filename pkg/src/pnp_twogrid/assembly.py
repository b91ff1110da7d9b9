"""P1 assembly of the PNP bilinear forms and load vectors.

Matrices are returned on the interior (Dirichlet-eliminated) unknowns
unless ``full=True``.  Row index is always the test function.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, NodalField
from .quadrature import load_rule, map_to_tets

__all__ = [
    "SparseMatrix",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_drift_matrix",
    "assemble_drift_rhs",
    "assemble_load",
    "apply_dirichlet",
    "expand",
    "cached_operator",
]


@dataclass(eq=False)
class SparseMatrix:
    """Square CSR matrix with an explicit symmetry flag.

    Column indices are strictly increasing within each row.
    """

    row_offsets: np.ndarray
    column_indices: np.ndarray
    values: np.ndarray
    symmetric: bool = False
    _csr: sp.csr_array | None = field(default=None, repr=False)

    @property
    def dimension(self) -> int:
        return self.row_offsets.size - 1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.dimension, self.dimension)

    @property
    def nnz(self) -> int:
        return self.values.size

    def to_scipy(self) -> sp.csr_array:
        if self._csr is None:
            self._csr = sp.csr_array(
                (self.values, self.column_indices, self.row_offsets), shape=self.shape
            )
        return self._csr

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        return self.to_scipy() @ x

    def toarray(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def diagonal(self) -> np.ndarray:
        return self.to_scipy().diagonal()

    def is_exactly_symmetric(self) -> bool:
        """Bitwise test ``A == A^T``."""
        a = self.to_scipy()
        t = a.T.tocsr()
        t.sort_indices()
        return (
            np.array_equal(a.indptr, t.indptr)
            and np.array_equal(a.indices, t.indices)
            and np.array_equal(a.data, t.data)
        )

    def __add__(self, other: "SparseMatrix") -> "SparseMatrix":
        if np.array_equal(self.row_offsets, other.row_offsets) and np.array_equal(
            self.column_indices, other.column_indices
        ):
            values = self.values + other.values
            return SparseMatrix(
                self.row_offsets,
                self.column_indices,
                values,
                self.symmetric and other.symmetric,
            )
        return SparseMatrix.from_scipy(
            self.to_scipy() + other.to_scipy(), self.symmetric and other.symmetric
        )

    def __neg__(self) -> "SparseMatrix":
        return SparseMatrix(self.row_offsets, self.column_indices, -self.values, self.symmetric)

    @classmethod
    def from_scipy(cls, a, symmetric: bool = False) -> "SparseMatrix":
        a = sp.csr_array(a)
        a.sum_duplicates()
        a.sort_indices()
        return cls(a.indptr, a.indices, a.data, symmetric)

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls(np.arange(n + 1), np.arange(n), np.ones(n), True)


class _Pattern:
    """Sparsity pattern of the P1 space on one mesh.

    ``inverse`` maps each (tet, a, b) element entry to its CSR slot, so
    assembly is a single ``bincount`` that accumulates in element order;
    ``(i, j)`` and ``(j, i)`` then receive identical sums when the element
    matrices are symmetric.
    """

    def __init__(self, mesh: Mesh):
        n = mesh.num_nodes
        rows = np.repeat(mesh.tets, 4, axis=1).ravel()
        cols = np.tile(mesh.tets, (1, 4)).ravel()
        keys, self.inverse = np.unique(rows * n + cols, return_inverse=True)
        self.size = keys.size
        r, c = np.divmod(keys, n)
        self.indices = c
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(r, minlength=n), out=self.indptr[1:])

        keep = ~(mesh.boundary_mask[r] | mesh.boundary_mask[c])
        self.interior_slots = np.flatnonzero(keep)
        ri = mesh.interior_index[r[keep]]
        self.interior_indices = mesh.interior_index[c[keep]]
        m = mesh.num_interior
        self.interior_indptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(np.bincount(ri, minlength=m), out=self.interior_indptr[1:])

    def assemble(self, element_matrices: np.ndarray) -> np.ndarray:
        return np.bincount(self.inverse, weights=element_matrices.ravel(), minlength=self.size)


_PATTERNS: "weakref.WeakKeyDictionary[Mesh, _Pattern]" = weakref.WeakKeyDictionary()


def _pattern(mesh: Mesh) -> _Pattern:
    pat = _PATTERNS.get(mesh)
    if pat is None:
        pat = _PATTERNS[mesh] = _Pattern(mesh)
    return pat


def _finish(mesh: Mesh, element_matrices: np.ndarray, symmetric: bool, full: bool) -> SparseMatrix:
    pat = _pattern(mesh)
    values = pat.assemble(element_matrices)
    if full:
        return SparseMatrix(pat.indptr, pat.indices, values, symmetric)
    return SparseMatrix(
        pat.interior_indptr, pat.interior_indices, values[pat.interior_slots], symmetric
    )


def _check_field(mesh: Mesh, f: NodalField) -> None:
    if f.mesh is not mesh:
        raise ValueError("field does not live on the assembly mesh")


def assemble_stiffness(mesh: Mesh, full: bool = False) -> SparseMatrix:
    """Matrix of ``(grad phi_b, grad phi_a)``."""
    g = mesh.basis_gradients
    # explicit component sum keeps K_e[a, b] and K_e[b, a] bitwise equal
    dots = (
        g[:, :, None, 0] * g[:, None, :, 0]
        + g[:, :, None, 1] * g[:, None, :, 1]
        + g[:, :, None, 2] * g[:, None, :, 2]
    )
    return _finish(mesh, mesh.volumes[:, None, None] * dots, True, full)


_MASS_REF = (np.ones((4, 4)) + np.eye(4)) / 20.0


def assemble_mass(mesh: Mesh, full: bool = False) -> SparseMatrix:
    """Exact P1 mass matrix, ``|K|/20 * (1 + delta_ab)`` per element."""
    return _finish(mesh, mesh.volumes[:, None, None] * _MASS_REF[None], True, full)


def _drift_weights(mesh: Mesh, phi: NodalField, q: float) -> np.ndarray:
    """``q * (grad phi_h . grad lambda_a) * |K| / 4`` per tet and local row a."""
    g = mesh.basis_gradients
    grad_phi = np.einsum("tk,tkd->td", phi.values[mesh.tets], g)
    return q * np.einsum("td,tad->ta", grad_phi, g) * (mesh.volumes[:, None] / 4.0)


def assemble_drift_matrix(
    mesh: Mesh, phi: NodalField, q: float, full: bool = False
) -> SparseMatrix:
    """Matrix of ``(q p grad phi, grad v)`` with p as trial, v as test.

    ``grad phi_h`` and ``grad lambda_a`` are constant on each tet, so the
    element integral is exact.  The result is not symmetric in general.
    """
    _check_field(mesh, phi)
    w = _drift_weights(mesh, phi, q)
    elem = np.broadcast_to(w[:, :, None], (mesh.num_tets, 4, 4))
    return _finish(mesh, elem, False, full)


def assemble_drift_rhs(
    mesh: Mesh, p_known: NodalField, phi_known: NodalField, q: float, full: bool = False
) -> np.ndarray:
    """Vector of ``(q p grad phi, grad lambda_a)`` for known ``p`` and ``phi``."""
    _check_field(mesh, p_known)
    _check_field(mesh, phi_known)
    w = _drift_weights(mesh, phi_known, q)
    contrib = w * p_known.values[mesh.tets].sum(axis=1)[:, None]
    vec = np.bincount(mesh.tets.ravel(), weights=contrib.ravel(), minlength=mesh.num_nodes)
    return vec if full else vec[mesh.interior_nodes]


def assemble_load(mesh: Mesh, f, full: bool = False, rule=None, chunk: int = 200_000) -> np.ndarray:
    """Vector of ``(f, lambda_a)`` by per-tet quadrature.

    ``f`` is called as ``f(x, y, z)`` on arrays.  The default rule is the
    four-point degree-2 rule; pass ``rule=(bary, weights)`` to override.
    """
    bary, weights = rule if rule is not None else load_rule()
    out = np.zeros(mesh.num_nodes)
    for start in range(0, mesh.num_tets, chunk):
        tets = mesh.tets[start : start + chunk]
        pts = map_to_tets(mesh.nodes, tets, bary)
        fv = np.asarray(f(pts[..., 0], pts[..., 1], pts[..., 2]), dtype=float)
        fv = np.broadcast_to(fv, pts.shape[:2])
        # (T, Q) x (Q, 4) -> (T, 4)
        contrib = (fv * weights[None]) @ bary
        contrib *= mesh.volumes[start : start + chunk, None]
        out += np.bincount(tets.ravel(), weights=contrib.ravel(), minlength=mesh.num_nodes)
    return out if full else out[mesh.interior_nodes]


def apply_dirichlet(obj, mesh: Mesh):
    """Drop boundary rows/columns (matrix) or entries (vector)."""
    if isinstance(obj, SparseMatrix):
        if obj.dimension != mesh.num_nodes:
            raise ValueError("matrix is not assembled on the full node set")
        a = obj.to_scipy()
        idx = mesh.interior_nodes
        return SparseMatrix.from_scipy(a[idx][:, idx], obj.symmetric)
    v = np.asarray(obj)
    if v.shape[0] != mesh.num_nodes:
        raise ValueError("vector is not assembled on the full node set")
    return v[mesh.interior_nodes]


def expand(reduced: np.ndarray, mesh: Mesh) -> NodalField:
    """Inverse of the vector reduction: boundary values set to zero."""
    values = np.zeros(mesh.num_nodes)
    values[mesh.interior_nodes] = reduced
    return NodalField(mesh, values)


_OPERATORS: "weakref.WeakKeyDictionary[Mesh, dict]" = weakref.WeakKeyDictionary()


def cached_operator(mesh: Mesh, name: str, full: bool = False) -> SparseMatrix:
    """Stiffness or mass matrix of ``mesh``, assembled once and reused."""
    builders = {"stiffness": assemble_stiffness, "mass": assemble_mass}
    store = _OPERATORS.setdefault(mesh, {})
    key = (name, full)
    if key not in store:
        store[key] = builders[name](mesh, full=full)
    return store[key]
