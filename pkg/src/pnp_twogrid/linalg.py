"""Krylov solvers for the assembled systems.

Both solvers stop on the true relative residual ``||b - A x|| / ||b||``
and never raise on non-convergence; callers inspect the report.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .assembly import SparseMatrix

__all__ = [
    "Preconditioner",
    "SolverConfig",
    "SolveReport",
    "SolverError",
    "solve_cg",
    "solve_bicgstab",
    "l2_vec",
]


class Preconditioner(str, Enum):
    NONE = "none"
    JACOBI = "jacobi"


class SolverError(RuntimeError):
    """A linear solve failed to reach its tolerance."""


@dataclass(frozen=True)
class SolverConfig:
    rel_tolerance: float = 1e-10
    max_iterations: int | None = None  # None means 10 * dimension
    preconditioner: Preconditioner | str | None = None  # None means jacobi for n >= 16

    def __post_init__(self):
        if not self.rel_tolerance > 0:
            raise ValueError("rel_tolerance must be positive")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.preconditioner is not None:
            object.__setattr__(self, "preconditioner", Preconditioner(self.preconditioner))

    def iteration_limit(self, dimension: int) -> int:
        return self.max_iterations if self.max_iterations is not None else max(10 * dimension, 1)

    def for_mesh(self, resolution: int) -> "SolverConfig":
        """Resolve the default preconditioner for a mesh of ``resolution``."""
        if self.preconditioner is not None:
            return self
        pc = Preconditioner.JACOBI if resolution >= 16 else Preconditioner.NONE
        return SolverConfig(self.rel_tolerance, self.max_iterations, pc)


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    final_relative_residual: float
    converged: bool


def l2_vec(v) -> float:
    """Euclidean norm of a vector."""
    v = np.asarray(v, dtype=float)
    return float(math.sqrt(np.dot(v, v)))


def _inverse_diagonal(A: SparseMatrix, cfg: SolverConfig) -> np.ndarray | None:
    if cfg.preconditioner != Preconditioner.JACOBI:
        return None
    d = A.diagonal()
    if np.any(d == 0):
        raise ValueError("Jacobi preconditioner needs a zero-free diagonal")
    return 1.0 / d


def _start(A: SparseMatrix, b: np.ndarray, x0):
    b = np.asarray(b, dtype=float)
    if b.shape != (A.dimension,):
        raise ValueError(f"rhs has shape {b.shape}, matrix is {A.shape}")
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    return b, x


def solve_cg(A: SparseMatrix, b, cfg: SolverConfig = SolverConfig(), x0=None, history=None):
    """Preconditioned conjugate gradients for symmetric positive definite ``A``.

    Parameters
    ----------
    A : SparseMatrix
        Must carry the ``symmetric`` flag.
    b : (n,) array_like
    cfg : SolverConfig
    x0 : (n,) array_like, optional
        Initial guess, zero by default.
    history : list, optional
        If given, relative residual norms are appended per iteration.

    Returns
    -------
    x : (n,) ndarray
    report : SolveReport
    """
    if not A.symmetric:
        raise ValueError("conjugate gradients requires a matrix flagged symmetric")
    b, x = _start(A, b, x0)
    bnorm = l2_vec(b)
    if bnorm == 0.0:
        return np.zeros_like(b), SolveReport(0, 0.0, True)
    tol = cfg.rel_tolerance
    maxit = cfg.iteration_limit(A.dimension)
    dinv = _inverse_diagonal(A, cfg)

    r = b - A @ x
    rel = l2_vec(r) / bnorm
    if history is not None:
        history.append(rel)
    if rel <= tol:
        return x, SolveReport(0, rel, True)
    z = r if dinv is None else dinv * r
    p = z.copy()
    rz = float(np.dot(r, z))
    it = 0
    while it < maxit:
        it += 1
        Ap = A @ p
        pAp = float(np.dot(p, Ap))
        if pAp <= 0.0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rel = l2_vec(r) / bnorm
        if history is not None:
            history.append(rel)
        if rel <= tol:
            rel = l2_vec(b - A @ x) / bnorm
            if rel <= tol:
                break
            r = b - A @ x
        z = r if dinv is None else dinv * r
        rz_new = float(np.dot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    rel = l2_vec(b - A @ x) / bnorm
    return x, SolveReport(it, rel, rel <= tol)


def solve_bicgstab(A: SparseMatrix, b, cfg: SolverConfig = SolverConfig(), x0=None):
    """Right-preconditioned BiCGStab for general square ``A``.

    A vanishing ``rho`` or ``omega`` ends the iteration; the report then
    shows ``converged=False`` unless the residual already met tolerance.
    """
    b, x = _start(A, b, x0)
    bnorm = l2_vec(b)
    if bnorm == 0.0:
        return np.zeros_like(b), SolveReport(0, 0.0, True)
    tol = cfg.rel_tolerance
    maxit = cfg.iteration_limit(A.dimension)
    dinv = _inverse_diagonal(A, cfg)

    def prec(v):
        return v if dinv is None else dinv * v

    r = b - A @ x
    rel = l2_vec(r) / bnorm
    if rel <= tol:
        return x, SolveReport(0, rel, True)
    r_hat = r.copy()
    rho_old = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    tiny = np.finfo(float).tiny
    it = 0
    while it < maxit:
        it += 1
        rho = float(np.dot(r_hat, r))
        if abs(rho) <= tiny:
            break
        beta = (rho / rho_old) * (alpha / omega)
        p = r + beta * (p - omega * v)
        p_hat = prec(p)
        v = A @ p_hat
        denom = float(np.dot(r_hat, v))
        if abs(denom) <= tiny:
            break
        alpha = rho / denom
        s = r - alpha * v
        if l2_vec(s) / bnorm <= tol:
            x += alpha * p_hat
            r = s
            rel = l2_vec(b - A @ x) / bnorm
            if rel <= tol:
                break
            r = b - A @ x
            rho_old = rho
            continue
        s_hat = prec(s)
        t = A @ s_hat
        tt = float(np.dot(t, t))
        if tt <= tiny:
            break
        omega = float(np.dot(t, s)) / tt
        x += alpha * p_hat + omega * s_hat
        r = s - omega * t
        rel = l2_vec(r) / bnorm
        if rel <= tol:
            rel = l2_vec(b - A @ x) / bnorm
            if rel <= tol:
                break
            r = b - A @ x
        if omega == 0.0:
            break
        rho_old = rho
    rel = l2_vec(b - A @ x) / bnorm
    return x, SolveReport(it, rel, rel <= tol)
