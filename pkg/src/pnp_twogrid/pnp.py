"""Coupled finite element solve and two-grid schemes for steady PNP.

Unknowns are the concentrations ``p1``, ``p2`` (charges +1 and -1) and the
potential ``phi``, all P1 with homogeneous Dirichlet data::

    (grad p_i, grad v) + (q_i p_i grad phi, grad v) = (F_i, v)
    (grad phi, grad w) = sum_i q_i (p_i, w) + (F_3, w)

The coupled system is solved by Gummel iteration (Poisson update first,
then both Nernst-Planck updates with the new potential).  The two-grid
schemes run Gummel on a coarse mesh only and then perform a fixed number
of linear solves on the fine mesh:

``tg1``  fine Poisson, then NP with the fine potential (nonsymmetric)
``tg2``  fine Poisson and NP with the coarse potential (nonsymmetric, independent)
``tg3``  fine Poisson, then NP with drift moved to the rhs (symmetric)
``tg4``  as ``tg3`` but drift from the coarse potential (symmetric, independent)
"""
from __future__ import annotations

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    SparseMatrix,
    assemble_drift_matrix,
    assemble_drift_rhs,
    assemble_load,
    cached_operator,
    expand,
)
from .linalg import SolverConfig, SolverError, solve_bicgstab, solve_cg
from .mesh import Mesh, NodalField, prolongate
from .verification import l2_norm

__all__ = [
    "CHARGES",
    "PnpState",
    "GummelConfig",
    "GummelResult",
    "TwoGridResult",
    "ConvergenceError",
    "gummel_solve",
    "two_grid_I",
    "two_grid_II",
    "two_grid_III",
    "two_grid_IV",
    "run_algorithm",
    "ALGORITHMS",
]

logger = logging.getLogger(__name__)

CHARGES = (1.0, -1.0)


class ConvergenceError(RuntimeError):
    """Gummel iteration did not meet its stopping test."""


@dataclass(frozen=True)
class PnpState:
    p1: NodalField
    p2: NodalField
    phi: NodalField

    def __post_init__(self):
        if not (self.p1.mesh is self.p2.mesh is self.phi.mesh):
            raise ValueError("PnpState fields must share one mesh")

    @property
    def mesh(self) -> Mesh:
        return self.phi.mesh

    @property
    def concentrations(self) -> tuple[NodalField, NodalField]:
        return (self.p1, self.p2)

    @classmethod
    def zeros(cls, mesh: Mesh) -> "PnpState":
        return cls(mesh.zeros(), mesh.zeros(), mesh.zeros())


@dataclass(frozen=True)
class GummelConfig:
    stop_tolerance: float = 1e-5
    max_outer_iterations: int = 200
    initial_guess: PnpState | None = None

    def __post_init__(self):
        if not self.stop_tolerance > 0:
            raise ValueError("stop_tolerance must be positive")
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be >= 1")


@dataclass
class GummelResult:
    state: PnpState
    iterations: int
    inner_iterations: int
    updates: list[float] = field(default_factory=list)


@dataclass
class TwoGridResult:
    """Fine-grid solution plus the by-products callers report on."""

    method: str
    state: PnpState
    coarse: PnpState
    coarse_iterations: int
    inner_iterations: int
    coarse_seconds: float
    fine_seconds: float
    fine_matrices: dict[str, SparseMatrix] = field(default_factory=dict)

    @property
    def seconds(self) -> float:
        return self.coarse_seconds + self.fine_seconds


class _Counter:
    def __init__(self):
        self.total = 0
        self._lock = threading.Lock()

    def add(self, n: int) -> None:
        with self._lock:
            self.total += n


def _linear_solve(kind: str, A: SparseMatrix, b, cfg: SolverConfig, what: str, x0=None, counter=None):
    solver = solve_cg if kind == "cg" else solve_bicgstab
    x, report = solver(A, b, cfg, x0=x0)
    if counter is not None:
        counter.add(report.iterations)
    if not report.converged:
        raise SolverError(
            f"{what}: {kind} stopped after {report.iterations} iterations "
            f"at relative residual {report.final_relative_residual:.3e}"
        )
    return x


def _loads(mesh: Mesh, sources):
    return [assemble_load(mesh, f) for f in sources]


def _poisson_rhs(mesh: Mesh, load3: np.ndarray, concentrations) -> np.ndarray:
    """``(F_3, w) + sum_i q_i (p_i, w)`` on interior test functions."""
    M = cached_operator(mesh, "mass")
    rhs = load3.copy()
    for q, p in zip(CHARGES, concentrations):
        rhs += q * (M @ p.interior())
    return rhs


def gummel_solve(
    mesh: Mesh,
    sources,
    cfg: GummelConfig | None = None,
    solver_cfg: SolverConfig | None = None,
) -> GummelResult:
    """Coupled P1 solution by Gummel iteration.

    Each sweep solves Poisson for ``phi`` with the previous concentrations
    (CG), then both Nernst-Planck equations with the new potential
    (BiCGStab); the two species do not see each other's update.  Stops when
    ``||phi_new - phi_old||_0 < cfg.stop_tolerance``.
    """
    cfg = cfg or GummelConfig()
    scfg = (solver_cfg or SolverConfig()).for_mesh(mesh.resolution)
    K = cached_operator(mesh, "stiffness")
    load1, load2, load3 = _loads(mesh, sources)

    state = cfg.initial_guess
    if state is None:
        state = PnpState.zeros(mesh)
    elif state.mesh is not mesh:
        raise ValueError("initial guess lives on a different mesh")
    counter = _Counter()
    updates: list[float] = []
    for it in range(1, cfg.max_outer_iterations + 1):
        phi_old = state.phi
        phi = expand(
            _linear_solve(
                "cg",
                K,
                _poisson_rhs(mesh, load3, state.concentrations),
                scfg,
                f"Gummel sweep {it}, Poisson",
                x0=phi_old.interior(),
                counter=counter,
            ),
            mesh,
        )
        new_p = []
        for i, (q, load, p_old) in enumerate(zip(CHARGES, (load1, load2), state.concentrations)):
            A = K + assemble_drift_matrix(mesh, phi, q)
            x = _linear_solve(
                "bicgstab",
                A,
                load,
                scfg,
                f"Gummel sweep {it}, Nernst-Planck species {i + 1}",
                x0=p_old.interior(),
                counter=counter,
            )
            new_p.append(expand(x, mesh))
        state = PnpState(new_p[0], new_p[1], phi)
        update = l2_norm(phi - phi_old)
        updates.append(update)
        logger.debug("Gummel sweep %d on n=%d: ||dphi||_0 = %.3e", it, mesh.resolution, update)
        if update < cfg.stop_tolerance:
            return GummelResult(state, it, counter.total, updates)
    raise ConvergenceError(
        f"Gummel iteration on n={mesh.resolution} did not reach {cfg.stop_tolerance:g} "
        f"in {cfg.max_outer_iterations} sweeps (last update {updates[-1]:.3e})"
    )


def _check_nested(coarse: Mesh, fine: Mesh) -> None:
    if fine.resolution % coarse.resolution:
        raise ValueError(
            f"meshes are not nested: {fine.resolution} is not a multiple of {coarse.resolution}"
        )


def _run_tasks(tasks, parallel: bool):
    if not parallel:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=len(tasks)) as pool:
        futures = [pool.submit(task) for task in tasks]
        return [f.result() for f in futures]


def _two_grid(
    method: str,
    coarse: Mesh,
    fine: Mesh,
    sources,
    cfg: GummelConfig | None,
    solver_cfg: SolverConfig | None,
    parallel: bool,
) -> TwoGridResult:
    _check_nested(coarse, fine)
    t0 = time.perf_counter()
    coarse_result = gummel_solve(coarse, sources, cfg, solver_cfg)
    t1 = time.perf_counter()

    sc = coarse_result.state
    scfg = (solver_cfg or SolverConfig()).for_mesh(fine.resolution)
    K = cached_operator(fine, "stiffness")
    load1, load2, load3 = _loads(fine, sources)
    pH = [prolongate(p, fine) for p in sc.concentrations]
    phiH = prolongate(sc.phi, fine)
    counter = _Counter()
    matrices: dict[str, SparseMatrix] = {"poisson": K}

    def poisson():
        rhs = _poisson_rhs(fine, load3, pH)
        x = _linear_solve("cg", K, rhs, scfg, "fine Poisson", x0=phiH.interior(), counter=counter)
        return expand(x, fine)

    def species(i: int, drift_phi: NodalField):
        q, load = CHARGES[i], (load1, load2)[i]
        name = f"np{i + 1}"
        what = f"fine Nernst-Planck species {i + 1}"
        if method in ("tg1", "tg2"):
            A = K + assemble_drift_matrix(fine, drift_phi, q)
            matrices[name] = A
            x = _linear_solve("bicgstab", A, load, scfg, what, x0=pH[i].interior(), counter=counter)
        else:
            matrices[name] = K
            if not K.symmetric:
                raise AssertionError("symmetric scheme produced an unsymmetric fine matrix")
            rhs = load - assemble_drift_rhs(fine, pH[i], drift_phi, q)
            x = _linear_solve("cg", K, rhs, scfg, what, x0=pH[i].interior(), counter=counter)
        return expand(x, fine)

    if method in ("tg1", "tg3"):
        # the fine potential enters the NP equations, so Poisson goes first
        phi = poisson()
        p1, p2 = _run_tasks([lambda: species(0, phi), lambda: species(1, phi)], parallel)
    else:
        phi, p1, p2 = _run_tasks(
            [poisson, lambda: species(0, phiH), lambda: species(1, phiH)], parallel
        )
    t2 = time.perf_counter()
    return TwoGridResult(
        method=method,
        state=PnpState(p1, p2, phi),
        coarse=sc,
        coarse_iterations=coarse_result.iterations,
        inner_iterations=coarse_result.inner_iterations + counter.total,
        coarse_seconds=t1 - t0,
        fine_seconds=t2 - t1,
        fine_matrices=matrices,
    )


def two_grid_I(coarse, fine, sources, cfg=None, solver_cfg=None, parallel=False) -> TwoGridResult:
    """Coarse Gummel, then fine Poisson and NP with the fine potential."""
    return _two_grid("tg1", coarse, fine, sources, cfg, solver_cfg, parallel)


def two_grid_II(coarse, fine, sources, cfg=None, solver_cfg=None, parallel=False) -> TwoGridResult:
    """Coarse Gummel, then three independent fine solves; NP drift uses the coarse potential."""
    return _two_grid("tg2", coarse, fine, sources, cfg, solver_cfg, parallel)


def two_grid_III(coarse, fine, sources, cfg=None, solver_cfg=None, parallel=False) -> TwoGridResult:
    """Coarse Gummel, fine Poisson, then symmetric NP solves.

    The drift term is evaluated with the coarse concentration and the fine
    potential and moved to the right-hand side, leaving the stiffness
    matrix as the only fine system matrix.
    """
    return _two_grid("tg3", coarse, fine, sources, cfg, solver_cfg, parallel)


def two_grid_IV(coarse, fine, sources, cfg=None, solver_cfg=None, parallel=False) -> TwoGridResult:
    """Like :func:`two_grid_III` with the coarse potential in the drift; all fine solves independent."""
    return _two_grid("tg4", coarse, fine, sources, cfg, solver_cfg, parallel)


ALGORITHMS = {
    "tg1": two_grid_I,
    "tg2": two_grid_II,
    "tg3": two_grid_III,
    "tg4": two_grid_IV,
}


def run_algorithm(method, coarse, fine, sources, cfg=None, solver_cfg=None, parallel=False):
    try:
        algorithm = ALGORITHMS[method]
    except KeyError:
        raise ValueError(f"unknown two-grid method {method!r}") from None
    return algorithm(coarse, fine, sources, cfg, solver_cfg, parallel)
