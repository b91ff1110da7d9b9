"""Manufactured solution, discrete error norms and estimate probes."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assembly import cached_operator
from .mesh import Mesh, NodalField, prolongate
from .quadrature import error_rule, map_to_tets

__all__ = [
    "ManufacturedSolution",
    "ErrorReport",
    "source_terms",
    "l2_norm",
    "h1_seminorm",
    "error_l2",
    "error_h1",
    "compute_errors",
    "ProbeRow",
    "theorem_probe",
    "ProbeFailure",
    "probe_level",
    "check_probe_rows",
    "PROBE_METHODS",
]

PI = math.pi


def _sines(k: int, x, y, z):
    a = k * PI
    sx, sy, sz = np.sin(a * x), np.sin(a * y), np.sin(a * z)
    cx, cy, cz = np.cos(a * x), np.cos(a * y), np.cos(a * z)
    value = sx * sy * sz
    grad = (a * cx * sy * sz, a * sx * cy * sz, a * sx * sy * cz)
    return value, grad


class ManufacturedSolution:
    """phi = sin(pi x)sin(pi y)sin(pi z), p1 and p2 with frequencies 2 and 3.

    All callables take coordinate arrays ``(x, y, z)``; gradients return a
    3-tuple of arrays.  Charges are ``q1 = +1`` and ``q2 = -1``.
    """

    charges = (1.0, -1.0)
    frequencies = {"phi": 1, "p1": 2, "p2": 3}

    def phi(self, x, y, z):
        return _sines(1, x, y, z)[0]

    def p1(self, x, y, z):
        return _sines(2, x, y, z)[0]

    def p2(self, x, y, z):
        return _sines(3, x, y, z)[0]

    def grad_phi(self, x, y, z):
        return _sines(1, x, y, z)[1]

    def grad_p1(self, x, y, z):
        return _sines(2, x, y, z)[1]

    def grad_p2(self, x, y, z):
        return _sines(3, x, y, z)[1]

    def laplacian(self, name: str, x, y, z):
        k = self.frequencies[name]
        return -3.0 * (k * PI) ** 2 * _sines(k, x, y, z)[0]

    def exact(self, name: str):
        return getattr(self, name), getattr(self, "grad_" + name)

    def F1(self, x, y, z):
        return self._np_source("p1", self.charges[0], x, y, z)

    def F2(self, x, y, z):
        return self._np_source("p2", self.charges[1], x, y, z)

    def F3(self, x, y, z):
        # -lap(phi) - (q1 p1 + q2 p2)
        return 3.0 * PI**2 * self.phi(x, y, z) - self.p1(x, y, z) + self.p2(x, y, z)

    def _np_source(self, name, q, x, y, z):
        p, gp = _sines(self.frequencies[name], x, y, z)
        phi, gphi = _sines(1, x, y, z)
        k = self.frequencies[name]
        drift = gp[0] * gphi[0] + gp[1] * gphi[1] + gp[2] * gphi[2]
        # -lap(p) - q grad(p).grad(phi) - q p lap(phi)
        return 3.0 * (k * PI) ** 2 * p - q * drift + q * p * 3.0 * PI**2 * phi


def source_terms(sol: ManufacturedSolution | None = None):
    """Right-hand sides ``(F1, F2, F3)`` reproducing ``sol`` exactly."""
    sol = sol or ManufacturedSolution()
    return sol.F1, sol.F2, sol.F3


def l2_norm(field: NodalField) -> float:
    """Exact L2 norm of a P1 function, via the mass matrix."""
    v = field.values
    return math.sqrt(max(float(v @ (cached_operator(field.mesh, "mass", full=True) @ v)), 0.0))


def h1_seminorm(field: NodalField) -> float:
    """Exact ``|u|_1`` of a P1 function, via the stiffness matrix."""
    v = field.values
    return math.sqrt(max(float(v @ (cached_operator(field.mesh, "stiffness", full=True) @ v)), 0.0))


def _error_integrals(field: NodalField, exact, exact_grad, chunk: int = 100_000):
    """Return ``(int (u_h - u)^2, int |grad(u_h - u)|^2)``."""
    mesh = field.mesh
    bary, weights = error_rule()
    l2 = 0.0
    semi = 0.0
    for start in range(0, mesh.num_tets, chunk):
        sl = slice(start, start + chunk)
        tets = mesh.tets[sl]
        vol = mesh.volumes[sl]
        pts = map_to_tets(mesh.nodes, tets, bary)
        x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
        uh_nodes = field.values[tets]
        uh = uh_nodes @ bary.T
        diff = uh - exact(x, y, z)
        l2 += float(((diff**2) @ weights) @ vol)
        if exact_grad is not None:
            guh = np.einsum("tk,tkd->td", uh_nodes, mesh.basis_gradients[sl])
            g = exact_grad(x, y, z)
            sq = sum((guh[:, d, None] - g[d]) ** 2 for d in range(3))
            semi += float((sq @ weights) @ vol)
    return l2, semi


def error_l2(field: NodalField, exact) -> float:
    """``||u_h - u||_0`` with a degree-4 rule on every tet."""
    return math.sqrt(_error_integrals(field, exact, None)[0])


def error_h1(field: NodalField, exact, exact_grad) -> float:
    """Full ``||u_h - u||_1 = (||.||_0^2 + |.|_1^2)^(1/2)``."""
    l2, semi = _error_integrals(field, exact, exact_grad)
    return math.sqrt(l2 + semi)


@dataclass(frozen=True)
class ErrorReport:
    l2: dict[str, float]
    h1: dict[str, float]


def compute_errors(state, sol: ManufacturedSolution | None = None) -> ErrorReport:
    """L2 and H1 errors of ``(phi, p1, p2)`` in a ``PnpState``."""
    sol = sol or ManufacturedSolution()
    l2, h1 = {}, {}
    for name in ("phi", "p1", "p2"):
        f, g = sol.exact(name)
        a, b = _error_integrals(getattr(state, name), f, g)
        l2[name] = math.sqrt(a)
        h1[name] = math.sqrt(a + b)
    return ErrorReport(l2, h1)


# -- estimate probes ---------------------------------------------------------


class ProbeFailure(AssertionError):
    """An empirical constant exceeded its sanity bound or grew too fast."""


@dataclass(frozen=True)
class ProbeRow:
    """Both sides of one estimate at one mesh pair.

    ``method`` is the two-grid scheme being probed and ``quantity`` the
    unknown on the left-hand side (``phi``, ``p1`` or ``p2``).
    """

    method: str
    H: float
    h: float
    quantity: str
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        if self.rhs == 0.0:
            return 0.0 if self.lhs == 0.0 else math.inf
        return self.lhs / self.rhs


PROBE_METHODS = ("tg3", "tg4")


def probe_level(method, coarse_state, fine_state, tg_state):
    """Probe rows for one (H, h) pair.

    The potential row compares ``|phi_h - phi*|_1`` against the summed
    coarse concentration gaps ``sum_i ||p_h^i - p_H^i||_0``.  The
    concentration rows use the same sum for ``tg3``; for ``tg4`` the drift
    uses the coarse potential, so the bound becomes
    ``||p_h^i - p_H^i||_0 + |phi_h - phi_H|_1``.
    """
    if method not in PROBE_METHODS:
        raise ValueError(f"no estimate probe for method {method!r}")
    fine = fine_state.mesh
    pH = [prolongate(coarse_state.p1, fine), prolongate(coarse_state.p2, fine)]
    ph = [fine_state.p1, fine_state.p2]
    pstar = [tg_state.p1, tg_state.p2]
    conc_gap = [l2_norm(a - b) for a, b in zip(ph, pH)]
    H = 1.0 / coarse_state.mesh.resolution
    h = 1.0 / fine.resolution
    rows = [ProbeRow(method, H, h, "phi", h1_seminorm(fine_state.phi - tg_state.phi), sum(conc_gap))]
    if method == "tg4":
        phi_gap = h1_seminorm(fine_state.phi - prolongate(coarse_state.phi, fine))
    for i in range(2):
        lhs = h1_seminorm(ph[i] - pstar[i])
        rhs = sum(conc_gap) if method == "tg3" else conc_gap[i] + phi_gap
        rows.append(ProbeRow(method, H, h, f"p{i + 1}", lhs, rhs))
    return rows


def theorem_probe(
    method: str,
    pairs,
    sources=None,
    gummel_cfg=None,
    solver_cfg=None,
    max_ratio: float = 100.0,
    max_growth: float = 3.0,
    check: bool = True,
):
    """Evaluate both sides of the a-priori estimates on nested mesh pairs.

    ``method`` is ``"tg3"`` or ``"tg4"``.  ``p_h`` and ``phi_h`` are the
    coupled finite element solution on each fine mesh.

    Returns the list of :class:`ProbeRow`.  With ``check=True`` raises
    :class:`ProbeFailure` if a ratio exceeds ``max_ratio`` or grows by more
    than ``max_growth`` between consecutive pairs.
    """
    from .mesh import build_unit_cube_mesh
    from .pnp import gummel_solve, run_algorithm

    if method not in PROBE_METHODS:
        raise ValueError(f"no estimate probe for method {method!r}")
    sources = sources or source_terms()
    rows: list[ProbeRow] = []
    for n_coarse, n_fine in pairs:
        coarse = build_unit_cube_mesh(n_coarse)
        fine = build_unit_cube_mesh(n_fine)
        fem = gummel_solve(fine, sources, gummel_cfg, solver_cfg).state
        result = run_algorithm(method, coarse, fine, sources, gummel_cfg, solver_cfg)
        rows.extend(probe_level(method, result.coarse, fem, result.state))
    if check:
        check_probe_rows(rows, max_ratio, max_growth)
    return rows


def check_probe_rows(rows, max_ratio, max_growth):
    by_quantity: dict[tuple[str, str], list[ProbeRow]] = {}
    for row in rows:
        if not math.isfinite(row.ratio) or row.ratio > max_ratio:
            raise ProbeFailure(
                f"{row.method} {row.quantity} at H={row.H:g}, h={row.h:g}: ratio {row.ratio:g}"
            )
        by_quantity.setdefault((row.method, row.quantity), []).append(row)
    for (method, quantity), seq in by_quantity.items():
        for prev, cur in zip(seq, seq[1:]):
            if prev.ratio > 0 and cur.ratio > max_growth * prev.ratio:
                raise ProbeFailure(
                    f"{method} {quantity}: ratio grew {prev.ratio:g} -> {cur.ratio:g}"
                )
