"""Relaxed coefficient, relaxed cost and first/second-order expansion checks.

The relaxed coefficient interpolates ``A(ubar)`` and ``A(u)`` with a rank-one
laminate correction along a direction field ``ell``.  Expanding it in the
volume fraction ``alpha`` gives

    A^alpha = A(ubar) + alpha * Theta + alpha**2 * Upsilon + O(alpha**3),

    Theta   = D - D l l^T D / (l^T A(u) l),     D = A(u) - A(ubar),
    Upsilon = (l^T A(ubar) l) / (l^T A(u) l)**2 * D l l^T D,

which drives both the first-order coefficient and the second-order value.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import mesh_fem as fem
from . import optimality, semilinear
from .problems import Problem

log = logging.getLogger(__name__)

DEFAULT_ALPHAS = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)


# ---------------------------------------------------------------------------
# coefficient algebra
# ---------------------------------------------------------------------------


def _as_batch(m):
    m = np.asarray(m, dtype=float)
    return (m[None], True) if m.ndim == 2 else (m, False)


def _unit_field(ell, n: int, dim: int) -> np.ndarray:
    ell = np.asarray(ell, dtype=float)
    if ell.ndim == 1:
        ell = np.broadcast_to(ell, (n, dim))
    nrm = np.linalg.norm(ell, axis=1)
    if np.any(np.abs(nrm - 1.0) > 1e-12):
        raise ValueError("direction field must have unit length in every element")
    return ell


def aalpha_field(au, aubar, ell, alpha: float) -> np.ndarray:
    """Relaxed coefficient ``A^alpha`` for stacks ``(k, n, n)`` (or single matrices)."""
    au, single = _as_batch(au)
    aubar, _ = _as_batch(aubar)
    ell = _unit_field(ell, au.shape[0], au.shape[1])
    d = au - aubar
    dl = np.einsum("kab,kb->ka", d, ell)
    den = (1.0 - alpha) * np.einsum("ka,kab,kb->k", ell, au, ell) + alpha * np.einsum(
        "ka,kab,kb->k", ell, aubar, ell
    )
    out = alpha * au + (1.0 - alpha) * aubar - (alpha * (1.0 - alpha) / den)[:, None, None] * np.einsum(
        "ka,kb->kab", dl, dl
    )
    out = 0.5 * (out + np.swapaxes(out, 1, 2))
    return out[0] if single else out


def effective_Aalpha(au, aubar, ell, alpha: float) -> np.ndarray:
    """Relaxed coefficient for one element: ``alpha=0`` gives ``Aubar``, ``alpha=1`` gives ``Au``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    return aalpha_field(au, aubar, ell, alpha)


def theta_field(au, aubar, ell) -> np.ndarray:
    """``Theta = D - D l l^T D / (l^T Au l)``, the alpha-derivative of ``A^alpha`` at 0."""
    au, single = _as_batch(au)
    aubar, _ = _as_batch(aubar)
    ell = _unit_field(ell, au.shape[0], au.shape[1])
    d = au - aubar
    dl = np.einsum("kab,kb->ka", d, ell)
    a_u = np.einsum("ka,kab,kb->k", ell, au, ell)
    out = d - np.einsum("ka,kb->kab", dl, dl) / a_u[:, None, None]
    out = 0.5 * (out + np.swapaxes(out, 1, 2))
    return out[0] if single else out


theta = theta_field


def upsilon_field(au, aubar, ell) -> np.ndarray:
    """Second alpha-coefficient of ``A^alpha``: ``(l^T Aubar l)/(l^T Au l)^2 D l l^T D``."""
    au, single = _as_batch(au)
    aubar, _ = _as_batch(aubar)
    ell = _unit_field(ell, au.shape[0], au.shape[1])
    d = au - aubar
    dl = np.einsum("kab,kb->ka", d, ell)
    a_u = np.einsum("ka,kab,kb->k", ell, au, ell)
    a_b = np.einsum("ka,kab,kb->k", ell, aubar, ell)
    out = (a_b / a_u**2)[:, None, None] * np.einsum("ka,kb->kab", dl, dl)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# reference solution bundle
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Reference:
    """Reference control with its state, adjoint, cost and cell data."""

    problem: Problem
    ubar: np.ndarray
    ybar: np.ndarray
    psibar: np.ndarray
    J: float
    cells: optimality.CellData

    @property
    def mesh(self) -> fem.Mesh:
        return self.problem.mesh


def reference(problem: Problem, ubar, ybar=None, psibar=None) -> Reference:
    ubar = problem.check_control(ubar)
    if ybar is None:
        ybar = semilinear.solve_state(problem, ubar)
    if psibar is None:
        psibar = semilinear.solve_adjoint(problem, ubar, ybar)
    return Reference(
        problem, ubar, ybar, psibar, semilinear.evaluate_cost(problem, ubar, ybar),
        optimality.cell_data(problem, ybar, psibar),
    )


def _ref(problem: Problem, ubar, ref: Optional[Reference]) -> Reference:
    if ref is not None:
        if ref.problem is not problem or not np.array_equal(ref.ubar, ubar):
            raise ValueError("reference bundle does not match problem/ubar")
        return ref
    return reference(problem, ubar)


# ---------------------------------------------------------------------------
# relaxed cost and first-order expansion
# ---------------------------------------------------------------------------


def relaxed_cost(problem: Problem, ubar, u, ell, alpha: float, y=None) -> float:
    """``alpha * int f0(y^alpha, u) + (1-alpha) * int f0(y^alpha, ubar)``."""
    ubar = problem.check_control(ubar)
    u = problem.check_control(u)
    if y is None:
        y = semilinear.solve_relaxed_state(problem, ubar, u, ell, alpha)
    yc = fem.centroid_values(problem.mesh, y)
    dens = alpha * problem.f0(u, yc) + (1.0 - alpha) * problem.f0(ubar, yc)
    return fem.integrate(problem.mesh, dens)


def first_order_density(ref: Reference, u, ell) -> np.ndarray:
    """Per-element integrand ``H(ubar) - H(u) - quotient(ell)``."""
    c = ref.cells
    u = np.asarray(u)
    dens = optimality.hamiltonian(c, ref.ubar) - optimality.hamiltonian(c, u) - optimality.quotient(
        c, ref.ubar, u, ell
    )
    return np.where(u == ref.ubar, 0.0, dens)


def first_order_coefficient(problem: Problem, ubar, u, ell, ref: Optional[Reference] = None) -> float:
    """``J^1``: integral of ``H(ubar) - H(u) - quotient`` with the supplied direction field."""
    ubar = problem.check_control(ubar)
    u = problem.check_control(u)
    ref = _ref(problem, ubar, ref)
    return fem.integrate(problem.mesh, first_order_density(ref, u, ell))


@dataclass
class ExpansionTable:
    alpha: np.ndarray
    J_alpha: np.ndarray
    J_bar: float
    J1: float
    first: np.ndarray  # (J^a - J)/a
    second: np.ndarray  # (J^a - J - a J1)/a^2
    limit: np.ndarray  # Richardson estimate from this row and the previous one
    errors: List[Optional[str]] = field(default_factory=list)
    tol_J: float = 0.0

    @property
    def second_order_limit(self) -> float:
        """Richardson-extrapolated second-order limit from the two smallest alphas."""
        return float(self.limit[-1])

    @property
    def increments(self) -> np.ndarray:
        return self.J_alpha - self.J_bar

    @property
    def increments_ok(self) -> bool:
        inc = self.increments
        return bool(np.all(inc[np.isfinite(inc)] >= -self.tol_J))

    def rows(self) -> List[List[float]]:
        return [
            [float(a), float(j), float(f1), float(f2), float(lim)]
            for a, j, f1, f2, lim in zip(self.alpha, self.J_alpha, self.first, self.second, self.limit)
        ]

    HEADER = ("alpha", "J_alpha", "first_order", "second_order", "second_order_limit")


def richardson(alpha: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Linear-in-alpha extrapolation to 0 from consecutive rows (first row NaN)."""
    out = np.full(alpha.shape, np.nan)
    a0, a1 = alpha[:-1], alpha[1:]
    out[1:] = (a0 * values[1:] - a1 * values[:-1]) / (a0 - a1)
    return out


def expansion_probe(problem: Problem, ubar, u, ell, alphas: Sequence[float] = DEFAULT_ALPHAS,
                    ref: Optional[Reference] = None, threads: int = 1) -> ExpansionTable:
    """Tabulate ``J^alpha`` and its first/second-order residual quotients."""
    ubar = problem.check_control(ubar)
    u = problem.check_control(u)
    alphas = np.asarray(alphas, dtype=float)
    if alphas.ndim != 1 or alphas.size < 2:
        raise ValueError("need at least two alpha values")
    if np.any(np.diff(alphas) >= 0) or alphas.min() <= 0 or alphas.max() >= 1:
        raise ValueError("alpha list must be strictly decreasing inside (0, 1)")
    ref = _ref(problem, ubar, ref)
    J1 = first_order_coefficient(problem, ubar, u, ell, ref)

    def row(a):
        try:
            y = semilinear.solve_relaxed_state(problem, ubar, u, ell, float(a), x0=ref.ybar)
            return relaxed_cost(problem, ubar, u, ell, float(a), y), None
        except fem.SolverError as exc:
            log.warning("alpha=%g: %s", a, exc)
            return float("nan"), str(exc)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(row, alphas))
    else:
        results = [row(a) for a in alphas]
    Ja = np.array([r[0] for r in results])
    first = (Ja - ref.J) / alphas
    second = (Ja - ref.J - alphas * J1) / alphas**2
    tol_J = 1e-6 * max(1.0, abs(ref.J))
    return ExpansionTable(alphas, Ja, ref.J, J1, first, second, richardson(alphas, second),
                          [r[1] for r in results], tol_J)


def slope_fit(table: ExpansionTable) -> float:
    """Least-squares fit of ``J^a - J`` by ``c1*a + c2*a^2``; returns ``c1``."""
    a = table.alpha
    ok = np.isfinite(table.J_alpha)
    mat = np.column_stack([a[ok], a[ok] ** 2])
    coef, *_ = np.linalg.lstsq(mat, table.increments[ok], rcond=None)
    return float(coef[0])


# ---------------------------------------------------------------------------
# second-order condition
# ---------------------------------------------------------------------------

TERM_NAMES = ("hamiltonian_ratio", "hy_difference", "hyy", "gradient_pairing")


@dataclass
class SocReport:
    kind: str
    value: float
    terms: Dict[str, float]
    coupling_correction: float
    corrected_value: float
    tol_soc: float
    passed: bool
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "value": self.value,
            "terms": dict(self.terms),
            "coupling_correction": self.coupling_correction,
            "corrected_value": self.corrected_value,
            "tol_soc": self.tol_soc,
            "passed": self.passed,
            "warnings": list(self.warnings),
        }


def _finish(kind: str, terms: Dict[str, float], coupling: float, warnings: List[str]) -> SocReport:
    value = float(sum(terms[k] for k in TERM_NAMES))
    tol = 1e-6 * (1.0 + sum(abs(terms[k]) for k in TERM_NAMES))
    return SocReport(kind, value, {k: float(terms[k]) for k in TERM_NAMES}, float(coupling),
                     value + float(coupling), tol, bool(value >= -tol), warnings)


def _common_terms(ref: Reference, u, Y) -> Dict[str, float]:
    mesh = ref.mesh
    c = ref.cells
    yc = fem.centroid_values(mesh, Y)
    hyd = optimality.hamiltonian_y(c, ref.ubar) - optimality.hamiltonian_y(c, u)
    hyy = optimality.hamiltonian_yy(c, ref.ubar)
    return {
        "hy_difference": fem.integrate(mesh, np.where(u == ref.ubar, 0.0, hyd) * yc),
        "hyy": fem.integrate(mesh, -0.5 * hyy * yc**2),
    }


def _pairing(ref: Reference, mat: np.ndarray, Y) -> float:
    gY = fem.gradient(ref.mesh, Y)
    return fem.integrate(ref.mesh, np.einsum("ea,eab,eb->e", ref.cells.grad_psi, mat, gY))


def soc_value(problem: Problem, ubar, u, ell, ref: Optional[Reference] = None, Y=None) -> SocReport:
    """Second-order integral for a weakly singular pair ``(u, ell)``.

    Terms: Hamiltonian gap times ``l^T A(ubar) l / l^T A(u) l``; ``(H_y(ubar) -
    H_y(u)) Y``; ``-H_yy(ubar) Y^2 / 2``; ``<(A(u) - A(ubar)) grad psi, grad Y>``.
    ``coupling_correction`` is ``-int (l^T D grad psi)(l^T D grad Y) / l^T A(u) l``,
    the difference between pairing with ``Theta`` and pairing with ``D``; it
    vanishes whenever ``l^T D grad psi = 0``.  ``corrected_value`` adds it.
    """
    ubar = problem.check_control(ubar)
    u = problem.check_control(u)
    ref = _ref(problem, ubar, ref)
    mesh = problem.mesh
    ell = _unit_field(ell, mesh.n_elements, 2)
    if Y is None:
        Y = semilinear.solve_variational(problem, ubar, ref.ybar, u, ell)
    au, ab = problem.A(u), problem.A(ubar)
    d = au - ab
    a_u = np.einsum("ea,eab,eb->e", ell, au, ell)
    a_b = np.einsum("ea,eab,eb->e", ell, ab, ell)
    hgap = optimality.hamiltonian(ref.cells, ubar) - optimality.hamiltonian(ref.cells, u)
    terms = _common_terms(ref, u, Y)
    terms["hamiltonian_ratio"] = fem.integrate(mesh, np.where(u == ubar, 0.0, hgap * a_b / a_u))
    terms["gradient_pairing"] = _pairing(ref, d, Y)
    qpsi = np.einsum("ea,eab,eb->e", ell, d, ref.cells.grad_psi)
    qY = np.einsum("ea,eab,eb->e", ell, d, fem.gradient(mesh, Y))
    coupling = -fem.integrate(mesh, qpsi * qY / a_u)
    warnings = []
    dens = first_order_density(ref, u, ell)
    tol = optimality.sing_tolerance(ref.cells)
    if np.abs(dens).max(initial=0.0) > tol:
        warnings.append(
            f"pair is not weakly singular: max |first-order density| {np.abs(dens).max():.3e} > {tol:.3e}"
        )
    return _finish("weakly-singular", terms, coupling, warnings)


def second_order_coefficient(problem: Problem, ubar, u, ell, ref: Optional[Reference] = None, Y=None) -> float:
    """Exact alpha^2 coefficient of ``J^alpha`` for any pair ``(u, ell)``.

    ``int (H_y(ubar)-H_y(u)) Y - H_yy(ubar) Y^2/2 + <Theta grad psi, grad Y> + <Upsilon grad psi, grad ybar>``.
    It agrees with :func:`soc_value` whenever the pair is weakly singular and
    ``l^T D grad psi = 0``.
    """
    ubar = problem.check_control(ubar)
    u = problem.check_control(u)
    ref = _ref(problem, ubar, ref)
    ell = _unit_field(ell, problem.mesh.n_elements, 2)
    if Y is None:
        Y = semilinear.solve_variational(problem, ubar, ref.ybar, u, ell)
    au, ab = problem.A(u), problem.A(ubar)
    terms = _common_terms(ref, u, Y)
    return float(
        terms["hy_difference"] + terms["hyy"]
        + _pairing(ref, theta_field(au, ab, ell), Y)
        + _pairing(ref, upsilon_field(au, ab, ell), ref.ybar)
    )


def soc_value_singular(problem: Problem, ubar, u, ref: Optional[Reference] = None, Y=None,
                       check: bool = True) -> SocReport:
    """Second-order integral for a singular candidate (no Hamiltonian-ratio term)."""
    ubar = problem.check_control(ubar)
    u = problem.check_control(u)
    ref = _ref(problem, ubar, ref)
    warnings: List[str] = []
    if check:
        rep = optimality.classify_cells(ref.cells, ubar, [u])
        if not rep.candidates[0].singular:
            warnings.append("candidate is not singular at the reference control; value computed anyway")
            log.warning(warnings[-1])
    if Y is None:
        Y = semilinear.solve_variational_singular(problem, ubar, ref.ybar, u)
    terms = _common_terms(ref, u, Y)
    terms["hamiltonian_ratio"] = 0.0
    terms["gradient_pairing"] = _pairing(ref, problem.A(u) - problem.A(ubar), Y)
    return _finish("singular", terms, 0.0, warnings)


def soc_value_independent(problem: Problem, ubar, u, ref: Optional[Reference] = None, Y=None) -> SocReport:
    """Two-term second-order integral for a control-independent coefficient.

    Uses the reduced Hamiltonian ``psi*f - f0`` and a variational state with
    source ``f(ybar,u) - f(ybar,ubar)`` only.
    """
    ubar = problem.check_control(ubar)
    u = problem.check_control(u)
    ref = _ref(problem, ubar, ref)
    warnings: List[str] = []
    if not np.all(problem.coefficient_independent_of_control()):
        warnings.append("coefficient depends on the control; the two-term reduction does not apply")
    if Y is None:
        Y = semilinear.solve_variational_independent(problem, ubar, ref.ybar, u)
    terms = _common_terms(ref, u, Y)
    terms["hamiltonian_ratio"] = 0.0
    terms["gradient_pairing"] = 0.0
    return _finish("independent", terms, 0.0, warnings)
