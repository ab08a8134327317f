"""State, adjoint, variational and relaxed-state solvers; cost evaluation.

Discretisation: P1 elements, coefficients constant per element, and every
pointwise nonlinearity (``f``, ``f0`` and their y-derivatives) sampled at
element centroids with the nodal mean as the centroid value.  Loads use
``area/3`` per vertex and the linearised reaction uses the matching
``area/9`` centroid mass, so the discrete adjoint is the exact transpose of
the discrete linearised state equation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import mesh_fem as fem
from .problems import Problem

log = logging.getLogger(__name__)

NEWTON_RTOL = 1e-12
NEWTON_MAXIT = 50
INNER_CG_TOL = 1e-13


@dataclass
class NewtonInfo:
    iterations: int
    residuals: List[float] = field(default_factory=list)
    converged: bool = False


def _newton(problem: Problem, coeff: np.ndarray, source: Callable, dsource: Callable,
            x0: Optional[np.ndarray] = None, rtol: float = NEWTON_RTOL,
            maxit: int = NEWTON_MAXIT, cg_tol: float = INNER_CG_TOL):
    """Damped Newton for ``K y = load(source(y_c))`` with ``dsource <= 0``."""
    mesh = problem.mesh
    stiff = fem.assemble(mesh, coeff)
    free = mesh.free

    def residual(y):
        yc = fem.centroid_values(mesh, y)
        return stiff.matrix @ y[free] - fem.load_scalar(mesh, source(yc))[free]

    y = np.zeros(mesh.n_nodes) if x0 is None else np.array(x0, dtype=float)
    y[mesh.boundary] = 0.0
    r0 = residual(np.zeros(mesh.n_nodes))
    scale = float(np.linalg.norm(r0))
    r = residual(y) if x0 is not None else r0
    rn = float(np.linalg.norm(r))
    info = NewtonInfo(0, [rn])
    if scale == 0.0:
        scale = 1.0
    for it in range(1, maxit + 1):
        if rn <= rtol * scale:
            info.converged = True
            break
        yc = fem.centroid_values(mesh, y)
        jac = fem.assemble(mesh, coeff, -dsource(yc))
        jac.rhs = -r
        dy = fem.solve_cg(jac, tol=cg_tol)
        t = 1.0
        while True:
            y_try = y + t * dy
            r_try = residual(y_try)
            rn_try = float(np.linalg.norm(r_try))
            if rn_try < rn or t < 2.0**-30:
                break
            t *= 0.5
        if rn_try >= rn:
            # no decrease possible: we are at the rounding floor
            info.iterations = it
            info.converged = rn <= 1e3 * rtol * scale
            break
        y, r, rn = y_try, r_try, rn_try
        info.residuals.append(rn)
        info.iterations = it
    else:
        info.converged = rn <= rtol * scale
    if not info.converged:
        raise fem.SolverError("Newton did not converge", rn / scale, info.residuals)
    log.debug("newton: %d iterations, residual %.2e", info.iterations, rn / scale)
    return y, info


def solve_state(problem: Problem, u, x0=None, return_info: bool = False, **kw):
    """Solve ``-div(A(x,u) grad y) = f(x,y,u)``, ``y = 0`` on the boundary."""
    u = problem.check_control(u)
    y, info = _newton(
        problem, problem.A(u), lambda yc: problem.f(u, yc), lambda yc: problem.f_y(u, yc), x0, **kw
    )
    return (y, info) if return_info else y


def solve_relaxed_state(problem: Problem, ubar, u, ell, alpha: float, x0=None,
                        return_info: bool = False, **kw):
    """Relaxed state: coefficient ``A^alpha(ell)`` and source ``(1-a) f(ubar) + a f(u)``."""
    from .relaxation import aalpha_field

    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    ubar = problem.check_control(ubar)
    u = problem.check_control(u)
    coeff = aalpha_field(problem.A(u), problem.A(ubar), ell, alpha)

    def src(yc):
        return (1.0 - alpha) * problem.f(ubar, yc) + alpha * problem.f(u, yc)

    def dsrc(yc):
        return (1.0 - alpha) * problem.f_y(ubar, yc) + alpha * problem.f_y(u, yc)

    y, info = _newton(problem, coeff, src, dsrc, x0, **kw)
    return (y, info) if return_info else y


def _linearised(problem: Problem, ubar, ybar):
    yc = fem.centroid_values(problem.mesh, ybar)
    return fem.assemble(problem.mesh, problem.A(ubar), -problem.f_y(ubar, yc)), yc


def solve_adjoint(problem: Problem, ubar, ybar, cg_tol: float = INNER_CG_TOL) -> np.ndarray:
    """Adjoint: ``-div(A(ubar) grad psi) = f_y psi - f0_y``, ``psi = 0`` on the boundary."""
    ubar = problem.check_control(ubar)
    sys, yc = _linearised(problem, ubar, ybar)
    sys.rhs = fem.load_scalar(problem.mesh, -problem.f0_y(ubar, yc))[sys.free]
    return fem.solve_cg(sys, tol=cg_tol)


def evaluate_cost(problem: Problem, u, y) -> float:
    """Centroid-rule integral of the running cost ``f0(x, y, u)``."""
    u = problem.check_control(u)
    yc = fem.centroid_values(problem.mesh, y)
    return fem.integrate(problem.mesh, problem.f0(u, yc))


def solve_variational(problem: Problem, ubar, ybar, u, ell, cg_tol: float = INNER_CG_TOL) -> np.ndarray:
    """Variational state ``Y``: the alpha-derivative of the relaxed state at 0.

    ``-div(A(ubar) grad Y) = f_y(ubar) Y + div(Theta grad ybar) + f(ybar,u) - f(ybar,ubar)``.
    """
    from .relaxation import theta_field

    ubar = problem.check_control(ubar)
    u = problem.check_control(u)
    mesh = problem.mesh
    sys, yc = _linearised(problem, ubar, ybar)
    th = theta_field(problem.A(u), problem.A(ubar), ell)
    load = fem.load_divergence(mesh, th, ybar) + fem.load_scalar(
        mesh, problem.f(u, yc) - problem.f(ubar, yc)
    )
    sys.rhs = load[sys.free]
    return fem.solve_cg(sys, tol=cg_tol)


def solve_variational_singular(problem: Problem, ubar, ybar, u, cg_tol: float = INNER_CG_TOL) -> np.ndarray:
    """Variational state for a singular candidate, with ``div(A(u) grad ybar) + f(ybar,u)`` source."""
    ubar = problem.check_control(ubar)
    u = problem.check_control(u)
    mesh = problem.mesh
    sys, yc = _linearised(problem, ubar, ybar)
    load = fem.load_divergence(mesh, problem.A(u), ybar) + fem.load_scalar(mesh, problem.f(u, yc))
    sys.rhs = load[sys.free]
    return fem.solve_cg(sys, tol=cg_tol)


def solve_variational_independent(problem: Problem, ubar, ybar, u, cg_tol: float = INNER_CG_TOL) -> np.ndarray:
    """Variational state when ``A`` does not depend on the control: source ``f(ybar,u) - f(ybar,ubar)`` only."""
    ubar = problem.check_control(ubar)
    u = problem.check_control(u)
    sys, yc = _linearised(problem, ubar, ybar)
    sys.rhs = fem.load_scalar(problem.mesh, problem.f(u, yc) - problem.f(ubar, yc))[sys.free]
    return fem.solve_cg(sys, tol=cg_tol)


def state_residual(problem: Problem, u, y) -> float:
    """Relative discrete residual of the state equation at ``y``."""
    u = problem.check_control(u)
    mesh = problem.mesh
    stiff = fem.assemble(mesh, problem.A(u))
    yc = fem.centroid_values(mesh, y)
    r = stiff.matrix @ y[mesh.free] - fem.load_scalar(mesh, problem.f(u, yc))[mesh.free]
    ref = np.linalg.norm(fem.load_scalar(mesh, problem.f(u, np.zeros_like(yc)))[mesh.free])
    return float(np.linalg.norm(r) / max(ref, 1e-300))
