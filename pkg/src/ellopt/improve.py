"""Pointwise fixed-point improvement of a control field.

Each round solves the state and adjoint for the incumbent control, then
switches every element to the label with the most negative first-order gap
(below ``-switch_tol``).  Exact ties keep the incumbent.  A round whose cost
increases is backtracked by halving the switch set, most negative gaps
first, until the cost strictly decreases; strict descent rules out cycles
among accepted controls.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import optimality, semilinear
from .problems import Problem

log = logging.getLogger(__name__)


class OscillationError(RuntimeError):
    """The improver revisited a control within a short cycle."""

    def __init__(self, message: str, controls):
        super().__init__(message)
        self.controls = controls


@dataclass
class ImproveResult:
    control: np.ndarray
    rounds: int
    converged: bool
    costs: List[float] = field(default_factory=list)
    switches: List[int] = field(default_factory=list)
    violation: float = 0.0
    reason: str = ""
    cycle: Optional[List[np.ndarray]] = None


def improve_control(problem: Problem, u0, max_rounds: int = 50, switch_tol: float = 1e-9,
                    backtrack: bool = True, raise_on_cycle: bool = False) -> ImproveResult:
    """Iterate pointwise Hamiltonian maximisation until no element changes."""
    u = problem.check_control(u0).copy()
    if problem.n_labels == 1:
        return ImproveResult(u, 0, True, reason="single-label control set")
    y = semilinear.solve_state(problem, u)
    J = semilinear.evaluate_cost(problem, u, y)
    tol_J = 1e-6 * max(1.0, abs(J))
    costs, switches = [J], []
    seen = [u.tobytes()]
    reason = "max_rounds reached"
    converged = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        psi = semilinear.solve_adjoint(problem, u, y)
        cells = optimality.cell_data(problem, y, psi)
        gaps = np.stack([optimality.foc_gap(cells, u, v) for v in range(problem.n_labels)])
        best = np.argmin(gaps, axis=0)
        best_gap = gaps[best, np.arange(u.size)]
        cand = np.flatnonzero(best_gap < -switch_tol)
        if cand.size == 0:
            converged, reason = True, "fixed point"
            rounds -= 1
            break
        order = cand[np.argsort(best_gap[cand], kind="stable")]
        n_try = order.size
        accepted = False
        while n_try > 0:
            sel = order[:n_try]
            u_new = u.copy()
            u_new[sel] = best[sel]
            y_new = semilinear.solve_state(problem, u_new, x0=y)
            J_new = semilinear.evaluate_cost(problem, u_new, y_new)
            if J_new < J or not backtrack:
                accepted = True
                break
            n_try //= 2
        if not accepted:
            reason = "no descent: every backtracked switch set increases the cost"
            log.warning(reason)
            break
        key = u_new.tobytes()
        if key in seen[-4:]:
            k = len(seen) - seen[::-1].index(key)
            reason = f"oscillation of period {len(seen) - k + 1}"
            log.warning(reason)
            cycle = [np.frombuffer(s, dtype=u.dtype).copy() for s in seen[k - 1:]] + [u_new]
            if raise_on_cycle:
                raise OscillationError(reason, cycle)
            return ImproveResult(u, rounds, False, costs, switches,
                                 optimality.verify_pontryagin(problem, u, y)[0], reason, cycle)
        if J_new > J + tol_J:
            log.warning("cost increased from %.12g to %.12g", J, J_new)
        u, y, J = u_new, y_new, J_new
        seen.append(key)
        costs.append(J)
        switches.append(int(n_try))
        log.info("round %d: %d switches, J = %.12g", rounds, n_try, J)
    viol = optimality.verify_pontryagin(problem, u, y)[0]
    if not converged:
        log.warning("improver stopped: %s (violation %.3e)", reason, viol)
    return ImproveResult(u, rounds, converged, costs, switches, viol, reason)
