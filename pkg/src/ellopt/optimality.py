"""Pointwise Hamiltonian machinery: first-order gaps, directions, singularity.

All functions work on :class:`CellData`, a batch of per-element centroid
values and exact P1 gradients.  A single cell is a batch of length one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import mesh_fem as fem
from . import semilinear
from .problems import Problem
from .tensor import batch_inv_sqrt_2x2, pair_max_bilinear_batch

STATUSES = ("strict", "singular", "weakly-singular")


@dataclass(frozen=True, eq=False)
class CellData:
    """Per-element data at which the Hamiltonian is evaluated.

    ``A``, ``f`` and ``f0`` carry a leading label axis; ``f_y``/``f0_y`` and
    the second derivatives are evaluated at ``y``.
    """

    y: np.ndarray  # (ne,)
    psi: np.ndarray  # (ne,)
    grad_y: np.ndarray  # (ne, 2)
    grad_psi: np.ndarray  # (ne, 2)
    A: np.ndarray  # (nl, ne, 2, 2)
    f: np.ndarray  # (nl, ne)
    f0: np.ndarray  # (nl, ne)
    f_y: Optional[np.ndarray] = None
    f0_y: Optional[np.ndarray] = None
    f_yy: Optional[np.ndarray] = None
    f0_yy: Optional[np.ndarray] = None

    @property
    def n_labels(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @classmethod
    def single(cls, psi: float, xi, eta, A: Sequence, f: Sequence, f0: Sequence, y: float = 0.0):
        """One cell with label-indexed sequences ``A[v]``, ``f[v]``, ``f0[v]``."""
        A = np.asarray(A, dtype=float).reshape(-1, 1, 2, 2)
        return cls(
            y=np.array([float(y)]), psi=np.array([float(psi)]),
            grad_y=np.asarray(xi, dtype=float).reshape(1, 2),
            grad_psi=np.asarray(eta, dtype=float).reshape(1, 2),
            A=A, f=np.asarray(f, dtype=float).reshape(-1, 1),
            f0=np.asarray(f0, dtype=float).reshape(-1, 1),
        )


def cell_data(problem: Problem, ybar, psibar) -> CellData:
    mesh = problem.mesh
    yc = fem.centroid_values(mesh, ybar)
    pc = fem.centroid_values(mesh, psibar)
    labels = range(problem.n_labels)
    const = [problem.constant_control(v) for v in labels]
    stack = lambda fn: np.stack([fn(u, yc) for u in const])  # noqa: E731
    return CellData(
        y=yc, psi=pc, grad_y=fem.gradient(mesh, ybar), grad_psi=fem.gradient(mesh, psibar),
        A=problem.coeff, f=stack(problem.f), f0=stack(problem.f0),
        f_y=stack(problem.f_y), f0_y=stack(problem.f0_y),
        f_yy=stack(problem.f_yy), f0_yy=stack(problem.f0_yy),
    )


def _labels(cells: CellData, v) -> np.ndarray:
    v = np.asarray(v)
    if v.ndim == 0:
        v = np.full(cells.n, int(v))
    if np.any(v < 0) or np.any(v >= cells.n_labels):
        raise KeyError(f"unknown control label in {np.unique(v)}")
    return v.astype(np.int64)


def _pick(arr: np.ndarray, v: np.ndarray) -> np.ndarray:
    return arr[v, np.arange(v.shape[0])]


def hamiltonian(cells: CellData, v) -> np.ndarray:
    """``H = psi*f - f0 - <A grad_y, grad_psi>`` per element for labels ``v``."""
    v = _labels(cells, v)
    a = _pick(cells.A, v)
    bil = np.einsum("ea,eab,eb->e", cells.grad_y, a, cells.grad_psi)
    return cells.psi * _pick(cells.f, v) - _pick(cells.f0, v) - bil


def hamiltonian_y(cells: CellData, v) -> np.ndarray:
    """``H_y = psi*f_y - f0_y`` (the gradient pairing does not depend on y)."""
    v = _labels(cells, v)
    return cells.psi * _pick(cells.f_y, v) - _pick(cells.f0_y, v)


def hamiltonian_yy(cells: CellData, v) -> np.ndarray:
    v = _labels(cells, v)
    return cells.psi * _pick(cells.f_yy, v) - _pick(cells.f0_yy, v)


def _scaled_jumps(cells: CellData, ubar, v):
    """``xi' = A(v)^{-1/2}(A(ubar)-A(v)) grad_y`` and the same with ``grad_psi``."""
    ub = _labels(cells, ubar)
    v = _labels(cells, v)
    av = _pick(cells.A, v)
    jump = _pick(cells.A, ub) - av
    s = batch_inv_sqrt_2x2(av)
    xi = np.einsum("eab,ebc,ec->ea", s, jump, cells.grad_y)
    eta = np.einsum("eab,ebc,ec->ea", s, jump, cells.grad_psi)
    return xi, eta, s


def max_term(cells: CellData, ubar, v) -> np.ndarray:
    """Closed-form maximum over directions of the quotient in the first-order condition."""
    xi, eta, _ = _scaled_jumps(cells, ubar, v)
    val, _ = pair_max_bilinear_batch(xi, eta)
    return val


def foc_gap(cells: CellData, ubar, v) -> np.ndarray:
    """``H(ubar) - H(v) - max_mu quotient``; non-negative at an optimal control."""
    ub = _labels(cells, ubar)
    v = _labels(cells, v)
    gap = hamiltonian(cells, ub) - hamiltonian(cells, v) - max_term(cells, ub, v)
    return np.where(ub == v, 0.0, gap)


def quotient(cells: CellData, ubar, v, ell) -> np.ndarray:
    """``<(A(ubar)-A(v)) grad_y, l><(A(ubar)-A(v)) grad_psi, l> / <A(v) l, l>``."""
    ub = _labels(cells, ubar)
    v = _labels(cells, v)
    ell = np.asarray(ell, dtype=float)
    ell = np.broadcast_to(ell, (cells.n, 2)) if ell.ndim == 1 else ell.reshape(cells.n, 2)
    av = _pick(cells.A, v)
    jump = _pick(cells.A, ub) - av
    qy = np.einsum("ea,eab,eb->e", ell, jump, cells.grad_y)
    qp = np.einsum("ea,eab,eb->e", ell, jump, cells.grad_psi)
    return qy * qp / np.einsum("ea,eab,eb->e", ell, av, ell)


def _map_back(s: np.ndarray, nu: np.ndarray) -> np.ndarray:
    ell = np.einsum("eab,eb->ea", s, nu)
    return ell / np.linalg.norm(ell, axis=1)[:, None]


def select_direction(cells: CellData, ubar, v) -> np.ndarray:
    """Direction field attaining the quotient maximum: ``l = A(v)^{-1/2} nu* / |.|``."""
    xi, eta, s = _scaled_jumps(cells, ubar, v)
    _, nu = pair_max_bilinear_batch(xi, eta)
    return _map_back(s, nu)


def orthogonal_direction(cells: CellData, ubar, v) -> np.ndarray:
    """Direction annihilating both jump forms, when the two are dependent.

    In the scaled variables this is the 90-degree rotation of ``xi'`` (or of
    ``eta'`` when ``xi'`` vanishes); with both zero it falls back to ``e1``.
    """
    xi, eta, s = _scaled_jumps(cells, ubar, v)
    base = np.where((np.linalg.norm(xi, axis=1) > 0)[:, None], xi, eta)
    nrm = np.linalg.norm(base, axis=1)
    nu = np.zeros_like(base)
    nu[:, 0] = 1.0
    ok = nrm > 0
    nu[ok] = np.column_stack([-base[ok, 1], base[ok, 0]]) / nrm[ok, None]
    return _map_back(s, nu + 0.0)


def sing_tolerance(cells: CellData) -> float:
    """``max(1e-8, 1e-6 * max |H|)`` over elements and labels."""
    scale = max(float(np.abs(hamiltonian(cells, v)).max()) for v in range(cells.n_labels))
    return max(1e-8, 1e-6 * scale)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


@dataclass
class CandidateReport:
    index: int
    trivial: bool
    changed: np.ndarray  # (ne,) bool
    status: np.ndarray  # (ne,) str
    direction: np.ndarray  # (ne, 2)
    hamiltonian_gap: np.ndarray
    foc_gap: np.ndarray
    quotient: np.ndarray
    orthogonal: np.ndarray  # (ne,) bool: both jump forms vanish along the direction
    singular: bool
    weakly_singular: bool
    max_violation: float

    def counts(self) -> Dict[str, int]:
        return {s: int(np.count_nonzero(self.status == s)) for s in STATUSES}

    def summary(self) -> Dict[str, Any]:
        return {
            "index": self.index,
            "trivial": self.trivial,
            "changed_elements": int(self.changed.sum()),
            "status_counts": self.counts(),
            "singular": self.singular,
            "weakly_singular": self.weakly_singular,
            "orthogonality_all": bool(np.all(self.orthogonal[self.changed])) if self.changed.any() else True,
            "max_violation": self.max_violation,
            "max_abs_foc_gap_changed": float(np.abs(self.foc_gap[self.changed]).max()) if self.changed.any() else 0.0,
        }


@dataclass
class SingularityReport:
    candidates: List[CandidateReport]
    global_label: str
    weak_label: str
    singular_label: str
    tol_sing: float
    max_violation: float
    notes: List[str] = field(default_factory=list)

    def to_dict(self, per_element: bool = True) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "global_label": self.global_label,
            "weak_label": self.weak_label,
            "singular_label": self.singular_label,
            "tol_sing": self.tol_sing,
            "max_violation": self.max_violation,
            "relative_to_probe_set": True,
            "notes": list(self.notes),
            "candidates": [],
        }
        for c in self.candidates:
            d = c.summary()
            if per_element:
                d["status"] = [str(s) for s in c.status]
                d["direction"] = c.direction.tolist()
                d["foc_gap"] = c.foc_gap.tolist()
                d["orthogonal"] = c.orthogonal.astype(bool).tolist()
            out["candidates"].append(d)
        return out


def _aggregate(flags: List[bool], kind: str) -> str:
    if not flags or not any(flags):
        return "nonsingular" if kind == "singular" else "weakly nonsingular"
    if all(flags):
        return f"fully {kind}"
    return f"partially {kind}"


def classify_cells(cells: CellData, ubar, candidates: Sequence[np.ndarray],
                   tol_sing: Optional[float] = None) -> SingularityReport:
    ub = _labels(cells, ubar)
    tol = sing_tolerance(cells) if tol_sing is None else float(tol_sing)
    reports: List[CandidateReport] = []
    notes: List[str] = []
    for k, cand in enumerate(candidates):
        u = _labels(cells, cand)
        changed = u != ub
        hgap = np.where(changed, hamiltonian(cells, ub) - hamiltonian(cells, u), 0.0)
        gap = foc_gap(cells, ub, u)
        sing = np.abs(hgap) <= tol
        ell = np.where(sing[:, None], orthogonal_direction(cells, ub, u), select_direction(cells, ub, u))
        q = np.where(changed, quotient(cells, ub, u, ell), 0.0)
        weak = np.abs(hgap - q) <= tol
        status = np.where(sing, "singular", np.where(weak, "weakly-singular", "strict"))
        av = _pick(cells.A, u)
        jump = _pick(cells.A, ub) - av
        jy = np.einsum("ea,eab,eb->e", ell, jump, cells.grad_y)
        jp = np.einsum("ea,eab,eb->e", ell, jump, cells.grad_psi)
        jscale = np.abs(jump).max(axis=(1, 2))
        oscale = 1e-8 * (1.0 + jscale * (np.linalg.norm(cells.grad_y, axis=1) + np.linalg.norm(cells.grad_psi, axis=1)))
        orth = (np.abs(jy) <= oscale) & (np.abs(jp) <= oscale)
        trivial = not changed.any()
        if trivial:
            notes.append(f"candidate {k} coincides with the reference control")
        reports.append(CandidateReport(
            index=k, trivial=trivial, changed=changed, status=status, direction=ell,
            hamiltonian_gap=hgap, foc_gap=gap, quotient=q, orthogonal=orth,
            singular=bool(np.all(sing)), weakly_singular=bool(np.all(sing | weak)),
            max_violation=float(max(0.0, -gap.min())),
        ))
    nontriv = [r for r in reports if not r.trivial]
    s_flags = [r.singular for r in nontriv]
    w_flags = [r.weakly_singular for r in nontriv]
    s_label = _aggregate(s_flags, "singular")
    w_label = _aggregate(w_flags, "weakly singular")
    if s_label != "nonsingular":
        g_label = s_label
    elif w_label != "weakly nonsingular":
        g_label = w_label
    else:
        g_label = "nonsingular"
    viol = max([r.max_violation for r in reports], default=0.0)
    return SingularityReport(reports, g_label, w_label, s_label, tol, viol, notes)


def classify(problem: Problem, ubar, candidates: Sequence, ybar=None, psibar=None,
             tol_sing: Optional[float] = None) -> SingularityReport:
    """Classify ``ubar`` against each candidate control field.

    Per element: ``singular`` when the Hamiltonian gap vanishes (within
    ``tol_sing``), ``weakly-singular`` when the gap equals the quotient at the
    selected direction, ``strict`` otherwise.  The global labels aggregate
    over the non-trivial candidates and are relative to that probe set.
    """
    ubar = problem.check_control(ubar)
    if isinstance(candidates, np.ndarray) and candidates.ndim == 1:
        candidates = [candidates]
    cands = [problem.check_control(c) for c in candidates]
    if ybar is None:
        ybar = semilinear.solve_state(problem, ubar)
    if psibar is None:
        psibar = semilinear.solve_adjoint(problem, ubar, ybar)
    return classify_cells(cell_data(problem, ybar, psibar), ubar, cands, tol_sing)


def pontryagin_cells(cells: CellData, ubar) -> Tuple[float, int, int]:
    ub = _labels(cells, ubar)
    worst, we, wl = 0.0, -1, -1
    for v in range(cells.n_labels):
        gap = foc_gap(cells, ub, v)
        e = int(np.argmin(gap))
        if -gap[e] > worst:
            worst, we, wl = float(-gap[e]), e, v
    return worst, we, wl


def verify_pontryagin(problem: Problem, ubar, ybar=None, psibar=None) -> Tuple[float, int, int]:
    """``(max violation, worst element, worst label)``; element/label are -1 when no violation."""
    ubar = problem.check_control(ubar)
    if ybar is None:
        ybar = semilinear.solve_state(problem, ubar)
    if psibar is None:
        psibar = semilinear.solve_adjoint(problem, ubar, ybar)
    return pontryagin_cells(cell_data(problem, ybar, psibar), ubar)
