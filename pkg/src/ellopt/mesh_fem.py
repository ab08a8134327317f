"""P1 finite elements on a structured triangulation of the unit square.

Every grid cell ``[i/m,(i+1)/m] x [j/m,(j+1)/m]`` is cut along the same
diagonal into two counter-clockwise triangles.  Node ``k = j*(m+1) + i`` sits
at ``(i/m, j/m)``; cell ``(i, j)`` owns elements ``2*(j*m+i)`` and
``2*(j*m+i)+1``.  Dirichlet conditions are imposed by dropping boundary
unknowns, so all assembled systems live on interior nodes only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .tensor import NotSPDError

log = logging.getLogger(__name__)

CG_TOL = 1e-10

# 7-point, degree-5 rule on the reference triangle (barycentric coords, weights sum to 1)
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_W0, _W1, _W2 = 0.225, 0.132394152788506, 0.125939180544827
QUAD7_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [_A1, _B1, _B1],
        [_B1, _A1, _B1],
        [_B1, _B1, _A1],
        [_A2, _B2, _B2],
        [_B2, _A2, _B2],
        [_B2, _B2, _A2],
    ]
)
QUAD7_W = np.array([_W0, _W1, _W1, _W1, _W2, _W2, _W2])


class SolverError(RuntimeError):
    """A linear or nonlinear solve did not reach its tolerance."""

    def __init__(self, message: str, residual: float, history=None):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual
        self.history = list(history) if history is not None else []


@dataclass(frozen=True, eq=False)
class Mesh:
    m: int
    nodes: np.ndarray  # (nn, 2)
    elements: np.ndarray  # (ne, 3) node indices, counter-clockwise
    boundary: np.ndarray  # (nn,) bool
    areas: np.ndarray  # (ne,)
    grads: np.ndarray  # (ne, 3, 2) gradients of the local hat functions
    centroids: np.ndarray  # (ne, 2)
    free: np.ndarray = field(repr=False)  # interior node indices
    _rows: np.ndarray = field(repr=False)
    _cols: np.ndarray = field(repr=False)
    _free_rows: np.ndarray = field(repr=False)
    _free_cols: np.ndarray = field(repr=False)
    _keep: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.m


def build_mesh(m: int) -> Mesh:
    """Structured mesh with ``m`` cells per side, ``2 m^2`` triangles."""
    if int(m) != m or m < 2:
        raise ValueError(f"mesh resolution must be an integer >= 2, got {m!r}")
    m = int(m)
    ii, jj = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="xy")
    nodes = np.column_stack([ii.ravel() / m, jj.ravel() / m])
    ci, cj = np.meshgrid(np.arange(m), np.arange(m), indexing="xy")
    ci, cj = ci.ravel(), cj.ravel()
    n00 = cj * (m + 1) + ci
    n10 = n00 + 1
    n11 = n00 + m + 2
    n01 = n00 + m + 1
    elements = np.empty((2 * m * m, 3), dtype=np.int64)
    elements[0::2] = np.column_stack([n00, n10, n11])
    elements[1::2] = np.column_stack([n00, n11, n01])

    x = nodes[:, 0]
    y = nodes[:, 1]
    boundary = (ii.ravel() == 0) | (ii.ravel() == m) | (jj.ravel() == 0) | (jj.ravel() == m)

    p = nodes[elements]  # (ne, 3, 2)
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    areas = 0.5 * det
    # gradients of barycentric coordinates: rows of inv([e1 e2])^T
    g1 = np.column_stack([e2[:, 1], -e2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-e1[:, 1], e1[:, 0]]) / det[:, None]
    grads = np.stack([-g1 - g2, g1, g2], axis=1)
    centroids = p.mean(axis=1)
    del x, y

    free = np.flatnonzero(~boundary)
    g2f = -np.ones(nodes.shape[0], dtype=np.int64)
    g2f[free] = np.arange(free.size)
    rows = np.repeat(elements, 3, axis=1).ravel()
    cols = np.tile(elements, (1, 3)).ravel()
    fr, fc = g2f[rows], g2f[cols]
    keep = (fr >= 0) & (fc >= 0)
    return Mesh(
        m=m, nodes=nodes, elements=elements, boundary=boundary, areas=areas, grads=grads,
        centroids=centroids, free=free, _rows=rows, _cols=cols,
        _free_rows=fr[keep], _free_cols=fc[keep], _keep=keep,
    )


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


@dataclass
class LinearSystem:
    """Sparse SPD matrix over interior nodes (or all nodes when ``full``)."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    n_nodes: int
    full: bool = False


def _check_coeff(coeff: np.ndarray, ne: int) -> np.ndarray:
    coeff = np.asarray(coeff, dtype=float)
    if coeff.shape == (2, 2):
        coeff = np.broadcast_to(coeff, (ne, 2, 2))
    if coeff.shape != (ne, 2, 2):
        raise ValueError(f"coefficient field must have shape ({ne}, 2, 2), got {coeff.shape}")
    scale = np.abs(coeff).max(axis=(1, 2))
    if np.any(np.abs(coeff[:, 0, 1] - coeff[:, 1, 0]) > 1e-12 * np.maximum(scale, 1e-300)):
        raise NotSPDError("coefficient field is not symmetric")
    det = coeff[:, 0, 0] * coeff[:, 1, 1] - coeff[:, 0, 1] * coeff[:, 1, 0]
    if np.any(coeff[:, 0, 0] <= 0) or np.any(det <= 1e-12 * scale**2):
        raise NotSPDError("coefficient field is not positive definite")
    return np.ascontiguousarray(coeff)


def element_matrices(mesh: Mesh, coeff, reaction=None, mass: str = "centroid") -> np.ndarray:
    coeff = _check_coeff(coeff, mesh.n_elements)
    if reaction is not None:
        reaction = np.asarray(reaction, dtype=float)
        if reaction.shape == ():
            reaction = np.full(mesh.n_elements, float(reaction))
        if np.any(reaction < 0):
            raise ValueError("reaction coefficient must be non-negative")
        if not np.any(reaction):
            reaction = None
    if mass not in ("centroid", "consistent"):
        raise ValueError(f"unknown mass rule {mass!r}")
    return _kernels.element_matrices(
        mesh.grads, mesh.areas, coeff, reaction, consistent_mass=(mass == "consistent")
    )


def assemble(mesh: Mesh, coeff, reaction=None, rhs=None, *, mass: str = "centroid",
             full: bool = False) -> LinearSystem:
    """Assemble ``-div(coeff grad y) + reaction*y`` with Dirichlet elimination.

    ``reaction`` (per element, >= 0) is integrated with the centroid rule by
    default, i.e. ``area * r / 9`` in every local entry, matching how nonlinear
    terms are sampled at element centroids; ``mass="consistent"`` uses the
    exact P1 mass.  ``rhs`` is a nodal load vector over all nodes.
    """
    ke = element_matrices(mesh, coeff, reaction, mass).ravel()
    nn = mesh.n_nodes
    if full:
        mat = sp.coo_matrix((ke, (mesh._rows, mesh._cols)), shape=(nn, nn)).tocsr()
        b = np.zeros(nn) if rhs is None else np.asarray(rhs, dtype=float).copy()
        return LinearSystem(mat, b, np.arange(nn), nn, full=True)
    nf = mesh.free.size
    mat = sp.coo_matrix(
        (ke[mesh._keep], (mesh._free_rows, mesh._free_cols)), shape=(nf, nf)
    ).tocsr()
    mat.sort_indices()
    b = np.zeros(nf) if rhs is None else np.asarray(rhs, dtype=float)[mesh.free].copy()
    return LinearSystem(mat, b, mesh.free, nn)


def load_scalar(mesh: Mesh, g) -> np.ndarray:
    """Nodal load ``sum_e g_e * area_e / 3`` (one-point rule), over all nodes."""
    g = np.broadcast_to(np.asarray(g, dtype=float), (mesh.n_elements,))
    w = np.repeat(g * mesh.areas / 3.0, 3)
    return np.bincount(mesh.elements.ravel(), weights=w, minlength=mesh.n_nodes)


def load_flux(mesh: Mesh, q) -> np.ndarray:
    """Nodal vector ``int q . grad(phi_i)`` for a per-element vector field ``q``."""
    q = np.asarray(q, dtype=float)
    w = np.einsum("eia,ea->ei", mesh.grads, q) * mesh.areas[:, None]
    return np.bincount(mesh.elements.ravel(), weights=w.ravel(), minlength=mesh.n_nodes)


def load_divergence(mesh: Mesh, theta, w) -> np.ndarray:
    """Weak form of ``div(theta grad w)``: entry i is ``-int theta grad w . grad phi_i``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape == (2, 2):
        theta = np.broadcast_to(theta, (mesh.n_elements, 2, 2))
    flux = np.einsum("eab,eb->ea", theta, gradient(mesh, w))
    return -load_flux(mesh, flux)


def solve_cg(system: LinearSystem, tol: float = CG_TOL, maxiter: Optional[int] = None,
             x0: Optional[np.ndarray] = None) -> np.ndarray:
    """Jacobi-PCG solve; returns a nodal field with zero boundary values."""
    n = system.rhs.size
    maxiter = 20 * n if maxiter is None else maxiter
    start = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)[system.free]
    x, it, res = _kernels.pcg(system.matrix, system.rhs, start, tol, maxiter)
    if res > tol:
        raise SolverError(f"CG did not converge in {it} iterations", float(res))
    log.debug("cg: %d iterations, residual %.2e", it, res)
    if system.full:
        return np.asarray(x)
    out = np.zeros(system.n_nodes)
    out[system.free] = x
    return out


def solve(mesh: Mesh, coeff, load, reaction=None, tol: float = CG_TOL, mass: str = "centroid"):
    """Convenience: assemble and solve with a nodal load vector."""
    return solve_cg(assemble(mesh, coeff, reaction, load, mass=mass), tol=tol)


# ---------------------------------------------------------------------------
# field utilities
# ---------------------------------------------------------------------------


def gradient(mesh: Mesh, u) -> np.ndarray:
    """Per-element gradient ``(ne, 2)`` of a nodal P1 field."""
    u = np.asarray(u, dtype=float)
    return np.einsum("eia,ei->ea", mesh.grads, u[mesh.elements])


def centroid_values(mesh: Mesh, u) -> np.ndarray:
    """Value of a nodal P1 field at element centroids."""
    return np.asarray(u, dtype=float)[mesh.elements].mean(axis=1)


def interpolate(mesh: Mesh, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
    u = np.asarray(fn(mesh.nodes[:, 0], mesh.nodes[:, 1]), dtype=float)
    return np.broadcast_to(u, (mesh.n_nodes,)).copy()


def integrate(mesh: Mesh, values) -> float:
    """``sum_e area_e * values_e`` for per-element values."""
    v = np.broadcast_to(np.asarray(values, dtype=float), (mesh.n_elements,))
    return float(mesh.areas @ v)


def norms(mesh: Mesh, u) -> Tuple[float, float]:
    """Exact L2 norm and H1 seminorm of a nodal P1 field."""
    ue = np.asarray(u, dtype=float)[mesh.elements]
    l2sq = mesh.areas @ ((ue**2).sum(axis=1) + ue.sum(axis=1) ** 2) / 12.0
    g = gradient(mesh, u)
    h1sq = mesh.areas @ (g**2).sum(axis=1)
    return float(np.sqrt(max(l2sq, 0.0))), float(np.sqrt(h1sq))


def error_norms(mesh: Mesh, u, exact: Callable, exact_grad: Callable) -> Tuple[float, float]:
    """L2 and H1-seminorm distance between a P1 field and a smooth function.

    Both integrals use a 7-point degree-5 rule per triangle.
    """
    u = np.asarray(u, dtype=float)
    ue = u[mesh.elements]  # (ne, 3)
    p = mesh.nodes[mesh.elements]  # (ne, 3, 2)
    pts = np.einsum("qi,eia->eqa", QUAD7_BARY, p)
    uh = np.einsum("qi,ei->eq", QUAD7_BARY, ue)
    ex = exact(pts[..., 0], pts[..., 1])
    gx, gy = exact_grad(pts[..., 0], pts[..., 1])
    gh = gradient(mesh, u)
    l2 = mesh.areas @ ((uh - ex) ** 2 @ QUAD7_W)
    h1 = mesh.areas @ (((gh[:, None, 0] - gx) ** 2 + (gh[:, None, 1] - gy) ** 2) @ QUAD7_W)
    return float(np.sqrt(l2)), float(np.sqrt(h1))


def observed_orders(hs, errors) -> np.ndarray:
    """Pairwise log2-ratio convergence orders for successive refinements."""
    hs = np.asarray(hs, dtype=float)
    e = np.asarray(errors, dtype=float)
    return np.log(e[:-1] / e[1:]) / np.log(hs[:-1] / hs[1:])
