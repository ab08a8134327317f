"""Laminate microstructures and their effective (H-limit) coefficients.

A laminate fills each region with phase ``B`` where the fractional part of
``<x/eps, mu>`` is below ``alpha`` and phase ``C`` elsewhere.  As ``eps -> 0``
the solutions converge to the solution with the closed-form coefficient

    G_hat = a B + (1-a) C - a(1-a) (B-C) l l^T (B-C) / ((1-a) l^T B l + a l^T C l),

``l = mu/|mu|``.  Directions are rational so the microstructure is periodic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from . import mesh_fem as fem
from .tensor import check_spd

RESOLUTION = 8  # minimum number of elements per period


def _rational(mu) -> Tuple[Fraction, ...]:
    out = []
    for c in mu:
        if isinstance(c, Fraction):
            out.append(c)
        elif isinstance(c, (int, np.integer)):
            out.append(Fraction(int(c)))
        elif isinstance(c, str):
            out.append(Fraction(c))
        elif isinstance(c, (tuple, list)) and len(c) == 2:
            num, den = int(c[0]), int(c[1])
            if den <= 0:
                raise ValueError("denominators must be positive")
            out.append(Fraction(num, den))
        else:
            raise TypeError(f"direction component {c!r} is not rational; pass a Fraction, int, 'p/q' or (p, q)")
    if not any(out):
        raise ValueError("direction must be nonzero")
    return tuple(out)


@dataclass(eq=False)
class Laminate:
    """Two-phase laminate with rational direction(s).

    ``regions`` optionally assigns a different direction to subsets of
    elements: a list of ``(mask, mu)`` pairs whose masks partition the mesh.
    """

    B: np.ndarray
    C: np.ndarray
    alpha: float
    mu: Tuple[Fraction, ...]
    regions: Optional[List[Tuple[np.ndarray, Tuple[Fraction, ...]]]] = None

    def __post_init__(self) -> None:
        self.B = check_spd(self.B, "B")
        self.C = check_spd(self.C, "C")
        if self.B.shape != (2, 2) or self.C.shape != (2, 2):
            raise ValueError("laminate phases must be 2x2 on the planar mesh")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("volume fraction must lie in (0, 1)")
        self.mu = _rational(self.mu)
        if self.regions is not None:
            self.regions = [(np.asarray(m, dtype=bool), _rational(v)) for m, v in self.regions]
            cover = np.sum([m.astype(int) for m, _ in self.regions], axis=0)
            if np.any(cover != 1):
                raise ValueError("regions must partition the elements")

    def directions(self, n_elements: int) -> np.ndarray:
        """Per-element direction (float, not normalised)."""
        out = np.broadcast_to(np.array([float(c) for c in self.mu]), (n_elements, 2)).copy()
        if self.regions is not None:
            for mask, mu in self.regions:
                if mask.shape != (n_elements,):
                    raise ValueError("region mask does not match the mesh")
                out[mask] = [float(c) for c in mu]
        return out

    def max_direction_norm(self) -> float:
        mus = [self.mu] if self.regions is None else [m for _, m in self.regions]
        return max(math.sqrt(sum(float(c) ** 2 for c in m)) for m in mus)


def laminate_field(lam: Laminate, mesh: fem.Mesh, eps: float) -> np.ndarray:
    """Per-element coefficient: ``B`` where ``frac(<centroid/eps, mu>) < alpha``, else ``C``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    mu = lam.directions(mesh.n_elements)
    t = np.einsum("ea,ea->e", mesh.centroids / eps, mu)
    phase_b = (t - np.floor(t)) < lam.alpha
    return np.where(phase_b[:, None, None], lam.B, lam.C)


def hlimit_matrix(B, C, alpha: float, mu) -> np.ndarray:
    """Effective coefficient of a single laminate (scale-free in ``mu``)."""
    B = np.asarray(B, dtype=float)
    C = np.asarray(C, dtype=float)
    ell = np.asarray([float(c) for c in mu])
    ell = ell / np.linalg.norm(ell)
    d = (B - C) @ ell
    den = (1.0 - alpha) * ell @ B @ ell + alpha * ell @ C @ ell
    g = alpha * B + (1.0 - alpha) * C - alpha * (1.0 - alpha) * np.outer(d, d) / den
    return 0.5 * (g + g.T)


def hlimit_laminate(lam: Laminate, n_elements: int) -> np.ndarray:
    """Per-element effective coefficient field ``(n_elements, 2, 2)``."""
    if lam.regions is None:
        return np.broadcast_to(hlimit_matrix(lam.B, lam.C, lam.alpha, lam.mu), (n_elements, 2, 2)).copy()
    out = np.empty((n_elements, 2, 2))
    for mask, mu in lam.regions:
        out[mask] = hlimit_matrix(lam.B, lam.C, lam.alpha, mu)
    return out


@dataclass
class SweepRow:
    eps: float
    l2: float
    h1: float
    b_fraction: float


def epsilon_sweep(lam: Laminate, mesh: fem.Mesh, g, eps_list: Sequence[float],
                  threads: int = 1, cg_tol: float = 1e-12) -> List[SweepRow]:
    """Distance between oscillating-coefficient solutions and the H-limit solution.

    ``g`` is a per-element source.  Each ``eps`` must give at least eight
    elements per period: ``eps / |mu| >= 8 / m``.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps list must be strictly decreasing")
    mu_norm = lam.max_direction_norm()
    for e in eps_list:
        if e / mu_norm < RESOLUTION / mesh.m * (1.0 - 1e-12):
            raise ValueError(f"eps={e} under-resolved on m={mesh.m}: need eps/|mu| >= {RESOLUTION}/m")
    load = fem.load_scalar(mesh, g)
    y_hom = fem.solve(mesh, hlimit_laminate(lam, mesh.n_elements), load, tol=cg_tol)

    def row(e):
        coeff = laminate_field(lam, mesh, e)
        y = fem.solve(mesh, coeff, load, tol=cg_tol)
        l2, h1 = fem.norms(mesh, y - y_hom)
        frac = float(mesh.areas @ np.all(coeff == lam.B, axis=(1, 2)))
        return SweepRow(e, l2, h1, frac)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(row, eps_list))
    return [row(e) for e in eps_list]


def decimal_measure(nu: Sequence[int], alpha: float, n_grid: int) -> float:
    """Midpoint-rule measure of ``{z in [0,1]^n : frac(<nu, z>) < alpha}``."""
    nu_arr = np.asarray(nu)
    if nu_arr.ndim != 1 or nu_arr.size not in (1, 2, 3):
        raise ValueError("nu must have 1, 2 or 3 components")
    if not np.all(nu_arr == np.round(nu_arr)):
        raise ValueError("nu must be an integer vector")
    if not np.any(nu_arr):
        raise ValueError("nu must be nonzero")
    if n_grid < 100:
        raise ValueError("need at least 100 grid points per axis")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    count = _kernels.decimal_count(nu_arr.astype(float), alpha, int(n_grid))
    return count / float(n_grid) ** nu_arr.size


@dataclass
class Corrector:
    X: np.ndarray
    slope_B: np.ndarray
    slope_C: np.ndarray

    def closure(self, alpha: float) -> np.ndarray:
        """Zero-mean condition of the periodic corrector: ``a*sB + (1-a)*sC``."""
        return alpha * self.slope_B + (1.0 - alpha) * self.slope_C


def corrector_1d(B, C, alpha: float, mu) -> Corrector:
    """Slopes of the piecewise-linear laminate corrector along unit direction ``mu``.

    ``X = [a (m^T C m) B m + (1-a)(m^T B m) C m] / m^T[a C + (1-a) B] m``, and the
    corrector slopes are ``(X - B m)/(m^T B m)`` in phase B and
    ``(X - C m)/(m^T C m)`` in phase C.
    """
    B = check_spd(B, "B")
    C = check_spd(C, "C")
    m = np.asarray(mu, dtype=float)
    if abs(np.linalg.norm(m) - 1.0) > 1e-12:
        raise ValueError("corrector direction must be a unit vector")
    bm, cm = B @ m, C @ m
    mbm, mcm = m @ bm, m @ cm
    X = (alpha * mcm * bm + (1.0 - alpha) * mbm * cm) / (m @ (alpha * C + (1.0 - alpha) * B) @ m)
    return Corrector(X, (X - bm) / mbm, (X - cm) / mcm)


def reconstruct_hlimit(B, C, alpha: float, mu, corr: Corrector) -> np.ndarray:
    """Average of ``G (I + grad phi^T)`` over the cell for the 1-D corrector."""
    B = np.asarray(B, dtype=float)
    C = np.asarray(C, dtype=float)
    m = np.asarray(mu, dtype=float)
    return (
        alpha * (B + np.outer(B @ m, corr.slope_B))
        + (1.0 - alpha) * (C + np.outer(C @ m, corr.slope_C))
    )
