"""Small symmetric positive-definite matrix algebra (dimensions 1, 2, 3).

Everything here is a pure function of its arguments.  Eigen-decompositions
are closed-form for 2x2 and cyclic Jacobi for 3x3, so results do not depend
on which LAPACK build numpy happens to link against.
"""

from __future__ import annotations

import math
from typing import Tuple

import numpy as np

SPD_RATIO = 1e-12
SYM_RTOL = 1e-12
JACOBI_TOL = 1e-14
JACOBI_SWEEPS = 50


class NotSPDError(ValueError):
    """Raised when a matrix fails the symmetric-positive-definite gate."""


# ---------------------------------------------------------------------------
# eigen-decomposition
# ---------------------------------------------------------------------------


def _eigh2(m: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    a, b, d = float(m[0, 0]), 0.5 * float(m[0, 1] + m[1, 0]), float(m[1, 1])
    mean = 0.5 * (a + d)
    rad = math.hypot(0.5 * (a - d), b)
    w = np.array([mean - rad, mean + rad])
    if b == 0.0:
        if a <= d:
            return w, np.eye(2)
        return w, np.array([[0.0, 1.0], [1.0, 0.0]])
    # rotation angle diagonalising [[a,b],[b,d]]
    phi = 0.5 * math.atan2(2.0 * b, a - d)
    c, s = math.cos(phi), math.sin(phi)
    # (c, s) is the eigenvector of the larger eigenvalue
    v = np.array([[-s, c], [c, s]])
    return w, v


def _eigh3(m: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    m = np.asarray(m, dtype=float)
    # plain floats: numpy per-rotation overhead dominates at this size
    a = (0.5 * (m + m.T)).tolist()
    v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    scale = max(max(abs(x) for x in row) for row in a) or np.finfo(float).tiny
    for _ in range(JACOBI_SWEEPS):
        off = math.sqrt(a[0][1] ** 2 + a[0][2] ** 2 + a[1][2] ** 2)
        if off <= JACOBI_TOL * scale:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[p][q]
            if apq == 0.0:
                continue
            tau = (a[q][q] - a[p][p]) / (2.0 * apq)
            t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
            c = 1.0 / math.sqrt(1.0 + t * t)
            s = t * c
            # a <- R^T a R and v <- v R with R the (p, q) plane rotation
            for k in range(3):
                akp, akq = a[k][p], a[k][q]
                a[k][p], a[k][q] = c * akp - s * akq, s * akp + c * akq
            for k in range(3):
                apk, aqk = a[p][k], a[q][k]
                a[p][k], a[q][k] = c * apk - s * aqk, s * apk + c * aqk
            for k in range(3):
                vkp, vkq = v[k][p], v[k][q]
                v[k][p], v[k][q] = c * vkp - s * vkq, s * vkp + c * vkq
    w = np.array([a[0][0], a[1][1], a[2][2]])
    order = np.argsort(w, kind="stable")
    return w[order], np.array(v)[:, order]


def spd_eigh(m) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix."""
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    if m.shape != (n, n) or n not in (1, 2, 3):
        raise ValueError(f"expected a square matrix of size 1..3, got {m.shape}")
    if n == 1:
        return m[0].copy(), np.ones((1, 1))
    if n == 2:
        return _eigh2(m)
    return _eigh3(m)


def check_spd(m, name: str = "matrix") -> np.ndarray:
    """Return ``m`` as a float array, raising :class:`NotSPDError` if it is not SPD.

    A matrix passes when it is symmetric to a relative tolerance of 1e-12 and
    its smallest eigenvalue exceeds ``1e-12`` times its largest.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] not in (1, 2, 3):
        raise NotSPDError(f"{name}: expected a 1x1, 2x2 or 3x3 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NotSPDError(f"{name}: non-finite entries")
    scale = max(np.abs(m).max(), np.finfo(float).tiny)
    if np.abs(m - m.T).max() > SYM_RTOL * scale:
        raise NotSPDError(f"{name}: not symmetric")
    w, _ = spd_eigh(m)
    if not (w[-1] > 0.0 and w[0] > SPD_RATIO * w[-1]):
        raise NotSPDError(f"{name}: eigenvalues {w} fail the positivity gate")
    return m


def _spectral(m, fn) -> np.ndarray:
    m = check_spd(m)
    w, v = spd_eigh(m)
    out = (v * fn(w)) @ v.T
    return 0.5 * (out + out.T)


def spd_inverse(m) -> np.ndarray:
    """Inverse of an SPD matrix (closed form for n <= 2, spectral for n = 3)."""
    m = check_spd(m)
    n = m.shape[0]
    if n == 1:
        return 1.0 / m
    if n == 2:
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det
    return _spectral(m, lambda w: 1.0 / w)


def spd_sqrt(m) -> np.ndarray:
    """Principal (SPD) square root."""
    return _spectral(m, np.sqrt)


def spd_inv_sqrt(m) -> np.ndarray:
    """``M^{-1/2}``, the SPD inverse of :func:`spd_sqrt`."""
    return _spectral(m, lambda w: 1.0 / np.sqrt(w))


def loewner_min_eig(m) -> float:
    """Smallest eigenvalue of a symmetric matrix (used for SPD-order checks)."""
    m = np.asarray(m, dtype=float)
    return float(spd_eigh(0.5 * (m + m.T))[0][0])


# ---------------------------------------------------------------------------
# sphere maximum of a product of two linear forms
# ---------------------------------------------------------------------------


def _orthogonal_unit(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    xh = x / np.linalg.norm(x)
    if n == 2:
        return np.array([-xh[1], xh[0]]) + 0.0
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        r = e - (e @ xh) * xh
        nr = np.linalg.norm(r)
        if nr > 1e-8:
            return r / nr
    raise AssertionError("unreachable: no standard basis vector independent of x")


def pair_max_bilinear(xi, eta) -> Tuple[float, np.ndarray]:
    """Maximise ``<mu, xi><mu, eta>`` over the unit sphere.

    Returns ``(value, maximizer)`` with value ``(|xi||eta| + <xi,eta>)/2``.
    The maximiser is the unit bisector of ``xi`` and ``eta``.  Ties are broken
    deterministically: if either vector vanishes the maximiser is ``e1``; if
    they are exactly antiparallel it is the 90-degree rotation of ``xi`` in
    2-D, or the first Gram-Schmidt completion against the standard basis in
    3-D.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    n = xi.shape[0]
    if n < 2:
        raise ValueError("pair_max_bilinear needs dimension >= 2")
    nx, ne = float(np.linalg.norm(xi)), float(np.linalg.norm(eta))
    if nx == 0.0 or ne == 0.0:
        e1 = np.zeros(n)
        e1[0] = 1.0
        return 0.0, e1
    value = 0.5 * (nx * ne + float(xi @ eta))
    bis = xi / nx + eta / ne
    nb = float(np.linalg.norm(bis))
    if nb <= 1e-14:
        return 0.0, _orthogonal_unit(xi)
    return max(value, 0.0), bis / nb


def pair_max_bilinear_batch(xi, eta) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`pair_max_bilinear` over leading axis ``(k, n)``."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    nx = np.linalg.norm(xi, axis=1)
    ne = np.linalg.norm(eta, axis=1)
    value = 0.5 * (nx * ne + np.einsum("ki,ki->k", xi, eta))
    with np.errstate(invalid="ignore", divide="ignore"):
        bis = xi / nx[:, None] + eta / ne[:, None]
    nb = np.linalg.norm(bis, axis=1)
    mu = np.zeros_like(xi)
    mu[:, 0] = 1.0
    ok = (nx > 0) & (ne > 0) & (nb > 1e-14)
    mu[ok] = bis[ok] / nb[ok, None]
    value = np.where((nx > 0) & (ne > 0), np.maximum(value, 0.0), 0.0)
    anti = (nx > 0) & (ne > 0) & ~ok
    for k in np.flatnonzero(anti):
        value[k] = 0.0
        mu[k] = _orthogonal_unit(xi[k])
    return value, mu


# ---------------------------------------------------------------------------
# two-phase mixing formula and its algebraic identity
# ---------------------------------------------------------------------------


def mixing_matrix(b1, b2, alpha: float, mu) -> np.ndarray:
    """Rank-one corrected mixture of two SPD matrices.

    ``G = a B1 + (1-a) B2 - a(1-a) (B2-B1) mu mu^T (B2-B1) / mu^T [a B2 + (1-a) B1] mu``.
    It lies between the weighted harmonic and arithmetic means and does not
    depend on the length of ``mu``.
    """
    b1 = check_spd(b1, "B1")
    b2 = check_spd(b2, "B2")
    mu = np.asarray(mu, dtype=float)
    if not np.any(mu):
        raise ValueError("mu must be nonzero")
    d = b2 - b1
    dm = d @ mu
    den = mu @ (alpha * b2 + (1.0 - alpha) * b1) @ mu
    g = alpha * b1 + (1.0 - alpha) * b2 - alpha * (1.0 - alpha) * np.outer(dm, dm) / den
    return 0.5 * (g + g.T)


def harmonic_mean(b1, b2, alpha: float) -> np.ndarray:
    """``(a B1^{-1} + (1-a) B2^{-1})^{-1}``."""
    h = spd_inverse(alpha * spd_inverse(b1) + (1.0 - alpha) * spd_inverse(b2))
    return 0.5 * (h + h.T)


def arithmetic_mean(b1, b2, alpha: float) -> np.ndarray:
    return alpha * np.asarray(b1, dtype=float) + (1.0 - alpha) * np.asarray(b2, dtype=float)


def mixing_bounds_margin(b1, b2, alpha: float, mu) -> Tuple[float, float]:
    """Smallest eigenvalues of ``G - harmonic`` and ``arithmetic - G``.

    Both are non-negative (up to rounding) when the two-sided bound holds.
    """
    g = mixing_matrix(b1, b2, alpha, mu)
    return (
        loewner_min_eig(g - harmonic_mean(b1, b2, alpha)),
        loewner_min_eig(arithmetic_mean(b1, b2, alpha) - g),
    )


def mixing_identity_residual(b1, b2, alpha: float) -> float:
    """Frobenius residual of the full-inverse mixing identity.

    With ``C = a B2 + (1-a) B1`` the identity reads
    ``a B1 + (1-a) B2 - a(1-a)(B2-B1) C^{-1} (B2-B1) = (a B1^{-1} + (1-a) B2^{-1})^{-1}``.
    """
    b1 = check_spd(b1, "B1")
    b2 = check_spd(b2, "B2")
    c = alpha * b2 + (1.0 - alpha) * b1
    d = b2 - b1
    lhs = alpha * b1 + (1.0 - alpha) * b2 - alpha * (1.0 - alpha) * d @ spd_inverse(c) @ d
    rhs = harmonic_mean(b1, b2, alpha)
    return float(np.linalg.norm(lhs - rhs))


# ---------------------------------------------------------------------------
# batched 2x2 helpers (element fields)
# ---------------------------------------------------------------------------


def batch_inv_sqrt_2x2(m: np.ndarray) -> np.ndarray:
    """``M^{-1/2}`` for a stack ``(k, 2, 2)`` of SPD matrices.

    Uses the Cayley-Hamilton form ``sqrt(M) = (M + sqrt(det) I)/sqrt(tr + 2 sqrt(det))``.
    """
    det = m[:, 0, 0] * m[:, 1, 1] - m[:, 0, 1] * m[:, 1, 0]
    if np.any(det <= 0):
        raise NotSPDError("non-positive determinant in batch")
    s = np.sqrt(det)
    t = np.sqrt(m[:, 0, 0] + m[:, 1, 1] + 2.0 * s)
    root = (m + s[:, None, None] * np.eye(2)[None]) / t[:, None, None]
    rd = root[:, 0, 0] * root[:, 1, 1] - root[:, 0, 1] * root[:, 1, 0]
    inv = np.empty_like(root)
    inv[:, 0, 0] = root[:, 1, 1]
    inv[:, 1, 1] = root[:, 0, 0]
    inv[:, 0, 1] = -root[:, 0, 1]
    inv[:, 1, 0] = -root[:, 1, 0]
    return inv / rd[:, None, None]


def random_spd(rng: np.random.Generator, dim: int, lo: float = 0.2, hi: float = 5.0) -> np.ndarray:
    """Random SPD matrix with eigenvalues uniform in ``[lo, hi]`` (test helper)."""
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    w = rng.uniform(lo, hi, size=dim)
    m = (q * w) @ q.T
    return 0.5 * (m + m.T)
