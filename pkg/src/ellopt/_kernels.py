"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import from the ``ELLOPT_NUMBA`` environment
variable (``0``/``false``/``off`` disables numba) and can be switched later
with :func:`set_backend`.  Both paths compute the same quantities; the test
suite checks them against each other.
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - import guard
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False


def _env_wants_numba() -> bool:
    flag = os.environ.get("ELLOPT_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


_backend = "numba" if (HAVE_NUMBA and _env_wants_numba()) else "numpy"


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    """Select ``"numba"`` or ``"numpy"`` kernels for subsequent calls."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not importable")
    _backend = name


# ---------------------------------------------------------------------------
# element matrices
# ---------------------------------------------------------------------------


def _element_matrices_numpy(grads, areas, coeff, reaction, consistent_mass):
    ke = np.einsum("eia,eab,ejb->eij", grads, coeff, grads) * areas[:, None, None]
    if reaction is not None:
        if consistent_mass:
            local = (np.ones((3, 3)) + np.eye(3)) / 12.0
        else:
            local = np.full((3, 3), 1.0 / 9.0)
        ke = ke + (reaction * areas)[:, None, None] * local[None]
    return ke


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _element_matrices_jit(grads, areas, coeff, reaction, has_reaction, consistent_mass):
        ne = grads.shape[0]
        out = np.empty((ne, 3, 3))
        for e in range(ne):
            a = areas[e]
            for i in range(3):
                # A @ grad_i
                t0 = coeff[e, 0, 0] * grads[e, i, 0] + coeff[e, 0, 1] * grads[e, i, 1]
                t1 = coeff[e, 1, 0] * grads[e, i, 0] + coeff[e, 1, 1] * grads[e, i, 1]
                for j in range(3):
                    out[e, j, i] = a * (grads[e, j, 0] * t0 + grads[e, j, 1] * t1)
            if has_reaction:
                r = reaction[e] * a
                for i in range(3):
                    for j in range(3):
                        if consistent_mass:
                            out[e, i, j] += r * (2.0 if i == j else 1.0) / 12.0
                        else:
                            out[e, i, j] += r / 9.0
        return out


def element_matrices(grads, areas, coeff, reaction=None, consistent_mass=False):
    """Local 3x3 matrices ``area * G A G^T`` plus an optional reaction mass.

    ``reaction`` is one non-negative value per element.  The default mass is
    the one-point centroid rule (``area/9`` in every entry), which is what the
    centroid-sampled nonlinearity differentiates to; ``consistent_mass``
    switches to the exact P1 mass matrix.
    """
    if _backend == "numba" and coeff.shape[1] == 2:
        has = reaction is not None
        r = reaction if has else np.zeros(1)
        return _element_matrices_jit(
            grads, areas, np.ascontiguousarray(coeff, dtype=float), np.asarray(r, dtype=float),
            has, consistent_mass,
        )
    return _element_matrices_numpy(grads, areas, coeff, reaction, consistent_mass)


# ---------------------------------------------------------------------------
# preconditioned conjugate gradients on CSR
# ---------------------------------------------------------------------------


def _pcg_numpy(matrix, b, x0, dinv, tol, maxiter):
    x = x0.copy()
    r = b - matrix @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0
    z = dinv * r
    p = z.copy()
    rz = r @ z
    res = np.linalg.norm(r) / bnorm
    it = 0
    while res > tol and it < maxiter:
        q = matrix @ p
        pq = p @ q
        if pq <= 0.0:
            break
        step = rz / pq
        x += step * p
        r -= step * q
        res = np.linalg.norm(r) / bnorm
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
    return x, it, res


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _csr_matvec(indptr, indices, data, v, out):
        n = indptr.shape[0] - 1
        for i in range(n):
            s = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                s += data[k] * v[indices[k]]
            out[i] = s

    @njit(cache=True, nogil=True)
    def _pcg_jit(indptr, indices, data, b, x0, dinv, tol, maxiter):
        n = b.shape[0]
        x = x0.copy()
        q = np.empty(n)
        _csr_matvec(indptr, indices, data, x, q)
        r = b - q
        bnorm = np.sqrt(np.dot(b, b))
        if bnorm == 0.0:
            return np.zeros(n), 0, 0.0
        z = dinv * r
        p = z.copy()
        rz = np.dot(r, z)
        res = np.sqrt(np.dot(r, r)) / bnorm
        it = 0
        while res > tol and it < maxiter:
            _csr_matvec(indptr, indices, data, p, q)
            pq = np.dot(p, q)
            if pq <= 0.0:
                break
            step = rz / pq
            for i in range(n):
                x[i] += step * p[i]
                r[i] -= step * q[i]
            res = np.sqrt(np.dot(r, r)) / bnorm
            for i in range(n):
                z[i] = dinv[i] * r[i]
            rz_new = np.dot(r, z)
            beta = rz_new / rz
            for i in range(n):
                p[i] = z[i] + beta * p[i]
            rz = rz_new
            it += 1
        return x, it, res


def pcg(matrix, b, x0, tol, maxiter):
    """Jacobi-preconditioned CG; returns ``(x, iterations, relative residual)``."""
    dinv = 1.0 / matrix.diagonal()
    b = np.asarray(b, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if _backend == "numba":
        return _pcg_jit(
            matrix.indptr.astype(np.int64), matrix.indices.astype(np.int64), matrix.data,
            b, x0, dinv, float(tol), int(maxiter),
        )
    return _pcg_numpy(matrix, b, x0, dinv, tol, maxiter)


# ---------------------------------------------------------------------------
# decimal-part measure on a midpoint grid
# ---------------------------------------------------------------------------


def _decimal_count_numpy(nu, alpha, n_grid):
    # midpoints are (2i+1)/(2N), so <nu, z> = S/(2N) with an integer S and the
    # fractional part is (S mod 2N)/(2N): exact integer arithmetic, no rounding
    dim = nu.shape[0]
    two_n = 2 * n_grid
    thresh = alpha * two_n
    odd = 2 * np.arange(n_grid, dtype=np.int64) + 1
    if dim == 1:
        return int(np.count_nonzero(np.mod(nu[0] * odd, two_n) < thresh))
    if dim == 2:
        s = nu[0] * odd[:, None] + nu[1] * odd[None, :]
        return int(np.count_nonzero(np.mod(s, two_n) < thresh))
    total = 0
    plane = nu[1] * odd[:, None] + nu[2] * odd[None, :]
    for oi in odd:
        total += int(np.count_nonzero(np.mod(nu[0] * oi + plane, two_n) < thresh))
    return total


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _decimal_count_jit(nu, alpha, n_grid):
        dim = nu.shape[0]
        two_n = 2 * n_grid
        thresh = alpha * two_n
        count = 0
        if dim == 1:
            for i in range(n_grid):
                if (nu[0] * (2 * i + 1)) % two_n < thresh:
                    count += 1
        elif dim == 2:
            for i in range(n_grid):
                a = nu[0] * (2 * i + 1)
                for j in range(n_grid):
                    if (a + nu[1] * (2 * j + 1)) % two_n < thresh:
                        count += 1
        else:
            for i in range(n_grid):
                a = nu[0] * (2 * i + 1)
                for j in range(n_grid):
                    b = a + nu[1] * (2 * j + 1)
                    for k in range(n_grid):
                        if (b + nu[2] * (2 * k + 1)) % two_n < thresh:
                            count += 1
        return count


def decimal_count(nu, alpha, n_grid):
    """Number of midpoint-grid points ``z`` of ``[0,1]^n`` with ``{<nu,z>} < alpha``."""
    nu = np.asarray(nu, dtype=np.int64)
    if _backend == "numba":
        return int(_decimal_count_jit(nu, float(alpha), int(n_grid)))
    return _decimal_count_numpy(nu, float(alpha), int(n_grid))
