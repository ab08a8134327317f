"""Problem instances: coefficient model, reaction, running cost.

Every problem is stored as per-label, per-element arrays sampled at element
centroids.  The reaction and running cost have the fixed parametric forms

    f(x, y, v)  = g - c*y - kappa*y**3            (c, kappa >= 0, so f_y <= 0)
    f0(x, y, v) = 0.5*rho*(y - yd)**2 + gamma*y + beta

with every coefficient depending on the element and the label ``v``.  This
family is rich enough for all catalog problems while keeping every
derivative analytic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .mesh_fem import Mesh
from .tensor import NotSPDError

_FIELDS = ("g", "c", "kappa", "rho", "yd", "gamma", "beta")


@dataclass(eq=False)
class Problem:
    name: str
    params: Dict[str, Any]
    mesh: Mesh
    labels: Tuple[str, ...]
    coeff: np.ndarray  # (nl, ne, 2, 2)
    g: np.ndarray  # (nl, ne)
    c: np.ndarray
    kappa: np.ndarray
    rho: np.ndarray
    yd: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    region: Optional[np.ndarray] = None  # (ne,) bool, problem-specific subregion
    reference: Optional[np.ndarray] = None  # suggested reference control
    exact: Optional[Callable] = None  # manufactured solution, if any
    exact_grad: Optional[Callable] = None
    info: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.validate()

    # -- structure --------------------------------------------------------
    @property
    def n_labels(self) -> int:
        return len(self.labels)

    @property
    def n_elements(self) -> int:
        return self.mesh.n_elements

    def validate(self) -> None:
        nl, ne = self.n_labels, self.n_elements
        if self.coeff.shape != (nl, ne, 2, 2):
            raise ValueError(f"coeff shape {self.coeff.shape} != {(nl, ne, 2, 2)}")
        for name in _FIELDS:
            arr = getattr(self, name)
            if arr.shape != (nl, ne):
                raise ValueError(f"{name} shape {arr.shape} != {(nl, ne)}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
        if np.any(self.c < 0) or np.any(self.kappa < 0):
            raise ValueError("reaction must be monotone: c >= 0 and kappa >= 0")
        if np.any(self.rho < 0):
            raise ValueError("rho must be non-negative")
        a = self.coeff
        if np.any(np.abs(a[..., 0, 1] - a[..., 1, 0]) > 1e-12 * np.abs(a).max()):
            raise NotSPDError("coefficient not symmetric")
        lo, _ = self.ellipticity()
        if lo <= 0:
            raise NotSPDError("coefficient not positive definite")

    def ellipticity(self) -> Tuple[float, float]:
        """(lambda, Lambda): extreme eigenvalues of A over all elements and labels."""
        a = self.coeff
        tr = a[..., 0, 0] + a[..., 1, 1]
        det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] ** 2
        disc = np.sqrt(np.maximum(0.25 * tr**2 - det, 0.0))
        return float((0.5 * tr - disc).min()), float((0.5 * tr + disc).max())

    def check_control(self, u) -> np.ndarray:
        u = np.asarray(u)
        if u.shape != (self.n_elements,):
            raise ValueError(f"control must have shape ({self.n_elements},), got {u.shape}")
        if not np.issubdtype(u.dtype, np.integer):
            if np.any(u != np.round(u)):
                raise ValueError("control labels must be integers")
            u = u.astype(np.int64)
        if np.any(u < 0) or np.any(u >= self.n_labels):
            raise ValueError("control label outside the control set")
        return u.astype(np.int64, copy=False)

    def constant_control(self, label: int = 0) -> np.ndarray:
        return np.full(self.n_elements, int(label), dtype=np.int64)

    # -- pointwise data ---------------------------------------------------
    def _take(self, arr: np.ndarray, u, elems=None) -> np.ndarray:
        if elems is None:
            elems = np.arange(self.n_elements)
        return arr[np.asarray(u), elems]

    def A(self, u, elems=None) -> np.ndarray:
        return self._take(self.coeff, u, elems)

    def f(self, u, y, elems=None) -> np.ndarray:
        g, c, k = (self._take(a, u, elems) for a in (self.g, self.c, self.kappa))
        return g - c * y - k * y**3

    def f_y(self, u, y, elems=None) -> np.ndarray:
        c, k = (self._take(a, u, elems) for a in (self.c, self.kappa))
        return -c - 3.0 * k * y**2

    def f_yy(self, u, y, elems=None) -> np.ndarray:
        return -6.0 * self._take(self.kappa, u, elems) * y

    def f0(self, u, y, elems=None) -> np.ndarray:
        rho, yd, gam, beta = (self._take(a, u, elems) for a in (self.rho, self.yd, self.gamma, self.beta))
        return 0.5 * rho * (y - yd) ** 2 + gam * y + beta

    def f0_y(self, u, y, elems=None) -> np.ndarray:
        rho, yd, gam = (self._take(a, u, elems) for a in (self.rho, self.yd, self.gamma))
        return rho * (y - yd) + gam

    def f0_yy(self, u, y, elems=None) -> np.ndarray:
        return self._take(self.rho, u, elems) * np.ones_like(np.asarray(y, dtype=float))

    def is_linear(self) -> bool:
        return not np.any(self.kappa)

    def coefficient_independent_of_control(self) -> np.ndarray:
        """Per-element mask: A(x, v) identical for every label v."""
        return np.all(self.coeff == self.coeff[:1], axis=(0, 2, 3))


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------


def _sine(x, y):
    return np.sin(math.pi * x) * np.sin(math.pi * y)


def _sine_grad(x, y):
    return (
        math.pi * np.cos(math.pi * x) * np.sin(math.pi * y),
        math.pi * np.sin(math.pi * x) * np.cos(math.pi * y),
    )


def _rect_mask(mesh: Mesh, rect: Sequence[float]) -> np.ndarray:
    x0, x1, y0, y1 = (float(v) for v in rect)
    cx, cy = mesh.centroids[:, 0], mesh.centroids[:, 1]
    return (cx > x0) & (cx < x1) & (cy > y0) & (cy < y1)


def _blank(nl: int, ne: int) -> Dict[str, np.ndarray]:
    return {k: np.zeros((nl, ne)) for k in _FIELDS}


def _source(mesh: Mesh, amplitude: float, shape: str) -> np.ndarray:
    cx, cy = mesh.centroids[:, 0], mesh.centroids[:, 1]
    if shape == "const":
        return np.full(mesh.n_elements, float(amplitude))
    if shape == "sin":
        return float(amplitude) * _sine(cx, cy)
    if shape == "bump":
        return float(amplitude) * (1.0 + np.cos(2 * math.pi * cx) * np.sin(math.pi * cy))
    raise ValueError(f"unknown source shape {shape!r}")


DEFAULTS: Dict[str, Dict[str, Any]] = {
    "laplace-ms": {"diag": [1.0, 1.0], "c": 0.0, "kappa": 0.0},
    "two-phase": {
        "a": 1.0, "b": 3.0, "A1_diag": None, "g": 10.0, "g_shape": "sin", "c": 1.0,
        "kappa": 0.0, "yd_amp": 0.0, "rho": 1.0, "beta": [0.0, 0.0], "beta_amp": 1.0,
    },
    "region-free": {
        "a": 1.0, "b": 3.0, "uniform_a": False, "g": 10.0, "g_shape": "const", "c": 1.0,
        "kappa": 0.0, "yd_amp": 1.0, "rho": 1.0, "region": [0.25, 0.75, 0.25, 0.75],
        "source_shift": 1.0, "reaction_shift": 0.0, "margin": 1.0,
    },
    "rank-one-gap": {
        "a": 1.0, "sigma": 1.0, "w_angle": 0.0, "g": 10.0, "g_shape": "sin", "c": 1.0,
        "compliance": 1.0, "region": [0.0, 1.0, 0.0, 1.0], "margin": 1.0,
    },
}


def _merge(name: str, params: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    if name not in DEFAULTS:
        raise KeyError(f"unknown problem {name!r}; catalog: {sorted(DEFAULTS)}")
    out = dict(DEFAULTS[name])
    for k, v in (params or {}).items():
        if k not in out:
            raise KeyError(f"unknown parameter {k!r} for problem {name!r}")
        out[k] = v
    return out


def _laplace_ms(mesh: Mesh, p: Dict[str, Any]) -> Problem:
    ne = mesh.n_elements
    a1, a2 = (float(v) for v in p["diag"])
    c, kappa = float(p["c"]), float(p["kappa"])
    cx, cy = mesh.centroids[:, 0], mesh.centroids[:, 1]
    s = _sine(cx, cy)
    d = _blank(1, ne)
    d["g"][0] = (a1 + a2) * math.pi**2 * s + c * s + kappa * s**3
    d["c"][0] = c
    d["kappa"][0] = kappa
    d["rho"][0] = 1.0
    d["yd"][0] = s
    coeff = np.broadcast_to(np.diag([a1, a2]), (1, ne, 2, 2)).copy()
    return Problem("laplace-ms", p, mesh, ("0",), coeff, exact=_sine, exact_grad=_sine_grad,
                   reference=np.zeros(ne, dtype=np.int64), **d)


def _two_phase(mesh: Mesh, p: Dict[str, Any]) -> Problem:
    ne = mesh.n_elements
    a = float(p["a"])
    coeff = np.empty((2, ne, 2, 2))
    coeff[0] = a * np.eye(2)
    coeff[1] = np.diag(p["A1_diag"]) if p["A1_diag"] is not None else float(p["b"]) * np.eye(2)
    d = _blank(2, ne)
    s = _sine(*mesh.centroids.T)
    beta = list(p["beta"])
    if len(beta) != 2:
        raise ValueError("two-phase needs exactly two beta values")
    for v in (0, 1):
        d["g"][v] = _source(mesh, p["g"], p["g_shape"])
        d["c"][v] = float(p["c"])
        d["kappa"][v] = float(p["kappa"])
        d["rho"][v] = float(p["rho"])
        d["yd"][v] = float(p["yd_amp"]) * s
        d["beta"][v] = float(beta[v])
    # optional spatial modulation of the label-1 control cost
    d["beta"][1] += float(p["beta_amp"]) * np.cos(2.0 * math.pi * mesh.centroids[:, 0])
    return Problem("two-phase", p, mesh, ("0", "1"), coeff,
                   reference=np.zeros(ne, dtype=np.int64), **d)


def _region_free(mesh: Mesh, p: Dict[str, Any]) -> Problem:
    from . import optimality, semilinear

    ne = mesh.n_elements
    region = _rect_mask(mesh, p["region"])
    a, b = float(p["a"]), float(p["b"])
    coeff = np.empty((2, ne, 2, 2))
    coeff[0] = a * np.eye(2)
    coeff[1] = a * np.eye(2)
    if not p["uniform_a"]:
        coeff[1, ~region] = b * np.eye(2)
    d = _blank(2, ne)
    s = _sine(*mesh.centroids.T)
    g = _source(mesh, p["g"], p["g_shape"])
    for v in (0, 1):
        d["g"][v] = g
        d["c"][v] = float(p["c"])
        d["kappa"][v] = float(p["kappa"])
        d["rho"][v] = float(p["rho"])
        d["yd"][v] = float(p["yd_amp"]) * s
    # label 1 perturbs the source and the reaction inside the region only
    d["g"][1, region] += float(p["source_shift"])
    d["c"][1, region] += float(p["reaction_shift"])
    prob = Problem("region-free", p, mesh, ("0", "1"), coeff, region=region,
                   reference=np.zeros(ne, dtype=np.int64), **d)
    # calibrate beta_1 so that the reference control has a zero Pontryagin gap
    # inside the region and a gap equal to `margin` outside it
    ubar = prob.reference
    ybar = semilinear.solve_state(prob, ubar)
    psibar = semilinear.solve_adjoint(prob, ubar, ybar)
    cells = optimality.cell_data(prob, ybar, psibar)
    gap = optimality.foc_gap(cells, ubar, prob.constant_control(1))
    beta1 = np.where(region, -gap, float(p["margin"]) - gap)
    prob.beta[1] = beta1
    prob.info["calibration"] = "beta_1 = -(gap without beta) [+ margin outside region]"
    return prob


def _rank_one_gap(mesh: Mesh, p: Dict[str, Any]) -> Problem:
    from . import optimality, semilinear

    ne = mesh.n_elements
    a, sigma = float(p["a"]), float(p["sigma"])
    th = float(p["w_angle"])
    w = np.array([math.cos(th), math.sin(th)])
    region = _rect_mask(mesh, p["region"])
    coeff = np.empty((2, ne, 2, 2))
    coeff[0] = a * np.eye(2)
    coeff[1] = a * np.eye(2) + sigma * np.outer(w, w)
    d = _blank(2, ne)
    g = _source(mesh, p["g"], p["g_shape"])
    k = float(p["compliance"])
    for v in (0, 1):
        d["g"][v] = g
        d["c"][v] = float(p["c"])
        d["gamma"][v] = k * g  # compliance-type cost: the adjoint is -k * state
    prob = Problem("rank-one-gap", p, mesh, ("0", "1"), coeff, region=region,
                   reference=np.zeros(ne, dtype=np.int64), info={"w": w.tolist()}, **d)
    ubar = prob.reference
    ybar = semilinear.solve_state(prob, ubar)
    psibar = semilinear.solve_adjoint(prob, ubar, ybar)
    cells = optimality.cell_data(prob, ybar, psibar)
    gap = optimality.foc_gap(cells, ubar, prob.constant_control(1))
    prob.beta[1] = np.where(region, -gap, float(p["margin"]) - gap)
    prob.info["calibration"] = "beta_1 = -(gap without beta) [+ margin outside region]"
    return prob


_BUILDERS = {
    "laplace-ms": _laplace_ms,
    "two-phase": _two_phase,
    "region-free": _region_free,
    "rank-one-gap": _rank_one_gap,
}


def make_problem(name: str, mesh: Mesh, params: Optional[Dict[str, Any]] = None) -> Problem:
    """Build a catalog problem on ``mesh``; unknown names or parameters raise ``KeyError``."""
    p = _merge(name, params)
    return _BUILDERS[name](mesh, p)


def catalog() -> Tuple[str, ...]:
    return tuple(sorted(_BUILDERS))
