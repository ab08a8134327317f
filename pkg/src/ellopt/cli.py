"""Command line interface and the artifact-producing ``run`` orchestrator.

Subcommands: ``solve``, ``improve``, ``classify``, ``expand``, ``soc``,
``homogenize``, ``decimal-measure``, ``selftest`` and ``run`` (all stages
enabled by the config).  Exit codes: 0 success, 2 configuration error,
3 solver failure, 4 optimality condition violated beyond tolerance.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import jsonschema
import numpy as np

from . import __version__, _kernels
from . import homogenization as hom
from . import io
from . import mesh_fem as fem
from . import optimality, relaxation, semilinear
from .improve import improve_control
from .problems import Problem, make_problem

log = logging.getLogger("ellopt")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VIOLATION = 0, 2, 3, 4

DEFAULT_CONFIG: Dict[str, Any] = {
    "problem": {"name": "two-phase", "params": {}},
    "mesh": 32,
    "seed": 0,
    "threads": 1,
    "reference": {"kind": "reference"},
    "improve": None,
    "candidates": [],
    "alphas": list(relaxation.DEFAULT_ALPHAS),
    "homogenization": None,
    "decimal": None,
    "tolerances": {"sing": None, "pontryagin": 1e-6, "expansion_rel": 0.05},
}

DEFAULT_HOMOGENIZATION = {
    "B": [[1.0, 0.0], [0.0, 1.0]], "C": [[4.0, 0.0], [0.0, 4.0]], "alpha": 0.5, "mu": [1, 0],
    "g": 1.0, "mesh": 128, "eps": [0.25, 0.125, 0.0625],
}

STAGES = ("improve", "solve", "classify", "expand", "soc", "homogenize", "decimal")
NEEDS_REFERENCE = ("classify", "expand", "soc")


class ConfigError(ValueError):
    """Invalid configuration (exit code 2)."""


class GateFailure(RuntimeError):
    """An optimality check exceeded its tolerance (exit code 4)."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def load_config(path: Optional[str]) -> Dict[str, Any]:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def resolve_config(user: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Merge ``user`` over the defaults, apply CLI overrides, validate against the schema."""
    if not isinstance(user, dict):
        raise ConfigError("config must be a JSON object")
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    for k, v in user.items():
        if k == "tolerances" and isinstance(v, dict):
            cfg["tolerances"].update(v)
        else:
            cfg[k] = copy.deepcopy(v)
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg[k] = v
    if isinstance(cfg.get("homogenization"), dict):
        h = dict(DEFAULT_HOMOGENIZATION)
        h.update(cfg["homogenization"])
        cfg["homogenization"] = h
    try:
        io.validate(cfg, "config")
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise ConfigError(f"config invalid at '{path}': {exc.message}") from exc
    return cfg


# ---------------------------------------------------------------------------
# run context
# ---------------------------------------------------------------------------


@dataclass
class Context:
    config: Dict[str, Any]
    out: Path
    problem: Optional[Problem] = None
    ref: Optional[relaxation.Reference] = None
    improved: Optional[np.ndarray] = None
    candidates: List[np.ndarray] = field(default_factory=list)
    report: Optional[optimality.SingularityReport] = None
    artifacts: List[str] = field(default_factory=list)

    @property
    def threads(self) -> int:
        return int(self.config["threads"])

    @property
    def seed(self) -> int:
        return int(self.config["seed"])

    def get_problem(self) -> Problem:
        if self.problem is None:
            p = self.config["problem"]
            try:
                mesh = fem.build_mesh(int(self.config["mesh"]))
                self.problem = make_problem(p["name"], mesh, p.get("params") or {})
            except (KeyError, ValueError, TypeError) as exc:
                raise ConfigError(f"problem: {exc}") from exc
        return self.problem

    def emit_json(self, name: str, obj: Any, schema: str) -> None:
        io.write_json(self.out / name, obj, schema)
        self.artifacts.append(name)

    def emit_csv(self, name: str, header, rows) -> None:
        io.write_csv(self.out / name, header, rows)
        self.artifacts.append(name)

    def emit_svg(self, name: str, values, title: str) -> None:
        io.write_svg_heatmap(self.out / name, self.get_problem().mesh, values, title)
        self.artifacts.append(name)


def build_control(ctx: Context, spec: Dict[str, Any], index: int = 0) -> np.ndarray:
    """Control field from a generator spec (see the config schema)."""
    prob = ctx.get_problem()
    mesh = prob.mesh
    kind = spec.get("kind")
    try:
        if kind == "reference":
            return prob.reference.copy()
        if kind == "constant":
            return prob.constant_control(int(spec["label"]))
        if kind == "improved":
            if ctx.improved is None:
                raise ConfigError("control kind 'improved' requires the improve stage")
            return ctx.improved.copy()
        if kind in ("region", "flip"):
            base = build_control(ctx, spec.get("base", {"kind": "reference"}), index)
            if kind == "region":
                x0, x1, y0, y1 = (float(v) for v in spec["rect"])
                cx, cy = mesh.centroids.T
                mask = (cx > x0) & (cx < x1) & (cy > y0) & (cy < y1)
            else:
                mask = np.zeros(mesh.n_elements, dtype=bool)
                mask[np.asarray(spec["elements"], dtype=int)] = True
            base[mask] = int(spec["label"])
            return prob.check_control(base)
        if kind == "random":
            rng = np.random.default_rng([ctx.seed, index])
            p = spec.get("p")
            return rng.choice(prob.n_labels, size=mesh.n_elements, p=p).astype(np.int64)
    except ConfigError:
        raise
    except (KeyError, ValueError, IndexError, TypeError) as exc:
        raise ConfigError(f"control spec {spec}: {exc}") from exc
    raise ConfigError(f"unknown control kind {kind!r}")


def build_direction(ctx: Context, spec: Optional[Dict[str, Any]], u: np.ndarray) -> np.ndarray:
    ref = ctx.ref
    kind = (spec or {"kind": "auto"}).get("kind", "auto")
    if kind == "auto":
        rep = optimality.classify_cells(ref.cells, ref.ubar, [u], ctx.config["tolerances"]["sing"])
        return rep.candidates[0].direction
    if kind == "select":
        return optimality.select_direction(ref.cells, ref.ubar, u)
    if kind == "orthogonal":
        return optimality.orthogonal_direction(ref.cells, ref.ubar, u)
    if kind == "angle":
        th = float(spec["angle"])
        return np.broadcast_to([np.cos(th), np.sin(th)], (u.size, 2)).copy()
    raise ConfigError(f"unknown direction kind {kind!r}")


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def stage_improve(ctx: Context) -> List[str]:
    prob = ctx.get_problem()
    spec = ctx.config.get("improve") or {}
    u0 = build_control(ctx, spec.get("start", {"kind": "reference"}))
    res = improve_control(prob, u0, max_rounds=int(spec.get("max_rounds", 50)),
                          switch_tol=float(spec.get("switch_tol", 1e-9)))
    ctx.improved = res.control
    tol = float(ctx.config["tolerances"]["pontryagin"])
    passed = res.violation <= tol
    ctx.emit_json("improve.json", {
        "converged": res.converged, "rounds": res.rounds, "reason": res.reason,
        "costs": res.costs, "switches": res.switches, "violation": res.violation,
        "tolerance": tol, "passed": passed,
        "cycle_length": None if res.cycle is None else len(res.cycle) - 1,
        "label_counts": np.bincount(res.control, minlength=prob.n_labels).tolist(),
    }, "improve")
    cx, cy = prob.mesh.centroids.T
    ctx.emit_csv("improved_control.csv", ("element", "cx", "cy", "label"),
                 zip(range(cx.size), cx, cy, res.control))
    return [] if passed else [f"improver violation {res.violation:.3e} > {tol:.1e} ({res.reason})"]


def stage_solve(ctx: Context) -> List[str]:
    prob = ctx.get_problem()
    ubar = build_control(ctx, ctx.config["reference"])
    y, info = semilinear.solve_state(prob, ubar, return_info=True)
    psi = semilinear.solve_adjoint(prob, ubar, y)
    ctx.ref = relaxation.reference(prob, ubar, y, psi)
    viol, elem, lab = optimality.pontryagin_cells(ctx.ref.cells, ubar)
    mesh = prob.mesh
    ctx.emit_json("solve.json", {
        "problem": prob.name, "mesh": mesh.m, "n_nodes": mesh.n_nodes, "n_elements": mesh.n_elements,
        "n_labels": prob.n_labels, "cost": ctx.ref.J, "newton_iterations": info.iterations,
        "state_residual": semilinear.state_residual(prob, ubar, y),
        "label_counts": np.bincount(ubar, minlength=prob.n_labels).tolist(),
        "pontryagin": {"violation": viol, "element": elem, "label": lab},
    }, "solve")
    x, yy = mesh.nodes.T
    ctx.emit_csv("state.csv", ("node", "x", "y", "ybar", "psibar"), zip(range(x.size), x, yy, y, psi))
    cx, cy = mesh.centroids.T
    ctx.emit_csv("control.csv", ("element", "cx", "cy", "label"), zip(range(cx.size), cx, cy, ubar))
    ctx.emit_svg("ybar.svg", y, "state ybar")
    ctx.emit_svg("psibar.svg", psi, "adjoint psibar")
    ctx.emit_svg("grad_ybar.svg", np.linalg.norm(fem.gradient(mesh, y), axis=1), "|grad ybar|")
    ctx.emit_svg("control.svg", ubar.astype(float), "reference control")
    return []


def _candidates(ctx: Context) -> List[np.ndarray]:
    if not ctx.candidates and ctx.config["candidates"]:
        ctx.candidates = [build_control(ctx, c["control"], k) for k, c in enumerate(ctx.config["candidates"])]
    return ctx.candidates


def stage_classify(ctx: Context) -> List[str]:
    cands = _candidates(ctx)
    ref = ctx.ref
    ctx.report = optimality.classify_cells(ref.cells, ref.ubar, cands, ctx.config["tolerances"]["sing"])
    ctx.emit_json("classify.json", ctx.report.to_dict(per_element=True), "classify")
    tol = float(ctx.config["tolerances"]["pontryagin"])
    if ctx.report.max_violation > tol:
        return [f"reference violates the first-order condition by {ctx.report.max_violation:.3e}"]
    return []


def stage_expand(ctx: Context) -> List[str]:
    prob = ctx.get_problem()
    ref = ctx.ref
    alphas = [float(a) for a in ctx.config["alphas"]]
    rel = float(ctx.config["tolerances"]["expansion_rel"])
    out, gates = [], []
    for k, u in enumerate(_candidates(ctx)):
        if np.array_equal(u, ref.ubar):
            out.append({"index": k, "trivial": True})
            continue
        ell = build_direction(ctx, ctx.config["candidates"][k].get("direction"), u)
        tab = relaxation.expansion_probe(prob, ref.ubar, u, ell, alphas, ref=ref, threads=ctx.threads)
        exact = relaxation.second_order_coefficient(prob, ref.ubar, u, ell, ref=ref)
        ctx.emit_csv(f"expansion_{k}.csv", relaxation.ExpansionTable.HEADER, tab.rows())
        lim = tab.second_order_limit
        agree = bool(np.isfinite(lim) and abs(lim - exact) <= rel * max(abs(exact), 1e-12))
        out.append({
            "index": k, "trivial": False, "J_bar": tab.J_bar, "J1": tab.J1,
            "slope_fit": relaxation.slope_fit(tab), "second_order_limit": lim,
            "exact_second_order": exact, "limit_matches_exact": agree,
            "increments_nonnegative": tab.increments_ok, "errors": tab.errors,
        })
        if not tab.increments_ok:
            gates.append(f"candidate {k}: relaxed cost decreases below the reference")
    ctx.emit_json("expansion.json", {"alphas": alphas, "candidates": out}, "expansion")
    return gates


def stage_soc(ctx: Context) -> List[str]:
    prob = ctx.get_problem()
    ref = ctx.ref
    tol_sing = ctx.config["tolerances"]["sing"]
    out, gates = [], []
    independent = bool(np.all(prob.coefficient_independent_of_control()))
    for k, u in enumerate(_candidates(ctx)):
        rep = optimality.classify_cells(ref.cells, ref.ubar, [u], tol_sing).candidates[0]
        entry: Dict[str, Any] = {"index": k, "trivial": rep.trivial, "singular": rep.singular,
                                 "weakly_singular": rep.weakly_singular}
        if rep.trivial or not rep.weakly_singular:
            entry.update(applicable=False, report=None, independent=None)
            out.append(entry)
            continue
        if rep.singular:
            soc = relaxation.soc_value_singular(prob, ref.ubar, u, ref=ref, check=False)
        else:
            ell = build_direction(ctx, ctx.config["candidates"][k].get("direction"), u)
            soc = relaxation.soc_value(prob, ref.ubar, u, ell, ref=ref)
        entry.update(applicable=True, report=soc.to_dict())
        entry["independent"] = (
            relaxation.soc_value_independent(prob, ref.ubar, u, ref=ref).to_dict() if independent else None
        )
        if not soc.passed:
            gates.append(f"candidate {k}: second-order value {soc.value:.3e} < -{soc.tol_soc:.1e}")
        out.append(entry)
    ctx.emit_json("soc.json", {"candidates": out}, "soc")
    return gates


def stage_homogenize(ctx: Context) -> List[str]:
    h = ctx.config["homogenization"] or dict(DEFAULT_HOMOGENIZATION)
    try:
        lam = hom.Laminate(np.array(h["B"], float), np.array(h["C"], float), float(h["alpha"]), tuple(h["mu"]))
        mesh = fem.build_mesh(int(h["mesh"]))
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"homogenization: {exc}") from exc
    g = np.full(mesh.n_elements, float(h["g"]))
    try:
        rows = hom.epsilon_sweep(lam, mesh, g, h["eps"], threads=ctx.threads)
    except ValueError as exc:
        raise ConfigError(f"homogenization: {exc}") from exc
    l2 = [r.l2 for r in rows]
    ctx.emit_csv("sweep.csv", ("eps", "l2", "h1", "b_fraction"), [(r.eps, r.l2, r.h1, r.b_fraction) for r in rows])
    ctx.emit_json("homogenize.json", {
        "B": lam.B, "C": lam.C, "alpha": lam.alpha, "mu": [str(c) for c in lam.mu], "mesh": mesh.m,
        "hlimit": hom.hlimit_matrix(lam.B, lam.C, lam.alpha, lam.mu),
        "eps": [r.eps for r in rows], "l2": l2, "h1": [r.h1 for r in rows],
        "l2_strictly_decreasing": bool(all(b < a for a, b in zip(l2, l2[1:]))),
        "l2_ratio_last_first": l2[-1] / l2[0] if l2[0] > 0 else None,
    }, "homogenize")
    return []


def stage_decimal(ctx: Context) -> List[str]:
    items = ctx.config["decimal"] or []
    rows = []
    for it in items:
        try:
            meas = hom.decimal_measure(it["nu"], float(it["alpha"]), int(it["n"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"decimal: {exc}") from exc
        rows.append({"nu": list(it["nu"]), "alpha": float(it["alpha"]), "n": int(it["n"]),
                     "measure": meas, "error": meas - float(it["alpha"])})
    ctx.emit_csv("decimal.csv", ("nu", "alpha", "n", "measure", "error"),
                 [(" ".join(str(v) for v in r["nu"]), r["alpha"], r["n"], r["measure"], r["error"]) for r in rows])
    ctx.emit_json("decimal.json", {"items": rows}, "decimal")
    return []


STAGE_FUNCS: Dict[str, Callable[[Context], List[str]]] = {
    "improve": stage_improve, "solve": stage_solve, "classify": stage_classify, "expand": stage_expand,
    "soc": stage_soc, "homogenize": stage_homogenize, "decimal": stage_decimal,
}


def _versions() -> Dict[str, str]:
    from importlib.metadata import version

    import scipy

    out = {"ellopt": __version__, "python": platform.python_version(), "numpy": np.__version__,
           "scipy": scipy.__version__, "jsonschema": version("jsonschema")}
    if _kernels.HAVE_NUMBA:
        import numba

        out["numba"] = numba.__version__
    return out


def stages_for(cfg: Dict[str, Any], requested: Optional[Sequence[str]] = None) -> List[str]:
    if requested is None:
        wanted = ["solve"]
        if cfg.get("improve") is not None:
            wanted.append("improve")
        if cfg["candidates"]:
            wanted += ["classify", "expand", "soc"]
        if cfg.get("homogenization") is not None:
            wanted.append("homogenize")
        if cfg.get("decimal"):
            wanted.append("decimal")
    else:
        wanted = list(requested)
    if any(s in NEEDS_REFERENCE for s in wanted) and "solve" not in wanted:
        wanted.append("solve")
    if cfg["reference"].get("kind") == "improved" and "solve" in wanted and "improve" not in wanted:
        wanted.append("improve")
    return [s for s in STAGES if s in wanted]


def run(config: Dict[str, Any], out, stages: Optional[Sequence[str]] = None) -> Dict[str, Any]:
    """Run the configured stages, write every artifact plus ``manifest.json``; return the manifest.

    Each stage failure is recorded; stages that need the reference solution
    are skipped if it is unavailable, the others still run.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(config, out)
    status: Dict[str, Any] = {}
    for name in stages_for(config, stages):
        if name in NEEDS_REFERENCE and ctx.ref is None:
            status[name] = {"status": "skipped", "kind": None, "message": "reference solution unavailable"}
            continue
        if name == "solve" and config["reference"].get("kind") == "improved" and ctx.improved is None:
            status[name] = {"status": "skipped", "kind": None, "message": "improved control unavailable"}
            continue
        log.info("stage %s", name)
        try:
            gates = STAGE_FUNCS[name](ctx)
        except ConfigError as exc:
            status[name] = {"status": "failed", "kind": "config", "message": str(exc)}
        except fem.SolverError as exc:
            status[name] = {"status": "failed", "kind": "solver", "message": str(exc)}
        except (ValueError, RuntimeError, ArithmeticError) as exc:
            status[name] = {"status": "failed", "kind": "error", "message": f"{type(exc).__name__}: {exc}"}
        else:
            if gates:
                status[name] = {"status": "violation", "kind": "optimality", "message": "; ".join(gates)}
            else:
                status[name] = {"status": "ok", "kind": None, "message": ""}
        if status[name]["status"] != "ok":
            log.warning("stage %s: %s", name, status[name]["message"])
    manifest = {
        "config": config,
        "config_hash": io.canonical_hash(config),
        "versions": _versions(),
        "backend": _kernels.backend(),
        "seed": ctx.seed,
        "threads": ctx.threads,
        "stages": status,
        "artifacts": {a: io.file_hash(out / a) for a in sorted(ctx.artifacts)},
        "exit_code": exit_code(status),
    }
    io.write_json(out / "manifest.json", manifest, "manifest")
    return manifest


def exit_code(status: Dict[str, Any]) -> int:
    kinds = [s["kind"] for s in status.values()]
    if "config" in kinds:
        return EXIT_CONFIG
    if "solver" in kinds or "error" in kinds:
        return EXIT_SOLVER
    if "optimality" in kinds:
        return EXIT_VIOLATION
    return EXIT_OK


# ---------------------------------------------------------------------------
# selftest
# ---------------------------------------------------------------------------


def selftest(seed: int = 0) -> List[Dict[str, Any]]:
    """Fast internal consistency checks (a subset of the acceptance suite)."""
    from . import tensor

    rng = np.random.default_rng(seed)
    checks = []

    def add(name, value, limit, ok):
        checks.append({"name": name, "value": float(value), "limit": float(limit), "passed": bool(ok)})

    res = max(tensor.mixing_identity_residual(tensor.random_spd(rng, d), tensor.random_spd(rng, d),
                                            rng.uniform(0.05, 0.95)) for d in (2, 3) for _ in range(50))
    add("mixing identity residual", res, 1e-10, res <= 1e-10)
    worst = 0.0
    th = np.linspace(0, 2 * np.pi, 20000, endpoint=False)
    dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    for _ in range(20):
        xi, eta = rng.standard_normal(2), rng.standard_normal(2)
        val, _ = tensor.pair_max_bilinear(xi, eta)
        worst = max(worst, abs(val - np.max((dirs @ xi) * (dirs @ eta))))
    add("sphere maximum vs grid", worst, 1e-6, worst <= 1e-6)
    err = abs(hom.decimal_measure((1, 2), 0.3, 400) - 0.3)
    add("decimal measure", err, 5e-3, err <= 5e-3)
    errs, hs = [], []
    for m in (8, 16):
        mesh = fem.build_mesh(m)
        prob = make_problem("laplace-ms", mesh)
        y = semilinear.solve_state(prob, prob.reference)
        errs.append(fem.error_norms(mesh, y, prob.exact, prob.exact_grad)[0])
        hs.append(mesh.h)
    order = float(fem.observed_orders(hs, errs)[0])
    add("P1 L2 order", order, 1.8, order >= 1.8)
    cw = 0.0
    for _ in range(20):
        B, C = tensor.random_spd(rng, 2), tensor.random_spd(rng, 2)
        a = rng.uniform(0.05, 0.95)
        m = rng.standard_normal(2)
        m /= np.linalg.norm(m)
        c = hom.corrector_1d(B, C, a, m)
        cw = max(cw, np.abs(c.closure(a)).max(),
                 np.abs(hom.reconstruct_hlimit(B, C, a, m, c) - hom.hlimit_matrix(B, C, a, m)).max())
    add("corrector closure", cw, 1e-10, cw <= 1e-10)
    return checks


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

SUBCOMMANDS = {
    "solve": ["solve"], "improve": ["improve"], "classify": ["classify"], "expand": ["expand"],
    "soc": ["soc"], "homogenize": ["homogenize"], "decimal-measure": ["decimal"], "run": None,
}


def _setup_logging() -> None:
    level = os.environ.get("ELLOPT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ellopt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ellopt {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", default="ellopt-out", help="output directory (default: ellopt-out)")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")
    common.add_argument("--threads", type=int, help="worker threads for independent solves")
    common.add_argument("--mesh", type=int, help="mesh resolution m (overrides the config)")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "solve": "state, adjoint, cost and heatmaps for the reference control",
        "improve": "pointwise fixed-point improvement of a control",
        "classify": "singular / weakly singular classification against the candidates",
        "expand": "relaxed-cost expansion tables for each candidate",
        "soc": "second-order values for each (weakly) singular candidate",
        "homogenize": "laminate epsilon sweep against the H-limit solution",
        "decimal-measure": "measure of {z : frac(<nu, z>) < alpha} on a midpoint grid",
        "run": "every stage enabled by the config, plus a manifest",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, parents=[common], help=text)
        if name == "decimal-measure":
            p.add_argument("--nu", type=int, nargs="+", help="integer direction (1-3 components)")
            p.add_argument("--alpha", type=float, help="threshold in (0, 1)")
            p.add_argument("--n", type=int, default=1000, help="grid points per axis (>= 100)")
    st = sub.add_parser("selftest", help="fast internal consistency checks")
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--out", help="optional directory for selftest.json")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.command == "selftest":
        checks = selftest(args.seed)
        for c in checks:
            print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: {c['value']:.3e} (limit {c['limit']:.1e})")
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            io.write_json(Path(args.out) / "selftest.json", {"checks": checks}, "selftest")
        return EXIT_OK if all(c["passed"] for c in checks) else EXIT_VIOLATION
    try:
        user = load_config(args.config)
        if args.command == "decimal-measure" and args.nu is not None:
            if args.alpha is None:
                raise ConfigError("--nu requires --alpha")
            user["decimal"] = [{"nu": args.nu, "alpha": args.alpha, "n": args.n}]
        cfg = resolve_config(user, {"seed": args.seed, "threads": args.threads, "mesh": args.mesh})
        if args.command == "decimal-measure" and not cfg.get("decimal"):
            raise ConfigError("decimal-measure needs --nu/--alpha or a 'decimal' config section")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = run(cfg, args.out, SUBCOMMANDS[args.command])
    for name, st in manifest["stages"].items():
        line = f"{name:<11} {st['status']}"
        print(line + (f": {st['message']}" if st["message"] else ""))
    print(f"artifacts written to {args.out}")
    return int(manifest["exit_code"])


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
