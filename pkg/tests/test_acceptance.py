"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerances.

Run with ``pytest -v -s tests/test_acceptance.py`` or as a script
(``python3 tests/test_acceptance.py``).  Each line reports the measured
quantity against its limit and the wall time against the runtime budget;
a criterion passes only if both hold.
"""

import json
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from ellopt import cli
from ellopt import homogenization as hom
from ellopt import mesh_fem as fem
from ellopt import optimality as O
from ellopt import relaxation as R
from ellopt import semilinear, tensor
from ellopt.improve import improve_control
from ellopt.problems import make_problem

ROOT = Path(__file__).resolve().parents[1]


def criterion_1():
    rng = np.random.default_rng(1)
    worst_res, worst_margin = 0.0, np.inf
    for dim in (2, 3):
        for _ in range(1000):
            b1, b2 = tensor.random_spd(rng, dim), tensor.random_spd(rng, dim)
            a = rng.uniform(0.01, 0.99)
            mu = rng.standard_normal(dim)
            worst_res = max(worst_res, tensor.mixing_identity_residual(b1, b2, a))
            worst_margin = min(worst_margin, *tensor.mixing_bounds_margin(b1, b2, a, mu))
    ok = worst_res <= 1e-10 and worst_margin >= -1e-10
    return ok, f"identity residual {worst_res:.2e} <= 1e-10, min bound eigenvalue {worst_margin:.2e} >= -1e-10", 5


def criterion_2():
    rng = np.random.default_rng(2)
    th = np.linspace(0.0, 2 * np.pi, 100_000, endpoint=False)
    dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    xi, eta = rng.standard_normal((1000, 2)), rng.standard_normal((1000, 2))
    closed, _ = tensor.pair_max_bilinear_batch(xi, eta)
    worst = 0.0
    for k in range(0, 1000, 50):
        grid = np.max((dirs @ xi[k:k + 50].T) * (dirs @ eta[k:k + 50].T), axis=0)
        worst = max(worst, float(np.abs(grid - closed[k:k + 50]).max()))
    return worst <= 1e-5, f"closed form vs 1e5-direction grid {worst:.2e} <= 1e-5", 5


def criterion_3():
    worst = 0.0
    for nu in ((1, 2), (3, 1), (2, -3)):
        for a in (0.25, 0.5, 0.7):
            worst = max(worst, abs(hom.decimal_measure(nu, a, 1000) - a))
    return worst <= 2e-3, f"max |measure - alpha| {worst:.2e} <= 2e-3", 10


def criterion_4():
    lo_l2, lo_h1 = np.inf, np.inf
    for kappa in (0.0, 5.0):
        hs, e0, e1 = [], [], []
        for m in (8, 16, 32, 64):
            mesh = fem.build_mesh(m)
            p = make_problem("laplace-ms", mesh, {"kappa": kappa})
            y = semilinear.solve_state(p, p.reference)
            l2, h1 = fem.error_norms(mesh, y, p.exact, p.exact_grad)
            hs.append(mesh.h), e0.append(l2), e1.append(h1)
        lo_l2 = min(lo_l2, fem.observed_orders(hs, e0).min())
        lo_h1 = min(lo_h1, fem.observed_orders(hs, e1).min())
    ok = lo_l2 >= 1.8 and lo_h1 >= 0.9
    return ok, f"min L2 order {lo_l2:.3f} >= 1.8, min H1 order {lo_h1:.3f} >= 0.9 (linear and semilinear)", 30


def criterion_5():
    b, c = np.eye(2), 4.0 * np.eye(2)
    lam = hom.Laminate(b, c, 0.5, (1, 0))
    g_hat = hom.hlimit_matrix(b, c, 0.5, (1, 0))
    diag_err = max(abs(g_hat[0, 0] - tensor.harmonic_mean([[1.0]], [[4.0]], 0.5)[0, 0]),
                   abs(g_hat[1, 1] - tensor.arithmetic_mean(1.0, 4.0, 0.5)), abs(g_hat[0, 1]))
    mesh = fem.build_mesh(256)
    rows = hom.epsilon_sweep(lam, mesh, np.ones(mesh.n_elements), [1 / 8, 1 / 16, 1 / 32])
    l2 = [r.l2 for r in rows]
    dec = all(y < x for x, y in zip(l2, l2[1:]))
    ratio = l2[-1] / l2[0]
    ok = dec and ratio <= 0.5 and diag_err <= 1e-12
    return ok, (f"L2 {', '.join(f'{v:.3e}' for v in l2)} decreasing={dec}, last/first {ratio:.3f} <= 0.5, "
                f"H-limit diag error {diag_err:.1e} <= 1e-12"), 60


def _improved_two_phase(m):
    p = make_problem("two-phase", fem.build_mesh(m))
    return p, improve_control(p, p.constant_control(0))


def criterion_6():
    p, res = _improved_two_phase(64)
    viol = O.verify_pontryagin(p, res.control)[0]
    return viol <= 1e-6, (f"violation {viol:.2e} <= 1e-6 after {res.rounds} rounds "
                          f"({res.reason}, labels {np.bincount(res.control, minlength=2).tolist()})"), 30


def criterion_7():
    p, res = _improved_two_phase(32)
    ub = res.control
    ref = R.reference(p, ub)
    u = 1 - ub
    ell = O.select_direction(ref.cells, ub, u)
    nonsingular = O.classify_cells(ref.cells, ub, [u]).global_label == "nonsingular"
    tab = R.expansion_probe(p, ub, u, ell, ref=ref)
    fit = R.slope_fit(tab)
    rel = abs(fit - tab.J1) / abs(tab.J1)
    inc = float(np.min(tab.J_alpha - tab.J_bar))
    ok = nonsingular and rel <= 0.02 and inc >= -1e-6
    return ok, (f"J1 {tab.J1:.6g}, slope fit {fit:.6g}, rel err {rel:.1e} <= 0.02, "
                f"min increment {inc:.2e} >= -1e-6, candidate nonsingular={nonsingular}"), 60


def criterion_8():
    p = make_problem("rank-one-gap", fem.build_mesh(32), {"compliance": 1.0})
    ub, u = p.reference, p.constant_control(1)
    ref = R.reference(p, ub)
    rep = O.classify_cells(ref.cells, ub, [u])
    cand = rep.candidates[0]
    weak = cand.weakly_singular and rep.weak_label != "weakly nonsingular"
    tol = rep.tol_sing * float(p.mesh.areas.sum())
    tab = R.expansion_probe(p, ub, u, cand.direction, ref=ref)
    soc = R.soc_value(p, ub, u, cand.direction, ref=ref)
    rel = abs(tab.second_order_limit - soc.value) / abs(soc.value)
    ok = weak and abs(tab.J1) <= tol and rel <= 0.05 and soc.value >= -soc.tol_soc
    return ok, (f"label '{rep.weak_label}', |J1| {abs(tab.J1):.1e} <= {tol:.1e}, "
                f"limit {tab.second_order_limit:.6g} vs value {soc.value:.6g} (rel {rel:.1e} <= 0.05), "
                f"value >= -{soc.tol_soc:.1e}"), 60


def criterion_9():
    p = make_problem("region-free", fem.build_mesh(32))
    ub = p.reference
    u = np.where(p.region, 1, 0)
    ref = R.reference(p, ub)
    singular = O.classify_cells(ref.cells, ub, [u]).candidates[0].singular
    soc = R.soc_value_singular(p, ub, u, ref=ref)
    tab = R.expansion_probe(p, ub, u, [1.0, 0.0], ref=ref)
    rel = abs(tab.second_order_limit - soc.value) / abs(soc.value)
    pi = make_problem("region-free", fem.build_mesh(32), {"uniform_a": True})
    ui = np.where(pi.region, 1, 0)
    a = R.soc_value_singular(pi, pi.reference, ui).value
    b = R.soc_value_independent(pi, pi.reference, ui).value
    ok = singular and rel <= 0.05 and abs(a - b) <= 1e-10
    return ok, (f"singular value {soc.value:.6g} vs limit {tab.second_order_limit:.6g} (rel {rel:.1e} <= 0.05); "
                f"independent-coefficient difference {abs(a - b):.1e} <= 1e-10"), 60


def criterion_10():
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(200):
        b, c = tensor.random_spd(rng, 2), tensor.random_spd(rng, 2)
        a = rng.uniform(0.01, 0.99)
        m = rng.standard_normal(2)
        m /= np.linalg.norm(m)
        corr = hom.corrector_1d(b, c, a, m)
        worst = max(worst, np.abs(corr.closure(a)).max(),
                    np.abs(hom.reconstruct_hlimit(b, c, a, m, corr) - hom.hlimit_matrix(b, c, a, m)).max())
    return worst <= 1e-10, f"max closure/reconstruction residual {worst:.1e} <= 1e-10", 5


def criterion_11():
    cfg = cli.resolve_config(json.loads((ROOT / "configs" / "demo.json").read_text()))
    with tempfile.TemporaryDirectory() as d:
        a, b = Path(d) / "a", Path(d) / "b"
        ma, mb = cli.run(cfg, a), cli.run(cfg, b)
        files = sorted(p.name for p in a.iterdir() if p.suffix in (".csv", ".json"))
        same = files == sorted(p.name for p in b.iterdir() if p.suffix in (".csv", ".json"))
        diff = [f for f in files if (a / f).read_bytes() != (b / f).read_bytes()]
    ok = same and not diff and ma["exit_code"] == 0 and mb["exit_code"] == 0
    return ok, f"{len(files)} CSV/JSON artifacts, {len(diff)} differ, exit codes {ma['exit_code']}/{mb['exit_code']}", None


CRITERIA = {k: globals()[f"criterion_{k}"] for k in range(1, 12)}


def evaluate(k):
    t0 = time.perf_counter()
    ok, detail, budget = CRITERIA[k]()
    dt = time.perf_counter() - t0
    in_time = budget is None or dt < budget
    passed = bool(ok and in_time)
    limit = "" if budget is None else f" < {budget} s"
    line = f"{'PASS' if passed else 'FAIL'}  criterion {k:>2}: {detail}  [{dt:.2f} s{limit}]"
    return passed, line


@pytest.mark.parametrize("k", range(1, 12))
def test_criterion(k, capsys):
    passed, line = evaluate(k)
    with capsys.disabled():
        print("\n" + line)
    assert passed, line


if __name__ == "__main__":
    results = [evaluate(k) for k in CRITERIA]
    for _, line in results:
        print(line)
    raise SystemExit(0 if all(p for p, _ in results) else 1)
