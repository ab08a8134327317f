import json
import subprocess
import sys
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from ellopt import cli, io, semilinear
from ellopt.mesh_fem import SolverError, build_mesh

ROOT = Path(__file__).resolve().parents[1]
DEMO = ROOT / "configs" / "demo.json"


class TestFormats:
    def test_csv_frozen(self, tmp_path):
        p = io.write_csv(tmp_path / "a.csv", ("i", "x", "flag", "s"),
                         [(1, 0.1, True, "a"), (np.int64(2), np.float64(1 / 3), False, None),
                          (3, float("nan"), np.bool_(True), "b")])
        assert p.read_bytes() == (b"i,x,flag,s\n1,0.1,true,a\n2,0.3333333333333333,false,\n"
                                  b"3,nan,true,b\n")
        header, rows = io.read_csv(p)
        assert header == ["i", "x", "flag", "s"] and float(rows[1][1]) == 1 / 3

    def test_json_frozen(self, tmp_path):
        p = io.write_json(tmp_path / "a.json", {"b": np.array([1.5, np.inf]), "a": np.int32(3)})
        assert p.read_text() == '{\n  "a": 3,\n  "b": [\n    1.5,\n    null\n  ]\n}\n'

    def test_canonical_hash_key_order(self):
        assert io.canonical_hash({"a": 1, "b": [1.0]}) == io.canonical_hash({"b": [1.0], "a": 1})
        assert io.canonical_hash({"a": 1}) != io.canonical_hash({"a": 2})

    @pytest.mark.parametrize("name", io.SCHEMAS)
    def test_schemas_are_valid(self, name):
        schema = io.load_schema(name)
        jsonschema.Draft7Validator.check_schema(schema)

    def test_unknown_schema(self):
        with pytest.raises(KeyError):
            io.load_schema("nope")

    def test_colormap(self):
        cm = io.colormap()
        assert len(cm) == 256 and cm[0] == "#440154" and cm[-1] == "#fde725"
        np.testing.assert_array_equal(io.color_index(np.array([0.0, 0.5, 1.0]), 0.0, 1.0), [0, 128, 255])
        np.testing.assert_array_equal(io.color_index(np.ones(3), 1.0, 1.0), 0)

    def test_svg(self, tmp_path, mesh8):
        vals = mesh8.centroids[:, 0]
        text = io.write_svg_heatmap(tmp_path / "a.svg", mesh8, vals, "x").read_text()
        assert text.count("<polygon") == mesh8.n_elements
        assert f"min={float(vals.min())!r} max={float(vals.max())!r}" in text
        nodal = io.write_svg_heatmap(tmp_path / "b.svg", mesh8, mesh8.nodes[:, 0], "x").read_text()
        assert nodal.count("<polygon") == mesh8.n_elements
        with pytest.raises(ValueError):
            io.write_svg_heatmap(tmp_path / "c.svg", mesh8, np.ones(5), "x")


class TestConfig:
    def test_defaults_validate(self):
        cfg = cli.resolve_config({})
        assert cfg["mesh"] == 32 and cfg["problem"]["name"] == "two-phase"

    def test_overrides_and_tolerance_merge(self):
        cfg = cli.resolve_config({"tolerances": {"sing": 1e-8}}, {"mesh": 16, "seed": None})
        assert cfg["mesh"] == 16 and cfg["seed"] == 0
        assert cfg["tolerances"] == {"sing": 1e-8, "pontryagin": 1e-6, "expansion_rel": 0.05}

    def test_homogenization_defaults_filled(self):
        cfg = cli.resolve_config({"homogenization": {"alpha": 0.25}})
        assert cfg["homogenization"]["alpha"] == 0.25 and cfg["homogenization"]["mesh"] == 128

    @pytest.mark.parametrize("user", [[], {"mesh": 1}, {"mesh": "x"}, {"unknown_key": 1},
                                      {"candidates": [{"control": {"kind": "bogus"}}]}])
    def test_invalid(self, user):
        with pytest.raises(cli.ConfigError):
            cli.resolve_config(user)

    @pytest.mark.parametrize("path", sorted((ROOT / "configs").glob("*.json")), ids=lambda p: p.name)
    def test_shipped_configs_validate(self, path):
        cli.resolve_config(json.loads(path.read_text()))


@pytest.fixture(scope="module")
def demo_runs(tmp_path_factory):
    cfg = cli.resolve_config(json.loads(DEMO.read_text()))
    a, b = tmp_path_factory.mktemp("a"), tmp_path_factory.mktemp("b")
    return cli.run(cfg, a), a, cli.run(cfg, b), b


class TestRun:
    def test_all_stages_ok(self, demo_runs):
        man, out, _, _ = demo_runs
        assert man["exit_code"] == 0
        assert list(man["stages"]) == ["improve", "solve", "classify", "expand", "soc", "homogenize", "decimal"]
        assert all(s["status"] == "ok" for s in man["stages"].values())

    def test_artifacts(self, demo_runs):
        man, out, _, _ = demo_runs
        expected = {"improve.json", "improved_control.csv", "solve.json", "state.csv", "control.csv",
                    "ybar.svg", "psibar.svg", "grad_ybar.svg", "control.svg", "classify.json",
                    "expansion.json", "soc.json", "sweep.csv", "homogenize.json", "decimal.csv",
                    "decimal.json"}
        assert expected <= set(man["artifacts"])
        for name, digest in man["artifacts"].items():
            assert io.file_hash(out / name) == digest
        for name, schema in [("solve.json", "solve"), ("classify.json", "classify"), ("soc.json", "soc"),
                             ("expansion.json", "expansion"), ("manifest.json", "manifest")]:
            io.validate(json.loads((out / name).read_text()), schema)

    def test_byte_identical_rerun(self, demo_runs):
        _, a, _, b = demo_runs
        names = sorted(p.name for p in a.iterdir())
        assert names == sorted(p.name for p in b.iterdir())
        for n in names:
            assert (a / n).read_bytes() == (b / n).read_bytes(), n

    def test_expansion_table_header(self, demo_runs):
        _, out, _, _ = demo_runs
        header, rows = io.read_csv(out / "expansion_0.csv")
        assert header == list(cli.relaxation.ExpansionTable.HEADER) and len(rows) == 5

    def test_weakly_singular_candidate_reported(self, demo_runs):
        _, out, _, _ = demo_runs
        soc = json.loads((out / "soc.json").read_text())["candidates"]
        assert soc[0]["weakly_singular"] and soc[0]["applicable"]
        assert soc[0]["report"]["passed"]


class TestExitCodes:
    def test_config_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"mesh": -3}')
        assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
        assert "config invalid" in capsys.readouterr().err

    def test_unreadable_config(self, tmp_path):
        assert cli.main(["solve", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2

    def test_unknown_problem_is_config_error(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"problem": {"name": "nope", "params": {}}}')
        assert cli.main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG

    def test_solver_failure(self, tmp_path, monkeypatch):
        def boom(*a, **k):
            raise SolverError("no convergence", 1.0, [1.0])

        monkeypatch.setattr(semilinear, "solve_state", boom)
        assert cli.main(["solve", "--mesh", "8", "--out", str(tmp_path)]) == cli.EXIT_SOLVER
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["stages"]["solve"]["kind"] == "solver"

    def test_optimality_violation(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"reference": {"kind": "constant", "label": 0}, "mesh": 16,
                                   "candidates": [{"control": {"kind": "constant", "label": 1}}]}))
        assert cli.main(["classify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_VIOLATION

    def test_dependent_stage_skipped(self, tmp_path, monkeypatch):
        def boom(*a, **k):
            raise SolverError("no convergence", 1.0, [1.0])

        monkeypatch.setattr(semilinear, "solve_state", boom)
        man = cli.run(cli.resolve_config({"mesh": 8, "candidates": [{"control": {"kind": "constant", "label": 1}}]}),
                      tmp_path)
        assert man["stages"]["classify"]["status"] == "skipped"


class TestSubcommands:
    def test_decimal_measure_flags(self, tmp_path, capsys):
        code = cli.main(["decimal-measure", "--nu", "1", "2", "--alpha", "0.3", "--n", "400",
                         "--out", str(tmp_path)])
        assert code == 0
        items = json.loads((tmp_path / "decimal.json").read_text())["items"]
        assert items[0]["measure"] == pytest.approx(0.3, abs=5e-3)

    @pytest.mark.parametrize("argv", [["--nu", "1", "2"], ["--nu", "0", "0", "--alpha", "0.3"],
                                      ["--nu", "1", "--alpha", "0.3", "--n", "10"], []])
    def test_decimal_measure_errors(self, tmp_path, argv):
        assert cli.main(["decimal-measure", *argv, "--out", str(tmp_path)]) == cli.EXIT_CONFIG

    def test_homogenize_gate(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"homogenization": {"mesh": 16, "eps": [0.25]}}))
        assert cli.main(["homogenize", "--config", str(cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG

    def test_solve_writes_heatmaps(self, tmp_path):
        assert cli.main(["solve", "--mesh", "8", "--out", str(tmp_path)]) == 0
        for name in ("ybar.svg", "psibar.svg", "grad_ybar.svg", "control.svg", "state.csv", "solve.json"):
            assert (tmp_path / name).exists()

    def test_selftest(self, tmp_path):
        assert cli.main(["selftest", "--out", str(tmp_path)]) == 0
        checks = json.loads((tmp_path / "selftest.json").read_text())["checks"]
        assert len(checks) == 5 and all(c["passed"] for c in checks)

    def test_console_script(self, tmp_path):
        r = subprocess.run([sys.executable, "-m", "ellopt.cli", "--version"], capture_output=True, text=True)
        assert r.returncode == 0 and r.stdout.startswith("ellopt ")
