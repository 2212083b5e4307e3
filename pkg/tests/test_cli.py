from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from forlion.cli import EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, main, parse_overrides
from forlion.config import apply_overrides, load_raw, validate
from forlion.report import RunReport, design_table, display_allocations

from conftest import FIXTURES

VALID = sorted(FIXTURES.glob("*.json"))


def _run(args, tmp_path, capsys):
    out = tmp_path / "report.json"
    code = main([*args, "-o", str(out)])
    text = capsys.readouterr()
    rep = RunReport.from_json(out.read_text()) if out.exists() else None
    return code, rep, text


@pytest.mark.parametrize("path", VALID, ids=lambda p: p.stem)
def test_fixtures_validate_clean(path):
    assert validate(path) == []


@pytest.mark.parametrize(
    "name,key",
    [
        ("invalid_formula", "model.formula"),
        ("invalid_mlm_rows", "model.formula"),
        ("invalid_prior", "parameters.prior"),
    ],
)
def test_invalid_fixtures_give_one_diagnostic(name, key, capsys):
    diags = validate(FIXTURES / "invalid" / f"{name}.json")
    assert [d.key for d in diags] == [key]
    assert main(["validate", "-c", str(FIXTURES / "invalid" / f"{name}.json")]) == EXIT_INVALID
    assert key in capsys.readouterr().out


def test_validate_unreadable_file(tmp_path, capsys):
    assert main(["validate", "-c", str(tmp_path / "missing.json")]) == EXIT_INVALID
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["validate", "-c", str(bad)]) == EXIT_INVALID
    assert "config" in capsys.readouterr().err


def test_bad_formula_exits_2(tmp_path, capsys):
    code, rep, text = _run(["design", "-c", str(FIXTURES / "invalid" / "invalid_formula.json")], tmp_path, capsys)
    assert code == EXIT_INVALID and rep is None
    assert "model.formula" in text.err


def test_unknown_key_exits_2(tmp_path, capsys):
    code, _, text = _run(["run", "-c", str(FIXTURES / "house_flies.json"), "--algorithm.speed=3"], tmp_path, capsys)
    assert code == EXIT_INVALID and "algorithm.speed" in text.err


def test_singular_rounding_exits_3(tmp_path, capsys):
    cfg = str(FIXTURES / "house_flies_round.json")
    code, rep, text = _run(["round", "-c", cfg, "--rounding.N=2"], tmp_path, capsys)
    assert code == EXIT_NUMERICAL and rep is None
    assert "singular" in text.err


def test_budget_exhaustion_exits_3_with_report(tmp_path, capsys):
    cfg = str(FIXTURES / "esd_ew_integral.json")
    args = ["ew-design", "-c", cfg, "--parameters.prior.cubature_max_evals=300", "--algorithm.maxit=2"]
    code, rep, text = _run(args, tmp_path, capsys)
    assert code == EXIT_NUMERICAL
    assert rep.warnings == ["cubature_budget_exceeded"]
    assert "budget" in text.err


def test_round_house_flies(tmp_path, capsys):
    code, rep, text = _run(["round", "-c", str(FIXTURES / "house_flies_round.json")], tmp_path, capsys)
    assert code == EXIT_OK
    assert rep.ni == [1393, 710, 1397] and rep.N == 3500
    assert rep.rel_efficiency == pytest.approx(0.9999989, abs=1e-6)
    assert "Design Output" in text.out and "ni.design" in text.out


def test_grid_override_from_command_line(tmp_path, capsys):
    args = ["round", "-c", str(FIXTURES / "house_flies_round.json"), "--rounding.grid.x", "20"]
    code, rep, _ = _run(args, tmp_path, capsys)
    assert code == EXIT_OK
    assert sorted(p[0] for p in rep.design["points"]) == [0.0, 100.0, 140.0]
    assert rep.rel_efficiency == pytest.approx(0.9465724, abs=1e-6)


def test_efficiency_of_identical_designs(tmp_path, capsys):
    raw = load_raw(FIXTURES / "house_flies_round.json")
    raw["task"] = "efficiency"
    raw["reference"] = raw["design"]
    del raw["rounding"]
    path = tmp_path / "eff.json"
    path.write_text(json.dumps(raw))
    code, rep, _ = _run(["run", "-c", str(path)], tmp_path, capsys)
    assert code == EXIT_OK
    assert rep.rel_efficiency == pytest.approx(1.0, abs=1e-14)


def test_info_task(tmp_path, capsys):
    raw = load_raw(FIXTURES / "esd_local.json")
    raw["task"] = "info"
    raw["point"] = [25, -1, 1, 1, -1]
    path = tmp_path / "info.json"
    path.write_text(json.dumps(raw))
    code, rep, _ = _run(["run", "-c", str(path)], tmp_path, capsys)
    assert code == EXIT_OK
    F = np.array(rep.info)
    assert F.shape == (7, 7) and F[0, 0] == pytest.approx(108.1905, rel=1e-6)


def test_parse_overrides():
    got = parse_overrides(["--a.b=1e-6", "--c", "[1, 2]", "--d=text", "--e=true"])
    assert got == [("a.b", 1e-6), ("c", [1, 2]), ("d", "text"), ("e", True)]
    raw = apply_overrides({"a": {"x": 1}}, [("a.b.c", 2)])
    assert raw == {"a": {"x": 1, "b": {"c": 2}}}


def test_report_roundtrip():
    rep = RunReport(
        task="round",
        factors=["x"],
        design={"points": [[0.0], [103.5]], "counts": [3, 4]},
        m=2,
        det=1.5e-7,
        log_det=float(np.log(1.5e-7)),
        ni=[3, 4],
        N=7,
        rel_efficiency=0.99991234567,
        warnings=["w"],
        provenance={"seed": 1, "wall_time": 0.5},
    )
    again = RunReport.from_json(rep.to_json())
    assert again == rep
    assert again.to_json() == rep.to_json()
    assert "wall_time" not in json.loads(again.without_wall_time())["provenance"]


def test_display_allocations_sum_to_one():
    rng = np.random.default_rng(0)
    for _ in range(200):
        w = rng.dirichlet(np.ones(int(rng.integers(2, 20))))
        shown = display_allocations(w)
        assert abs(sum(float(s) for s in shown) - 1.0) <= 5e-4


def test_exact_table_counts_sum_to_n():
    design = {"points": [[0.0], [103.5], [149.2]], "counts": [710, 1393, 1397]}
    table = design_table(["x"], design)
    rows = [line.split() for line in table.splitlines() if line.strip()[:1].isdigit()]
    assert sum(int(r[-1]) for r in rows) == 3500


def test_design_run_is_deterministic(tmp_path, capsys):
    cfg = str(FIXTURES / "esd_local.json")
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    assert main(["run", "-c", cfg, "--algorithm.reltol=1e-4", "-o", str(a)]) == EXIT_OK
    assert main(["run", "-c", cfg, "--algorithm.reltol=1e-4", "-o", str(b)]) == EXIT_OK
    capsys.readouterr()
    ra, rb = RunReport.from_json(a.read_text()), RunReport.from_json(b.read_text())
    assert ra.without_wall_time() == rb.without_wall_time()
    assert ra.provenance["seed"] == 123 and ra.provenance["config_hash"] == rb.provenance["config_hash"]


def test_seed_flag_changes_provenance(tmp_path, capsys):
    cfg = str(FIXTURES / "house_flies_round.json")
    code, rep, _ = _run(["round", "-c", cfg, "--seed", "77"], tmp_path, capsys)
    assert code == EXIT_OK and rep.provenance["seed"] == 77


def test_console_script_entry_point(tmp_path):
    out = tmp_path / "r.json"
    proc = subprocess.run(
        [sys.executable, "-m", "forlion.cli", "round", "-c", str(FIXTURES / "house_flies_round.json"), "-o", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(out.read_text())["N"] == 3500
