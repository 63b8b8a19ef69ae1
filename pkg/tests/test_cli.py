import json

import pytest

from agebif.cli import build_parser, default_start, main

SMALL = ["--n-x", "16", "--n-a", "32"]


def run(tmp_path, *args):
    return main([*args, *SMALL, "--output-dir", str(tmp_path)])


def test_locate_writes_points(tmp_path):
    assert run(tmp_path, "locate", "--case", "competing", "--xi", "2") == 0
    data = json.loads((tmp_path / "bifurcation_points.json").read_text())
    kinds = {p["kind"]: p for p in data["points"]}
    assert set(kinds) == {"eta2", "eta3"}
    assert all(p["eta"] > 1 and p["residual"] < 1e-8 for p in kinds.values())
    assert data["profile_scales"]["b1"] > 0


def test_locate_parallel_matches_serial(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "locate", "--case", "cooperative", "--xi", "0.8", "2", "3") == 0
    assert run(b, "locate", "--case", "cooperative", "--xi", "0.8", "2", "3",
               "--jobs", "2") == 0
    assert (a / "bifurcation_points.json").read_bytes() == \
        (b / "bifurcation_points.json").read_bytes()


def test_recheck_accepts_and_rejects(tmp_path):
    run(tmp_path, "locate", "--case", "competing", "--xi", "2")
    path = tmp_path / "bifurcation_points.json"
    assert run(tmp_path, "locate", "--recheck", str(path)) == 0
    data = json.loads(path.read_text())
    data["points"][0]["eta"] *= 1.05
    path.write_text(json.dumps(data))
    assert run(tmp_path, "locate", "--recheck", str(path)) == 4


def test_config_error_exit(tmp_path, capsys):
    assert run(tmp_path, "locate", "--alpha1", "0") == 2
    assert "model/alpha1" in capsys.readouterr().err
    assert run(tmp_path, "locate", "--config", str(tmp_path / "none.json")) == 2


def test_solver_error_exit(tmp_path, capsys):
    assert run(tmp_path, "branch", "--xi", "0.9", "--start", "eta3") == 3
    assert "NoBracket" in capsys.readouterr().err


def test_branch_outputs(tmp_path):
    assert run(tmp_path, "branch", "--case", "competing", "--xi", "2") == 0
    lines = (tmp_path / "branch.csv").read_text().splitlines()
    assert lines[0].startswith("index,eta,xi,u_sup")
    etas = [float(ln.split(",")[1]) for ln in lines[1:]]
    assert max(etas) <= 2 + 1e-3
    meta = json.loads((tmp_path / "branch_meta.json").read_text())
    assert meta["endpoint"]["kind"] == "JoinsB1"


def test_semitrivial_convergence_nu(tmp_path):
    assert run(tmp_path, "semitrivial", "--etas", "1.5", "2") == 0
    rows = (tmp_path / "semitrivial_b1.csv").read_text().splitlines()
    assert len(rows) == 3 and rows[0].startswith("eta,sup")
    assert run(tmp_path, "convergence", "--levels", "2") == 0
    assert len((tmp_path / "convergence.csv").read_text().splitlines()) == 3
    assert run(tmp_path, "nu-estimate", "--count", "6") == 0
    meta = json.loads((tmp_path / "nu_estimate_meta.json").read_text())
    assert meta["flag"] == "ESTIMATE" and meta["truncated"] is True
    assert all(r.endswith("ESTIMATE")
               for r in (tmp_path / "nu_estimate.csv").read_text().splitlines()[1:])


def test_verify_exit_zero(tmp_path):
    assert run(tmp_path, "verify", "--trials", "2") == 0
    rep = json.loads((tmp_path / "verify_report.json").read_text())
    assert rep["passed"] is True and len(rep["reports"]) == 5


def test_default_start():
    assert default_start("competing", 2.0) == "eta2"
    assert default_start("cooperative", 2.0) == "eta1"
    assert default_start("cooperative", 0.5) == "eta0"
    assert default_start("predator_prey", 0.5) == "eta0"
    assert default_start("predator_prey", 2.0) == "eta2"


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["locate", "--help"])
    assert "n_x=64" in capsys.readouterr().out
