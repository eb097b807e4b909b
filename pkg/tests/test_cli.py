import csv
import json
import subprocess
import sys

import pytest

from mslab import cli


def _run(tmp_path, *argv):
    return cli.main(list(argv) + ["--out", str(tmp_path)])


def test_eigen_constant(tmp_path):
    assert _run(tmp_path, "eigen", "--fixture", "constant_identity") == 0
    rows = list(csv.reader(open(tmp_path / "eigen.csv")))
    assert rows[0] == ["epsilon", "lambda", "residual", "iterations"]
    assert [float(r[1]) for r in rows[1:]] == pytest.approx([5.0] * 3, abs=1e-10)
    report = json.load(open(tmp_path / "eigen.json"))
    assert report["config"]["coefficients"]["c"] == "5"


def test_transport_fixed_point_table(tmp_path):
    assert _run(tmp_path, "transport", "--fixture", "circle_sine") == 0
    rows = list(csv.DictReader(open(tmp_path / "fixed_points.csv")))
    for r in rows:
        assert float(r["u"]) == pytest.approx(float(r["f_over_c"]), abs=1e-6)
    field_rows = list(csv.reader(open(tmp_path / "transport_u.csv")))
    assert field_rows[0] == ["x", "value"] and len(field_rows) == 257
    # 17 significant digits
    assert len(field_rows[5][1].replace(".", "").lstrip("0").split("e")[0]) >= 15


def test_verify_pass(tmp_path):
    assert _run(tmp_path, "verify", "--fixture", "torus_cycles", "--set", "grid.n=64") == 0
    report = json.load(open(tmp_path / "verify.json"))
    assert report["passed"] and report["lyapunov"]["passed"]


def test_verify_fails_for_small_kappa(tmp_path):
    assert _run(tmp_path, "verify", "--fixture", "torus_cycles", "--set", "grid.n=64",
                "--set", "field.lyapunov=1 - cos(y)") == 0
    assert json.load(open(tmp_path / "verify.json"))["passed"] is False


def test_config_file_and_timings(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[grid]\ndim = 1\nn = 64\n[coefficients]\na = 2 + cos(x)\n"
                   "[sweep]\nepsilons = 0.1, 0.05\n")
    assert cli.main(["eigen", "--config", str(ini), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "timings.log").read_text().startswith("eigen\t")
    assert "sweep" not in json.dumps(json.load(open(tmp_path / "o" / "eigen.json"))["results"])


def test_precondition_exit_code(tmp_path, capsys):
    assert _run(tmp_path, "eigen", "--fixture", "constant_identity",
                "--set", "coefficients.c=5 +") == 2
    assert "coefficients.c" in capsys.readouterr().err
    assert _run(tmp_path, "eigen", "--fixture", "nope") == 2
    assert _run(tmp_path, "eigen") == 2


def test_convergence_exit_code(tmp_path):
    # a Picard seed on the unstable middle root grows and is reported as non-convergence
    assert _run(tmp_path, "nonlinear", "--fixture", "nonlinear_cubic", "--set", "grid.n=64",
                "--set", "analysis.u0=1.45", "--set", "analysis.realize=none") == 3


def test_sweep_failure_is_precondition(tmp_path):
    assert _run(tmp_path, "eigen", "--fixture", "circle_sine", "--set", "sweep.scheme=central",
                "--set", "sweep.epsilons=0.5, 0.001") == 2


def test_list_fixtures(capsys):
    assert cli.main(["list-fixtures", "--theorem", "2"]) == 0
    names = [fx["name"] for fx in json.loads(capsys.readouterr().out)]
    assert names and all("torus_cycles" in n for n in names)


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "mslab.cli", "list-fixtures"],
                         capture_output=True, text=True, check=True).stdout
    assert "circle_sine" in out


@pytest.mark.parametrize("sub,fixture", [("eigen", "circle_potential"),
                                         ("pressure", "circle_sine"),
                                         ("concentrate", "double_well")])
def test_byte_identical_reruns(tmp_path, sub, fixture):
    for d in ("a", "b"):
        assert cli.main([sub, "--fixture", fixture, "--out", str(tmp_path / d)]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir() if p.name != "timings.log")
    assert files
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
