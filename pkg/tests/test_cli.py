import csv
import io
import json

import numpy as np
import pytest

from semhex.cli import bench, main
from semhex.counters import residual_flops, subdomain_flops
from semhex.meshio import read_mesh


def run(capsys, *argv):
    try:
        code = main(list(argv))
    except SystemExit as exc:  # argparse usage errors
        code = exc.code
    out = capsys.readouterr()
    return code, out.out, out.err


def test_poisson_converges(capsys, tmp_path):
    rep = tmp_path / "r.json"
    code, out, _ = run(capsys, "poisson", "--k", "3", "--order", "2", "--family", "distorted_elements", "--report", str(rep))
    assert code == 0
    summary = json.loads(out)
    assert summary["status"] == "converged"
    assert json.loads(rep.read_text())["iterations"] == summary["iterations"]


def test_not_converged_exit_code(capsys):
    code, out, _ = run(capsys, "poisson", "--k", "3", "--order", "3", "--max-it", "2")
    assert code == 2
    assert json.loads(out)["status"] == "max_iterations"


@pytest.mark.parametrize(
    "argv",
    [
        ["poisson", "--k", "0"],
        ["poisson", "--order", "0"],
        ["poisson", "--precond", "ilu"],
        ["poisson", "--mesh-file", "/nonexistent/mesh.msh"],
        ["poisson", "--dirichlet", "floor"],
        ["poisson", "--tol", "5"],
        ["heat", "--dt", "-1"],
        ["frobnicate"],
    ],
)
def test_invalid_input_exit_code(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 3
    assert err


def test_argparse_errors_also_exit_three(capsys):
    with pytest.raises(SystemExit) as info:
        main(["poisson", "--order", "three"])
    assert info.value.code == 3


def test_toml_config_and_flag_precedence(capsys, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('order = 1\n[mesh]\nk = 2\n[output]\nreport = "%s"\n' % (tmp_path / "r.json"))
    code, _, _ = run(capsys, "poisson", "--config", str(cfg), "--order", "2")
    assert code == 0
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["config"]["order"] == 2 and data["mesh"]["num_elements"] == 8


def test_heat_short_run(capsys, tmp_path):
    rep = tmp_path / "h.json"
    code, out, _ = run(
        capsys, "heat", "--shape", "2", "2", "8", "--order", "2", "--steps", "3", "--tol", "1e-8", "--report", str(rep)
    )
    assert code == 0
    summary = json.loads(out)
    assert summary["steps"] == 3 and summary["final_mean"] > 0
    data = json.loads(rep.read_text())
    assert data["config"]["kappa"] == 1e-2 and data["config"]["heat"]["steps"] == 3
    assert data["mesh"]["num_dirichlet"] == 0


def test_mms_table(capsys, tmp_path):
    code, out, _ = run(capsys, "mms", "--k", "2", "--max-order", "3", "--csv", str(tmp_path / "m.csv"))
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [int(r["order"]) for r in rows] == [1, 2, 3]
    errs = [float(r["error"]) for r in rows]
    assert errs[0] > errs[1] > errs[2]
    assert list(csv.DictReader(open(tmp_path / "m.csv"))) == rows


def test_meshgen_round_trip(capsys, tmp_path):
    path = tmp_path / "m.msh"
    code, _, _ = run(capsys, "meshgen", "--family", "distorted_domain", "--k", "2", "--refine", "1", "-o", str(path))
    assert code == 0
    mesh = read_mesh(path)
    assert mesh.num_elements == 64
    code, out, _ = run(capsys, "poisson", "--mesh-file", str(path), "--order", "2")
    assert code == 0 and json.loads(out)["num_elements"] == 64


def test_bench_rows():
    rows = bench([2, 3], k=2, repeats=2)
    assert len(rows) == 6
    for r in rows:
        if r["kernel"] == "residual":
            assert r["flops_measured"] == r["flops_model"] == 2 * residual_flops(8, r["n"])
        else:
            assert r["flops_measured"] == r["flops_model"] == 2 * subdomain_flops(8, r["n"])
        assert np.isfinite(r["intensity_model"]) and r["intensity_measured"] > 0


def test_bench_cli(capsys, tmp_path):
    code, out, _ = run(capsys, "bench", "--orders", "2", "--k", "2", "--repeats", "1", "--json", str(tmp_path / "b.json"))
    assert code == 0
    assert len(list(csv.DictReader(io.StringIO(out)))) == 3
    assert len(json.loads((tmp_path / "b.json").read_text())) == 3
