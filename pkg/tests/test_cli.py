import json

import numpy as np
import pytest

from parafac.cli import main, run_cell
from parafac.convops import apply, load_spec


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gen_identity(tmp_path, capsys):
    path = tmp_path / "id.json"
    code, _, _ = run(capsys, "gen", "--kind", "standard", "--channels", 4, "--degree", 1,
                     "--init", "identity", "-o", path)
    assert code == 0
    spec = load_spec(str(path))
    assert spec.filters[0].length == 1
    x = np.random.default_rng(0).standard_normal((8, 4))
    assert np.max(np.abs(apply(spec, x) - x)) <= 1e-14


def test_gen_then_verify(tmp_path, capsys):
    path = tmp_path / "sd.json"
    assert run(capsys, "gen", "--kind", "strided_down", "--rate", 2, "--in", 2, "--out", 4, "-o", path)[0] == 0
    code, out, _ = run(capsys, "verify", path, "--n", 16, "--oracle", "--csv", tmp_path / "r.csv")
    rep = json.loads(out)
    assert code == 0 and rep["ratio_dev_abs_max"] <= 1e-12 and rep["oracle_residual"] <= 1e-10
    assert (tmp_path / "r.csv").read_text().startswith("kind,R,G,dtype")


def test_gen_infeasible_names_relation(tmp_path, capsys):
    code, _, err = run(capsys, "gen", "--kind", "group", "--groups", 3, "--channels", 4, "-o", tmp_path / "x.json")
    assert code == 2 and "does not divide" in err
    code, _, err = run(capsys, "gen", "--kind", "strided_down", "--rate", 2, "--in", 2, "--out", 3,
                       "-o", tmp_path / "x.json")
    assert code == 2 and "rate * in_channels" in err


def test_verify_deterministic_and_env_seed(tmp_path, capsys, monkeypatch):
    path = tmp_path / "s.json"
    run(capsys, "gen", "--channels", 3, "-o", path)
    a = run(capsys, "verify", path, "--n", 16, "--trials", 10, "--seed", 1)[1]
    b = run(capsys, "verify", path, "--n", 16, "--trials", 10, "--seed", 1)[1]
    assert a == b
    monkeypatch.setenv("PARAFAC_SEED", "1")
    c = run(capsys, "verify", path, "--n", 16, "--trials", 10, "--seed", 99)[1]
    assert c == a
    monkeypatch.setenv("PARAFAC_SEED", "x")
    assert run(capsys, "verify", path)[0] == 2


def test_verify_missing_file(tmp_path, capsys):
    assert run(capsys, "verify", tmp_path / "nope.json")[0] == 2


def test_verify_masked_svcm_fails(tmp_path, capsys):
    path = tmp_path / "m.json"
    run(capsys, "gen", "--construction", "svcm_masked", "--channels", 4, "-o", path)
    code, out, _ = run(capsys, "verify", path, "--n", 16)
    rep = json.loads(out)
    assert code == 3 and not rep["orthogonal"] and abs(rep["ratio_dev_mean"]) > 1e-2


def test_verify_f32(tmp_path, capsys):
    path = tmp_path / "s.json"
    run(capsys, "gen", "--channels", 8, "-o", path)
    code, out, _ = run(capsys, "verify", path, "--n", 32, "--trials", 20, "--dtype", "f32")
    rep = json.loads(out)
    assert code == 0 and rep["ratio_dev_abs_mean"] < 1e-6


def test_oracle_command(tmp_path, capsys):
    path = tmp_path / "s.json"
    run(capsys, "gen", "--channels", 2, "-o", path)
    code, out, _ = run(capsys, "oracle", path, "--n", 8)
    assert code == 0 and json.loads(out)["oracle_residual"] <= 1e-10
    assert run(capsys, "oracle", path, "--n", 4096)[0] == 4


def test_run_cell_infeasible():
    cell = run_cell("strided_up", 4, 16, 64, (1, 1), 256, 2, 0, "f64")
    assert not cell["feasible"] and "groups 16 does not divide out_channels 4" in cell["violation"]


def test_report(tmp_path, capsys):
    path = tmp_path / "s.json"
    run(capsys, "gen", "--channels", 2, "-o", path)
    out_dir = tmp_path / "out"
    out_dir.mkdir()
    verify_json = run(capsys, "verify", path, "--n", 8, "--trials", 4)[1]
    (out_dir / "a.json").write_text(verify_json)
    verify32 = run(capsys, "verify", path, "--n", 8, "--trials", 4, "--dtype", "f32")[1]
    (out_dir / "b.json").write_text(verify32)
    code, md, _ = run(capsys, "report", out_dir)
    assert code == 0 and "## f32" in md and "## f64" in md and "1-dilated" in md
    code, csv_text, _ = run(capsys, "report", out_dir, "--format", "csv")
    assert code == 0 and len(csv_text.strip().splitlines()) == 3
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run(capsys, "report", empty)[0] != 0


def test_bad_arguments(capsys):
    assert run(capsys, "gen", "--kind", "nope", "-o", "x")[0] == 2
    assert run(capsys, "frobnicate")[0] == 2


def test_sweep_cell_deterministic():
    a = run_cell("strided_down", 2, 4, 16, (1, 1), 64, 5, 3, "f64")
    b = run_cell("strided_down", 2, 4, 16, (1, 1), 64, 5, 3, "f64")
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    assert a["rate"] == 4 and a["report"]["orthogonal"]
