import json
import subprocess
import sys

import numpy as np
import pytest

from digiq.cli import SCHEMA, SCHEMA_VERSION, RunConfig, emit_report, load_config, main, read_report, run
from digiq.errors import ConfigError
from digiq.state import load_binary


def _report(tmp_path, *argv, name="r.json"):
    path = tmp_path / name
    code = main([*argv, "--report", str(path)])
    return code, (json.loads(path.read_text()) if path.exists() else None)


def test_decompose_laplacian(tmp_path):
    code, rep = _report(tmp_path, "decompose", "--family", "laplacian1d", "--param", "N=4")
    assert code == 0
    assert rep["results"]["parts"] == 3
    assert rep["contract"]["satisfied"]


def test_solve_identity(tmp_path):
    code, rep = _report(tmp_path, "solve", "--family", "identity", "--param", "N=8", "--epsilon", "1e-6")
    assert code == 0
    assert rep["results"]["iterations"] == 1


def test_report_schema(tmp_path):
    _, rep = _report(tmp_path, "solve", "--family", "diagonal", "--param", "values=[1, 2, 4]")
    assert rep["schema"] == SCHEMA and rep["schema_version"] == SCHEMA_VERSION
    for key in ("library_version", "backend", "subcommand", "seed", "inputs", "operator", "derived",
                "results", "contract", "histories", "notes", "wall_time"):
        assert key in rep
    assert rep["derived"]["formula_inputs"]["d"] == 1


def test_reports_deterministic(tmp_path):
    argv = ["inverse-exp", "--family", "diagonal", "--param", "values=[1, 0.5, 0.25]", "--epsilon", "0.1",
            "--vector", "random", "--seed", "3"]
    _, a = _report(tmp_path, *argv, name="a.json")
    _, b = _report(tmp_path, *argv, name="b.json")
    a.pop("wall_time")
    b.pop("wall_time")
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_thread_count_does_not_change_results(tmp_path, monkeypatch):
    argv = ["thermal", "--family", "tfi_chain", "--param", "n=2", "--param", "J=1", "--param", "h=0.5",
            "--observable", "ZI", "--beta", "2"]
    _, a = _report(tmp_path, *argv, "--threads", "1", name="a.json")
    monkeypatch.setenv("DIGIQ_THREADS", "3")
    _, b = _report(tmp_path, *argv, name="b.json")
    assert b["inputs"]["threads"] == 3
    assert a["results"] == b["results"]


def test_residual_csv(tmp_path):
    csv_path = tmp_path / "h.csv"
    code, rep = _report(tmp_path, "solve", "--family", "diagonal", "--param", "values=[1, 3]",
                        "--csv", str(csv_path))
    assert code == 0
    rows = csv_path.read_text().splitlines()
    assert rows[0] == "index,residual"
    assert len(rows) - 1 == len(rep["histories"]["residual"])


def test_inverse_histogram(tmp_path):
    code, rep = _report(tmp_path, "inverse-exp", "--family", "diagonal", "--param", "values=[1, 0.2]",
                        "--epsilon", "0.1")
    assert code == 0
    hist = rep["histories"]["r_j_histogram"]
    assert sum(v for _, v in hist) == rep["derived"]["terms"]
    assert sum(k * v for k, v in hist) == rep["derived"]["r_tot"]


def test_expm_state_out(tmp_path):
    out = tmp_path / "s.bin"
    code, rep = _report(tmp_path, "expm", "--family", "laplacian1d", "--param", "N=8", "--t", "2",
                        "--eps0", "1e-8", "--vector", "uniform", "--state-out", str(out))
    assert code == 0
    s = load_binary(out.read_bytes())
    assert s.dim == 8 and rep["derived"]["r"] > 0


def test_measure_modes(tmp_path):
    args = ["measure", "--observable", "0.5:ZI", "--observable", "XX", "--vector", "basis:0"]
    _, exact = _report(tmp_path, *args, name="e.json")
    assert exact["results"]["value"] == 0.5
    _, sampled = _report(tmp_path, *args, "--mode", "sampled", "--seed", "1", name="s.json")
    assert sampled["derived"]["m"] == 191


def test_groundstate_ratios(tmp_path):
    code, rep = _report(tmp_path, "groundstate", "--family", "diagonal", "--param", "values=[0, 1]",
                        "--vector", "uniform", "--T", "10", "--observable", "Z")
    assert code == 0
    assert rep["results"]["ratios"]["Z"] == pytest.approx((1 - np.exp(-20)) / (1 + np.exp(-20)))
    assert rep["derived"]["gap_source"] == "dense-oracle"


def test_report_round_trip(tmp_path):
    cfg = RunConfig("solve", family="diagonal", params={"values": [2, 5]})
    rep, _ = run(cfg)
    doc = read_report(emit_report(rep))
    assert doc["results"]["iterations"] == rep.results["iterations"]
    assert doc["histories"]["residual"] == rep.histories["residual"]


def test_read_report_rejects_foreign():
    with pytest.raises(ConfigError):
        read_report('{"schema": "other"}')


def test_config_file_and_override(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"subcommand": "solve", "family": "identity", "params": {"N": 2},
                                "eps": 1e-4}))
    assert load_config(path).eps == 1e-4
    assert load_config(path, {"eps": 1e-8}).eps == 1e-8
    code, rep = _report(tmp_path, "solve", "--config", str(path), "--epsilon", "1e-9")
    assert code == 0 and rep["inputs"]["eps"] == 1e-9


def test_config_unknown_field_line(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{\n  "subcommand": "solve",\n  "family": "identity",\n  "epsilonn": 0.1\n}\n')
    with pytest.raises(ConfigError) as e:
        load_config(path)
    assert e.value.field == "epsilonn" and e.value.line == 4


def test_config_bad_value_line(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{\n  "subcommand": "solve",\n  "family": "identity",\n  "eps": 5\n}\n')
    with pytest.raises(ConfigError) as e:
        load_config(path)
    assert e.value.field == "eps" and e.value.line == 4
    assert main(["solve", "--config", str(path)]) == 1


def test_config_malformed_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{\n  "subcommand": "solve",\n  "family" "identity"\n}\n')
    with pytest.raises(ConfigError) as e:
        load_config(path)
    assert e.value.line == 3


@pytest.mark.parametrize("argv", [
    ["solve"],
    ["solve", "--family", "identity", "--matrix", "x.mtx"],
    ["solve", "--family", "nope"],
    ["solve", "--family", "identity", "--format", "Q8"],
    ["bogus"],
])
def test_usage_errors_exit_1(argv):
    assert main(argv) == 1


def test_matrix_market_input(tmp_path):
    mtx = tmp_path / "a.mtx"
    mtx.write_text("%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 2\n2 1 1\n")
    code, rep = _report(tmp_path, "solve", "--matrix", str(mtx), "--epsilon", "1e-8")
    # the symmetric file stores (1,1) and (2,1); the mirrored (1,2) makes three nonzeros
    assert code == 0 and rep["operator"]["nnz"] == 3


def test_nonhermitian_matrix(tmp_path):
    mtx = tmp_path / "g.mtx"
    mtx.write_text("%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 2\n1 2 1\n2 2 3\n")
    code, rep = _report(tmp_path, "solve", "--matrix", str(mtx), "--epsilon", "1e-8")
    assert code == 0
    assert main(["decompose", "--matrix", str(mtx)]) == 2


def test_contract_failure_exit_2(tmp_path):
    code, rep = _report(tmp_path, "solve", "--family", "diagonal", "--param", "values=[1, 1000]",
                        "--epsilon", "1e-10", "--max-iterations", "3")
    assert code == 2
    assert not rep["contract"]["satisfied"]


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "digiq.cli", "decompose", "--family", "laplacian1d",
                          "--param", "N=6"], capture_output=True, text=True, check=True)
    assert json.loads(out.stdout)["results"]["parts"] == 3
