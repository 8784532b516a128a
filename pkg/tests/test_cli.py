import json
import subprocess
import sys

import numpy as np
import pytest

from santalo_lab.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_PASS, main
from santalo_lab.costs import CostSpec
from santalo_lab.experiments import list_builtins
from santalo_lab.geometry import CartesianGrid, GridFunction
from santalo_lab.io import save_function_tuple
from santalo_lab.transforms import FunctionTuple


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def stable(path):
    d = json.loads(path.read_text())
    d.pop("timestamp")
    return json.dumps(d, sort_keys=True)


def test_classical_builtin_passes(tmp_path):
    cfg = write(tmp_path / "c.json", {"builtin": "classical-bs-1d"})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_PASS
    d = json.loads((tmp_path / "o" / "report.json").read_text())
    assert d["pass"] and d["n_checks"] > 20
    assert (tmp_path / "o" / "report.csv").is_file()
    assert d["environment"]["config"]["seed"] == 0


def test_shifted_gaussian_pair_fails_with_a_witness(tmp_path):
    cfg = write(tmp_path / "c.json", {
        "name": "inadmissible", "kind": "verify-functional",
        "cost": {"family": "inner-product", "N": 2, "n": 1},
        "source": {"type": "builtin", "name": "gaussian-pair", "shift": [-0.5, 0.0]},
        "options": {"checks": ["admissibility"]}})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_FAIL
    check = json.loads((tmp_path / "o" / "report.json").read_text())["checks"][0]
    assert not check["pass"]
    assert check["witnesses"][0]["slack"] == pytest.approx(-0.5)
    assert len(check["witnesses"][0]["point"]) == 2


def test_inadmissible_tuple_file_fails(tmp_path):
    g = CartesianGrid(1, 4.0, 41)
    zero = GridFunction(g, np.zeros(41))
    save_function_tuple(tmp_path / "zero.json", FunctionTuple((zero, zero), CostSpec("inner-product", 2, 1)))
    cfg = write(tmp_path / "c.json", {
        "name": "zero", "kind": "verify-functional", "cost": {"family": "inner-product", "N": 2, "n": 1},
        "source": {"type": "file", "path": "zero.json"}, "options": {"checks": ["admissibility"]}})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_FAIL


@pytest.mark.parametrize("text", ['{"name": ', '[1, 2]', '{"builtin": "nope"}',
                                  '{"name": "x", "kind": "transport", "cost": {"family": "inner-product", '
                                  '"N": 2, "n": 1}, "seed": 0, "options": {"mode": "dance"}}'])
def test_config_errors_exit_2(tmp_path, text, capsys):
    p = tmp_path / "c.json"
    p.write_text(text)
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_usage_errors_exit_2(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--out", str(tmp_path)])
    assert exc.value.code == EXIT_CONFIG
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_CONFIG
    cfg = write(tmp_path / "c.json", {"builtin": "classical-bs-1d"})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o"), "--jobs", "0"]) == EXIT_CONFIG
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o"), "--seed-override", "-1"]) == EXIT_CONFIG


def test_list_prints_the_catalog(capsys):
    assert main(["list"]) == EXIT_PASS
    out = capsys.readouterr().out
    names = [line.split()[0] for line in out.splitlines()]
    assert "thm-1.1-product-cost" in names and "thm-2.4-transport-entropy" in names
    assert len(names) >= 10 and names == [n for n, _ in list_builtins()]


def test_reports_are_reproducible_across_runs_and_jobs(tmp_path):
    cfg = write(tmp_path / "c.json", {"builtin": "transport-monotonicity", "trials": 6})
    for out, jobs in (("a", "1"), ("b", "1"), ("c", "3")):
        assert main(["run", "--config", cfg, "--out", str(tmp_path / out), "--jobs", jobs]) == EXIT_PASS
    a, b, c = (stable(tmp_path / o / "report.json") for o in "abc")
    assert a == b == c


def test_seed_override_changes_the_instances(tmp_path):
    cfg = write(tmp_path / "c.json", {"builtin": "transport-monotonicity", "trials": 3})
    main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--seed-override", "99"])
    da = json.loads((tmp_path / "a" / "report.json").read_text())
    db = json.loads((tmp_path / "b" / "report.json").read_text())
    assert db["environment"]["config"]["seed"] == 99
    assert [c["lhs"] for c in da["checks"]] != [c["lhs"] for c in db["checks"]]


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "santalo_lab.cli", "list"], capture_output=True, text=True)
    assert res.returncode == 0 and "classical-bs-1d" in res.stdout
