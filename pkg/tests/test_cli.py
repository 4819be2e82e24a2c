import json
import subprocess
import sys

import pytest

from hetnetsim.cli import main

FAST = ["--set", "topology.macro_sites=1", "--set", "topology.users_per_sector=6"]


def test_simulate_writes_reports(tmp_path, capsys):
    rc = main(["simulate", "--policy", "max_rsrp", "--policy", "semi_distributive", "--drops", "2",
               "--seed", "7", "--out-dir", str(tmp_path), *FAST])
    assert rc == 0
    for name in ("kpi.json", "cdf.csv", "kpi_max_rsrp.json", "cdf_max_rsrp.csv",
                 "kpi_semi_distributive.json", "cdf_semi_distributive.csv"):
        assert (tmp_path / name).exists()
    doc = json.loads((tmp_path / "kpi.json").read_text())
    assert doc["metadata"]["seeds"] == [7, 8]
    assert doc["metadata"]["config"]["simulation"]["policies"] == ["max_rsrp", "semi_distributive"]
    assert "semi_distributive" in capsys.readouterr().out


def test_embedded_config_reproduces(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--policy", "distributive", "--drops", "2", "--out-dir", str(a), *FAST]) == 0
    embedded = json.loads((a / "kpi.json").read_text())["metadata"]["config"]
    embedded["output"]["out_dir"] = str(b)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(embedded))
    assert main(["simulate", "--config", str(cfg)]) == 0
    ja = json.loads((a / "kpi.json").read_text())
    jb = json.loads((b / "kpi.json").read_text())
    ja["metadata"].pop("config"), jb["metadata"].pop("config")
    ja["metadata"].pop("config_hash"), jb["metadata"].pop("config_hash")
    assert ja == jb
    assert (a / "cdf.csv").read_text() == (b / "cdf.csv").read_text()


def test_sweep(tmp_path):
    rc = main(["sweep", "--densities", "1,2", "--policy", "cio", "--drops", "1", "--out-dir", str(tmp_path), *FAST])
    assert rc == 0
    assert (tmp_path / "small_1" / "kpi_cio.json").exists() and (tmp_path / "small_2" / "cdf_cio.csv").exists()


def test_dump_topology(tmp_path):
    assert main(["dump-topology", "--seed", "3", "--small-per-sector", "1", "--out-dir", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "topology_3.json").read_text())
    assert len(doc["base_stations"]) == 42 and len(doc["users"]) == 525 and doc["seed"] == 3


def test_oracle_check(tmp_path, capsys):
    assert main(["oracle-check", "--instances", "5", "--seed", "1", "--out-dir", str(tmp_path)]) == 0
    assert "20/20 heuristic runs >= oracle" in capsys.readouterr().out
    assert len(json.loads((tmp_path / "oracle_check.json").read_text())) == 5


@pytest.mark.parametrize("argv", [["simulate", "--bogus"], ["simulate", "--policy", "nearest"], [],
                                  ["sweep", "--densities", "a,b"], ["simulate", "--drops", "0"]])
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as e:
        main(argv)
    assert e.value.code == 2


def test_config_error_exit_1(capsys):
    assert main(["simulate", "--set", "algorithm.association_exponent=1.5"]) == 1
    assert "algorithm.association_exponent" in capsys.readouterr().err


def test_missing_config_file_exit_1(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.json")]) == 1


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "hetnetsim", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "oracle-check" in out.stdout
