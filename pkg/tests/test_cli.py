import json
import subprocess
import sys

import pytest

from perc_chem import cli
from perc_chem.errors import ConfigError


def run(tmp_path, *argv):
    return cli.main([*argv, "--out", str(tmp_path)])


def only_dir(tmp_path, prefix):
    dirs = [p for p in tmp_path.iterdir() if p.name.startswith(prefix + "-")]
    assert len(dirs) == 1
    return dirs[0]


def test_parse_grid():
    assert cli.parse_grid("0.60:0.70:0.05") == [0.6, 0.65, 0.7]
    assert cli.parse_grid("3:9:3", int) == [3, 6, 9]
    assert cli.parse_grid("1,2", int) == [1, 2]
    for bad in ("1:2", "a,b", "1:0:1", "1:2:0"):
        with pytest.raises(ConfigError):
            cli.parse_grid(bad)


SMALL = {
    "tail": ["--L", "60", "--p", "0.8", "--K", "1.5", "--dist", "10", "--t-grid", "8,10,12", "--n", "30"],
    "bypass": ["--L", "30", "--p", "0.8", "--t-grid", "3:9:2", "--n", "20"],
    "timeconst": ["--L", "30", "--p", "0.8", "--n-grid", "5,10", "--n", "10"],
    "lipschitz": ["--L", "30", "--p-grid", "0.8,0.9,1.0", "--dist", "10", "--n", "10"],
    "coarse-check": ["--L", "70", "--scales", "60", "--pairs", "20", "--n", "2"],
    "surgery-demo": [],
    "russo": ["--host", "box:2x2", "--p-grid", "0.5"],
    "goodapprox": ["--L", "30", "--p", "0.8", "--dists", "5,10", "--n", "5"],
    "animal": ["--L", "5", "--n", "5"],
    "precluster": ["--L", "80", "--R", "60", "--k-max", "3", "--n", "10"],
    "export-graph": ["--L", "3"],
}


@pytest.mark.parametrize("command", sorted(SMALL))
def test_subcommand_reproducible(tmp_path, command):
    args = [command, *SMALL[command], "--workers", "1"]
    assert run(tmp_path, *args) == 0
    d = only_dir(tmp_path, command)
    man = json.loads((d / "manifest.json").read_text())
    assert man["command"] == command and d.name.endswith(man["hash"])
    snapshot = {p.name: p.read_bytes() for p in d.iterdir()}
    # identical rerun maps onto the same directory and leaves it untouched
    assert run(tmp_path, *args) == 0
    assert {p.name: p.read_bytes() for p in d.iterdir()} == snapshot


def test_workers_do_not_change_output(tmp_path):
    args = ["tail", *SMALL["tail"]]
    assert run(tmp_path, *args, "--workers", "1") == 0
    d = only_dir(tmp_path, "tail")
    before = (d / "tail.csv").read_bytes()
    assert run(tmp_path, *args, "--workers", "3") == 0
    assert only_dir(tmp_path, "tail") == d
    assert (d / "tail.csv").read_bytes() == before


def test_tampered_run_dir_detected(tmp_path, capsys):
    args = ["russo", "--host", "box:2x2", "--p-grid", "0.5"]
    assert run(tmp_path, *args) == 0
    d = only_dir(tmp_path, "russo")
    (d / "russo.csv").write_text("tampered\n")
    assert run(tmp_path, *args) == 4
    assert "error" in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[common]\nseed = 5\n[russo]\nhost = box:2x2\np_grid = 0.25\n")
    _, cfg, _ = cli.resolve(["russo", "--config", str(ini), "--p-grid", "0.75"])
    typo = tmp_path / "typo.ini"
    typo.write_text("[common]\nsede = 5\n")
    with pytest.raises(ConfigError):
        cli.resolve(["russo", "--config", str(typo)])
    assert cfg["host"] == "box:2x2" and cfg["p_grid"] == "0.75"
    # the same config expressed via flags lands on the same hash
    assert cli.config_hash("russo", cfg) == cli.config_hash("russo", cli.resolve(["russo", "--host", "box:2x2", "--p-grid", "0.75"])[1])


def test_config_keys_keep_case(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[common]\nseed = 7\n[tail]\nL = 160\nK = 2.5\nt_grid = 10:40:5\n")
    _, cfg, _ = cli.resolve(["tail", "--config", str(ini)])
    assert (cfg["L"], cfg["K"], cfg["seed"], cfg["t_grid"]) == (160, 2.5, 7, "10:40:5")


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[tail]\nbogus = 1\n")
    assert run(tmp_path, "tail", "--config", str(bad)) == 2
    broken = tmp_path / "broken.ini"
    broken.write_text("not an ini")
    assert run(tmp_path, "tail", "--config", str(broken)) == 2
    assert run(tmp_path, "tail", "--workers", "0") == 2
    assert run(tmp_path, "tail", "--L", "20", "--n", "5") == 3
    # oversized exhaustive enumeration is refused as a configuration problem
    assert run(tmp_path, "russo", "--host", "zd:6") == 2
    assert run(tmp_path, "russo", "--host", "moon:3") == 2


def test_budget_exit_code(tmp_path, monkeypatch):
    monkeypatch.setenv("PERC_CHEM_BUDGET_MB", "0.01")
    assert run(tmp_path, "export-graph", "--L", "40") == 5


def test_export_graph_roundtrip(tmp_path):
    from perc_chem.graph import build_lattice, read_region

    assert run(tmp_path, "export-graph", "--L", "4") == 0
    d = only_dir(tmp_path, "export-graph")
    with open(d / "region.txt") as fh:
        g = read_region(fh)
    ref = build_lattice(2, 4)
    assert g.n_vertices == ref.n_vertices and (g.edges == ref.edges).all()


def test_console_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "perc_chem.cli", "russo", "--host", "box:2x2", "--p-grid", "0.5", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip().startswith(str(tmp_path))
