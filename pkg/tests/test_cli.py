import json
import subprocess
import sys
from pathlib import Path

import pytest

from oppsim.cli import build_report, load_config, main, ConfigError
from oppsim.graph import load_graph

ROOT = Path(__file__).resolve().parents[1]

DESK = """
[graph]
n = 50
n_communities = 5
maxc = 20
seed = 1

[experiment]
strategies = {strategies}
seedings = {seedings}
k = 16
packet_size = 64
n_trials = {trials}
base_seed = 0
out = out
"""


def write_cfg(tmp_path, strategies="nc, epidemic_random", seedings="100, 80", trials=3, extra=""):
    p = tmp_path / "exp.ini"
    p.write_text(DESK.format(strategies=strategies, seedings=seedings, trials=trials) + extra)
    return p


def csv_bytes(out):
    return {str(p.relative_to(out)): p.read_bytes() for p in sorted(Path(out).rglob("*.csv"))}


def test_gen_default_prints_mixing(tmp_path, capsys):
    out = tmp_path / "g.txt"
    assert main(["gen", "--out", str(out), "--communities", "14"]) == 0
    line = capsys.readouterr().out.splitlines()[0]
    stats = dict(kv.split("=") for kv in line.split())
    assert stats["nodes"] == "200"
    assert 0.08 <= float(stats["mu_t"]) <= 0.12
    assert load_graph(out).n == 200


def test_gen_community_count(tmp_path):
    assert main(["gen", "--out", str(tmp_path / "g.txt"), "--communities", "8"]) == 0
    assert load_graph(tmp_path / "g.txt").n_communities == 8


def test_gen_same_seed_same_file(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    main(["gen", "--out", str(a), "--seed", "5", "--nodes", "80", "--communities", "4"])
    main(["gen", "--out", str(b), "--seed", "5", "--nodes", "80", "--communities", "4"])
    assert a.read_bytes() == b.read_bytes()


def test_gen_failure_reports_context(tmp_path, capsys):
    assert main(["gen", "--out", str(tmp_path / "g.txt"), "--nodes", "7", "--communities", "3"]) != 0
    assert capsys.readouterr().err.startswith("error: ")


def test_run_and_report(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert main(["run", str(cfg)]) == 0
    out = tmp_path / "out"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["cells"]["nc__100"]["seeds"] == [0, 1, 2]
    assert "created" in manifest
    for cell in ("nc__100", "nc__80", "epidemic_random__100", "epidemic_random__80"):
        for f in ("latency.csv", "finish.csv", "transmissions.csv", "per_node.csv"):
            assert (out / cell / f).is_file()
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split() == ["seeding", "nc", "epidemic_random"]
    assert [ln.split()[0] for ln in lines[2:4]] == ["100", "80"]
    assert "(" in lines[2]


def test_rerun_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, strategies="erasure, flooding", seedings="90")
    main(["run", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", str(cfg), "--out", str(tmp_path / "b")])
    assert csv_bytes(tmp_path / "a") == csv_bytes(tmp_path / "b")


def test_overrides(tmp_path):
    cfg = write_cfg(tmp_path, strategies="nc", seedings="100")
    assert main(["run", str(cfg), "--seed", "9", "--trials", "2", "--out", str(tmp_path / "o")]) == 0
    m = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert m["cells"]["nc__100"]["seeds"] == [9, 10]


def test_missing_k_names_field(tmp_path, capsys):
    p = write_cfg(tmp_path)
    p.write_text(p.read_text().replace("k = 16\n", ""))
    with pytest.raises(ConfigError, match="'k'"):
        load_config(p)
    assert main(["run", str(p)]) == 2
    err = capsys.readouterr().err.strip()
    assert err.startswith("error: config:") and "'k'" in err and "\n" not in err


def test_bad_values_rejected(tmp_path):
    with pytest.raises(ConfigError, match="strategy"):
        load_config(write_cfg(tmp_path, strategies="teleport"))
    with pytest.raises(ConfigError, match="seeding"):
        load_config(write_cfg(tmp_path, seedings="42%"))
    with pytest.raises(ConfigError, match="time_grid"):
        load_config(write_cfg(tmp_path, extra="time_grid = 0:10\n"))


def test_failing_cell_is_isolated(tmp_path, monkeypatch):
    import oppsim.cli as cli
    real = cli._run_cell

    def flaky(cfg, graph, strategy, seeding, cell_dir):
        if strategy == "nc":
            raise RuntimeError("boom")
        return real(cfg, graph, strategy, seeding, cell_dir)

    monkeypatch.setattr(cli, "_run_cell", flaky)
    cfg = write_cfg(tmp_path, seedings="100")
    assert main(["run", str(cfg)]) == 1
    m = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert m["cells"]["nc__100"]["status"] == "error"
    assert m["cells"]["epidemic_random__100"]["status"] == "ok"
    report = build_report(tmp_path / "out")
    assert "missing cells: nc__100" in report


def test_truncated_cells_are_starred(tmp_path, capsys):
    cfg = write_cfg(tmp_path, strategies="epidemic_random", seedings="80", trials=4,
                    extra="max_sim_time = 0.5\n")
    main(["run", str(cfg)])
    capsys.readouterr()
    main(["report", str(tmp_path / "out")])
    assert "*" in capsys.readouterr().out.splitlines()[2]


def test_report_empty_dir(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert main(["report", str(tmp_path / "empty")]) == 1
    assert capsys.readouterr().err.startswith("error: report:")


def test_desk_matrix_fifty_trials(tmp_path):
    cfg = write_cfg(tmp_path, strategies="nc, epidemic_lr, epidemic_random, erasure, flooding",
                    seedings="150, 100, 90, 80, random", trials=50)
    assert main(["run", str(cfg)]) == 0
    m = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert len(m["cells"]) == 25
    assert all(c["status"] == "ok" and not c["truncated"] for c in m["cells"].values())


def test_shipped_desk_config_parses():
    cfg = load_config(ROOT / "configs" / "desk.ini")
    assert cfg.k == 16 and cfg.n_trials == 20 and cfg.graph_params.n == 50


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "oppsim", "report", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 1 and r.stderr.startswith("error: report:")
