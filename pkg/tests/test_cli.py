import json
import subprocess
import sys

import numpy as np
import pytest

from ibqtree.cli import EXIT_INVALID, EXIT_OK, EXIT_PROPERTY, main
from ibqtree.experiments import bundled_map_path
from ibqtree.properties import PropertyResult

MAP = bundled_map_path()


def test_compress_tiny_beta_is_root(capsys):
    assert main(["compress", "--map", MAP, "--beta", "0.0001"]) == EXIT_OK
    tree = json.loads(capsys.readouterr().out)
    assert tree == {"ell": 7, "beta": 0.0001, "leaves": [0]}


def test_compress_then_plan_on_tree(tmp_path, capsys):
    tj = tmp_path / "t.json"
    cache = tmp_path / "c.csv"
    assert main(["compress", "--map", MAP, "--beta", "55", "--out", str(tj),
                 "--cache-csv", str(cache)]) == EXIT_OK
    leaves = json.loads(tj.read_text())["leaves"]
    assert 1 < len(leaves) < 16384
    assert cache.read_text().startswith("node_id,depth,delta_iy_bits,delta_ix_bits")
    out = tmp_path / "p.csv"
    summ = tmp_path / "s.json"
    assert main(["plan", "--map", MAP, "--tree", str(tj), "--start", "3,4", "--goal", "100,90",
                 "--out", str(out), "--summary", str(summ)]) == EXIT_OK
    s = json.loads(summ.read_text())
    assert s["leaf_count"] == len(leaves) and s["kind"] == "abstract"


def test_plan_example(tmp_path):
    out = tmp_path / "p.csv"
    summ = tmp_path / "s.json"
    edges = tmp_path / "e.csv"
    rc = main(["plan", "--map", MAP, "--beta", "55", "--eps", "0.5", "--lambda1", "0.001",
               "--lambda2", "1", "--start", "3,4", "--goal", "100,90", "--out", str(out),
               "--summary", str(summ), "--graph-csv", str(edges)])
    assert rc == EXIT_OK
    rows = out.read_text().splitlines()
    assert rows[0] == "seq,node_id,r_value,center_x,center_y,weight"
    assert len(rows) > 2
    s = json.loads(summ.read_text())
    assert isinstance(s["feasible"], bool)
    assert s["big_m"] == pytest.approx(16384 * 0.501 + 2)
    assert edges.read_text().startswith("u_node_id,v_node_id")


def test_plan_full_resolution_is_feasible(tmp_path):
    from ibqtree import load_map
    ys, xs = np.nonzero(load_map(MAP).occ <= 0.5)
    start = f"{xs[0] + 0.5},{ys[0] + 0.5}"
    goal = f"{xs[-1] + 0.5},{ys[-1] + 0.5}"
    summ = tmp_path / "s.json"
    assert main(["plan", "--map", MAP, "--full", "--start", start, "--goal", goal,
                 "--out", str(tmp_path / "p.csv"), "--summary", str(summ)]) == EXIT_OK
    s = json.loads(summ.read_text())
    assert s["kind"] == "frp" and s["feasible"]


@pytest.mark.parametrize("argv", [
    ["compress", "--map", MAP, "--beta", "-1"],
    ["compress", "--map", MAP, "--beta", "abc"],
    ["compress", "--map", "/nonexistent/m.pgm", "--beta", "1"],
    ["plan", "--map", MAP, "--beta", "1", "--start", "3,4", "--goal", "500,4"],
    ["plan", "--map", MAP, "--beta", "1", "--start", "3", "--goal", "5,4"],
    ["plan", "--map", MAP, "--beta", "1", "--eps", "2", "--start", "3,4", "--goal", "5,4"],
    ["plan", "--map", MAP, "--beta", "1", "--full", "--start", "3,4", "--goal", "5,4"],
    ["sweep", "--betas", "10,5", "--out", "x.csv"],
    ["verify", "--map", "random", "--size", "12"],
    ["nosuchcommand"],
])
def test_invalid_input_exits_1(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == EXIT_INVALID
    assert capsys.readouterr().err.strip()


def test_bad_map_file(tmp_path):
    f = tmp_path / "m.csv"
    f.write_text("0,0,0\n0,0,0\n0,0,0\n")
    assert main(["compress", "--map", str(f), "--beta", "1"]) == EXIT_INVALID


def test_verify_random_passes(capsys):
    assert main(["verify", "--map", "random", "--seed", "7", "--size", "16"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(l.startswith("[PASS]") for l in lines)


def test_verify_reports_failure(monkeypatch, capsys):
    import ibqtree.properties as props
    monkeypatch.setattr(props, "run_all", lambda *a, **k: [PropertyResult("x", False, 1, "forced")])
    assert main(["verify", "--map", "random", "--size", "4"]) == EXIT_PROPERTY
    assert capsys.readouterr().out.startswith("[FAIL] x")


def test_sweep_writes_csv_json_png(tmp_path):
    g = tmp_path / "m.csv"
    occ = np.random.default_rng(0).random((16, 16)) * 0.6
    g.write_text("\n".join(",".join(repr(float(v)) for v in row) for row in occ) + "\n")
    out = tmp_path / "out" / "sweep.csv"
    assert main(["sweep", "--map", str(g), "--betas", "1,100,1e6", "--queries", "5",
                 "--seed", "1", "--out", str(out)]) == EXIT_OK
    assert out.read_text().splitlines()[0].startswith("beta,leaf_count,compression,avg_cost_ratio")
    assert json.loads(out.with_suffix(".json").read_text())["rows"] == 3
    assert out.with_suffix(".png").stat().st_size > 0


def test_sweep_config_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"betas": [1.0, 1e4], "query_count": 3, "seed": 2,
                               "params": {"eps": 0.4}}))
    out = tmp_path / "s.csv"
    assert main(["sweep", "--config", str(cfg), "--gamma", "3", "--out", str(out), "--no-figure"]) == EXIT_OK
    assert len(out.read_text().splitlines()) == 3
    assert not out.with_suffix(".png").exists()


def test_bench_and_render(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["bench", "--sizes", "4", "--betas", "1,1e6", "--queries", "3", "--repeats", "1",
                 "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0].startswith("size,beta,leaf_count")
    assert len(lines) == 3
    svg = tmp_path / "r.svg"
    assert main(["render", "--map", MAP, "--beta", "55", "--start", "3,4", "--goal", "100,90",
                 "--out", str(svg)]) == EXIT_OK
    assert svg.read_text().lstrip().startswith("<?xml")
    assert main(["render", "--map", MAP, "--beta", "55", "--start", "3,4",
                 "--out", str(svg)]) == EXIT_INVALID


def test_console_module_entry():
    r = subprocess.run([sys.executable, "-m", "ibqtree", "compress", "--map", MAP, "--beta", "1e-4"],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert json.loads(r.stdout)["leaves"] == [0]
