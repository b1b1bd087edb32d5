import csv
import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from ibqtree import CostParams, GridMap, PlanQuery, QuadTree, TreeAbstraction, build_graph, load_map, plan
from ibqtree.experiments import (
    SWEEP_COLUMNS,
    SweepConfig,
    TooLarge,
    bundled_map_path,
    check_schedule,
    default_schedule,
    oracle_enumerate_trees,
    plot_sweep,
    render_svg,
    run_bench,
    run_sweep,
    sample_queries,
    write_rows_csv,
)
from ibqtree.planner import is_eps_obstacle
from ibqtree.synthetic import make_synthetic_map

SVG = "{http://www.w3.org/2000/svg}"


def svg_group(path, gid):
    root = ET.parse(path).getroot()
    return root.find(f".//*[@id='{gid}']")


def test_bundled_map_is_the_seeded_synthetic_map():
    m = load_map(bundled_map_path())
    assert m.side == 128
    assert np.array_equal(m.occ, make_synthetic_map(128, 0).occ)


def test_schedule_validation():
    assert len(default_schedule()) == 20
    with pytest.raises(ValueError):
        check_schedule([1.0, 1.0])
    with pytest.raises(ValueError):
        check_schedule([0.0, 1.0])
    with pytest.raises(ValueError):
        SweepConfig(query_count=0)


def test_queries_are_free_and_distinct(rng):
    g = make_synthetic_map(32, 1)
    params = CostParams()
    for q in sample_queries(g, params, 100, rng):
        assert q.start != q.goal
        for x, y in (q.start, q.goal):
            assert g.occ[y, x] <= params.eps


def test_sweep_all_free_map():
    g = GridMap(np.zeros((8, 8)))
    res = run_sweep(SweepConfig(betas=[0.1, 10.0, 1e6], query_count=5, seed=3, repeats=1), g)
    assert all(r.avg_cost_ratio >= 1 - 1e-9 for r in res.rows)
    assert all(r.leaf_count == 1 for r in res.rows)
    assert not res.full_tree_condition
    assert all(r.frac_feasible == 1.0 for r in res.rows)


def test_sweep_converges_when_condition_holds():
    g = GridMap(np.random.default_rng(5).random((16, 16)) * 0.5)
    res = run_sweep(SweepConfig(betas=[1.0, 1e3, 1e9], query_count=10, seed=2, repeats=1), g)
    assert res.full_tree_condition
    assert res.rows[-1].leaf_count == 256
    assert res.rows[-1].avg_cost_ratio == pytest.approx(1.0, abs=1e-9)
    ratios = [r.avg_cost_ratio for r in res.rows]
    assert all(b <= a + 1e-9 for a, b in zip(ratios, ratios[1:]))


def test_sweep_csv_deterministic_without_timing(tmp_path):
    g = make_synthetic_map(32, 4)
    cfg = SweepConfig(betas=[1.0, 30.0, 1e3, 1e5], query_count=8, seed=11, repeats=1)
    outs = []
    for i in range(2):
        res = run_sweep(cfg, g)
        f = tmp_path / f"s{i}.csv"
        write_rows_csv(res.rows, f, SWEEP_COLUMNS, include_timing=False)
        outs.append(f.read_bytes())
    assert outs[0] == outs[1]
    header = outs[0].decode().splitlines()[0]
    assert header == "beta,leaf_count,compression,avg_cost_ratio,frac_feasible"
    write_rows_csv(res.rows, tmp_path / "full.csv", SWEEP_COLUMNS)
    with open(tmp_path / "full.csv") as fh:
        assert next(csv.reader(fh)) == list(SWEEP_COLUMNS)
    assert plot_sweep(res, str(tmp_path / "s.png"))
    assert (tmp_path / "s.png").stat().st_size > 0


def test_bench_rows():
    g = make_synthetic_map(32, 2)
    cfg = SweepConfig(betas=[1e-3, 1e6], query_count=5, seed=0, repeats=1)
    rows = run_bench(cfg, [5], {5: g})
    assert [r.size for r in rows] == [32, 32]
    root, full = rows
    assert root.leaf_count == 1 and full.leaf_count == 1024
    for r in rows:
        assert r.plan_total_ns == r.info_ns + r.qvalue_ns + r.qtree_ns + r.dijkstra_ns
        assert r.normalized == pytest.approx(r.plan_total_ns / r.baseline_ns)
    assert root.dijkstra_ns < full.dijkstra_ns


def test_oracle_size_limit():
    with pytest.raises(TooLarge):
        oracle_enumerate_trees(GridMap(np.zeros((8, 8))), 1.0)


def test_render_root_only(tmp_path):
    g = GridMap(np.zeros((4, 4)))
    t = QuadTree(2)
    out = render_svg(g, TreeAbstraction.root_only(t), [], str(tmp_path / "r.svg"))
    leaves = svg_group(out, "leaves")
    assert len(leaves.findall(f"{SVG}path")) == 1
    assert svg_group(out, "obstacles") is None


def test_render_full_with_path(tmp_path):
    g = GridMap(np.zeros((4, 4)))
    t = QuadTree(2)
    a = TreeAbstraction.full(t)
    p = plan(build_graph(t, a), g, t, CostParams(), PlanQuery((0, 0), (1, 1)))
    assert len(p.nodes) == 3
    out = render_svg(g, a, [p], str(tmp_path / "f.svg"))
    assert len(svg_group(out, "leaves").findall(f"{SVG}path")) == 16
    d = svg_group(out, "path-0").find(f"{SVG}path").get("d")
    assert len(re.findall(r"[ML]", d)) == 3


def test_render_obstacle_tint_matches_predicate(tmp_path):
    g = make_synthetic_map(16, 3)
    t = QuadTree(4)
    params = CostParams()
    rng = np.random.default_rng(0)
    mask = rng.random(t.n_nodes) < 0.6
    mask[0] = True
    a = TreeAbstraction.from_expanded(t, mask)
    out = render_svg(g, a, [], str(tmp_path / "m.svg"), params)
    want = sum(is_eps_obstacle(t, g, params, n) for n in a.leaves.tolist())
    tint = svg_group(out, "obstacles")
    got = 0 if tint is None else len(tint.findall(f"{SVG}path"))
    assert got == want > 0
