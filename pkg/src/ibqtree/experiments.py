"""Sweeps, timing benchmarks, small-instance oracles and figure rendering."""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .absgraph import build_graph
from .grid_io import CellPrior, GridMap, default_prior, load_map
from .ib_engine import build_joint, compute_info, ib_objective, q_values, qtree_search
from .planner import CostParams, Path, PlanQuery, eps_obstacle_mask, node_weights, plan
from .quadtree import QuadTree, TreeAbstraction, enumerate_abstractions
from .synthetic import make_synthetic_map

log = logging.getLogger(__name__)

BUNDLED_MAP = "synthetic128.pgm"
SWEEP_COLUMNS = [
    "beta", "leaf_count", "compression", "avg_cost_ratio", "frac_feasible",
    "info_ns", "qvalue_ns", "qtree_ns", "dijkstra_ns", "plan_total_ns",
]
TIMING_COLUMNS = {"info_ns", "qvalue_ns", "qtree_ns", "dijkstra_ns", "plan_total_ns",
                  "baseline_ns", "normalized"}


class TooLarge(ValueError):
    pass


def bundled_map_path() -> str:
    return str(resources.files("ibqtree") / "data" / BUNDLED_MAP)


def default_schedule(n: int = 20, lo: float = 10.0, hi: float = 1e5) -> List[float]:
    return [float(b) for b in np.geomspace(lo, hi, n)]


def check_schedule(betas: Sequence[float]) -> List[float]:
    betas = [float(b) for b in betas]
    if not betas:
        raise ValueError("empty beta schedule")
    if any(b <= 0 for b in betas):
        raise ValueError("beta values must be positive")
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ValueError("beta schedule must be strictly increasing")
    return betas


@dataclass
class SweepConfig:
    map_path: Optional[str] = None
    betas: List[float] = field(default_factory=default_schedule)
    query_count: int = 200
    seed: int = 0
    params: CostParams = field(default_factory=CostParams)
    output: Optional[str] = None
    repeats: int = 3

    def __post_init__(self):
        if self.query_count <= 0:
            raise ValueError("query_count must be positive")
        self.betas = check_schedule(self.betas)

    @classmethod
    def from_json(cls, path: str, **overrides) -> "SweepConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        raw.update({k: v for k, v in overrides.items() if v is not None})
        if isinstance(raw.get("params"), dict):
            raw["params"] = CostParams(**raw["params"])
        return cls(**raw)


@dataclass
class SweepRow:
    beta: float
    leaf_count: int
    compression: float
    avg_cost_ratio: float
    frac_feasible: float
    info_ns: int
    qvalue_ns: int
    qtree_ns: int
    dijkstra_ns: int
    plan_total_ns: int


@dataclass
class SweepResult:
    rows: List[SweepRow]
    queries: List[PlanQuery]
    ratios: np.ndarray  # (n_beta, n_query)
    costs: np.ndarray  # (n_beta, n_query) abstract path costs
    frp_costs: np.ndarray  # (n_query,)
    feasible: np.ndarray  # (n_beta, n_query) bool
    first_feasible_compression: float
    full_tree_condition: bool

    def summary(self) -> dict:
        return {
            "rows": len(self.rows),
            "queries": len(self.queries),
            "first_feasible_compression": self.first_feasible_compression,
            "final_avg_cost_ratio": self.rows[-1].avg_cost_ratio,
            "final_compression": self.rows[-1].compression,
            "full_tree_condition": self.full_tree_condition,
        }


def _median_ns(fn: Callable, repeats: int):
    """Run ``fn`` ``repeats`` times; return (last result, median elapsed ns)."""
    times = []
    out = None
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter_ns()
        out = fn()
        times.append(time.perf_counter_ns() - t0)
    return out, int(np.median(times))


def sample_queries(gmap: GridMap, params: CostParams, count: int,
                   rng: np.random.Generator) -> List[PlanQuery]:
    """Start/goal pairs drawn uniformly over feasible cells, goal redrawn if equal to start."""
    ys, xs = np.nonzero(gmap.occ <= params.eps)
    if len(xs) < 2:
        raise ValueError("map needs at least two feasible cells to sample queries")
    queries = []
    for _ in range(count):
        i = int(rng.integers(len(xs)))
        j = int(rng.integers(len(xs)))
        while j == i:
            j = int(rng.integers(len(xs)))
        queries.append(PlanQuery((int(xs[i]), int(ys[i])), (int(xs[j]), int(ys[j]))))
    return queries


def full_tree_condition(cache, tree: QuadTree) -> bool:
    """Every node one level above the unit cells carries positive relevant information."""
    if tree.ell == 0:
        return True
    lvl = tree.level(tree.ell - 1)
    return bool((cache.delta_iy[lvl.start : lvl.stop] > 0).all())


def run_sweep(config: SweepConfig, gmap: Optional[GridMap] = None,
              prior: Optional[CellPrior] = None) -> SweepResult:
    """Cost ratio and feasibility versus compression along a beta schedule.

    Each abstraction is rebuilt from scratch per beta; every query is also
    solved once on the full-resolution graph for the ratio's denominator.
    """
    if gmap is None:
        gmap = load_map(config.map_path or bundled_map_path())
    if prior is None:
        prior = default_prior(gmap)
    params = config.params
    tree = QuadTree(gmap.side_exponent)
    rng = np.random.default_rng(config.seed)
    queries = sample_queries(gmap, params, config.query_count, rng)
    weights = node_weights(gmap, tree, params)

    full_graph = build_graph(tree, TreeAbstraction.full(tree))
    frp = np.array([plan(full_graph, gmap, tree, params, q, weights).cost for q in queries])

    n_b, n_q = len(config.betas), len(queries)
    costs = np.empty((n_b, n_q))
    feasible = np.zeros((n_b, n_q), dtype=bool)
    rows = []
    cache = None
    for bi, beta in enumerate(config.betas):
        cache, info_ns = _median_ns(lambda: compute_info(build_joint(gmap, prior, tree)), config.repeats)
        q, qvalue_ns = _median_ns(lambda: q_values(cache, beta), config.repeats)
        abstraction, qtree_ns = _median_ns(lambda: qtree_search(tree, cache, beta, q), config.repeats)
        t0 = time.perf_counter_ns()
        graph = build_graph(tree, abstraction)
        graph_ns = time.perf_counter_ns() - t0
        plan_ns = []
        for qi, query in enumerate(queries):
            t0 = time.perf_counter_ns()
            path = plan(graph, gmap, tree, params, query, weights)
            plan_ns.append(time.perf_counter_ns() - t0)
            costs[bi, qi] = path.cost
            feasible[bi, qi] = path.feasible
        dijkstra_ns = graph_ns + int(np.mean(plan_ns))
        ratios = costs[bi] / frp
        rows.append(SweepRow(
            beta=beta,
            leaf_count=len(abstraction),
            compression=abstraction.compression,
            avg_cost_ratio=float(np.mean(ratios)),
            frac_feasible=float(np.mean(feasible[bi])),
            info_ns=info_ns,
            qvalue_ns=qvalue_ns,
            qtree_ns=qtree_ns,
            dijkstra_ns=dijkstra_ns,
            plan_total_ns=info_ns + qvalue_ns + qtree_ns + dijkstra_ns,
        ))
        log.info("beta=%.4g leaves=%d ratio=%.4f feasible=%.3f",
                 beta, len(abstraction), rows[-1].avg_cost_ratio, rows[-1].frac_feasible)

    compressions = np.array([r.compression for r in rows])
    first = []
    for qi in range(n_q):
        hit = np.nonzero(feasible[:, qi])[0]
        if len(hit):
            first.append(compressions[hit[0]])
    first_feasible = float(np.mean(first)) if first else float("nan")
    return SweepResult(rows, queries, costs / frp[None, :], costs, frp, feasible,
                       first_feasible, full_tree_condition(cache, tree))


def write_rows_csv(rows: Sequence, path: str, columns: Optional[Sequence[str]] = None,
                   include_timing: bool = True) -> None:
    if columns is None:
        columns = [f.name for f in fields(rows[0])]
    if not include_timing:
        columns = [c for c in columns if c not in TIMING_COLUMNS]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            d = asdict(row)
            writer.writerow([repr(d[c]) if isinstance(d[c], float) else d[c] for c in columns])


def figure_path(csv_path: str) -> str:
    return os.path.splitext(csv_path)[0] + ".png"


def plot_sweep(result: SweepResult, out: str) -> str:
    """Log10 average cost ratio against compression, with the mean first-feasible line."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    comp = [100 * r.compression for r in result.rows]
    ratio = [np.log10(r.avg_cost_ratio) for r in result.rows]
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    ax.plot(comp, ratio, "o-", color="k", ms=3, lw=1.2, label="average cost ratio")
    if np.isfinite(result.first_feasible_compression):
        ax.axvline(100 * result.first_feasible_compression, color="tab:red", ls="--", lw=1,
                   label="average first feasible path")
    ax.set_xlabel(r"compression (% of unit cells)")
    ax.set_ylabel(r"$\log_{10}$ avg. $\hat J / J^*$")
    ax.set_xlim(0, 100)
    ax.grid(alpha=0.3)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


# -- timing benchmark ------------------------------------------------------

@dataclass
class BenchRow:
    size: int
    beta: float
    leaf_count: int
    compression: float
    info_ns: int
    qvalue_ns: int
    qtree_ns: int
    dijkstra_ns: int
    plan_total_ns: int
    baseline_ns: int
    normalized: float


def run_bench(config: SweepConfig, sizes: Sequence[int],
              maps: Optional[Dict[int, GridMap]] = None) -> List[BenchRow]:
    """Four-phase planning time per beta against full-resolution Dijkstra.

    ``sizes`` are side exponents; a map missing from ``maps`` is generated
    synthetically from the config seed. Phases: (i) information gains,
    (ii) Q-values, (iii) Q-tree search, (iv) graph construction plus Dijkstra.
    The baseline is graph construction plus Dijkstra at full resolution.
    """
    maps = dict(maps or {})
    params = config.params
    rows = []
    for ell in sizes:
        gmap = maps.get(ell) or make_synthetic_map(2**ell, seed=config.seed)
        prior = default_prior(gmap)
        tree = QuadTree(ell)
        rng = np.random.default_rng(config.seed)
        queries = sample_queries(gmap, params, config.query_count, rng)
        weights = node_weights(gmap, tree, params)

        full = TreeAbstraction.full(tree)
        base = []
        for query in queries:
            t0 = time.perf_counter_ns()
            graph = build_graph(tree, full)
            plan(graph, gmap, tree, params, query, weights)
            base.append(time.perf_counter_ns() - t0)
        baseline_ns = int(np.mean(base))
        log.info("size=%d baseline=%.3f ms", 2**ell, baseline_ns / 1e6)

        for beta in config.betas:
            cache, info_ns = _median_ns(lambda: compute_info(build_joint(gmap, prior, tree)), config.repeats)
            q, qvalue_ns = _median_ns(lambda: q_values(cache, beta), config.repeats)
            abstraction, qtree_ns = _median_ns(lambda: qtree_search(tree, cache, beta, q), config.repeats)
            search = []
            for query in queries:
                t0 = time.perf_counter_ns()
                graph = build_graph(tree, abstraction)
                plan(graph, gmap, tree, params, query, weights)
                search.append(time.perf_counter_ns() - t0)
            dijkstra_ns = int(np.mean(search))
            total = info_ns + qvalue_ns + qtree_ns + dijkstra_ns
            rows.append(BenchRow(2**ell, beta, len(abstraction), abstraction.compression,
                                 info_ns, qvalue_ns, qtree_ns, dijkstra_ns, total,
                                 baseline_ns, total / baseline_ns))
            log.info("size=%d beta=%.4g leaves=%d normalized=%.3f",
                     2**ell, beta, len(abstraction), total / baseline_ns)
    return rows


def plot_bench(rows: Sequence[BenchRow], out: str) -> str:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for size in sorted({r.size for r in rows}):
        sel = [r for r in rows if r.size == size]
        ax.plot([100 * r.compression for r in sel], [r.normalized for r in sel], "o-",
                ms=3, lw=1.2, label=f"{size}x{size}")
    ax.axhline(1.0, color="k", lw=0.8, ls=":")
    ax.set_xlabel(r"compression (% of unit cells)")
    ax.set_ylabel("time / full-resolution Dijkstra")
    ax.set_yscale("log")
    ax.grid(alpha=0.3)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


# -- small-instance oracle ---------------------------------------------------

def oracle_enumerate_trees(gmap: GridMap, beta: float, prior: Optional[CellPrior] = None
                           ) -> Tuple[float, TreeAbstraction]:
    """Exhaustive maximum of the IB objective over every quadtree abstraction (ell <= 2)."""
    ell = gmap.side_exponent
    if ell > 2:
        raise TooLarge(f"tree space for ell={ell} is too large to enumerate")
    tree = QuadTree(ell)
    best, best_abs = -np.inf, None
    for leaves in enumerate_abstractions(tree):
        a = TreeAbstraction(tree, np.array(leaves), beta)
        val = ib_objective(gmap, a, beta, prior)
        if val > best:
            best, best_abs = val, a
    return float(best), best_abs


# -- rendering ---------------------------------------------------------------

def render_svg(gmap: GridMap, abstraction: TreeAbstraction, paths: Sequence[Path], out: str,
               params: Optional[CostParams] = None, title: Optional[str] = None) -> str:
    """Draw the map, the abstraction's blocks and path polylines to a static SVG.

    Cells are shaded by occupancy probability. Leaf borders are grouped under
    the SVG id ``leaves`` (one element per leaf); epsilon-obstacle leaves are
    tinted under ``obstacles``; path ``i`` is the polyline ``path-i``.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.collections import PatchCollection
    from matplotlib.patches import Rectangle

    params = params or CostParams()
    tree = abstraction.tree
    side = tree.side
    obstacle = eps_obstacle_mask(gmap, tree, params)
    leaves = abstraction.leaves.tolist()

    fig, ax = plt.subplots(figsize=(6, 6))
    ax.imshow(gmap.occ, cmap="Greys", vmin=0.0, vmax=1.0, origin="upper",
              extent=(0, side, side, 0), interpolation="nearest")
    rects = [Rectangle((tree.x0[n], tree.y0[n]), tree.size[n], tree.size[n]) for n in leaves]
    borders = PatchCollection(rects, facecolor="none", edgecolor="tab:blue",
                              linewidth=max(0.1, 0.6 * 32 / max(side, 32)))
    borders.set_gid("leaves")
    ax.add_collection(borders)
    obs = [Rectangle((tree.x0[n], tree.y0[n]), tree.size[n], tree.size[n])
           for n in leaves if obstacle[n]]
    if obs:
        tint = PatchCollection(obs, facecolor="tab:red", edgecolor="none", alpha=0.35)
        tint.set_gid("obstacles")
        ax.add_collection(tint)
    colors = ["tab:green", "tab:orange", "tab:purple", "tab:cyan", "k"]
    for i, path in enumerate(paths):
        xs = [tree.cx2[n] / 2.0 for n in path.nodes]
        ys = [tree.cy2[n] / 2.0 for n in path.nodes]
        (line,) = ax.plot(xs, ys, "-", color=colors[i % len(colors)], lw=1.5)
        line.set_gid(f"path-{i}")
    ax.set_xlim(0, side)
    ax.set_ylim(side, 0)
    ax.set_aspect("equal")
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(out, format="svg")
    plt.close(fig)
    return out
