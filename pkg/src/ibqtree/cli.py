"""Command-line front end.

Subcommands: compress, plan, sweep, bench, render, verify. Exit status is 0 on
success, 1 on invalid input, 2 when ``verify`` finds a failing property.
Information quantities use base-2 logarithms, so beta values are in units of
bits and differ from natural-log conventions by a constant factor.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from typing import List, Optional, Sequence

import numpy as np

from . import experiments, properties
from .absgraph import build_graph
from .grid_io import GridMap, MapError, default_prior, load_map, load_prior
from .ib_engine import build_joint, compute_info, qtree_search
from .planner import CostParams, PlanQuery, node_weights, path_summary, plan, write_path_csv
from .quadtree import OutOfBounds, QuadTree, TreeAbstraction, point_to_cell
from .synthetic import random_map

log = logging.getLogger("ibqtree")

EXIT_OK, EXIT_INVALID, EXIT_PROPERTY = 0, 1, 2
LOG_ENV = "IBQTREE_LOG_LEVEL"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _float_in(lo, hi, lo_open=False, name="value"):
    def parse(text):
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number, got {text!r}")
        if (v <= lo if lo_open else v < lo) or v > hi:
            left = "(" if lo_open else "["
            raise argparse.ArgumentTypeError(f"{name} must lie in {left}{lo}, {hi}], got {v}")
        return v
    return parse


def _positive(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def _point(text):
    try:
        x, y = (float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}")
    return x, y


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_cost_args(p):
    p.add_argument("--eps", type=_float_in(0, 1, name="eps"),
                   help="feasibility threshold on occupancy probability (default 0.5)")
    p.add_argument("--lambda1", type=_float_in(0, 1, lo_open=True, name="lambda1"),
                   help="per-cell traversal cost (default 0.001)")
    p.add_argument("--lambda2", type=_float_in(0, 1, name="lambda2"),
                   help="weight of occupancy probability in the cell cost (default 1)")
    p.add_argument("--gamma", type=_positive,
                   help="margin of the obstacle penalty above any feasible cost (default 2)")


def _add_map_args(p, required=True):
    p.add_argument("--map", required=required, help="occupancy grid (.pgm or .csv)")
    p.add_argument("--format", choices=["pgm", "csv"], default=None)
    p.add_argument("--prior", default=None, help="CSV of cell probabilities p(x) (default uniform)")


def _add_schedule_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--betas", type=_float_list, help="comma-separated strictly increasing betas")
    g.add_argument("--schedule", help="file with one beta per line, or a JSON list")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ibqtree", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default=os.environ.get(LOG_ENV, "WARNING"),
                        help=f"logging level (env {LOG_ENV})")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("compress", help="select an abstraction for one beta and emit tree JSON")
    _add_map_args(p)
    p.add_argument("--beta", type=_positive, required=True)
    p.add_argument("--out", help="tree JSON path (default stdout)")
    p.add_argument("--cache-csv", help="also dump per-node information gains")

    p = sub.add_parser("plan", help="plan a path on the abstraction for one beta")
    _add_map_args(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--beta", type=_positive)
    g.add_argument("--full", action="store_true", help="plan at full resolution")
    g.add_argument("--tree", help="plan on an abstraction loaded from tree JSON")
    _add_cost_args(p)
    p.add_argument("--start", type=_point, required=True, help="start point 'x,y' in grid units")
    p.add_argument("--goal", type=_point, required=True, help="goal point 'x,y' in grid units")
    p.add_argument("--out", help="path CSV (default stdout)")
    p.add_argument("--summary", help="summary JSON path (default stderr)")
    p.add_argument("--graph-csv", help="also dump the abstraction's edge list")

    p = sub.add_parser("sweep", help="cost ratio and feasibility versus compression")
    _add_map_args(p, required=False)
    _add_schedule_args(p)
    _add_cost_args(p)
    p.add_argument("--queries", type=int, default=None, help="start/goal pairs (default 200)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", help="JSON file of SweepConfig fields; flags override it")
    p.add_argument("--out", required=True, help="sweep CSV; a .png figure and .json summary are written alongside")
    p.add_argument("--no-figure", action="store_true")

    p = sub.add_parser("bench", help="planning time versus compression against full-resolution Dijkstra")
    p.add_argument("--sizes", type=_int_list, default=[7, 8, 9], help="side exponents (default 7,8,9)")
    p.add_argument("--map", action="append", default=[],
                   help="map file to use for its size instead of a synthetic one (repeatable)")
    _add_schedule_args(p)
    _add_cost_args(p)
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", required=True, help="bench CSV; a .png figure is written alongside")
    p.add_argument("--no-figure", action="store_true")

    p = sub.add_parser("render", help="draw map, abstraction and optional path to SVG")
    _add_map_args(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--beta", type=_positive)
    g.add_argument("--full", action="store_true")
    g.add_argument("--tree")
    _add_cost_args(p)
    p.add_argument("--start", type=_point)
    p.add_argument("--goal", type=_point)
    p.add_argument("--out", required=True)

    p = sub.add_parser("verify", help="check the planner's properties on a map")
    p.add_argument("--map", required=True, help="map file, or 'random'")
    p.add_argument("--format", choices=["pgm", "csv"], default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=16, help="side of the random map")
    p.add_argument("--queries", type=int, default=10)
    _add_schedule_args(p)
    _add_cost_args(p)
    return parser


def _params(args, base: Optional[CostParams] = None) -> CostParams:
    given = {k: getattr(args, k) for k in ("eps", "lambda1", "lambda2", "gamma")
             if getattr(args, k) is not None}
    return dataclasses.replace(base or CostParams(), **given)


def _ensure_parent(path) -> None:
    if path:
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)


def _load(args):
    gmap = load_map(args.map, args.format)
    prior = load_prior(args.prior, gmap) if getattr(args, "prior", None) else default_prior(gmap)
    return gmap, prior


def _schedule(args) -> Optional[List[float]]:
    if getattr(args, "betas", None):
        return experiments.check_schedule(args.betas)
    if getattr(args, "schedule", None):
        with open(args.schedule, "r", encoding="utf-8") as fh:
            text = fh.read().strip()
        values = json.loads(text) if text.startswith("[") else [float(t) for t in text.split()]
        return experiments.check_schedule(values)
    return None


def _abstraction(args, gmap: GridMap, prior, tree: QuadTree) -> TreeAbstraction:
    if args.full:
        return TreeAbstraction.full(tree)
    if args.tree:
        return TreeAbstraction.load_json(args.tree, tree)
    cache = compute_info(build_joint(gmap, prior, tree))
    return qtree_search(tree, cache, args.beta)


def _query(tree: QuadTree, start, goal) -> PlanQuery:
    return PlanQuery(point_to_cell(tree, start), point_to_cell(tree, goal))


def cmd_compress(args) -> int:
    gmap, prior = _load(args)
    tree = QuadTree(gmap.side_exponent)
    cache = compute_info(build_joint(gmap, prior, tree))
    a = qtree_search(tree, cache, args.beta)
    if args.cache_csv:
        cache.write_csv(args.cache_csv)
    text = json.dumps(a.to_dict())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    log.info("beta=%g leaves=%d compression=%.4f", args.beta, len(a), a.compression)
    return EXIT_OK


def cmd_plan(args) -> int:
    gmap, prior = _load(args)
    params = _params(args)
    tree = QuadTree(gmap.side_exponent)
    a = _abstraction(args, gmap, prior, tree)
    graph = build_graph(tree, a)
    weights = node_weights(gmap, tree, params)
    path = plan(graph, gmap, tree, params, _query(tree, args.start, args.goal), weights)
    out = args.out or "/dev/stdout"
    write_path_csv(path, tree, weights, out)
    summary = path_summary(path, graph)
    summary.update({"beta": a.beta, "leaf_count": len(a), "compression": a.compression,
                    "big_m": params.big_m(tree.ell)})
    if args.summary:
        with open(args.summary, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
    else:
        print(json.dumps(summary), file=sys.stderr)
    if args.graph_csv:
        graph.write_edges_csv(args.graph_csv)
    return EXIT_OK


def cmd_sweep(args) -> int:
    overrides = {
        "map_path": args.map,
        "betas": _schedule(args),
        "query_count": args.queries,
        "seed": args.seed,
        "output": args.out,
    }
    if args.config:
        config = experiments.SweepConfig.from_json(args.config, **overrides)
    else:
        config = experiments.SweepConfig(**{k: v for k, v in overrides.items() if v is not None})
    config.params = _params(args, config.params)
    gmap = load_map(config.map_path, args.format) if config.map_path else None
    prior = load_prior(args.prior, gmap) if args.prior and gmap is not None else None
    result = experiments.run_sweep(config, gmap, prior)
    experiments.write_rows_csv(result.rows, args.out, experiments.SWEEP_COLUMNS)
    summary = result.summary()
    with open(os.path.splitext(args.out)[0] + ".json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    if not args.no_figure:
        experiments.plot_sweep(result, experiments.figure_path(args.out))
    print(json.dumps(summary))
    return EXIT_OK


def cmd_bench(args) -> int:
    betas = _schedule(args) or experiments.default_schedule(12, 1.0, 1e5)
    config = experiments.SweepConfig(betas=betas, query_count=args.queries, seed=args.seed,
                                     params=_params(args), repeats=args.repeats)
    maps = {}
    for path in args.map:
        m = load_map(path)
        maps[m.side_exponent] = m
    rows = experiments.run_bench(config, args.sizes, maps)
    experiments.write_rows_csv(rows, args.out)
    if not args.no_figure:
        experiments.plot_bench(rows, experiments.figure_path(args.out))
    return EXIT_OK


def cmd_render(args) -> int:
    gmap, prior = _load(args)
    params = _params(args)
    tree = QuadTree(gmap.side_exponent)
    a = _abstraction(args, gmap, prior, tree)
    paths = []
    if (args.start is None) != (args.goal is None):
        raise UsageError("render: --start and --goal must be given together")
    if args.start is not None:
        graph = build_graph(tree, a)
        paths.append(plan(graph, gmap, tree, params, _query(tree, args.start, args.goal)))
    title = f"{len(a)} leaves ({100 * a.compression:.1f}% of cells)"
    experiments.render_svg(gmap, a, paths, args.out, params, title)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.map == "random":
        gmap = random_map(args.size, np.random.default_rng(args.seed))
    else:
        gmap = load_map(args.map, args.format)
    results = properties.run_all(gmap, _params(args), seed=args.seed, betas=_schedule(args),
                                 n_queries=args.queries)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_PROPERTY


COMMANDS = {
    "compress": cmd_compress,
    "plan": cmd_plan,
    "sweep": cmd_sweep,
    "bench": cmd_bench,
    "render": cmd_render,
    "verify": cmd_verify,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    try:
        logging.basicConfig(level=str(args.log_level).upper(),
                            format="%(levelname)s %(name)s: %(message)s")
        for attr in ("out", "summary", "graph_csv", "cache_csv"):
            _ensure_parent(getattr(args, attr, None))
        return COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"ibqtree {args.command}: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_INVALID
    except (UsageError, MapError, OutOfBounds, ValueError, json.JSONDecodeError) as exc:
        print(f"ibqtree {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
