"""Executable checks of the planner's guarantees on concrete maps.

Each check returns a ``PropertyResult``; ``run_all`` bundles them for the
``verify`` subcommand.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence

import numpy as np

from .absgraph import AbstractGraph, build_graph, build_graph_bruteforce
from .grid_io import CellPrior, GridMap
from .ib_engine import (
    InfoCache,
    build_joint,
    compute_info,
    greedy_search,
    ib_objective,
    p_values,
    q_values,
    qtree_search,
)
from .planner import (
    CostParams,
    PlanQuery,
    eps_obstacle_mask,
    node_weights,
    plan,
    v_values,
)
from .quadtree import QuadTree, TreeAbstraction, level_start

MONOTONE_RTOL = 1e-9


@dataclass
class PropertyResult:
    name: str
    passed: bool
    checked: int
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"[{status}] {self.name}: {self.checked} checks{extra}"


def interior_descendant_sums(tree: QuadTree, values: np.ndarray) -> np.ndarray:
    """For each node, the sum of ``values`` over interior nodes of its subtree,
    accumulated by explicit descent (no shared recursion with Q/P sweeps)."""
    n_int = level_start(tree.ell)
    out = np.zeros(tree.n_nodes)
    for n in range(n_int):
        total = 0.0
        frontier = [n]
        while frontier:
            m = frontier.pop()
            if m < n_int:
                total += values[m]
                frontier.extend(range(4 * m + 1, 4 * m + 5))
        out[n] = total
    return out


# -- IB engine ---------------------------------------------------------------

def check_info_nonnegative(cache: InfoCache) -> PropertyResult:
    n_int = level_start(cache.tree.ell)
    iy, ix = cache.delta_iy[:n_int], cache.delta_ix[:n_int]
    bad = int(((iy < 0) | (ix < 0)).sum())
    return PropertyResult("info gains non-negative", bad == 0, 2 * n_int,
                          f"{bad} negative" if bad else "")


def check_q_p_bounds(cache: InfoCache, betas: Sequence[float] = (0.1, 1.0, 10.0, 1e6),
                            limit_beta: float = 1e12, limit_tol: float = 1e-6,
                            rtol: float = 1e-12) -> PropertyResult:
    """P <= Q <= sum of interior delta_iy, P equals the direct sum, and the large-beta limit."""
    tree = cache.tree
    n_int = level_start(tree.ell)
    iy_sum = interior_descendant_sums(tree, cache.delta_iy)[:n_int]
    ix_sum = interior_descendant_sums(tree, cache.delta_ix)[:n_int]
    checked, worst = 0, []
    for beta in betas:
        p = p_values(cache, beta)[:n_int]
        q = q_values(cache, beta)[:n_int]
        scale = rtol * np.maximum(1.0, iy_sum + ix_sum / beta)
        direct = iy_sum - ix_sum / beta
        if np.any(p > q + scale):
            worst.append(f"P>Q at beta={beta}")
        if np.any(q > iy_sum + scale):
            worst.append(f"Q>sum at beta={beta}")
        if np.any(np.abs(p - direct) > scale):
            worst.append(f"P!=direct sum at beta={beta}")
        checked += 3 * n_int
    q_lim = q_values(cache, limit_beta)[:n_int]
    err = float(np.max(np.abs(q_lim - iy_sum))) if n_int else 0.0
    if err > limit_tol:
        worst.append(f"|Q(1e12)-sum|={err:.3g}")
    checked += n_int
    return PropertyResult("Q/P bounds and large-beta limit", not worst, checked, "; ".join(worst))


def check_refinement(tree: QuadTree, cache: InfoCache, betas: Sequence[float]) -> PropertyResult:
    """Each larger beta's leaves are descendants-or-self of the smaller beta's leaves."""
    prev = None
    bad = 0
    for beta in betas:
        a = qtree_search(tree, cache, beta)
        if prev is not None:
            # both owners contain the same cell, so they lie on one ancestor chain
            bad += int(np.any(tree.depth[a.cell_owner] < tree.depth[prev.cell_owner]))
        prev = a
    return PropertyResult("monotone refinement in beta", bad == 0, max(0, len(betas) - 1))


def check_telescoping(gmap: GridMap, rng: np.random.Generator, beta: float = 1.0,
                      tol: float = 1e-9, prior: Optional[CellPrior] = None) -> PropertyResult:
    """Expanding nodes one at a time in random order changes the directly computed
    objective by that node's gain every step."""
    tree = QuadTree(gmap.side_exponent)
    cache = compute_info(build_joint(gmap, prior, tree))
    a = TreeAbstraction.root_only(tree)
    before = ib_objective(gmap, a, beta, prior)
    worst, checked = 0.0, 0
    while True:
        frontier = [n for n in a.leaves.tolist() if tree.depth[n] < tree.ell]
        if not frontier:
            break
        n = frontier[int(rng.integers(len(frontier)))]
        a = a.expand(n)
        after = ib_objective(gmap, a, beta, prior)
        gain = cache.delta_iy[n] - cache.delta_ix[n] / beta
        worst = max(worst, abs((after - before) - gain))
        before = after
        checked += 1
    return PropertyResult("objective telescopes by node gain", worst <= tol, checked,
                          f"max err {worst:.3g}")


def check_qtree_vs_greedy(gmap: GridMap, betas: Sequence[float]) -> PropertyResult:
    tree = QuadTree(gmap.side_exponent)
    joint = build_joint(gmap, None, tree)
    cache = compute_info(joint)
    bad = 0
    for beta in betas:
        q = ib_objective(joint, qtree_search(tree, cache, beta), beta)
        g = ib_objective(joint, greedy_search(tree, cache, beta), beta)
        bad += int(q < g - 1e-12)
    return PropertyResult("Q-tree objective >= greedy", bad == 0, len(betas))


def check_convergence(gmap: GridMap, params: CostParams, queries: Sequence[PlanQuery],
                beta: float = 1e12) -> PropertyResult:
    """Full tree at large beta iff every node above the unit cells has positive
    relevant information; when it does, the planned cost equals the FRP cost."""
    tree = QuadTree(gmap.side_exponent)
    cache = compute_info(build_joint(gmap, None, tree))
    if tree.ell == 0:
        return PropertyResult("convergence to full tree", True, 0)
    lvl = tree.level(tree.ell - 1)
    condition = bool((cache.delta_iy[lvl.start : lvl.stop] > 0).all())
    a = qtree_search(tree, cache, beta)
    full = len(a) == 4**tree.ell
    detail = f"condition={condition}, full={full}"
    ok = condition == full
    checked = 1
    if full and queries:
        w = node_weights(gmap, tree, params)
        g = build_graph(tree, a)
        g_full = build_graph(tree, TreeAbstraction.full(tree))
        for qr in queries:
            ratio = plan(g, gmap, tree, params, qr, w).cost / plan(g_full, gmap, tree, params, qr, w).cost
            ok &= abs(ratio - 1.0) <= 1e-9
            checked += 1
    return PropertyResult("convergence to full tree", ok, checked, detail)


# -- planner -----------------------------------------------------------------

def check_value_aggregation(gmap: GridMap, params: CostParams, rtol: float = 1e-12) -> PropertyResult:
    """V equals the leaf-cost average of its subtree; a node's weight dominates
    any subset of its children's weights."""
    tree = QuadTree(gmap.side_exponent)
    v = v_values(gmap, tree, params)
    w = v * np.power(4.0, tree.r)
    base = level_start(tree.ell)
    leaf_v = v[base:]
    bad, checked = 0, 0
    for n in range(base):
        lo, hi = tree.subtree_leaf_range(n)
        direct = leaf_v[lo - base : hi - base].sum() / (hi - lo)
        if abs(v[n] - direct) > rtol * abs(direct):
            bad += 1
        kids = w[4 * n + 1 : 4 * n + 5]
        for mask in itertools.product((False, True), repeat=4):
            kept = kids[~np.array(mask)].sum()
            if w[n] < kept - rtol * w[n]:
                bad += 1
            checked += 1
        checked += 1
    return PropertyResult("V aggregation and child-subset bound", bad == 0, checked,
                          f"{bad} violations" if bad else "")


def check_obstacle_predicate(gmap: GridMap, params: CostParams) -> PropertyResult:
    """Obstacle flag from V agrees with direct inspection of the subtree's cells."""
    tree = QuadTree(gmap.side_exponent)
    mask = eps_obstacle_mask(gmap, tree, params)
    blocked = tree.cells_to_leaf_order(gmap.occ) > params.eps
    base = level_start(tree.ell)
    bad = 0
    for n in range(base):
        lo, hi = tree.subtree_leaf_range(n)
        bad += int(mask[n] != bool(blocked[lo - base : hi - base].any()))
    return PropertyResult("obstacle predicate biconditional", bad == 0, base,
                          f"{bad} mismatches" if bad else "")


def simple_paths(adj: Sequence[Sequence[int]]) -> Iterator[List[int]]:
    """Every simple path (as a vertex list, both directions, including single vertices)."""
    n = len(adj)
    for s in range(n):
        path = [s]
        on = [False] * n
        on[s] = True
        stack = [iter(adj[s])]
        yield [s]
        while stack:
            nxt = next(stack[-1], None)
            if nxt is None:
                stack.pop()
                on[path.pop()] = False
                continue
            if on[nxt]:
                continue
            path.append(nxt)
            on[nxt] = True
            yield list(path)
            stack.append(iter(adj[nxt]))


def random_simple_paths(adj: Sequence[Sequence[int]], count: int,
                        rng: np.random.Generator, max_len: int = 64) -> Iterator[List[int]]:
    n = len(adj)
    for _ in range(count):
        v = int(rng.integers(n))
        path, seen = [v], {v}
        target = int(rng.integers(1, max_len + 1))
        while len(path) < target:
            options = [u for u in adj[path[-1]] if u not in seen]
            if not options:
                break
            v = options[int(rng.integers(len(options)))]
            path.append(v)
            seen.add(v)
        yield path


def _feasibility_agreement(gmap: GridMap, tree: QuadTree, params: CostParams,
                           graph: AbstractGraph, paths: Iterator[List[int]]):
    """Count paths where ``cost < M`` disagrees with every covered cell being feasible."""
    w = node_weights(gmap, tree, params)[graph.vertices]
    blocked_leaf = tree.cells_to_leaf_order(gmap.occ) > params.eps
    base = level_start(tree.ell)
    vblocked = np.array([blocked_leaf[slice(*(np.array(tree.subtree_leaf_range(n)) - base))].any()
                         for n in graph.vertices.tolist()])
    big_m = params.big_m(tree.ell)
    wl = w.tolist()
    vb = vblocked.tolist()
    bad = checked = 0
    for p in paths:
        cost = 0.0
        for v in p:
            cost += wl[v]
        feasible = not any(vb[v] for v in p)
        bad += int((cost < big_m) != feasible)
        checked += 1
    return bad, checked


def check_feasibility(gmap: GridMap, params: CostParams,
                      abstractions: Optional[Sequence[TreeAbstraction]] = None,
                      exhaustive: bool = True, samples: int = 1000,
                      rng: Optional[np.random.Generator] = None) -> PropertyResult:
    """Cost below M iff every covered unit cell is feasible, on full-resolution and abstract paths."""
    tree = QuadTree(gmap.side_exponent)
    rng = rng or np.random.default_rng(0)
    if abstractions is None:
        abstractions = [TreeAbstraction.full(tree)]
    bad = checked = 0
    for a in abstractions:
        g = build_graph(tree, a)
        paths = simple_paths(g.adjacency) if exhaustive else random_simple_paths(g.adjacency, samples, rng)
        b, c = _feasibility_agreement(gmap, tree, params, g, paths)
        bad += b
        checked += c
    return PropertyResult("cost-threshold feasibility biconditional", bad == 0, checked,
                          f"{bad} exceptions" if bad else "")


def check_cost_monotone(gmap: GridMap, params: CostParams, betas: Sequence[float],
                   queries: Sequence[PlanQuery], rtol: float = MONOTONE_RTOL,
                   atol: Optional[float] = None) -> PropertyResult:
    """Optimal abstract cost is non-increasing along the beta schedule for every query,
    and once feasible a query stays feasible.

    A rise up to ``rtol * max(1, cost)`` is tolerated, or exactly ``atol`` when given.
    """
    tree = QuadTree(gmap.side_exponent)
    cache = compute_info(build_joint(gmap, None, tree))
    w = node_weights(gmap, tree, params)
    costs = np.empty((len(betas), len(queries)))
    feas = np.zeros((len(betas), len(queries)), dtype=bool)
    for i, beta in enumerate(betas):
        g = build_graph(tree, qtree_search(tree, cache, beta))
        for j, qr in enumerate(queries):
            p = plan(g, gmap, tree, params, qr, w)
            costs[i, j] = p.cost
            feas[i, j] = p.feasible
    rise = costs[1:] - costs[:-1]
    allowed = atol if atol is not None else rtol * np.maximum(1.0, costs[:-1])
    bad = int((rise > allowed).sum())
    lost = int((feas[:-1] & ~feas[1:]).sum())
    detail = []
    if bad:
        detail.append(f"{bad} cost increases, max {float(rise.max()):.3g}")
    if lost:
        detail.append(f"{lost} feasibility losses")
    return PropertyResult("cost non-increasing in beta", bad == 0 and lost == 0,
                          costs.size, "; ".join(detail))


def check_graph_equivalence(tree: QuadTree, abstractions: Sequence[TreeAbstraction]) -> PropertyResult:
    bad = 0
    for a in abstractions:
        g1, g2 = build_graph(tree, a), build_graph_bruteforce(tree, a)
        same = np.array_equal(g1.indptr, g2.indptr) and np.array_equal(g1.indices, g2.indices)
        bad += int(not same)
    return PropertyResult("accelerated graph equals all-pairs graph", bad == 0, len(abstractions))


def run_all(gmap: GridMap, params: CostParams, seed: int = 0,
            betas: Optional[Sequence[float]] = None, n_queries: int = 10) -> List[PropertyResult]:
    """Every property check on one map."""
    from .experiments import sample_queries

    rng = np.random.default_rng(seed)
    tree = QuadTree(gmap.side_exponent)
    cache = compute_info(build_joint(gmap, None, tree))
    if betas is None:
        betas = [float(b) for b in np.geomspace(1e-2, 1e8, 21)]
    try:
        queries = sample_queries(gmap, params, n_queries, rng)
    except ValueError:
        queries = []
    abstractions = [qtree_search(tree, cache, b) for b in betas[:: max(1, len(betas) // 5)]]
    small = tree.ell <= 2
    return [
        check_info_nonnegative(cache),
        check_q_p_bounds(cache),
        check_refinement(tree, cache, betas),
        check_telescoping(gmap, rng, beta=1.0) if tree.ell <= 5 else
        PropertyResult("objective telescopes by node gain", True, 0, "skipped for ell > 5"),
        check_qtree_vs_greedy(gmap, betas),
        check_convergence(gmap, params, queries[:3]),
        check_value_aggregation(gmap, params),
        check_obstacle_predicate(gmap, params),
        check_feasibility(gmap, params, abstractions, exhaustive=small, rng=rng),
        check_cost_monotone(gmap, params, betas, queries),
        check_graph_equivalence(tree, abstractions) if tree.ell <= 5 else
        PropertyResult("accelerated graph equals all-pairs graph", True, 0, "skipped for ell > 5"),
    ]
