"""Path costs, the abstract value function and Dijkstra planning on abstraction graphs."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .absgraph import AbstractGraph, _nodal_neighbor_vec
from .grid_io import GridMap
from .quadtree import OutOfBounds, QuadTree, level_start


class KindMismatch(ValueError):
    pass


class NoPath(RuntimeError):
    pass


@dataclass(frozen=True)
class CostParams:
    """Cost parameters: feasibility threshold ``eps`` and weights ``lambda1``, ``lambda2``.

    ``gamma`` is the margin by which the obstacle penalty exceeds the cost of
    any feasible path.
    """

    eps: float = 0.5
    lambda1: float = 0.001
    lambda2: float = 1.0
    gamma: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError(f"eps must lie in [0, 1], got {self.eps}")
        if not 0.0 < self.lambda1 <= 1.0:
            raise ValueError(f"lambda1 must lie in (0, 1], got {self.lambda1}")
        if not 0.0 <= self.lambda2 <= 1.0:
            raise ValueError(f"lambda2 must lie in [0, 1], got {self.lambda2}")
        if not self.gamma > 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    @property
    def free_cost_bound(self) -> float:
        """lambda1 + eps * lambda2, the largest cost of a feasible cell."""
        return self.lambda1 + self.eps * self.lambda2

    def big_m(self, ell: int) -> float:
        return 4**ell * self.free_cost_bound + self.gamma


@dataclass(frozen=True)
class PlanQuery:
    """Start and goal unit cells as ``(x, y)``."""

    start: Tuple[int, int]
    goal: Tuple[int, int]

    def check(self, side: int) -> None:
        for name, (x, y) in (("start", self.start), ("goal", self.goal)):
            if not (0 <= x < side and 0 <= y < side):
                raise OutOfBounds(f"{name} cell {(x, y)} outside a {side}x{side} map")


@dataclass(frozen=True)
class Path:
    nodes: Tuple[int, ...]
    cost: float
    feasible: bool
    kind: str  # "frp" or "abstract"
    expanded: int = 0


def cell_costs(gmap: GridMap, params: CostParams) -> np.ndarray:
    """Per-cell cost array, same layout as ``gmap.occ``."""
    occ = gmap.occ
    free = occ <= params.eps
    return np.where(free, params.lambda1 + params.lambda2 * occ, params.big_m(gmap.side_exponent))


def cell_cost(gmap: GridMap, params: CostParams, x: int, y: int) -> float:
    p = float(gmap.occ[y, x])
    if p <= params.eps:
        return params.lambda1 + params.lambda2 * p
    return params.big_m(gmap.side_exponent)


def v_values(gmap: GridMap, tree: QuadTree, params: CostParams) -> np.ndarray:
    """Abstract value of every node: the cell cost at unit cells, the mean of
    the children's values above."""
    return tree.aggregate(tree.cells_to_leaf_order(cell_costs(gmap, params)), how="mean")


def v_value(gmap: GridMap, tree: QuadTree, params: CostParams, n: int) -> float:
    return float(v_values(gmap, tree, params)[tree.check(n)])


def node_weights(gmap: GridMap, tree: QuadTree, params: CostParams,
                 v: Optional[np.ndarray] = None) -> np.ndarray:
    """Cost of occupying each node: ``4**r(n) * V(n)``."""
    if v is None:
        v = v_values(gmap, tree, params)
    return v * np.power(4.0, tree.r)


def eps_obstacle_mask(gmap: GridMap, tree: QuadTree, params: CostParams,
                      v: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-node epsilon-obstacle flag, decided from V alone for interior nodes."""
    if v is None:
        v = v_values(gmap, tree, params)
    mask = v > params.free_cost_bound
    base = level_start(tree.ell)
    mask[base:] = tree.cells_to_leaf_order(gmap.occ) > params.eps
    return mask


def is_eps_obstacle(tree: QuadTree, gmap: GridMap, params: CostParams, n: int) -> bool:
    n = tree.check(n)
    if tree.depth[n] == tree.ell:
        x, y = int(tree.x0[n]), int(tree.y0[n])
        return bool(gmap.occ[y, x] > params.eps)
    return bool(v_value(gmap, tree, params, n) > params.free_cost_bound)


def path_cost_frp(gmap: GridMap, params: CostParams, path: Path,
                  tree: Optional[QuadTree] = None) -> float:
    """Sum of cell costs along a finest-resolution path."""
    if path.kind != "frp":
        raise KindMismatch("path_cost_frp needs a finest-resolution path")
    if tree is None:
        tree = QuadTree(gmap.side_exponent)
    costs = cell_costs(gmap, params)
    total = 0.0
    for n in path.nodes:
        if tree.depth[n] != tree.ell:
            raise KindMismatch(f"node {n} is not a unit cell")
        total += float(costs[tree.y0[n], tree.x0[n]])
    return total


def path_cost_abstract(gmap: GridMap, tree: QuadTree, params: CostParams, path: Path,
                       v: Optional[np.ndarray] = None) -> float:
    """Sum of ``4**r(z) * V(z)`` along an abstract path."""
    if path.kind != "abstract":
        raise KindMismatch("path_cost_abstract needs an abstract path")
    w = node_weights(gmap, tree, params, v)
    total = 0.0
    for n in path.nodes:
        total += float(w[n])
    return total


def is_eps_feasible(path: Path, gmap: GridMap, tree: QuadTree, params: CostParams) -> bool:
    """Feasibility from the cost alone: cost < M."""
    return path.cost < params.big_m(tree.ell)


def _vertex_for_cell(graph: AbstractGraph, x: int, y: int) -> int:
    tree = graph.tree
    n = int(tree.cell_node(x, y))
    vof = graph.vertex_of
    while n not in vof:
        n = (n - 1) // 4
    return vof[n]


def dijkstra(adj, weight, s: int, g: int):
    """Node-weighted shortest path: the cost of a path is the sum of its vertex weights.

    Returns ``(vertex_path, cost, expanded)``. Equal keys pop in ascending
    vertex order and a predecessor is only replaced on strict improvement, so
    the result is deterministic.
    """
    n = len(adj)
    inf = float("inf")
    dist = [inf] * n
    prev = [-1] * n
    done = bytearray(n)
    dist[s] = weight[s]
    heap = [(dist[s], s)]
    expanded = 0
    pop, push = heapq.heappop, heapq.heappush
    while heap:
        d, u = pop(heap)
        if done[u]:
            continue
        done[u] = 1
        expanded += 1
        if u == g:
            break
        for v in adj[u]:
            if done[v]:
                continue
            nd = d + weight[v]
            if nd < dist[v]:
                dist[v] = nd
                prev[v] = u
                push(heap, (nd, v))
    if not done[g]:
        raise NoPath(f"goal vertex {g} unreachable from {s}")
    out = [g]
    while out[-1] != s:
        out.append(prev[out[-1]])
    out.reverse()
    return out, dist[g], expanded


def plan(graph: AbstractGraph, gmap: GridMap, tree: QuadTree, params: CostParams,
         query: PlanQuery, weights: Optional[np.ndarray] = None) -> Path:
    """Minimum-cost path between the blocks containing the query's start and goal cells.

    Obstacle vertices stay in the graph with their penalty weight, so a path
    is always returned; ``feasible`` tells whether it avoids them.
    """
    query.check(tree.side)
    if weights is None:
        weights = node_weights(gmap, tree, params)
    s = _vertex_for_cell(graph, *query.start)
    g = _vertex_for_cell(graph, *query.goal)
    w = weights[graph.vertices].tolist()
    verts, _, expanded = dijkstra(graph.adjacency, w, s, g)
    nodes = tuple(int(graph.vertices[v]) for v in verts)
    cost = 0.0
    for v in verts:
        cost += w[v]
    kind = "frp" if graph.n_vertices == 4**tree.ell else "abstract"
    feasible = cost < params.big_m(tree.ell)
    return Path(nodes, cost, feasible, kind, expanded)


def path_is_connected(tree: QuadTree, nodes: Sequence[int]) -> bool:
    """Whether consecutive nodes are nodal neighbors and all nodes are distinct."""
    if len(set(nodes)) != len(nodes):
        return False
    if len(nodes) < 2:
        return True
    a = np.asarray(nodes[:-1])
    b = np.asarray(nodes[1:])
    return bool(_nodal_neighbor_vec(tree, a, b).all())


def write_path_csv(path: Path, tree: QuadTree, weights: np.ndarray, out) -> None:
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("seq,node_id,r_value,center_x,center_y,weight\n")
        for i, n in enumerate(path.nodes):
            cx, cy = tree.center(n)
            fh.write(f"{i},{n},{tree.r[n]},{cx!r},{cy!r},{float(weights[n])!r}\n")


def path_summary(path: Path, graph: AbstractGraph) -> dict:
    return {
        "cost": path.cost,
        "feasible": path.feasible,
        "kind": path.kind,
        "vertex_count": graph.n_vertices,
        "expanded_count": path.expanded,
        "length": len(path.nodes),
    }
