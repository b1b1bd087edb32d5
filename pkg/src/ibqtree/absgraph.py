"""Graph over the leaves of a tree abstraction.

Two nodes are joined when they are nodal neighbors: the infinity-norm distance
of their centers equals the sum of their half-sides and exactly one
coordinate attains it (face adjacency, corners excluded). Centers are held in
half units so the test is exact integer arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Sequence

import numpy as np

from .quadtree import QuadTree, TreeAbstraction, level_start, locate_leaf


def is_nodal_neighbor(tree: QuadTree, n: int, m: int) -> bool:
    n, m = tree.check(n), tree.check(m)
    return bool(_nodal_neighbor_vec(tree, np.array([n]), np.array([m]))[0])


def _nodal_neighbor_vec(tree: QuadTree, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # 2 * (2**(r-1) + 2**(r'-1)) in half units is just size(a) + size(b)
    thr = tree.size[a] + tree.size[b]
    dx = np.abs(tree.cx2[a] - tree.cx2[b])
    dy = np.abs(tree.cy2[a] - tree.cy2[b])
    inf = np.maximum(dx, dy)
    return (inf == thr) & ((dx == thr) != (dy == thr))


@dataclass(frozen=True, eq=False)
class AbstractGraph:
    """Vertices are the abstraction's leaves sorted by node id.

    ``indptr``/``indices`` hold the symmetric adjacency in CSR form with each
    vertex's neighbor list sorted ascending.
    """

    tree: QuadTree
    vertices: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.indices) // 2

    def node_of(self, v: int) -> int:
        return int(self.vertices[v])

    @cached_property
    def vertex_of(self) -> Dict[int, int]:
        return {int(n): i for i, n in enumerate(self.vertices)}

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    @cached_property
    def adjacency(self) -> List[List[int]]:
        """Neighbor lists as plain Python lists (for the search inner loop)."""
        ind = self.indices.tolist()
        ptr = self.indptr.tolist()
        return [ind[ptr[i] : ptr[i + 1]] for i in range(self.n_vertices)]

    def edges(self) -> np.ndarray:
        """Each undirected edge once, as (u_node_id, v_node_id) with u < v."""
        src = np.repeat(np.arange(self.n_vertices), np.diff(self.indptr))
        keep = src < self.indices
        return np.stack([self.vertices[src[keep]], self.vertices[self.indices[keep]]], axis=1)

    def write_edges_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("u_node_id,v_node_id\n")
            for u, v in self.edges().tolist():
                fh.write(f"{u},{v}\n")


def _csr(n: int, u: np.ndarray, v: np.ndarray):
    src = np.concatenate([u, v])
    dst = np.concatenate([v, u])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    return np.cumsum(indptr), dst.astype(np.int64)


def build_graph(tree: QuadTree, abstraction: TreeAbstraction) -> AbstractGraph:
    """Build the abstraction's graph.

    Candidate pairs come from unit-cell faces whose two sides belong to
    different leaves; every candidate is then confirmed with the nodal
    neighbor test.
    """
    vertices = np.asarray(abstraction.leaves, dtype=np.int64)
    side = tree.side
    # raster of leaf ids over unit cells, [y, x]
    owner = np.empty(4**tree.ell, dtype=np.int64)
    owner[tree.cell_order] = abstraction.cell_owner
    grid = owner.reshape(side, side)
    pairs = []
    for a, b in ((grid[:, :-1], grid[:, 1:]), (grid[:-1, :], grid[1:, :])):
        diff = a != b
        if diff.any():
            lo = np.minimum(a[diff], b[diff])
            hi = np.maximum(a[diff], b[diff])
            pairs.append(lo * tree.n_nodes + hi)
    if pairs:
        keys = np.unique(np.concatenate(pairs))
        u_node, v_node = keys // tree.n_nodes, keys % tree.n_nodes
        ok = _nodal_neighbor_vec(tree, u_node, v_node)
        u_node, v_node = u_node[ok], v_node[ok]
        u = np.searchsorted(vertices, u_node)
        v = np.searchsorted(vertices, v_node)
    else:
        u = v = np.zeros(0, dtype=np.int64)
    indptr, indices = _csr(len(vertices), u, v)
    for arr in (vertices, indptr, indices):
        arr.setflags(write=False)
    return AbstractGraph(tree, vertices, indptr, indices)


def build_graph_bruteforce(tree: QuadTree, abstraction: TreeAbstraction) -> AbstractGraph:
    """All-pairs nodal-neighbor test, O(V^2); reference for ``build_graph``."""
    vertices = np.asarray(abstraction.leaves, dtype=np.int64)
    n = len(vertices)
    iu, iv = np.triu_indices(n, k=1)
    ok = _nodal_neighbor_vec(tree, vertices[iu], vertices[iv])
    indptr, indices = _csr(n, iu[ok], iv[ok])
    return AbstractGraph(tree, vertices, indptr, indices)


def locate_vertex(graph: AbstractGraph, abstraction: TreeAbstraction,
                  point: Sequence[float]) -> int:
    """Vertex whose block contains ``point``."""
    return graph.vertex_of[locate_leaf(abstraction, point)]
