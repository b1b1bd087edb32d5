import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ibqtree import QuadTree, TreeAbstraction, build_graph
from ibqtree.absgraph import build_graph_bruteforce, is_nodal_neighbor, locate_vertex
from ibqtree.quadtree import subtree_leaves


def test_nodal_neighbor_examples():
    t = QuadTree(2)
    c = lambda x, y: int(t.cell_node(x, y))
    assert t.center(c(0, 0)) == (0.5, 0.5)
    assert is_nodal_neighbor(t, c(0, 0), c(1, 0))
    assert not is_nodal_neighbor(t, c(0, 0), c(1, 1))
    r1 = int(t.ancestor(c(0, 0), 1))
    assert t.center(r1) == (1.0, 1.0)
    assert t.center(c(2, 0)) == (2.5, 0.5)
    assert is_nodal_neighbor(t, r1, c(2, 0))
    assert is_nodal_neighbor(t, r1, c(2, 1))
    # corner contact with an r=1 block
    assert not is_nodal_neighbor(t, r1, c(2, 2))
    assert not is_nodal_neighbor(t, c(0, 0), c(2, 0))


@pytest.mark.parametrize("ell,kind,verts,edges", [
    (2, "full", 16, 24),
    (2, "root", 1, 0),
    (1, "full", 4, 4),
])
def test_graph_sizes(ell, kind, verts, edges):
    t = QuadTree(ell)
    a = TreeAbstraction.full(t) if kind == "full" else TreeAbstraction.root_only(t)
    g = build_graph(t, a)
    assert g.n_vertices == verts and g.n_edges == edges
    assert len(g.edges()) == edges


def test_full_graph_is_four_connected_grid():
    t = QuadTree(3)
    g = build_graph(t, TreeAbstraction.full(t))
    got = {tuple(sorted(((int(t.x0[u]), int(t.y0[u])), (int(t.x0[v]), int(t.y0[v])))))
           for u, v in g.edges().tolist()}
    want = set()
    for x in range(8):
        for y in range(8):
            if x < 7:
                want.add(((x, y), (x + 1, y)))
            if y < 7:
                want.add(((x, y), (x, y + 1)))
    assert got == want


def test_neighbor_lists_sorted_and_symmetric():
    t = QuadTree(3)
    a = TreeAbstraction.root_only(t).expand(0).expand(2).expand(11)
    g = build_graph(t, a)
    for v in range(g.n_vertices):
        nb = g.neighbors(v).tolist()
        assert nb == sorted(nb)
        for u in nb:
            assert v in g.neighbors(u).tolist()


def random_abstraction(tree, rng, p=0.6):
    mask = rng.random(tree.n_nodes) < p
    mask[0] = True
    return TreeAbstraction.from_expanded(tree, mask)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_accelerated_equals_all_pairs(ell, seed):
    t = QuadTree(ell)
    a = random_abstraction(t, np.random.default_rng(seed))
    g1, g2 = build_graph(t, a), build_graph_bruteforce(t, a)
    assert np.array_equal(g1.vertices, g2.vertices)
    assert np.array_equal(g1.indptr, g2.indptr)
    assert np.array_equal(g1.indices, g2.indices)


def test_locate_vertex():
    t = QuadTree(2)
    full = TreeAbstraction.full(t)
    g = build_graph(t, full)
    v = locate_vertex(g, full, (0.2, 0.2))
    assert g.node_of(v) == int(t.cell_node(0, 0))
    root = TreeAbstraction.root_only(t)
    assert locate_vertex(build_graph(t, root), root, (3.3, 1.7)) == 0
    rng = np.random.default_rng(4)
    t = QuadTree(4)
    a = random_abstraction(t, rng)
    g = build_graph(t, a)
    for _ in range(50):
        p = rng.uniform(0, 16, size=2)
        z = g.node_of(locate_vertex(g, a, p))
        cell = int(t.cell_node(int(p[0]), int(p[1])))
        assert cell in subtree_leaves(t, z)


def test_edges_csv(tmp_path):
    t = QuadTree(1)
    g = build_graph(t, TreeAbstraction.full(t))
    g.write_edges_csv(tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "u_node_id,v_node_id"
    assert sorted(lines[1:]) == ["1,2", "1,3", "2,4", "3,4"]
