"""Full quadtree over a 2**ell x 2**ell grid and tree abstractions (leaf sets).

Nodes live in a dense heap layout: the root is 0 and the children of node
``i`` are ``4i+1 .. 4i+4`` in (SW, SE, NW, NE) order, where "south" is the
smaller ``y``. The nodes at depth ``k`` occupy the contiguous id range
``[(4**k - 1) // 3, (4**(k+1) - 1) // 3)`` and a node's offset inside that
range is the Morton code of its block (bit 0 of each base-4 digit is the x
bit, bit 1 the y bit). Consequently the unit cells below any node form a
contiguous run of depth-``ell`` ids, which makes bottom-up sweeps a matter of
``reshape(-1, 4)``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .grid_io import GridMap


class InvalidNode(IndexError):
    pass


class OutOfBounds(ValueError):
    pass


class InvalidAbstraction(ValueError):
    pass


def level_start(k: int) -> int:
    """First node id at depth ``k``."""
    return (4**k - 1) // 3


def _part1by1(v: np.ndarray) -> np.ndarray:
    v = v.astype(np.int64) & 0xFFFF
    v = (v | (v << 8)) & 0x00FF00FF
    v = (v | (v << 4)) & 0x0F0F0F0F
    v = (v | (v << 2)) & 0x33333333
    v = (v | (v << 1)) & 0x55555555
    return v


def _compact1by1(v: np.ndarray) -> np.ndarray:
    v = v.astype(np.int64) & 0x55555555
    v = (v | (v >> 1)) & 0x33333333
    v = (v | (v >> 2)) & 0x0F0F0F0F
    v = (v | (v >> 4)) & 0x00FF00FF
    v = (v | (v >> 8)) & 0x0000FFFF
    return v


def morton_encode(x, y):
    return _part1by1(np.asarray(x)) | (_part1by1(np.asarray(y)) << 1)


def morton_decode(code) -> Tuple[np.ndarray, np.ndarray]:
    code = np.asarray(code, dtype=np.int64)
    return _compact1by1(code), _compact1by1(code >> 1)


class QuadTree:
    """The full tree over a grid of side ``2**ell``.

    Per-node arrays (indexed by node id): ``depth``, ``r`` (= ell - depth),
    ``x0``/``y0`` (lower-left corner of the block, integer grid units) and
    ``cx2``/``cy2`` (the center in half units, i.e. ``2 * center``, so every
    center is an exact integer).
    """

    def __init__(self, ell: int):
        if ell < 0 or ell > 15:
            raise ValueError(f"unsupported side exponent {ell}")
        self.ell = ell
        self.side = 1 << ell
        self.n_nodes = level_start(ell + 1)
        depth = np.empty(self.n_nodes, dtype=np.int64)
        x0 = np.empty(self.n_nodes, dtype=np.int64)
        y0 = np.empty(self.n_nodes, dtype=np.int64)
        for k in range(ell + 1):
            lo, hi = level_start(k), level_start(k + 1)
            depth[lo:hi] = k
            bx, by = morton_decode(np.arange(hi - lo))
            size = 1 << (ell - k)
            x0[lo:hi] = bx * size
            y0[lo:hi] = by * size
        self.depth = depth
        self.r = ell - depth
        self.size = np.left_shift(1, self.r)
        self.x0 = x0
        self.y0 = y0
        self.cx2 = 2 * x0 + self.size
        self.cy2 = 2 * y0 + self.size
        for arr in (self.depth, self.r, self.size, self.x0, self.y0, self.cx2, self.cy2):
            arr.setflags(write=False)

    def __repr__(self):
        return f"QuadTree(ell={self.ell}, n_nodes={self.n_nodes})"

    # -- navigation -----------------------------------------------------
    def check(self, n: int) -> int:
        n = int(n)
        if not 0 <= n < self.n_nodes:
            raise InvalidNode(f"node {n} not in [0, {self.n_nodes})")
        return n

    def is_leaf(self, n: int) -> bool:
        return self.depth[self.check(n)] == self.ell

    def children(self, n: int) -> Optional[range]:
        n = self.check(n)
        if self.depth[n] == self.ell:
            return None
        return range(4 * n + 1, 4 * n + 5)

    def parent(self, n: int) -> Optional[int]:
        n = self.check(n)
        return None if n == 0 else (n - 1) // 4

    def center(self, n: int) -> Tuple[float, float]:
        n = self.check(n)
        return float(self.cx2[n]) / 2.0, float(self.cy2[n]) / 2.0

    def level(self, k: int) -> range:
        return range(level_start(k), level_start(k + 1))

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        return np.arange(level_start(self.ell))

    @cached_property
    def leaf_nodes(self) -> np.ndarray:
        return np.arange(level_start(self.ell), self.n_nodes)

    def cell_node(self, x, y):
        """Depth-ell node id of unit cell(s) ``(x, y)``."""
        return level_start(self.ell) + morton_encode(x, y)

    @cached_property
    def cell_order(self) -> np.ndarray:
        """Row-major cell index (``y * side + x``) of each depth-ell node, in id order."""
        x, y = morton_decode(np.arange(4**self.ell))
        return y * self.side + x

    def cells_to_leaf_order(self, values: np.ndarray) -> np.ndarray:
        """Reorder a (side, side) cell array into depth-ell node-id order."""
        return np.asarray(values).reshape(-1)[self.cell_order]

    def ancestor(self, n: int, depth: int) -> int:
        """Ancestor of ``n`` at ``depth`` (``n`` itself if already that shallow)."""
        n = self.check(n)
        k = int(self.depth[n])
        while k > depth:
            n = (n - 1) // 4
            k -= 1
        return n

    def subtree_leaf_range(self, n: int) -> Tuple[int, int]:
        """Half-open id range of the depth-ell descendants of ``n``."""
        n = self.check(n)
        k = int(self.depth[n])
        offset = n - level_start(k)
        span = 4 ** (self.ell - k)
        lo = level_start(self.ell) + offset * span
        return lo, lo + span

    def aggregate(self, leaf_values: np.ndarray, how: str = "sum") -> np.ndarray:
        """Bottom-up sweep of depth-ell values (id order) to every node.

        ``how`` is "sum" or "mean"; the mean is taken as nested pairwise
        halving so that it never exceeds the children's maximum.
        """
        leaf_values = np.asarray(leaf_values, dtype=np.float64)
        out = np.empty(self.n_nodes, dtype=np.float64)
        out[level_start(self.ell):] = leaf_values
        cur = leaf_values
        for k in range(self.ell - 1, -1, -1):
            q = cur.reshape(-1, 4)
            if how == "sum":
                cur = q.sum(axis=1)
            elif how == "mean":
                cur = ((q[:, 0] + q[:, 1]) / 2.0 + (q[:, 2] + q[:, 3]) / 2.0) / 2.0
            else:
                raise ValueError(how)
            out[level_start(k) : level_start(k + 1)] = cur
        return out


def build_full_tree(gmap: GridMap) -> QuadTree:
    return QuadTree(gmap.side_exponent)


def subtree_leaves(tree: QuadTree, n: int) -> List[int]:
    """All depth-ell descendants of ``n`` (``[n]`` for a unit cell)."""
    lo, hi = tree.subtree_leaf_range(n)
    return list(range(lo, hi))


@dataclass(frozen=True, eq=False)
class TreeAbstraction:
    """A tree in the quadtree family, represented by its leaf set.

    ``leaves`` is a sorted array of node ids whose blocks partition the map.
    """

    tree: QuadTree
    leaves: np.ndarray
    beta: Optional[float] = None
    _leaf_set: frozenset = field(init=False, repr=False)

    def __post_init__(self):
        leaves = np.unique(np.asarray(self.leaves, dtype=np.int64))
        leaves.setflags(write=False)
        object.__setattr__(self, "leaves", leaves)
        object.__setattr__(self, "_leaf_set", frozenset(leaves.tolist()))
        self.validate()

    def validate(self) -> None:
        t = self.tree
        if len(self.leaves) == 0:
            raise InvalidAbstraction("empty leaf set")
        if self.leaves[0] < 0 or self.leaves[-1] >= t.n_nodes:
            raise InvalidAbstraction("leaf id out of range")
        # each leaf covers a contiguous run of unit cells; a partition means the
        # runs tile [0, 4**ell) with no overlap
        lo = level_start(t.ell)
        k = t.depth[self.leaves]
        span = np.power(4, t.ell - k)
        starts = lo + (self.leaves - (np.power(4, k) - 1) // 3) * span
        stops = starts + span
        order = np.argsort(starts)
        starts, stops = starts[order], stops[order]
        if starts[0] != lo or stops[-1] != t.n_nodes or np.any(starts[1:] != stops[:-1]):
            raise InvalidAbstraction("leaf blocks do not partition the map")

    def __contains__(self, n) -> bool:
        return int(n) in self._leaf_set

    def __len__(self) -> int:
        return len(self.leaves)

    @property
    def compression(self) -> float:
        return len(self.leaves) / 4**self.tree.ell

    @cached_property
    def cell_owner(self) -> np.ndarray:
        """For each depth-ell node (id order), the abstraction leaf containing it."""
        t = self.tree
        owner = np.empty(4**t.ell, dtype=np.int64)
        base = level_start(t.ell)
        for n in self.leaves.tolist():
            a, b = t.subtree_leaf_range(n)
            owner[a - base : b - base] = n
        return owner

    @classmethod
    def root_only(cls, tree: QuadTree, beta: Optional[float] = None) -> "TreeAbstraction":
        return cls(tree, np.array([0]), beta)

    @classmethod
    def full(cls, tree: QuadTree, beta: Optional[float] = None) -> "TreeAbstraction":
        return cls(tree, tree.leaf_nodes, beta)

    @classmethod
    def from_expanded(cls, tree: QuadTree, expand: np.ndarray, beta: Optional[float] = None):
        """Grow from the root, expanding every reached node where ``expand`` is True."""
        expand = np.asarray(expand, dtype=bool)
        leaves = []
        active = np.array([True])
        for k in range(tree.ell + 1):
            lo, hi = level_start(k), level_start(k + 1)
            ids = np.arange(lo, hi)
            grow = active & expand[lo:hi] if k < tree.ell else np.zeros_like(active)
            leaves.append(ids[active & ~grow])
            if k < tree.ell:
                active = np.repeat(grow, 4)
        return cls(tree, np.concatenate(leaves), beta)

    def expand(self, n: int) -> "TreeAbstraction":
        """The abstraction with leaf ``n`` replaced by its four children."""
        n = int(n)
        if n not in self:
            raise InvalidNode(f"node {n} is not a leaf of this abstraction")
        kids = self.tree.children(n)
        if kids is None:
            raise InvalidNode(f"node {n} is a unit cell and cannot be expanded")
        rest = self.leaves[self.leaves != n]
        return TreeAbstraction(self.tree, np.concatenate([rest, list(kids)]), self.beta)

    def expanded_nodes(self) -> np.ndarray:
        """Interior nodes of this tree, i.e. strict ancestors of some leaf."""
        seen = set()
        for n in self.leaves.tolist():
            while n:
                n = (n - 1) // 4
                if n in seen:
                    break
                seen.add(n)
        return np.array(sorted(seen), dtype=np.int64)

    # -- serialization --------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "ell": self.tree.ell,
            "beta": self.beta,
            "leaves": [int(n) for n in self.leaves],
        }

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d: dict, tree: Optional[QuadTree] = None) -> "TreeAbstraction":
        if tree is None:
            tree = QuadTree(int(d["ell"]))
        elif tree.ell != int(d["ell"]):
            raise InvalidAbstraction(f"tree ell {tree.ell} != serialized ell {d['ell']}")
        beta = d.get("beta")
        return cls(tree, np.array(d["leaves"], dtype=np.int64), None if beta is None else float(beta))

    @classmethod
    def load_json(cls, path, tree: Optional[QuadTree] = None) -> "TreeAbstraction":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), tree)


def point_to_cell(tree: QuadTree, point: Sequence[float]) -> Tuple[int, int]:
    """Unit cell containing ``point``; cells are half-open except at the top/right edge."""
    px, py = float(point[0]), float(point[1])
    side = tree.side
    if not (0.0 <= px <= side and 0.0 <= py <= side):
        raise OutOfBounds(f"point {tuple(point)} outside [0, {side}]^2")
    x = min(int(np.floor(px)), side - 1)
    y = min(int(np.floor(py)), side - 1)
    return x, y


def locate_leaf(abstraction: TreeAbstraction, point: Sequence[float]) -> int:
    """Leaf of ``abstraction`` whose block contains ``point``."""
    tree = abstraction.tree
    x, y = point_to_cell(tree, point)
    n = int(tree.cell_node(x, y))
    return int(abstraction.cell_owner[n - level_start(tree.ell)])


def locate_cell_leaf(abstraction: TreeAbstraction, x: int, y: int) -> int:
    """Leaf of ``abstraction`` containing unit cell ``(x, y)``."""
    tree = abstraction.tree
    if not (0 <= x < tree.side and 0 <= y < tree.side):
        raise OutOfBounds(f"cell {(x, y)} outside the map")
    n = int(tree.cell_node(x, y))
    return int(abstraction.cell_owner[n - level_start(tree.ell)])


def enumerate_abstractions(tree: QuadTree, node: int = 0) -> Iterable[List[int]]:
    """Yield every leaf set of the subtree at ``node`` (exponential; small trees only)."""
    yield [node]
    kids = tree.children(node)
    if kids is None:
        return
    options = [list(enumerate_abstractions(tree, c)) for c in kids]

    def rec(i):
        if i == 4:
            yield []
            return
        for head in options[i]:
            for tail in rec(i + 1):
                yield head + tail

    yield from rec(0)
