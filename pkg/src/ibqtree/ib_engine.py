"""Information-bottleneck tree selection.

All information quantities are in bits. For a deterministic tree encoder the
gain from splitting node ``n`` into its children ``c`` is

    delta_ix(n) = p(n) * H(p(c) / p(n))
    delta_iy(n) = p(n) * JSD_pi(p(y|c_1), ..., p(y|c_4))
                = sum_c p(c) * KL(p(y|c) || p(y|n)),

the split entropy and the mass-weighted Jensen-Shannon divergence of the
children's occupancy conditionals. The expansion value of a node combines
the two as ``delta_iy - delta_ix / beta``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .grid_io import CellPrior, GridMap, SizeMismatch, default_prior
from .quadtree import InvalidNode, QuadTree, TreeAbstraction, level_start


class NotInterior(InvalidNode):
    pass


class NonPositiveBeta(ValueError):
    pass


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not beta > 0.0:
        raise NonPositiveBeta(f"beta must be positive, got {beta!r}")
    return beta


def _xlog2x(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = p[pos] * np.log2(p[pos])
    return out


def binary_entropy(q) -> np.ndarray:
    """H(q) in bits with 0 log 0 = 0."""
    q = np.asarray(q, dtype=np.float64)
    return -(_xlog2x(q) + _xlog2x(1.0 - q))


def _binary_kl(q: np.ndarray, m: np.ndarray) -> np.ndarray:
    """KL(Bern(q) || Bern(m)) in bits; exactly 0 where q == m."""
    out = np.zeros(np.broadcast(q, m).shape)
    q, m = np.broadcast_arrays(q, m)
    diff = q != m
    for a, b in ((q, m), (1.0 - q, 1.0 - m)):
        use = diff & (a > 0)
        out[use] += a[use] * np.log2(a[use] / b[use])
    return out


@dataclass(frozen=True, eq=False)
class JointModel:
    """Per-node mass p(n) and occupancy conditional p(y=1|n) for every node of the full tree."""

    tree: QuadTree
    mass: np.ndarray
    occ: np.ndarray

    def node_mass(self, n: int) -> float:
        return float(self.mass[self.tree.check(n)])

    def node_occ(self, n: int) -> float:
        return float(self.occ[self.tree.check(n)])


def build_joint(gmap: GridMap, prior: Optional[CellPrior], tree: QuadTree) -> JointModel:
    """Aggregate p(x) and p(y=1|x) bottom-up over ``tree``.

    Where all positive-mass children of a node share one conditional exactly,
    the parent takes that value verbatim rather than the (rounded) weighted
    mean, so homogeneous regions carry exactly zero relevant information.
    """
    if prior is None:
        prior = default_prior(gmap)
    if gmap.side != tree.side or prior.probs.shape != gmap.occ.shape:
        raise SizeMismatch("map, prior and tree sizes disagree")
    px = tree.cells_to_leaf_order(prior.probs)
    py = tree.cells_to_leaf_order(gmap.occ)
    mass = np.empty(tree.n_nodes)
    occ = np.empty(tree.n_nodes)
    base = level_start(tree.ell)
    mass[base:] = px
    occ[base:] = py
    cur_m, cur_q = px, py
    for k in range(tree.ell - 1, -1, -1):
        m4 = cur_m.reshape(-1, 4)
        q4 = cur_q.reshape(-1, 4)
        m = m4.sum(axis=1)
        joint = (m4 * q4).sum(axis=1)
        q = np.divide(joint, m, out=np.zeros_like(m), where=m > 0)
        q = np.clip(q, 0.0, 1.0)
        live = m4 > 0
        hi = np.where(live, q4, -np.inf).max(axis=1)
        lo = np.where(live, q4, np.inf).min(axis=1)
        same = (m > 0) & (hi == lo)
        q[same] = hi[same]
        lo_id, hi_id = level_start(k), level_start(k + 1)
        mass[lo_id:hi_id] = m
        occ[lo_id:hi_id] = q
        cur_m, cur_q = m, q
    mass.setflags(write=False)
    occ.setflags(write=False)
    return JointModel(tree, mass, occ)


@dataclass(frozen=True, eq=False)
class InfoCache:
    """Cached per-node information gains (bits); entries for unit cells are 0."""

    tree: QuadTree
    delta_iy: np.ndarray
    delta_ix: np.ndarray

    def _interior(self, n: int) -> int:
        n = self.tree.check(n)
        if self.tree.depth[n] == self.tree.ell:
            raise NotInterior(f"node {n} is a unit cell")
        return n

    def iy(self, n: int) -> float:
        return float(self.delta_iy[self._interior(n)])

    def ix(self, n: int) -> float:
        return float(self.delta_ix[self._interior(n)])

    def write_csv(self, path) -> None:
        t = self.tree
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("node_id,depth,delta_iy_bits,delta_ix_bits\n")
            for n in range(level_start(t.ell)):
                fh.write(f"{n},{t.depth[n]},{self.delta_iy[n]!r},{self.delta_ix[n]!r}\n")


def compute_info(joint: JointModel) -> InfoCache:
    """Compute delta_iy and delta_ix for every interior node in one vectorized pass."""
    t = joint.tree
    n_int = level_start(t.ell)
    child = np.arange(1, t.n_nodes).reshape(-1, 4)  # children of node i in row i
    m_child = joint.mass[child]
    q_child = joint.occ[child]
    m_par = joint.mass[:n_int, None]
    q_par = joint.occ[:n_int, None]
    ratio = np.divide(m_par, m_child, out=np.ones_like(m_child), where=m_child > 0)
    dix = (m_child * np.log2(ratio)).sum(axis=1)
    diy = (m_child * _binary_kl(q_child, np.broadcast_to(q_par, q_child.shape))).sum(axis=1)
    delta_ix = np.zeros(t.n_nodes)
    delta_iy = np.zeros(t.n_nodes)
    delta_ix[:n_int] = np.maximum(dix, 0.0)
    delta_iy[:n_int] = np.maximum(diy, 0.0)
    delta_ix.setflags(write=False)
    delta_iy.setflags(write=False)
    return InfoCache(t, delta_iy, delta_ix)


def delta_ix(joint: JointModel, n: int) -> float:
    """Increase of I(Z;X) when node ``n`` is split into its children."""
    t = joint.tree
    n = t.check(n)
    kids = t.children(n)
    if kids is None:
        raise NotInterior(f"node {n} is a unit cell")
    pn = joint.mass[n]
    if pn <= 0:
        return 0.0
    pi = joint.mass[list(kids)] / pn
    return float(pn * -_xlog2x(pi).sum())


def delta_iy(joint: JointModel, n: int) -> float:
    """Increase of I(Z;Y) when node ``n`` is split into its children."""
    t = joint.tree
    n = t.check(n)
    kids = t.children(n)
    if kids is None:
        raise NotInterior(f"node {n} is a unit cell")
    pn = joint.mass[n]
    if pn <= 0:
        return 0.0
    pi = joint.mass[list(kids)] / pn
    qs = joint.occ[list(kids)]
    jsd = binary_entropy((pi * qs).sum()) - (pi * binary_entropy(qs)).sum()
    return float(max(pn * jsd, 0.0))


def delta_l_tilde(cache: InfoCache, n: int, beta: float) -> float:
    beta = _check_beta(beta)
    return cache.iy(n) - cache.ix(n) / beta


def _delta_l_all(cache: InfoCache, beta: float) -> np.ndarray:
    n_int = level_start(cache.tree.ell)
    return cache.delta_iy[:n_int] - cache.delta_ix[:n_int] / beta


def q_values(cache: InfoCache, beta: float) -> np.ndarray:
    """Q-tilde for every node, one bottom-up sweep (0 at unit cells)."""
    beta = _check_beta(beta)
    t = cache.tree
    dl = _delta_l_all(cache, beta)
    q = np.zeros(t.n_nodes)
    below = np.zeros(4**t.ell)
    for k in range(t.ell - 1, -1, -1):
        lo, hi = level_start(k), level_start(k + 1)
        below = np.maximum(dl[lo:hi] + below.reshape(-1, 4).sum(axis=1), 0.0)
        q[lo:hi] = below
    return q


def p_values(cache: InfoCache, beta: float) -> np.ndarray:
    """P-tilde: the Q-tilde recursion without the clamp at zero."""
    beta = _check_beta(beta)
    t = cache.tree
    dl = _delta_l_all(cache, beta)
    p = np.zeros(t.n_nodes)
    below = np.zeros(4**t.ell)
    for k in range(t.ell - 1, -1, -1):
        lo, hi = level_start(k), level_start(k + 1)
        below = dl[lo:hi] + below.reshape(-1, 4).sum(axis=1)
        p[lo:hi] = below
    return p


def q_tilde(cache: InfoCache, n: int, beta: float) -> float:
    return float(q_values(cache, beta)[cache.tree.check(n)])


def p_tilde(cache: InfoCache, n: int, beta: float) -> float:
    return float(p_values(cache, beta)[cache.tree.check(n)])


def qtree_search(tree: QuadTree, cache: InfoCache, beta: float,
                 q: Optional[np.ndarray] = None) -> TreeAbstraction:
    """Expand from the root every reached node whose Q-tilde is strictly positive."""
    beta = _check_beta(beta)
    if q is None:
        q = q_values(cache, beta)
    return TreeAbstraction.from_expanded(tree, q > 0.0, beta)


def greedy_search(tree: QuadTree, cache: InfoCache, beta: float) -> TreeAbstraction:
    """Baseline: expand reached nodes only while their own gain is positive."""
    beta = _check_beta(beta)
    gain = np.zeros(tree.n_nodes)
    gain[: level_start(tree.ell)] = _delta_l_all(cache, beta)
    return TreeAbstraction.from_expanded(tree, gain > 0.0, beta)


def _mi_from_table(pzy: np.ndarray) -> float:
    pz = pzy.sum(axis=1, keepdims=True)
    py = pzy.sum(axis=0, keepdims=True)
    denom = pz * py
    nz = pzy > 0
    return float((pzy[nz] * np.log2(pzy[nz] / denom[nz])).sum())


def encoder_information(gmap: GridMap, prior: Optional[CellPrior],
                        abstraction: TreeAbstraction):
    """(I(Z;Y), I(Z;X)) of an abstraction, computed from the cell-level joint.

    Builds p(z, y) and the non-zero part of p(z, x) directly from the cells
    assigned to each leaf, independently of the per-node gain formulas.
    """
    if prior is None:
        prior = default_prior(gmap)
    t = abstraction.tree
    px = t.cells_to_leaf_order(prior.probs)
    pyx = t.cells_to_leaf_order(gmap.occ)
    _, z = np.unique(abstraction.cell_owner, return_inverse=True)
    pzy = np.zeros((len(abstraction.leaves), 2))
    np.add.at(pzy[:, 1], z, px * pyx)
    np.add.at(pzy[:, 0], z, px * (1.0 - pyx))
    izy = _mi_from_table(pzy)
    # deterministic encoder: p(z, x) = p(x) on the cell's own leaf, 0 elsewhere
    pz = pzy.sum(axis=1)
    nz = px > 0
    izx = float((px[nz] * np.log2(px[nz] / (pz[z[nz]] * px[nz]))).sum())
    return izy, izx


def ib_objective(joint: Union[JointModel, GridMap], abstraction: TreeAbstraction,
                 beta: float, prior: Optional[CellPrior] = None) -> float:
    """I(Z;Y) - I(Z;X) / beta for the encoder induced by ``abstraction``.

    Accepts either a ``JointModel`` (evaluated from its aggregated leaf
    masses and conditionals) or a ``GridMap`` plus optional prior (evaluated
    from the raw cells).
    """
    beta = _check_beta(beta)
    if isinstance(joint, GridMap):
        izy, izx = encoder_information(joint, prior, abstraction)
        return izy - izx / beta
    leaves = abstraction.leaves
    m = joint.mass[leaves]
    q = joint.occ[leaves]
    pzy = np.stack([m * (1.0 - q), m * q], axis=1)
    izy = _mi_from_table(pzy)
    izx = float(-_xlog2x(m).sum())
    return izy - izx / beta
