"""Procedural occupancy grids: graded obstacle blobs over a noisy free floor."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .grid_io import GridMap, side_exponent

LEVELS = 65535


def _fix_homogeneous_blocks(pix: np.ndarray) -> np.ndarray:
    """Nudge one pixel of every 2x2 block whose four pixels are identical."""
    pix = pix.copy()
    s = pix.shape[0]
    blocks = pix.reshape(s // 2, 2, s // 2, 2)
    same = (blocks == blocks[:, :1, :, :1]).all(axis=(1, 3))
    by, bx = np.nonzero(same)
    for j, i in zip(by.tolist(), bx.tolist()):
        v = pix[2 * j, 2 * i]
        # move away from the 0.5 threshold so feasibility is unchanged
        pix[2 * j, 2 * i] = v + 1 if v < LEVELS // 2 else v - 1
    return pix


def make_synthetic_map(side: int = 128, seed: int = 0, obstacle_fraction: float = 0.22,
                       quantize: bool = True) -> GridMap:
    """Random map of graded obstacle blobs.

    Free cells carry a small random occupancy (0 to 0.15) and obstacle blobs
    rise smoothly from about 0.55 at their rim to 1.0 at their core. Enclosed
    free pockets are filled so the free space is 4-connected, and the map is
    quantized to 16-bit levels (exactly representable as PGM) with no 2x2
    block left homogeneous.
    """
    ell = side_exponent(side)
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:side, 0:side] + 0.5
    field = np.zeros((side, side))
    target = obstacle_fraction * side * side
    covered = np.zeros((side, side), dtype=bool)
    while covered.sum() < target:
        cx, cy = rng.uniform(0, side, size=2)
        ax, ay = rng.uniform(0.02, 0.09, size=2) * side
        theta = rng.uniform(0, np.pi)
        c, s = np.cos(theta), np.sin(theta)
        u = ((xx - cx) * c + (yy - cy) * s) / ax
        v = (-(xx - cx) * s + (yy - cy) * c) / ay
        d = np.sqrt(u * u + v * v)
        inside = d < 1.0
        field = np.maximum(field, np.where(inside, 1.0 - 0.45 * d, 0.0))
        covered |= inside
    occ = rng.uniform(0.0, 0.15, size=(side, side))
    occ = np.where(covered, np.clip(field, 0.55, 1.0), occ)

    free = occ <= 0.5
    labels, count = ndimage.label(free)
    if count > 1:
        sizes = np.bincount(labels.ravel())
        sizes[0] = 0
        keep = labels == int(np.argmax(sizes))
        pocket = free & ~keep
        occ[pocket] = rng.uniform(0.55, 0.7, size=int(pocket.sum()))

    if not quantize:
        return GridMap(occ)
    pix = np.rint(occ * LEVELS).astype(np.int64)
    if ell >= 1:
        pix = _fix_homogeneous_blocks(pix)
    return GridMap(pix / float(LEVELS))


def random_map(side: int, rng: np.random.Generator, kind: str = "uniform") -> GridMap:
    """Small random maps for property checks.

    ``uniform``: i.i.d. U(0,1) cells. ``mixed``: a blend of exact 0/1 cells,
    repeated values and uniform noise, which exercises ties and homogeneous
    blocks.
    """
    if kind == "uniform":
        return GridMap(rng.random((side, side)))
    if kind == "mixed":
        base = rng.random((side, side))
        choice = rng.integers(0, 4, size=(side, side))
        occ = np.where(choice == 0, 0.0, np.where(choice == 1, 1.0,
                       np.where(choice == 2, 0.5, base)))
        return GridMap(occ)
    raise ValueError(kind)
