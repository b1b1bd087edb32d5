"""Occupancy-grid ingestion.

A map is a square grid of side ``2**ell`` whose cells hold the probability
that the cell is occupied. Cell ``(x, y)`` covers ``[x, x+1) x [y, y+1)`` in
grid coordinates; ``y`` is the file row index (row 0 is the first line of a
CSV or PGM raster), ``x`` the column.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

PathLike = Union[str, os.PathLike]


class MapError(ValueError):
    """Base class for map/prior validation failures."""


class NonPowerOfTwoSide(MapError):
    pass


class NonSquare(MapError):
    pass


class ValueOutOfRange(MapError):
    pass


class MalformedFile(MapError):
    pass


class SizeMismatch(MapError):
    pass


def side_exponent(side: int) -> int:
    """Return ``ell`` with ``side == 2**ell`` or raise NonPowerOfTwoSide.

    A single-cell map (``ell == 0``) is accepted; its tree is a lone root.
    """
    if side < 1 or side & (side - 1):
        raise NonPowerOfTwoSide(f"side {side} is not a power of two")
    return side.bit_length() - 1


@dataclass(frozen=True, eq=False)
class GridMap:
    """Square occupancy grid; ``occ[y, x]`` is p(y=1|x) for unit cell (x, y)."""

    occ: np.ndarray

    def __post_init__(self):
        occ = np.array(self.occ, dtype=np.float64, copy=True)
        if occ.ndim != 2 or occ.shape[0] != occ.shape[1]:
            raise NonSquare(f"occupancy array has shape {occ.shape}")
        side_exponent(occ.shape[0])
        if not np.all(np.isfinite(occ)) or occ.min() < 0.0 or occ.max() > 1.0:
            raise ValueOutOfRange("occupancy values must lie in [0, 1]")
        occ.setflags(write=False)
        object.__setattr__(self, "occ", occ)

    @property
    def dim(self) -> int:
        return 2

    @property
    def side(self) -> int:
        return self.occ.shape[0]

    @property
    def side_exponent(self) -> int:
        return self.side.bit_length() - 1

    @property
    def n_cells(self) -> int:
        return self.side * self.side

    def flat(self) -> np.ndarray:
        """Row-major flattening: index ``y * side + x``."""
        return self.occ.reshape(-1)


@dataclass(frozen=True, eq=False)
class CellPrior:
    """Distribution p(x) over unit cells, same layout as ``GridMap.occ``."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64, copy=True)
        if probs.ndim != 2 or probs.shape[0] != probs.shape[1]:
            raise NonSquare(f"prior array has shape {probs.shape}")
        if not np.all(np.isfinite(probs)) or probs.min() < 0.0:
            raise ValueOutOfRange("prior entries must be non-negative")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ValueOutOfRange(f"prior sums to {probs.sum()!r}, expected 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)


def default_prior(gmap: GridMap) -> CellPrior:
    """Uniform p(x) = 1 / 4**ell over all cells."""
    return CellPrior(np.full(gmap.occ.shape, 1.0 / gmap.n_cells))


def _read_csv_square(path: PathLike) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise MalformedFile(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise MalformedFile(f"{path}: empty file")
    side = len(rows)
    if any(len(r) != side for r in rows):
        raise NonSquare(f"{path}: rows of unequal length or non-square grid")
    return np.array(rows, dtype=np.float64)


def _pgm_tokens(data: bytes, count: int):
    """Parse ``count`` whitespace-separated header tokens; return (tokens, offset)."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise MalformedFile("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def _read_pgm(path: PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise MalformedFile(f"{path}: not a P2/P5 PGM file")
    try:
        (_, w, h, maxval), pos = _pgm_tokens(data, 4)
        width, height, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise MalformedFile(f"{path}: bad PGM header") from None
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise MalformedFile(f"{path}: bad PGM dimensions or maxval")
    if width != height:
        raise NonSquare(f"{path}: PGM is {width}x{height}")
    count = width * height
    if magic == b"P2":
        body = data[pos:].split()
        if len(body) < count:
            raise MalformedFile(f"{path}: expected {count} pixels, found {len(body)}")
        try:
            pixels = np.array([int(t) for t in body[:count]], dtype=np.int64)
        except ValueError:
            raise MalformedFile(f"{path}: non-integer pixel") from None
    else:
        # exactly one whitespace byte separates the header from the raster
        pos += 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[pos : pos + count * dtype.itemsize]
        if len(raw) != count * dtype.itemsize:
            raise MalformedFile(f"{path}: truncated PGM raster")
        pixels = np.frombuffer(raw, dtype=dtype).astype(np.int64)
    if pixels.min() < 0 or pixels.max() > maxval:
        raise MalformedFile(f"{path}: pixel value exceeds maxval {maxval}")
    return pixels.reshape(height, width) / float(maxval)


def load_map(path: PathLike, fmt: Optional[str] = None) -> GridMap:
    """Load an occupancy grid from a PGM (P2/P5) or CSV file.

    PGM pixels are scaled as ``pixel / maxval``; CSV values are used verbatim.
    ``fmt`` is inferred from the extension when omitted.
    """
    if fmt is None:
        ext = os.path.splitext(str(path))[1].lower()
        fmt = "pgm" if ext in (".pgm", ".pnm") else "csv"
    fmt = fmt.lower()
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    if fmt == "pgm":
        occ = _read_pgm(path)
    elif fmt == "csv":
        occ = _read_csv_square(path)
    else:
        raise ValueError(f"unknown map format {fmt!r}")
    side_exponent(occ.shape[0])
    return GridMap(occ)


def load_prior(path: PathLike, gmap: GridMap) -> CellPrior:
    """Load a CSV sidecar of cell probabilities matching ``gmap``'s shape."""
    probs = _read_csv_square(path)
    if probs.shape != gmap.occ.shape:
        raise SizeMismatch(f"prior shape {probs.shape} != map shape {gmap.occ.shape}")
    return CellPrior(probs)


def write_csv(gmap: GridMap, path: PathLike) -> None:
    # repr() of a float round-trips exactly through float()
    buf = io.StringIO()
    for row in gmap.occ:
        buf.write(",".join(repr(float(v)) for v in row))
        buf.write("\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())


def write_pgm(gmap: GridMap, path: PathLike, maxval: int = 65535) -> None:
    """Write a binary (P5) PGM, quantizing occupancy to ``round(p * maxval)``."""
    pixels = np.rint(gmap.occ * maxval).astype(np.int64)
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{gmap.side} {gmap.side}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pixels.astype(dtype).tobytes())
