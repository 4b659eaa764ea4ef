"""Three-dimensional Hilbert curve indexing.

The variant implemented here is Skilling's transposed-bits construction
(J. Skilling, "Programming the Hilbert curve", AIP Conf. Proc. 707, 2004).
Coordinates are first converted to the "transposed" Hilbert representation
and the three transposed words are then bit-interleaved, x contributing the
most significant bit of each triple.  The origin cell maps to index 0 and
consecutive indices are always face neighbours.

All routines work on numpy integer arrays; the scalar wrappers
``hilbert_encode``/``hilbert_decode`` validate their inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

DEFAULT_LEVEL = 10
MAX_LEVEL = 21  # 3 * 21 = 63 bits fit in a uint64


@dataclass(frozen=True)
class GridCoord:
    i: int
    j: int
    k: int
    level: int

    def __post_init__(self):
        if not 1 <= self.level <= MAX_LEVEL:
            raise DomainError(f"level must be in [1, {MAX_LEVEL}], got {self.level}")
        side = 1 << self.level
        for name in ("i", "j", "k"):
            v = getattr(self, name)
            if not 0 <= v < side:
                raise DomainError(f"coordinate {name}={v} outside [0, {side}) at level {self.level}")


def _axes_to_transpose(x, y, z, bits):
    X = [np.array(x, dtype=np.uint64, copy=True),
         np.array(y, dtype=np.uint64, copy=True),
         np.array(z, dtype=np.uint64, copy=True)]
    M = np.uint64(1 << (bits - 1))
    Q = M
    while Q > 1:
        P = np.uint64(Q - np.uint64(1))
        for i in range(3):
            hit = (X[i] & Q) != 0
            t = (X[0] ^ X[i]) & P
            X[0] = np.where(hit, X[0] ^ P, X[0] ^ t)
            if i:
                X[i] = np.where(hit, X[i], X[i] ^ t)
        Q = np.uint64(Q >> np.uint64(1))
    X[1] ^= X[0]
    X[2] ^= X[1]
    t = np.zeros_like(X[0])
    Q = M
    while Q > 1:
        t = np.where((X[2] & Q) != 0, t ^ np.uint64(Q - np.uint64(1)), t)
        Q = np.uint64(Q >> np.uint64(1))
    return [Xi ^ t for Xi in X]


def _transpose_to_axes(X, bits):
    X = [np.array(Xi, dtype=np.uint64, copy=True) for Xi in X]
    N = np.uint64(2 << (bits - 1))
    t = X[2] >> np.uint64(1)
    X[2] ^= X[1]
    X[1] ^= X[0]
    X[0] ^= t
    Q = np.uint64(2)
    while Q != N:
        P = np.uint64(Q - np.uint64(1))
        for i in (2, 1, 0):
            hit = (X[i] & Q) != 0
            t = (X[0] ^ X[i]) & P
            new0 = np.where(hit, X[0] ^ P, X[0] ^ t)
            if i:
                X[i] = np.where(hit, X[i], X[i] ^ t)
            X[0] = new0
        Q = np.uint64(Q << np.uint64(1))
    return X


def _interleave(X, bits):
    h = np.zeros_like(X[0])
    one = np.uint64(1)
    for b in range(bits - 1, -1, -1):
        sb = np.uint64(b)
        for Xi in X:
            h = (h << one) | ((Xi >> sb) & one)
    return h


def _deinterleave(h, bits):
    X = [np.zeros_like(h) for _ in range(3)]
    one = np.uint64(1)
    pos = 3 * bits - 1
    for b in range(bits - 1, -1, -1):
        for i in range(3):
            X[i] |= ((h >> np.uint64(pos)) & one) << np.uint64(b)
            pos -= 1
    return X


def encode_array(coords, level: int) -> np.ndarray:
    """Hilbert indices for an ``(n, 3)`` array of lattice coordinates."""
    c = np.asarray(coords)
    if c.ndim != 2 or c.shape[1] != 3:
        raise DomainError("coords must have shape (n, 3)")
    if not 1 <= level <= MAX_LEVEL:
        raise DomainError(f"level must be in [1, {MAX_LEVEL}]")
    if c.size and (c.min() < 0 or c.max() >= (1 << level)):
        raise DomainError(f"coordinates outside [0, {1 << level}) at level {level}")
    X = _axes_to_transpose(c[:, 0], c[:, 1], c[:, 2], level)
    return _interleave(X, level)


def decode_array(indices, level: int) -> np.ndarray:
    h = np.asarray(indices, dtype=np.uint64)
    if not 1 <= level <= MAX_LEVEL:
        raise DomainError(f"level must be in [1, {MAX_LEVEL}]")
    if h.size and int(h.max()) >= 8 ** level:
        raise DomainError(f"index outside [0, {8 ** level}) at level {level}")
    X = _transpose_to_axes(_deinterleave(h, level), level)
    return np.stack(X, axis=-1).astype(np.int64)


def hilbert_encode(coord: GridCoord) -> int:
    return int(encode_array([[coord.i, coord.j, coord.k]], coord.level)[0])


def hilbert_decode(index: int, level: int) -> GridCoord:
    if index < 0 or index >= 8 ** level:
        raise DomainError(f"index {index} outside [0, {8 ** level}) at level {level}")
    i, j, k = decode_array([index], level)[0]
    return GridCoord(int(i), int(j), int(k), level)


def quantize(points, lo, hi, level: int = DEFAULT_LEVEL) -> np.ndarray:
    """Map points inside the box ``[lo, hi]`` to lattice cells at ``level``.

    Axes with zero extent quantize to 0.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(p < lo) or np.any(p > hi):
        raise DomainError("point outside bounding box")
    side = 1 << level
    extent = hi - lo
    scaled = np.zeros_like(p)
    nz = extent > 0
    scaled[:, nz] = (p[:, nz] - lo[nz]) / extent[nz] * side
    return np.minimum(np.floor(scaled), side - 1).astype(np.int64)


def sfc_keys(points, lo, hi, level: int = DEFAULT_LEVEL) -> np.ndarray:
    return encode_array(quantize(points, lo, hi, level), level)


def sfc_sort_permutation(barycenters, bounding_box, level: int = DEFAULT_LEVEL) -> np.ndarray:
    """Stable ordering of elements along the curve.

    ``bounding_box`` is a ``(lo, hi)`` pair.  Elements whose barycenters fall
    into the same lattice cell keep their original relative order.
    """
    lo, hi = bounding_box
    keys = sfc_keys(barycenters, lo, hi, level)
    return np.argsort(keys, kind="stable")
