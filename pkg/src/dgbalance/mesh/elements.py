"""Reference topology of the four element types.

Every reference element lives in [-1, 1]^3.  Face vertex lists are cyclic
(quads go around the face, never in Z order), which the bilinear face
parametrisation relies on.
"""
from __future__ import annotations

import enum

import numpy as np


class ElementType(enum.IntEnum):
    HEX = 0
    TET = 1
    PRISM = 2
    PYRAMID = 3

    @property
    def node_count(self) -> int:
        return _NODE_COUNT[self]

    @property
    def is_modal(self) -> bool:
        # polytopal elements advance modal coefficients; hexes stay nodal
        return self is not ElementType.HEX

    @property
    def faces(self) -> tuple[tuple[int, ...], ...]:
        return _FACES[self]

    @property
    def n_faces(self) -> int:
        return len(_FACES[self])

    @property
    def ref_vertices(self) -> np.ndarray:
        return _REF_VERTICES[self]

    @property
    def ref_volume(self) -> float:
        return _REF_VOLUME[self]

    @property
    def affine_frame(self) -> tuple[int, int, int, int]:
        """Four affinely independent vertices used to recover the element map."""
        return _AFFINE_FRAME[self]


_NODE_COUNT = {ElementType.HEX: 8, ElementType.TET: 4, ElementType.PRISM: 6, ElementType.PYRAMID: 5}

_REF_VERTICES = {
    ElementType.HEX: np.array([
        [-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
        [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]], dtype=float),
    ElementType.TET: np.array([[-1, -1, -1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float),
    ElementType.PRISM: np.array([
        [-1, -1, -1], [1, -1, -1], [-1, 1, -1],
        [-1, -1, 1], [1, -1, 1], [-1, 1, 1]], dtype=float),
    ElementType.PYRAMID: np.array([
        [-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1], [0, 0, 1]], dtype=float),
}

_FACES = {
    # hex faces ordered xi-, xi+, eta-, eta+, zeta-, zeta+
    ElementType.HEX: ((0, 3, 7, 4), (1, 2, 6, 5), (0, 1, 5, 4), (3, 2, 6, 7), (0, 1, 2, 3), (4, 5, 6, 7)),
    ElementType.TET: ((0, 1, 2), (0, 1, 3), (1, 2, 3), (0, 2, 3)),
    ElementType.PRISM: ((0, 1, 2), (3, 4, 5), (0, 1, 4, 3), (1, 2, 5, 4), (2, 0, 3, 5)),
    ElementType.PYRAMID: ((0, 1, 2, 3), (0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)),
}

_REF_VOLUME = {ElementType.HEX: 8.0, ElementType.TET: 4.0 / 3.0,
               ElementType.PRISM: 4.0, ElementType.PYRAMID: 8.0 / 3.0}

_AFFINE_FRAME = {ElementType.HEX: (0, 1, 3, 4), ElementType.TET: (0, 1, 2, 3),
                 ElementType.PRISM: (0, 1, 2, 3), ElementType.PYRAMID: (0, 1, 3, 4)}


def affine_map(etype: ElementType, vertices: np.ndarray, tol: float = 1e-10):
    """Return ``(x0, A)`` with ``x = x0 + A @ xi`` mapping reference to physical.

    Raises ValueError when the element is not an affine image of its
    reference shape (e.g. a warped hex).
    """
    ref = etype.ref_vertices
    f = etype.affine_frame
    R = (ref[list(f[1:])] - ref[f[0]]).T
    X = (vertices[list(f[1:])] - vertices[f[0]]).T
    A = X @ np.linalg.inv(R)
    x0 = vertices[f[0]] - A @ ref[f[0]]
    mapped = ref @ A.T + x0
    scale = max(np.abs(vertices).max(), 1.0)
    if np.abs(mapped - vertices).max() > tol * scale:
        raise ValueError(f"{etype.name} element is not affine")
    return x0, A


def face_area(points: np.ndarray) -> float:
    """Area of a planar triangle or parallelogram given cyclic vertices."""
    if len(points) == 3:
        return 0.5 * float(np.linalg.norm(np.cross(points[1] - points[0], points[2] - points[0])))
    return float(np.linalg.norm(np.cross(points[1] - points[0], points[3] - points[0])))


def face_normal(points: np.ndarray, interior_point: np.ndarray) -> np.ndarray:
    n = np.cross(points[1] - points[0], points[2] - points[0])
    n /= np.linalg.norm(n)
    if np.dot(n, points.mean(axis=0) - interior_point) < 0:
        n = -n
    return n
