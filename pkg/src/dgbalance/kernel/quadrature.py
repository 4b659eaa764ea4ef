"""Gauss rules on the reference elements and their faces.

Volume rules for the simplex-like shapes are collapsed tensor rules built
from Gauss-Legendre points with the collapse Jacobian folded into the
weights.  Face rules are returned in [-1, 1]^2 (quads) or barycentric form
(triangles) so that callers can map them onto any vertex ordering.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = legendre.leggauss(n)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def _unit(n):
    x, w = gauss_legendre(n)
    return (x + 1) / 2, w / 2


def hex_rule(n: int):
    x, w = gauss_legendre(n)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    W = np.einsum("i,j,k->ijk", w, w, w)
    return np.stack([X, Y, Z], -1).reshape(-1, 3), W.ravel()


def tet_rule(n: int):
    a, wa = _unit(n)
    A, B, C = np.meshgrid(a, a, a, indexing="ij")
    W = np.einsum("i,j,k->ijk", wa, wa, wa)
    x = A * (1 - B) * (1 - C)
    y = B * (1 - C)
    pts = np.stack([x, y, C], -1).reshape(-1, 3) * 2 - 1
    return pts, (W * (1 - B) * (1 - C) ** 2).ravel() * 8


def prism_rule(n: int):
    a, wa = _unit(n)
    z, wz = gauss_legendre(n)
    A, B, Z = np.meshgrid(a, a, z, indexing="ij")
    W = np.einsum("i,j,k->ijk", wa, wa, wz)
    x = A * (1 - B)
    pts = np.stack([x * 2 - 1, B * 2 - 1, Z], -1).reshape(-1, 3)
    return pts, (W * (1 - B)).ravel() * 4


def pyramid_rule(n: int):
    a, wa = gauss_legendre(n)
    c, wc = _unit(n)
    A, B, C = np.meshgrid(a, a, c, indexing="ij")
    W = np.einsum("i,j,k->ijk", wa, wa, wc)
    pts = np.stack([A * (1 - C), B * (1 - C), 2 * C - 1], -1).reshape(-1, 3)
    return pts, (W * 2 * (1 - C) ** 2).ravel()


def quad_face_rule(n: int):
    """Tensor Gauss points on [-1, 1]^2, weights normalised to sum 1."""
    x, w = gauss_legendre(n)
    U, V = np.meshgrid(x, x, indexing="ij")
    return np.stack([U.ravel(), V.ravel()], -1), np.outer(w, w).ravel() / 4


def tri_face_rule(n: int):
    """Collapsed Gauss points as barycentric coordinates, weights sum to 1."""
    a, wa = _unit(n)
    A, B = np.meshgrid(a, a, indexing="ij")
    l1 = A * (1 - B)
    l2 = B
    bary = np.stack([1 - l1 - l2, l1, l2], -1).reshape(-1, 3)
    w = (np.outer(wa, wa) * (1 - B)).ravel() * 2
    return bary, w


def bilinear(uv: np.ndarray, corners: np.ndarray) -> np.ndarray:
    """Map [-1,1]^2 onto a quad given its four corners in cyclic order."""
    u, v = uv[:, 0], uv[:, 1]
    shape = np.stack([(1 - u) * (1 - v), (1 + u) * (1 - v), (1 + u) * (1 + v), (1 - u) * (1 + v)], -1) / 4
    return shape @ corners


def face_points(n: int, corners: np.ndarray):
    """Quadrature points and normalised weights on a triangle or quad face."""
    if len(corners) == 4:
        uv, w = quad_face_rule(n)
        return bilinear(uv, corners), w
    bary, w = tri_face_rule(n)
    return bary @ corners, w
