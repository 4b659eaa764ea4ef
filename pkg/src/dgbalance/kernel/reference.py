"""Reference-element operators for the advection discretisation.

Hexahedra use the collocated Gauss form: the weak derivative operator
``Dhat[i, m] = w_m l_i'(x_m) / w_i`` applied dimension by dimension, and
face terms that touch one line of nodes each.  The modal types use the
exact mass ``M`` and weak stiffness ``S_d[i, j] = int d_d(phi_i) phi_j``
from a high-order collapsed rule, giving ``K_d = M^-1 S_d``; these act on
nodal values through ``V K_d V^-1``.

Face traces are evaluated at a face rule laid out along a caller-given
vertex ordering, which is how the two elements of a side agree on their
quadrature points.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import MeshConsistencyError
from ..mesh.elements import ElementType
from . import quadrature
from .basis import build_basis, lagrange_1d, lagrange_derivative_matrix, modal_gradients, modal_values, volume_rule


def n_face_points(N: int) -> int:
    # quad and triangle rules both use (N+1)^2 points
    return (N + 1) ** 2


@dataclass(frozen=True, eq=False)
class HexFace:
    axis: int
    trace_1d: np.ndarray    # l_i(+-1)
    lift_1d: np.ndarray     # l_i(+-1) / (4 w_i)
    index: np.ndarray       # face point -> flattened tangential grid index
    inverse: np.ndarray


@dataclass(frozen=True, eq=False)
class ModalFace:
    E: np.ndarray           # (n_fp, n_nodes) trace of nodal values
    L: np.ndarray           # (n_nodes, n_fp) lift V M^-1 E~^T diag(w)


class ReferenceOperators:
    def __init__(self, etype: ElementType, N: int):
        self.etype = ElementType(etype)
        self.N = N
        self.basis = build_basis(self.etype, N)
        if self.etype is ElementType.HEX:
            x = self.basis.extra["nodes_1d"]
            w = self.basis.extra["weights_1d"]
            D = lagrange_derivative_matrix(x)
            self.Dhat = (w[None, :] * D.T) / w[:, None]
            self.l_minus = lagrange_1d(x, np.array([-1.0]))[0]
            self.l_plus = lagrange_1d(x, np.array([1.0]))[0]
            self.w1d = w
            self.integral = self.basis.weights.copy()
        else:
            pts, w = volume_rule(self.etype, N + 3)
            vals = modal_values(self.etype, N, pts)
            grads = modal_gradients(self.etype, N, pts)
            M = vals.T @ (w[:, None] * vals)
            self.mass = 0.5 * (M + M.T)
            self.mass_inverse = np.linalg.inv(self.mass)
            S = np.einsum("dpi,p,pj->dij", grads, w, vals)
            self.K_modal = np.einsum("ik,dkj->dij", self.mass_inverse, S)
            V = self.basis.V
            self.V_inverse = np.linalg.inv(V)
            # the operator acts on nodal values: K = V K~ V^-1
            self.K = np.einsum("ik,dkl,lj->dij", V, self.K_modal, self.V_inverse)
            # integral of each nodal basis function over the reference element
            self.integral = (vals.T @ w) @ self.V_inverse
        self._faces: dict = {}

    def face(self, f: int, ordering: tuple[int, ...]):
        key = (f, tuple(ordering))
        if key not in self._faces:
            self._faces[key] = self._build_face(f, tuple(ordering))
        return self._faces[key]

    def face_reference_points(self, ordering):
        corners = self.etype.ref_vertices[list(ordering)]
        return quadrature.face_points(self.N + 1, corners)

    def _build_face(self, f, ordering):
        pts, w = self.face_reference_points(ordering)
        if self.etype is ElementType.HEX:
            axis, upper = divmod(f, 2)
            t1, t2 = [d for d in range(3) if d != axis]
            x = self.basis.extra["nodes_1d"]
            i1 = np.abs(pts[:, t1][:, None] - x[None, :]).argmin(axis=1)
            i2 = np.abs(pts[:, t2][:, None] - x[None, :]).argmin(axis=1)
            if (np.abs(x[i1] - pts[:, t1]).max() > 1e-10 or np.abs(x[i2] - pts[:, t2]).max() > 1e-10
                    or np.abs(np.abs(pts[:, axis]) - 1).max() > 1e-12):
                raise MeshConsistencyError("hex face rule does not coincide with the volume nodes")
            index = i1 * (self.N + 1) + i2
            inverse = np.empty_like(index)
            inverse[index] = np.arange(len(index))
            lvec = self.l_plus if upper else self.l_minus
            return HexFace(axis, lvec, lvec / (4 * self.w1d), index, inverse)
        E = modal_values(self.etype, self.N, pts)
        L = self.mass_inverse @ (E.T * w[None, :])
        return ModalFace(E @ self.V_inverse, self.basis.V @ L)


@lru_cache(maxsize=None)
def reference_operators(etype: ElementType, N: int) -> ReferenceOperators:
    return ReferenceOperators(etype, N)
