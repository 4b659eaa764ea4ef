"""Reference bases and the matrices used by modal time stepping.

Hexahedra are nodal at tensor Legendre-Gauss points (``V = I``), or
optionally modal with normalised tensor Legendre polynomials.  Tetrahedra,
prisms and pyramids use orthogonal collapsed-coordinate polynomials:

* tet      P_i(a) P_j^(2i+1,0)(b) ((1-b)/2)^i P_k^(2i+2j+2,0)(c) ((1-c)/2)^(i+j)
* prism    P_i(a) P_j^(2i+1,0)(b) ((1-b)/2)^i P_k(z)
* pyramid  P_i(a) P_j(b) ((1-c)/2)^(i+j) P_k^(2i+2j+2,0)(c),  i+j+k <= N

All three span complete polynomial spaces (P_N for tet and pyramid, P_N on
the triangle times P_N in z for the prism).  Interpolation nodes are
approximate Fekete points picked from the interior volume-rule points by
column-pivoted QR, which keeps V well conditioned without tabulated sets.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
from scipy.special import eval_jacobi, eval_legendre

from ..errors import ConfigurationError
from ..mesh.elements import ElementType
from . import quadrature

MAX_DEGREE = 10


def _check_degree(N):
    if int(N) != N or N < 0:
        raise ConfigurationError(f"polynomial degree must be a non-negative integer, got {N!r}")
    if N > MAX_DEGREE:
        raise ConfigurationError(f"polynomial degree {N} exceeds supported maximum {MAX_DEGREE}")


def mode_indices(etype: ElementType, N: int) -> list[tuple[int, int, int]]:
    if etype is ElementType.HEX:
        return [(i, j, k) for i in range(N + 1) for j in range(N + 1) for k in range(N + 1)]
    if etype is ElementType.PRISM:
        return [(i, j, k) for i in range(N + 1) for j in range(N + 1 - i) for k in range(N + 1)]
    return [(i, j, k) for i in range(N + 1) for j in range(N + 1 - i) for k in range(N + 1 - i - j)]


def n_modes(etype: ElementType, N: int) -> int:
    if etype is ElementType.HEX:
        return (N + 1) ** 3
    if etype is ElementType.PRISM:
        return (N + 1) ** 2 * (N + 2) // 2
    return (N + 1) * (N + 2) * (N + 3) // 6


def volume_rule(etype: ElementType, n: int):
    return {
        ElementType.HEX: quadrature.hex_rule,
        ElementType.TET: quadrature.tet_rule,
        ElementType.PRISM: quadrature.prism_rule,
        ElementType.PYRAMID: quadrature.pyramid_rule,
    }[etype](n)


def _jac(n, alpha, x):
    if n < 0:
        return np.zeros_like(x)
    return eval_jacobi(n, alpha, 0.0, x)


def _djac(n, alpha, x):
    if n < 1:
        return np.zeros_like(x)
    return 0.5 * (n + alpha + 1) * eval_jacobi(n - 1, alpha + 1, 1.0, x)


def _dleg(n, x):
    return _djac(n, 0.0, x)


def _raw_modes(etype: ElementType, N: int, pts: np.ndarray, grad: bool):
    """Unnormalised mode values (n_pts, n_modes) and optionally gradients (3, n_pts, n_modes)."""
    x, y, z = (np.asarray(pts, dtype=float)[:, d] for d in range(3))
    idx = mode_indices(etype, N)
    vals = np.empty((len(x), len(idx)))
    grads = np.empty((3, len(x), len(idx))) if grad else None

    if etype is ElementType.HEX:
        for m, (i, j, k) in enumerate(idx):
            fx, fy, fz = eval_legendre(i, x), eval_legendre(j, y), eval_legendre(k, z)
            vals[:, m] = fx * fy * fz
            if grad:
                grads[:, :, m] = [_dleg(i, x) * fy * fz, fx * _dleg(j, y) * fz, fx * fy * _dleg(k, z)]
        return vals, grads

    if etype is ElementType.TET:
        yz = -y - z
        a = 2 * (1 + x) / yz - 1
        b = 2 * (1 + y) / (1 - z) - 1
        c = z
        for m, (i, j, k) in enumerate(idx):
            f, df = eval_legendre(i, a), _dleg(i, a)
            sb = (1 - b) / 2
            g = _jac(j, 2 * i + 1, b) * sb ** i
            dg = _djac(j, 2 * i + 1, b) * sb ** i - (0.5 * i * sb ** (i - 1) * _jac(j, 2 * i + 1, b) if i else 0)
            sc = (1 - c) / 2
            h = _jac(k, 2 * i + 2 * j + 2, c) * sc ** (i + j)
            dh = _djac(k, 2 * i + 2 * j + 2, c) * sc ** (i + j) - (
                0.5 * (i + j) * sc ** (i + j - 1) * _jac(k, 2 * i + 2 * j + 2, c) if i + j else 0)
            vals[:, m] = f * g * h
            if grad:
                da = (2 / yz, (1 + a) / yz, (1 + a) / yz)
                db = (0.0, 2 / (1 - z), (1 + b) / (1 - z))
                for d in range(3):
                    grads[d, :, m] = df * da[d] * g * h + f * dg * db[d] * h + (f * g * dh if d == 2 else 0)
        return vals, grads

    if etype is ElementType.PRISM:
        a = 2 * (1 + x) / (1 - y) - 1
        b = y
        for m, (i, j, k) in enumerate(idx):
            f, df = eval_legendre(i, a), _dleg(i, a)
            sb = (1 - b) / 2
            g = _jac(j, 2 * i + 1, b) * sb ** i
            dg = _djac(j, 2 * i + 1, b) * sb ** i - (0.5 * i * sb ** (i - 1) * _jac(j, 2 * i + 1, b) if i else 0)
            h, dh = eval_legendre(k, z), _dleg(k, z)
            vals[:, m] = f * g * h
            if grad:
                grads[0, :, m] = df * 2 / (1 - y) * g * h
                grads[1, :, m] = (df * (1 + a) / (1 - y) * g + f * dg) * h
                grads[2, :, m] = f * g * dh
        return vals, grads

    # pyramid
    s = (1 - z) / 2
    a = x / s
    b = y / s
    for m, (i, j, k) in enumerate(idx):
        fa, dfa = eval_legendre(i, a), _dleg(i, a)
        fb, dfb = eval_legendre(j, b), _dleg(j, b)
        p = i + j
        sp = s ** p
        h, dh = _jac(k, 2 * p + 2, z), _djac(k, 2 * p + 2, z)
        vals[:, m] = fa * fb * sp * h
        if grad:
            grads[0, :, m] = dfa / s * fb * sp * h
            grads[1, :, m] = fa * dfb / s * sp * h
            grads[2, :, m] = (dfa * a / (2 * s) * fb * sp * h + fa * dfb * b / (2 * s) * sp * h
                              - (0.5 * p * s ** (p - 1) * fa * fb * h if p else 0) + fa * fb * sp * dh)
    return vals, grads


@lru_cache(maxsize=None)
def _norms(etype: ElementType, N: int) -> np.ndarray:
    pts, w = volume_rule(etype, N + 3)
    vals, _ = _raw_modes(etype, N, pts, grad=False)
    return np.sqrt(np.einsum("pm,p,pm->m", vals, w, vals))


def modal_values(etype: ElementType, N: int, pts: np.ndarray) -> np.ndarray:
    """Orthonormal modes evaluated at interior points, shape (n_pts, n_modes)."""
    vals, _ = _raw_modes(etype, N, pts, grad=False)
    return vals / _norms(etype, N)


def modal_gradients(etype: ElementType, N: int, pts: np.ndarray) -> np.ndarray:
    """Reference-space gradients, shape (3, n_pts, n_modes).  Interior points only."""
    _, grads = _raw_modes(etype, N, pts, grad=True)
    return grads / _norms(etype, N)


def lagrange_1d(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Lagrange polynomials through ``nodes`` at ``x``, shape (len(x), len(nodes))."""
    x = np.asarray(x, dtype=float)
    out = np.ones((len(x), len(nodes)))
    for j, xj in enumerate(nodes):
        for m, xm in enumerate(nodes):
            if m != j:
                out[:, j] *= (x - xm) / (xj - xm)
    return out


def lagrange_derivative_matrix(nodes: np.ndarray) -> np.ndarray:
    """``D[i, j] = l_j'(x_i)`` for the Lagrange basis through ``nodes``."""
    n = len(nodes)
    bary = np.array([1.0 / np.prod([nodes[j] - nodes[m] for m in range(n) if m != j]) for j in range(n)])
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                D[i, j] = bary[j] / bary[i] / (nodes[i] - nodes[j])
        D[i, i] = -D[i].sum()
    return D


@dataclass(frozen=True, eq=False)
class BasisSet:
    element_type: ElementType
    N: int
    nodes: np.ndarray
    V: np.ndarray
    weights: np.ndarray
    reference_mass: np.ndarray
    mass_inverse: np.ndarray
    nodal: bool
    extra: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.V.shape[0]

    @property
    def n_modes(self) -> int:
        return self.V.shape[1]

    @property
    def W(self) -> np.ndarray:
        return np.diag(self.weights)

    def evaluate(self, pts: np.ndarray) -> np.ndarray:
        """Basis functions (nodal or modal, matching ``V``'s columns) at points."""
        if self.nodal:
            x = self.extra["nodes_1d"]
            lx, ly, lz = (lagrange_1d(x, pts[:, d]) for d in range(3))
            return np.einsum("pi,pj,pk->pijk", lx, ly, lz).reshape(len(pts), -1)
        return modal_values(self.element_type, self.N, pts)


def _fekete_nodes(etype, N):
    cand, _ = volume_rule(etype, N + 3)
    psi = modal_values(etype, N, cand)
    _, _, piv = sla.qr(psi.T, pivoting=True, mode="economic")
    chosen = np.sort(piv[:psi.shape[1]])
    return cand[chosen]


@lru_cache(maxsize=None)
def build_basis(element_type: ElementType, N: int, modal_hex: bool = False) -> BasisSet:
    """Nodes, Vandermonde, diagonal weights and reference mass for one element type.

    For the modal types the weights are the (positive) diagonal of the
    exact nodal mass matrix scaled to the reference volume; with a square
    Vandermonde any positive weights give an exact projection.
    """
    _check_degree(N)
    etype = ElementType(element_type)
    if etype is ElementType.HEX:
        x, w = quadrature.gauss_legendre(N + 1)
        nodes, weights = quadrature.hex_rule(N + 1)
        if modal_hex:
            V = modal_values(etype, N, nodes)
        else:
            V = np.eye(len(weights))
        nodal = not modal_hex
        extra = {"nodes_1d": np.array(x), "weights_1d": np.array(w)}
    else:
        nodes = _fekete_nodes(etype, N)
        V = modal_values(etype, N, nodes)
        Vinv = np.linalg.inv(V)
        nodal_mass_diag = np.einsum("mi,mi->i", Vinv, Vinv)
        weights = nodal_mass_diag * (etype.ref_volume / nodal_mass_diag.sum())
        nodal = False
        extra = {}
    M = V.T @ (weights[:, None] * V)
    M = 0.5 * (M + M.T)
    Minv = np.linalg.inv(M)
    Minv = 0.5 * (Minv + Minv.T)
    for arr in (nodes, V, weights, M, Minv):
        arr.flags.writeable = False
    return BasisSet(etype, int(N), nodes, V, weights, M, Minv, nodal, extra)
