"""Nodal/modal transforms of the modal time stepping loop.

Arrays are batched over elements: ``q_nodal`` has shape
``(n_elems, n_var, n_nodes)`` and ``J`` has shape ``(n_elems,)``.  A single
element may be passed with the leading axis dropped.
"""
from __future__ import annotations

import numpy as np

from ..errors import DomainError
from .basis import BasisSet


def modal_project(q_nodal, basis: BasisSet, J) -> np.ndarray:
    """Solve ``(V^T W J V) q~ = V^T W J q`` for the modal coefficients.

    The physical mass matrix is ``J`` times the reference mass, so the
    solve uses the precomputed reference inverse and a division by ``J``.
    The Jacobian is applied every call rather than folded into a
    precomputed operator since it may change between steps.
    """
    q = np.asarray(q_nodal, dtype=float)
    single = q.ndim == 2
    if single:
        q = q[None]
    J = np.broadcast_to(np.asarray(J, dtype=float), (q.shape[0],))
    if np.any(J <= 0):
        raise DomainError("Jacobian must be positive")
    wjq = q * (basis.weights * J[:, None, None])
    rhs = np.einsum("nm,evn->evm", basis.V, wjq)
    out = np.einsum("mk,evk->evm", basis.mass_inverse, rhs) / J[:, None, None]
    return out[0] if single else out


def modal_reconstruct(q_modal, basis: BasisSet) -> np.ndarray:
    q = np.asarray(q_modal, dtype=float)
    return np.einsum("nm,...m->...n", basis.V, q)
