from __future__ import annotations

import dataclasses
from collections import defaultdict

import numpy as np

from ..errors import MeshConsistencyError
from .core import Mesh, Side

# coordinates are matched on a lattice of this fraction of the box diagonal
MATCH_TOLERANCE = 1e-9


def _wrap(points: np.ndarray, mesh: Mesh, q: float) -> np.ndarray:
    lo = np.asarray(mesh.box.lo, dtype=float)
    L = mesh.box.lengths
    rel = points - lo
    for ax in range(3):
        if mesh.box.periodic[ax] and L[ax] > 0:
            r = np.mod(rel[..., ax], L[ax])
            # points sitting on the upper boundary wrap onto the lower one
            r[np.abs(r - L[ax]) < q] = 0.0
            rel[..., ax] = r
    return rel


def _face_key(coords: np.ndarray, mesh: Mesh, q: float):
    """Wrapped centroid plus vertex offsets from it, both on the match lattice.

    Offsets are used instead of wrapped vertices so that a face spanning a
    whole periodic period (one cell wide) keeps distinct vertices.
    """
    c = coords.mean(axis=0)
    centre = tuple(int(v) for v in np.round(_wrap(c[None, :], mesh, q)[0] / q))
    offsets = [tuple(int(v) for v in row) for row in np.round((coords - c) / q).astype(np.int64)]
    return centre, offsets


def build_side_connectivity(mesh: Mesh) -> Mesh:
    """Pair every element face with its neighbour, periodic faces included.

    Faces are matched by wrapped centroid and vertex layout, so periodic
    partners and conforming interior faces are found the same way.  The
    master of a side is the neighbour with the lower SFC position (lower
    local face index if an element touches itself through periodicity).
    """
    q = MATCH_TOLERANCE * max(mesh.box.diagonal, 1e-300)
    groups: dict[frozenset, list] = defaultdict(list)
    for e, elem in enumerate(mesh.elements):
        verts = mesh.nodes[list(elem.node_ids)]
        for f, fv in enumerate(elem.element_type.faces):
            coords = verts[list(fv)]
            centre, keys = _face_key(coords, mesh, q)
            if len(set(keys)) != len(keys):
                raise MeshConsistencyError(f"degenerate face {f} of element {e}")
            groups[(centre, frozenset(keys))].append((e, f, keys, coords))

    sides = []
    for members in groups.values():
        members.sort(key=lambda m: (m[0], m[1]))
        if len(members) > 2:
            raise MeshConsistencyError(
                f"face shared by {len(members)} elements: {[(m[0], m[1]) for m in members]}")
        e0, f0, k0, c0 = members[0]
        node_ids = tuple(mesh.elements[e0].node_ids[i] for i in mesh.elements[e0].element_type.faces[f0])
        if len(members) == 1:
            if _on_periodic_boundary(c0, mesh, q) or not _on_any_boundary(c0, mesh, q):
                raise MeshConsistencyError(f"unmatched face {f0} of element {e0}")
            sides.append(Side(node_ids=node_ids, neighbor_elems=(e0,), master_elem=e0, faces=(f0,)))
            continue
        e1, f1, k1, c1 = members[1]
        if len(k1) != len(k0):
            raise MeshConsistencyError(f"face type mismatch between elements {e0} and {e1}")
        perm = tuple(k1.index(k) for k in k0)
        shift = c1.mean(axis=0) - c0.mean(axis=0)
        # snap the shift onto whole box periods
        L = mesh.box.lengths
        shift = np.where(L > 0, np.round(shift / np.where(L > 0, L, 1.0)) * L, 0.0)
        if np.abs(c1[list(perm)] - shift - c0).max() > 1e3 * q:
            raise MeshConsistencyError(f"faces of elements {e0} and {e1} do not coincide")
        sides.append(Side(node_ids=node_ids, neighbor_elems=(e0, e1), master_elem=e0,
                          faces=(f0, f1), slave_perm=perm,
                          shift=tuple(float(s) + 0.0 for s in shift)))

    sides.sort(key=lambda s: (s.master_elem, s.faces[0]))
    return dataclasses.replace(mesh, sides=tuple(sides), _cache={})


def _on_any_boundary(coords, mesh, q):
    lo = np.asarray(mesh.box.lo)
    hi = np.asarray(mesh.box.hi)
    return any(np.all(np.abs(coords[:, ax] - lo[ax]) < q) or np.all(np.abs(coords[:, ax] - hi[ax]) < q)
               for ax in range(3))


def _on_periodic_boundary(coords, mesh, q):
    lo = np.asarray(mesh.box.lo)
    hi = np.asarray(mesh.box.hi)
    return any(mesh.box.periodic[ax] and (np.all(np.abs(coords[:, ax] - lo[ax]) < q)
                                          or np.all(np.abs(coords[:, ax] - hi[ax]) < q))
               for ax in range(3))
