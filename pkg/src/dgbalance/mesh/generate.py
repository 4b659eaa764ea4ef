"""Box meshes and conforming hex splitting.

Splitting templates
-------------------
* ``tet``     hex -> 6 tetrahedra (Kuhn subdivision around the main diagonal)
* ``pyramid`` hex -> 6 pyramids sharing a new centre node
* ``prism``   hex -> 2 prisms extruded along one lattice axis

Kuhn tetrahedra cut every cell face along the diagonal joining its lowest
and highest corner, and the prism template cuts its two end faces along the
same diagonal, so triangulated faces always match.  Conformity then only
requires that each lattice face is triangulated on both sides or on
neither.  ``split_to_mixed`` enforces this by construction: tets fill a
block anchored at the lattice origin, the three slabs continuing that block
along x, y and z are forced to be prisms extruded in that direction, further
prisms come as complete x-lines outside the block's shadow, and pyramids
(whose faces stay quadrilateral) may go anywhere else.  Pyramid cells are
taken contiguously along the Hilbert curve.
"""
from __future__ import annotations

import itertools
import logging

import numpy as np

from .. import sfc
from ..errors import DomainError
from .connectivity import build_side_connectivity
from .core import Box, Element, Mesh
from .elements import ElementType, affine_map

log = logging.getLogger(__name__)

TEMPLATES = ("tet", "pyramid", "prism")
CHILDREN = {"tet": 6, "pyramid": 6, "prism": 2}

# 384 of 512 cells split as 64 tet / 128 pyramid / 192 prism cells; the tet
# block is 4^3 which forces exactly 192 prism cells around it.
PRESETS = {
    "paper-tgv-mixed": {"split_fraction": 0.75, "template_mix": {"tet": 1, "pyramid": 2, "prism": 3}},
}

# hex reference vertex -> lattice corner offset
_CORNER_BITS = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]


def _as_box(box) -> Box:
    if isinstance(box, Box):
        return box
    if box is None:
        return Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    lo, hi = box
    return Box(tuple(float(v) for v in lo), tuple(float(v) for v in hi))


def _make_element(etype, node_ids, nodes, sfc_index=0) -> Element:
    verts = nodes[list(node_ids)]
    _, A = affine_map(etype, verts)
    det = float(np.linalg.det(A))
    if det <= 0:
        raise DomainError(f"{etype.name} element with non-positive orientation")
    bary = tuple(float(v) for v in verts.mean(axis=0))
    return Element(etype, tuple(int(i) for i in node_ids), bary, det, sfc_index)


def _sfc_sorted(nodes, elements, box, dims, level=sfc.DEFAULT_LEVEL) -> Mesh:
    bary = np.array([e.barycenter for e in elements])
    keys = sfc.sfc_keys(bary, box.lo, box.hi, level)
    order = np.argsort(keys, kind="stable")
    elems = tuple(
        Element(elements[i].element_type, elements[i].node_ids, elements[i].barycenter,
                elements[i].jacobian, int(keys[i]))
        for i in order)
    return build_side_connectivity(Mesh(nodes=nodes, elements=elems, box=box, dims=dims))


def _lattice_nodes(nx, ny, nz, box: Box) -> np.ndarray:
    lo = np.asarray(box.lo)
    h = box.lengths / np.array([nx, ny, nz])
    k, j, i = np.meshgrid(np.arange(nz + 1), np.arange(ny + 1), np.arange(nx + 1), indexing="ij")
    pts = np.stack([i.ravel(), j.ravel(), k.ravel()], axis=1) * h + lo
    # exact upper bound, no accumulated rounding
    for ax, n in enumerate((nx, ny, nz)):
        pts[np.stack([i.ravel(), j.ravel(), k.ravel()], axis=1)[:, ax] == n, ax] = box.hi[ax]
    return pts


def _node_id(i, j, k, nx, ny):
    return i + (nx + 1) * (j + (ny + 1) * k)


def _cell_corners(i, j, k, nx, ny):
    return [_node_id(i + a, j + b, k + c, nx, ny) for a, b, c in _CORNER_BITS]


def generate_box_mesh(nx: int, ny: int, nz: int, box=None) -> Mesh:
    """Structured all-hex mesh, periodic in every direction, SFC sorted."""
    for n in (nx, ny, nz):
        if int(n) != n or n < 1:
            raise DomainError(f"box dimensions must be positive integers, got {(nx, ny, nz)}")
    box = _as_box(box)
    if np.any(box.lengths <= 0):
        raise DomainError("box must have positive extent in every direction")
    nodes = _lattice_nodes(nx, ny, nz, box)
    elements = [
        _make_element(ElementType.HEX, _cell_corners(i, j, k, nx, ny), nodes)
        for k in range(nz) for j in range(ny) for i in range(nx)
    ]
    return _sfc_sorted(nodes, elements, box, (nx, ny, nz))


def kuhn_tets(corners):
    tets = []
    for perm in itertools.permutations(range(3)):
        cur = [0, 0, 0]
        path = [_CORNER_BITS.index(tuple(cur))]
        for ax in perm:
            cur[ax] = 1
            path.append(_CORNER_BITS.index(tuple(cur)))
        tets.append([corners[p] for p in path])
    return tets


def prism_pair(corners, axis):
    p, q = [a for a in range(3) if a != axis]

    def corner(d, bp, bq):
        bits = [0, 0, 0]
        bits[axis], bits[p], bits[q] = d, bp, bq
        return corners[_CORNER_BITS.index(tuple(bits))]

    tris = [[(0, 0), (1, 0), (1, 1)], [(0, 0), (1, 1), (0, 1)]]
    return [[corner(0, *t) for t in tri] + [corner(1, *t) for t in tri] for tri in tris]


def pyramid_six(corners, center):
    return [[corners[v] for v in face] + [center] for face in ElementType.HEX.faces]


def _orient(etype, ids, nodes):
    verts = nodes[ids]
    _, A = affine_map(etype, verts)
    if np.linalg.det(A) > 0:
        return ids
    if etype is ElementType.TET:
        return [ids[0], ids[2], ids[1], ids[3]]
    if etype is ElementType.PRISM:
        return [ids[0], ids[2], ids[1], ids[3], ids[5], ids[4]]
    if etype is ElementType.PYRAMID:
        return [ids[0], ids[3], ids[2], ids[1], ids[4]]
    raise DomainError(f"cannot reorient {etype.name}")


def _largest_remainder(total, weights):
    w = np.asarray(weights, dtype=float)
    if total == 0 or w.sum() <= 0:
        return [0] * len(w)
    exact = total * w / w.sum()
    base = np.floor(exact).astype(int)
    rest = total - base.sum()
    for idx in np.argsort(-(exact - base), kind="stable")[:rest]:
        base[idx] += 1
    return [int(b) for b in base]


def plan_split_layout(dims, n_split, template_mix):
    """Assign a template (and prism axis) to lattice cells.

    Returns ``{(i, j, k): (template, axis)}``; unlisted cells stay hexes.
    The achieved per-template counts may differ from the request where the
    conformity constraints make an exact match impossible.
    """
    nx, ny, nz = dims
    mix = [float(template_mix.get(t, 0.0)) for t in TEMPLATES]
    if any(m < 0 for m in mix):
        raise DomainError("template weights must be non-negative")
    want_tet, want_pyr, want_pri = _largest_remainder(n_split, mix)
    layout = {}

    a = b = c = 0
    if want_tet > 0:
        best = None
        for a_, b_, c_ in itertools.product(range(1, nx + 1), range(1, ny + 1), range(1, nz + 1)):
            forced = (nx - a_) * b_ * c_ + a_ * (ny - b_) * c_ + a_ * b_ * (nz - c_)
            score = (abs(a_ * b_ * c_ - want_tet), max(0, forced - want_pri), abs(forced - want_pri),
                     max(a_, b_, c_) - min(a_, b_, c_), (a_, b_, c_))
            if best is None or score < best[0]:
                best = (score, (a_, b_, c_))
        a, b, c = best[1]
        for i, j, k in itertools.product(range(nx), range(ny), range(nz)):
            inside = (i < a, j < b, k < c)
            if all(inside):
                layout[(i, j, k)] = ("tet", None)
            elif inside == (False, True, True):
                layout[(i, j, k)] = ("prism", 0)
            elif inside == (True, False, True):
                layout[(i, j, k)] = ("prism", 1)
            elif inside == (True, True, False):
                layout[(i, j, k)] = ("prism", 2)

    n_prism = sum(1 for v in layout.values() if v[0] == "prism")
    if want_pri > n_prism:
        lines = [(j, k) for k in range(nz - 1, -1, -1) for j in range(ny - 1, -1, -1)
                 if want_tet == 0 or (j >= b and k >= c)]
        n_lines = min(len(lines), int(round((want_pri - n_prism) / nx)))
        for j, k in lines[:n_lines]:
            for i in range(nx):
                layout[(i, j, k)] = ("prism", 0)

    free = [cell for cell in itertools.product(range(nx), range(ny), range(nz)) if cell not in layout]
    if want_pyr and free:
        level = max(1, int(np.ceil(np.log2(max(dims)))))
        keys = sfc.encode_array(np.array(free), level)
        for idx in np.argsort(keys, kind="stable")[:want_pyr]:
            layout[free[idx]] = ("pyramid", None)
    return layout


def split_to_mixed(mesh: Mesh, split_fraction: float, template_mix=None) -> Mesh:
    """Replace a fraction of the hexes of a box mesh by conforming sub-elements."""
    if not 0.0 <= split_fraction <= 1.0:
        raise DomainError("split_fraction must lie in [0, 1]")
    if split_fraction == 0.0:
        return mesh
    if mesh.dims is None:
        raise DomainError("split_to_mixed needs a structured box mesh")
    if any(e.element_type is not ElementType.HEX for e in mesh.elements):
        raise DomainError("only hexahedral elements can be split")
    template_mix = dict(template_mix or {"tet": 1.0})
    unknown = set(template_mix) - set(TEMPLATES)
    if unknown:
        raise DomainError(f"unknown templates {sorted(unknown)}")

    nx, ny, nz = mesh.dims
    box = mesh.box
    n_split = int(round(split_fraction * nx * ny * nz))
    layout = plan_split_layout(mesh.dims, n_split, template_mix)

    h = box.lengths / np.array(mesh.dims)
    cells = [tuple(int(v) for v in np.floor((np.asarray(e.barycenter) - box.lo) / h))
             for e in mesh.elements]
    pyramid_cells = [n for n, cell in enumerate(cells) if layout.get(cell, (None,))[0] == "pyramid"]
    centres = np.array([mesh.nodes[list(mesh.elements[n].node_ids)].mean(axis=0) for n in pyramid_cells])
    all_nodes = np.concatenate([mesh.nodes, centres.reshape(-1, 3)])
    centre_id = {n: len(mesh.nodes) + m for m, n in enumerate(pyramid_cells)}

    elements = []
    for n, elem in enumerate(mesh.elements):
        corners = list(elem.node_ids)
        template, axis = layout.get(cells[n], (None, None))
        if template is None:
            elements.append(elem)
            continue
        if template == "tet":
            parts = [(ElementType.TET, ids) for ids in kuhn_tets(corners)]
        elif template == "prism":
            parts = [(ElementType.PRISM, ids) for ids in prism_pair(corners, axis)]
        else:
            parts = [(ElementType.PYRAMID, ids) for ids in pyramid_six(corners, centre_id[n])]
        for etype, ids in parts:
            elements.append(_make_element(etype, _orient(etype, ids, all_nodes), all_nodes))

    out = _sfc_sorted(all_nodes, elements, box, mesh.dims)
    log.info("split %d of %d hexes: %s", len(layout), mesh.n_elems, out.counts_by_type())
    return out


def preset_mesh(name: str, dims=(8, 8, 8), box=None) -> Mesh:
    base = generate_box_mesh(*dims, box=box)
    if name == "hex":
        return base
    if name not in PRESETS:
        raise DomainError(f"unknown mesh preset {name!r}")
    return split_to_mixed(base, **PRESETS[name])
