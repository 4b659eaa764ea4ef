from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .elements import ElementType


@dataclass(frozen=True)
class Box:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    periodic: tuple[bool, bool, bool] = (True, True, True)

    @property
    def lengths(self) -> np.ndarray:
        return np.asarray(self.hi, dtype=float) - np.asarray(self.lo, dtype=float)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.lengths))


@dataclass(frozen=True)
class Element:
    element_type: ElementType
    node_ids: tuple[int, ...]
    barycenter: tuple[float, float, float]
    jacobian: float
    sfc_index: int


@dataclass(frozen=True)
class Side:
    """A face shared by one or two elements.

    ``faces[i]`` is the local face index inside ``neighbor_elems[i]``; the
    master comes first.  ``slave_perm[i]`` is the slave-face vertex position
    coinciding with master-face vertex ``i`` after translating by ``shift``
    (non-zero only for periodic pairs).
    """

    node_ids: tuple[int, ...]
    neighbor_elems: tuple[int, ...]
    master_elem: int
    faces: tuple[int, ...]
    slave_perm: tuple[int, ...] = ()
    shift: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def is_boundary(self) -> bool:
        return len(self.neighbor_elems) == 1

    @property
    def slave_elem(self) -> int | None:
        return None if self.is_boundary else self.neighbor_elems[1]


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray
    elements: tuple[Element, ...]
    box: Box
    sides: tuple[Side, ...] = ()
    # hex lattice the mesh was generated from, if any
    dims: tuple[int, int, int] | None = None
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_elems(self) -> int:
        return len(self.elements)

    @property
    def element_types(self) -> np.ndarray:
        if "types" not in self._cache:
            self._cache["types"] = np.array([e.element_type for e in self.elements], dtype=np.int64)
        return self._cache["types"]

    @property
    def modal_flags(self) -> np.ndarray:
        return self.element_types != ElementType.HEX

    @property
    def side_to_elem(self) -> np.ndarray:
        return np.array([s.master_elem for s in self.sides], dtype=np.int64)

    def counts_by_type(self) -> dict[str, int]:
        c = Counter(e.element_type for e in self.elements)
        return {t.name: c.get(t, 0) for t in ElementType}

    def element_vertices(self, e: int) -> np.ndarray:
        return self.nodes[list(self.elements[e].node_ids)]

    def total_volume(self) -> float:
        return float(sum(e.jacobian * e.element_type.ref_volume for e in self.elements))

    def info(self) -> dict:
        return {
            "n_nodes": int(len(self.nodes)),
            "n_elems": self.n_elems,
            "n_sides": len(self.sides),
            "counts": self.counts_by_type(),
            "box": {"lo": list(self.box.lo), "hi": list(self.box.hi)},
            "dims": list(self.dims) if self.dims else None,
            "volume": self.total_volume(),
        }


def meshes_equal(a: Mesh, b: Mesh) -> bool:
    """Bitwise comparison of every stored field."""
    if a.nodes.shape != b.nodes.shape or a.nodes.tobytes() != b.nodes.tobytes():
        return False
    if a.box != b.box or a.dims != b.dims:
        return False
    if len(a.elements) != len(b.elements) or len(a.sides) != len(b.sides):
        return False
    for x, y in zip(a.elements, b.elements):
        if (x.element_type != y.element_type or x.node_ids != y.node_ids
                or x.sfc_index != y.sfc_index
                or np.float64(x.jacobian).tobytes() != np.float64(y.jacobian).tobytes()
                or np.asarray(x.barycenter).tobytes() != np.asarray(y.barycenter).tobytes()):
            return False
    for x, y in zip(a.sides, b.sides):
        if (x.node_ids != y.node_ids or x.neighbor_elems != y.neighbor_elems
                or x.master_elem != y.master_elem or x.faces != y.faces
                or x.slave_perm != y.slave_perm
                or np.asarray(x.shift).tobytes() != np.asarray(y.shift).tobytes()):
            return False
    return True
