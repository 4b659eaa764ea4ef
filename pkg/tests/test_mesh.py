import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dgbalance.errors import DomainError, MeshConsistencyError, MeshFormatError
from dgbalance.mesh import (
    Box, ElementType, build_side_connectivity, generate_box_mesh, meshes_equal, preset_mesh, read_mesh,
    split_to_mixed, write_mesh,
)
from dgbalance.mesh.io import MAGIC
from dgbalance.sfc import decode_array

from conftest import MIX


def _check_invariants(mesh):
    keys = [e.sfc_index for e in mesh.elements]
    assert keys == sorted(keys)
    assert all(e.jacobian > 0 for e in mesh.elements)
    assert all(len(set(e.node_ids)) == len(e.node_ids) for e in mesh.elements)
    seen = set()
    for s in mesh.sides:
        assert s.master_elem in s.neighbor_elems
        assert s.master_elem == min(s.neighbor_elems)
        assert len(s.neighbor_elems) in (1, 2)
        for e, f in zip(s.neighbor_elems, s.faces):
            assert (e, f) not in seen
            seen.add((e, f))
    # every face of every element lies on exactly one side
    assert len(seen) == sum(e.element_type.n_faces for e in mesh.elements)


def test_element_type_table():
    assert [t.node_count for t in ElementType] == [8, 4, 6, 5]
    assert [t.is_modal for t in ElementType] == [False, True, True, True]


def test_box_512(hex8):
    assert hex8.n_elems == 512
    assert hex8.counts_by_type()["HEX"] == 512
    assert len(hex8.sides) == 1536
    _check_invariants(hex8)


def test_single_hex_three_periodic_sides():
    m = generate_box_mesh(1, 1, 1)
    assert m.n_elems == 1
    assert len(m.sides) == 3
    assert all(s.neighbor_elems == (0, 0) for s in m.sides)
    _check_invariants(m)


def test_two_cubed_box_in_level1_order():
    m = generate_box_mesh(2, 2, 2)
    cells = [tuple(int(v) for v in np.floor(np.asarray(e.barycenter) * 2)) for e in m.elements]
    assert cells == [tuple(c) for c in decode_array(np.arange(8), 1)]


def test_two_by_one_interior_master():
    m = generate_box_mesh(2, 1, 1)
    x_sides = [s for s in m.sides if s.neighbor_elems == (0, 1) and abs(s.shift[0]) == 0.0
               and len({tuple(m.nodes[n]) for n in s.node_ids}) == 4
               and np.allclose(m.nodes[list(s.node_ids)][:, 0], 0.5)]
    assert len(x_sides) == 1
    assert x_sides[0].master_elem == 0


@pytest.mark.parametrize("dims", [(0, 1, 1), (1, -2, 1), (1.5, 1, 1)])
def test_bad_dims(dims):
    with pytest.raises(DomainError):
        generate_box_mesh(*dims)


def test_split_fraction_zero_is_identity(hex8):
    assert split_to_mixed(hex8, 0.0, MIX) is hex8


def test_one_hex_into_two_prisms():
    m = split_to_mixed(generate_box_mesh(1, 1, 1), 1.0, {"prism": 1})
    assert m.counts_by_type()["PRISM"] == 2
    assert m.n_elems == 2
    assert m.total_volume() == pytest.approx(1.0, rel=1e-12)
    _check_invariants(m)


def test_one_hex_into_six_tets_topology():
    """Six internal tet-tet faces plus the six periodic pairs of the hex boundary."""
    m = split_to_mixed(generate_box_mesh(1, 1, 1), 1.0, {"tet": 1})
    assert m.counts_by_type()["TET"] == 6
    assert m.total_volume() == pytest.approx(1.0, rel=1e-12)
    internal = [s for s in m.sides if not any(s.shift)]
    periodic = [s for s in m.sides if any(s.shift)]
    assert len(internal) == 6 and len(periodic) == 6
    _check_invariants(m)


def test_one_hex_into_six_pyramids():
    m = split_to_mixed(generate_box_mesh(1, 1, 1), 1.0, {"pyramid": 1})
    assert m.counts_by_type()["PYRAMID"] == 6
    assert m.total_volume() == pytest.approx(1.0, rel=1e-12)
    assert len(m.sides) == 15
    _check_invariants(m)


def test_tgv_mixed_preset_counts(mixed8):
    counts = mixed8.counts_by_type()
    assert counts == {"HEX": 128, "TET": 384, "PRISM": 384, "PYRAMID": 768}
    assert mixed8.n_elems == 1664
    assert len(mixed8.sides) == 4032
    assert mixed8.total_volume() == pytest.approx(1.0, rel=1e-12)
    _check_invariants(mixed8)


def test_split_rejects_non_hex(mixed4):
    with pytest.raises(DomainError):
        split_to_mixed(mixed4, 0.5, MIX)


def test_split_rejects_unknown_template(hex8):
    with pytest.raises(DomainError):
        split_to_mixed(hex8, 0.5, {"octahedron": 1})


@settings(max_examples=15)
@given(st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4)),
       st.floats(0.05, 1.0), st.integers(0, 3), st.integers(0, 3), st.integers(0, 3))
def test_split_conserves_volume_and_conforms(dims, frac, wt, wp, wq):
    mix = {"tet": wt, "pyramid": wp, "prism": wq}
    if not any(mix.values()):
        mix = {"tet": 1}
    box = Box((0.0, -1.0, 2.0), (2.0, 0.5, 3.0))
    base = generate_box_mesh(*dims, box=box)
    m = split_to_mixed(base, frac, mix)
    assert m.total_volume() == pytest.approx(base.total_volume(), rel=1e-12)
    _check_invariants(m)


def test_unmatched_face_detected(hex8):
    # dropping one element leaves its neighbours' faces unmatched
    import dataclasses
    broken = dataclasses.replace(hex8, elements=hex8.elements[1:], sides=(), _cache={})
    with pytest.raises(MeshConsistencyError):
        build_side_connectivity(broken)


@pytest.mark.parametrize("which", ["hex", "mixed"])
def test_roundtrip_bit_exact(tmp_path, which, hex8, mixed8):
    m = hex8 if which == "hex" else mixed8
    path = tmp_path / "m.mesh"
    write_mesh(m, path, sidecar=True)
    assert meshes_equal(read_mesh(path), m)
    assert (tmp_path / "m.mesh.json").exists()


def test_truncated_file(tmp_path, mixed4):
    path = tmp_path / "m.mesh"
    write_mesh(mixed4, path)
    data = path.read_bytes()
    for cut in (4, 60, len(data) // 2, len(data) - 3):
        path.write_bytes(data[:cut])
        with pytest.raises(MeshFormatError) as info:
            read_mesh(path)
        assert info.value.offset is not None


def test_corrupt_payload_checksum(tmp_path, mixed4):
    path = tmp_path / "m.mesh"
    write_mesh(mixed4, path)
    data = bytearray(path.read_bytes())
    data[len(data) // 2] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(MeshFormatError):
        read_mesh(path)


def test_bad_magic(tmp_path):
    path = tmp_path / "m.mesh"
    path.write_bytes(b"NOTAMESH" + bytes(200))
    with pytest.raises(MeshFormatError) as info:
        read_mesh(path)
    assert info.value.offset == 0
    assert MAGIC != b"NOTAMESH"


def test_side_to_elem_is_master(mixed4):
    assert np.array_equal(mixed4.side_to_elem, [s.master_elem for s in mixed4.sides])
    assert np.array_equal(mixed4.modal_flags, mixed4.element_types != ElementType.HEX)
