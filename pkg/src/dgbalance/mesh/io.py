"""Little-endian binary mesh container.

Layout (all integers little-endian)::

    magic      8s   b"DGBMESH\\0"
    version    u32
    n_nodes, n_elems, n_sides                    3 x u64
    count per element type (HEX, TET, PRISM, PYRAMID)  4 x u64
    box lo, box hi                               6 x f64
    periodic flags, has_dims                     4 x u8
    dims                                         3 x i64
    nodes                                        n_nodes x 3 f64
    element type / sfc index / jacobian / barycenter   per element
    connectivity, one i64 array per element type, in mesh order
    side table                                   fixed-width records
    trailer    4s   b"END\\0" followed by u32 CRC-32 of everything before it

A JSON sidecar with the header fields can be written next to the binary
for human inspection; it is never read back.
"""
from __future__ import annotations

import json
import os
import struct
import zlib

import numpy as np

from ..errors import MeshFormatError
from .core import Box, Element, Mesh, Side
from .elements import ElementType

MAGIC = b"DGBMESH\x00"
TRAILER = b"END\x00"
VERSION = 1

_HEADER = struct.Struct("<8sI3Q4Q6d4B3q")
_SIDE_DTYPE = np.dtype([
    ("n_vert", "<u1"), ("node_ids", "<i8", 4), ("neighbors", "<i8", 2), ("master", "<i8"),
    ("faces", "<i1", 2), ("perm", "<i1", 4), ("shift", "<f8", 3),
])
_ELEM_DTYPE = np.dtype([("type", "<u1"), ("sfc", "<u8"), ("jacobian", "<f8"), ("barycenter", "<f8", 3)])


def write_mesh(mesh: Mesh, path, sidecar: bool = False) -> None:
    counts = [sum(1 for e in mesh.elements if e.element_type is t) for t in ElementType]
    dims = mesh.dims or (0, 0, 0)
    parts = [_HEADER.pack(
        MAGIC, VERSION, len(mesh.nodes), mesh.n_elems, len(mesh.sides), *counts,
        *mesh.box.lo, *mesh.box.hi, *(int(p) for p in mesh.box.periodic),
        int(mesh.dims is not None), *dims)]
    parts.append(np.ascontiguousarray(mesh.nodes, dtype="<f8").tobytes())

    et = np.zeros(mesh.n_elems, dtype=_ELEM_DTYPE)
    for n, e in enumerate(mesh.elements):
        et[n] = (int(e.element_type), e.sfc_index, e.jacobian, e.barycenter)
    parts.append(et.tobytes())
    for t in ElementType:
        conn = np.array([e.node_ids for e in mesh.elements if e.element_type is t],
                        dtype="<i8").reshape(-1, t.node_count)
        parts.append(conn.tobytes())

    st = np.zeros(len(mesh.sides), dtype=_SIDE_DTYPE)
    for n, s in enumerate(mesh.sides):
        rec = st[n]
        rec["n_vert"] = len(s.node_ids)
        rec["node_ids"] = list(s.node_ids) + [-1] * (4 - len(s.node_ids))
        rec["neighbors"] = list(s.neighbor_elems) + [-1] * (2 - len(s.neighbor_elems))
        rec["master"] = s.master_elem
        rec["faces"] = list(s.faces) + [-1] * (2 - len(s.faces))
        rec["perm"] = list(s.slave_perm) + [-1] * (4 - len(s.slave_perm))
        rec["shift"] = s.shift
    parts.append(st.tobytes())

    body = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(TRAILER)
        fh.write(struct.pack("<I", zlib.crc32(body)))
    if sidecar:
        with open(os.fspath(path) + ".json", "w") as fh:
            json.dump({"format": "dgbalance-mesh", "version": VERSION, **mesh.info()}, fh, indent=2)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if n < 0 or self.pos + n > len(self.buf):
            raise MeshFormatError(f"truncated file while reading {what}", offset=self.pos)
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def array(self, dtype, count: int, what: str) -> np.ndarray:
        dtype = np.dtype(dtype)
        return np.frombuffer(self.take(dtype.itemsize * count, what), dtype=dtype, count=count)


def read_mesh(path) -> Mesh:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < len(MAGIC) or buf[:len(MAGIC)] != MAGIC:
        raise MeshFormatError("bad magic, not a mesh file", offset=0)
    if len(buf) < 8 + _HEADER.size or buf[-8:-4] != TRAILER:
        raise MeshFormatError("missing trailer, file truncated", offset=max(len(buf) - 8, 0))
    body = buf[:-8]
    (crc,) = struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise MeshFormatError("checksum mismatch", offset=len(body))

    r = _Reader(body)
    h = _HEADER.unpack(r.take(_HEADER.size, "header"))
    _, version, n_nodes, n_elems, n_sides = h[:5]
    if version != VERSION:
        raise MeshFormatError(f"unsupported version {version}", offset=8)
    counts = h[5:9]
    lo, hi = tuple(h[9:12]), tuple(h[12:15])
    periodic = tuple(bool(v) for v in h[15:18])
    has_dims = bool(h[18])
    dims = tuple(int(v) for v in h[19:22]) if has_dims else None
    if sum(counts) != n_elems:
        raise MeshFormatError("element counts in header are inconsistent", offset=8)

    nodes = r.array("<f8", 3 * n_nodes, "nodes").reshape(n_nodes, 3).astype(np.float64)
    et = r.array(_ELEM_DTYPE, n_elems, "element table")
    conn = {}
    for t, c in zip(ElementType, counts):
        conn[t] = r.array("<i8", c * t.node_count, f"{t.name} connectivity").reshape(c, t.node_count)
    st = r.array(_SIDE_DTYPE, n_sides, "side table")
    if r.pos != len(body):
        raise MeshFormatError("trailing bytes after side table", offset=r.pos)

    cursor = {t: 0 for t in ElementType}
    elements = []
    for n in range(n_elems):
        try:
            t = ElementType(int(et["type"][n]))
        except ValueError:
            raise MeshFormatError(f"unknown element type {et['type'][n]}", offset=None) from None
        ids = conn[t][cursor[t]]
        cursor[t] += 1
        if np.any(ids < 0) or np.any(ids >= n_nodes):
            raise MeshFormatError(f"element {n} references missing nodes")
        elements.append(Element(t, tuple(int(i) for i in ids),
                                tuple(float(v) for v in et["barycenter"][n]),
                                float(et["jacobian"][n]), int(et["sfc"][n])))
    if any(cursor[t] != c for t, c in zip(ElementType, counts)):
        raise MeshFormatError("per-type counts disagree with element table")

    sides = []
    for rec in st:
        nv = int(rec["n_vert"])
        nb = tuple(int(v) for v in rec["neighbors"] if v >= 0)
        if nv not in (3, 4) or not nb or any(v >= n_elems for v in nb):
            raise MeshFormatError("invalid side record")
        sides.append(Side(
            node_ids=tuple(int(v) for v in rec["node_ids"][:nv]),
            neighbor_elems=nb,
            master_elem=int(rec["master"]),
            faces=tuple(int(v) for v in rec["faces"][:len(nb)]),
            slave_perm=tuple(int(v) for v in rec["perm"] if v >= 0),
            shift=tuple(float(v) for v in rec["shift"]),
        ))
    return Mesh(nodes=nodes, elements=tuple(elements), box=Box(lo, hi, periodic),
                sides=tuple(sides), dims=dims)
