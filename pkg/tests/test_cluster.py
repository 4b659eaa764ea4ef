import socket
import struct
import threading
import time

import numpy as np
import pytest

from dgbalance import wire
from dgbalance.balance import equal_count_offsets
from dgbalance.cluster import Comm, HaloExchange, QueueTransport, spawn_cluster
from dgbalance.errors import ClusterError, CollectiveError, TopologyError
from dgbalance.kernel.operator import AdvectionSetup, LocalDiscretization, advance_timestep
from dgbalance.mesh import generate_box_mesh

from conftest import sine_wave

TRANSPORTS = ["queue", "socket"]


def test_single_rank_runs_inline():
    main = threading.get_ident()
    assert spawn_cluster(1, lambda c: (c.rank, c.size, threading.get_ident() == main)) == [(0, 1, True)]


@pytest.mark.parametrize("transport", TRANSPORTS)
def test_rank_ids(transport):
    assert spawn_cluster(4, lambda c: c.rank, transport=transport) == [0, 1, 2, 3]


def test_bad_arguments():
    with pytest.raises(ValueError):
        spawn_cluster(0, lambda c: None)
    with pytest.raises(ValueError):
        spawn_cluster(2, lambda c: None, transport="pigeon")


@pytest.mark.parametrize("transport", TRANSPORTS)
def test_fault_in_rank_two(transport):
    def program(comm):
        if comm.rank == 2:
            raise RuntimeError("injected")
        comm.barrier()
        return comm.rank
    t0 = time.monotonic()
    with pytest.raises(ClusterError) as info:
        spawn_cluster(4, program, transport=transport, timeout=20)
    assert info.value.rank == 2
    assert isinstance(info.value.cause, RuntimeError)
    assert time.monotonic() - t0 < 10     # peers are aborted, not timed out


def test_missing_participant_times_out():
    def program(comm):
        if comm.rank == 0:
            comm.barrier()
    with pytest.raises(ClusterError) as info:
        spawn_cluster(2, program, timeout=0.5)
    assert info.value.rank == 0
    assert isinstance(info.value.cause, CollectiveError)
    assert "timed out" in str(info.value.cause)


@pytest.mark.parametrize("transport", TRANSPORTS)
def test_reductions_and_gather(transport):
    def program(comm):
        return (comm.all_reduce_max(comm.rank), comm.all_reduce_sum(comm.rank),
                comm.all_gather(10 * comm.rank + 1))
    for res in spawn_cluster(4, program, transport=transport):
        assert res == (3, 6, [1, 11, 21, 31])


def test_gather_reproduces_partition_sizes():
    off = equal_count_offsets(10, 3)
    sizes = spawn_cluster(3, lambda c: c.all_gather(int(off[c.rank + 1] - off[c.rank])))
    assert sizes[0] == [4, 3, 3] == list(np.diff(off))


def _tree_sum(values):
    items = list(values)
    while len(items) > 1:
        items = [items[i] + items[i + 1] if i + 1 < len(items) else items[i] for i in range(0, len(items), 2)]
    return items[0]


@pytest.mark.parametrize("n", [3, 5, 7])
def test_reduction_tree_is_fixed(n):
    runs = {spawn_cluster(n, lambda c: c.all_reduce_sum(0.1))[0] for _ in range(5)}
    assert runs == {_tree_sum([0.1] * n)}
    # per-rank results agree bit for bit
    res = spawn_cluster(n, lambda c: c.all_reduce_sum(np.array([0.1, 1e-17 * c.rank, 1.0 / (c.rank + 3)])))
    assert len({r.tobytes() for r in res}) == 1


@pytest.mark.parametrize("transport", TRANSPORTS)
def test_all_to_all_empty_and_swap(transport):
    def empty(comm):
        z = np.zeros(comm.size, int)
        return comm.all_to_all_variable(np.zeros((0, 3)), z, z, z, z).shape
    assert spawn_cluster(3, empty, transport=transport) == [(0, 3)] * 3

    def swap(comm):
        other = 1 - comm.rank
        counts = np.array([0, 0])
        counts[other] = 1
        displs = np.zeros(2, int)
        return comm.all_to_all_variable(np.array([comm.rank + 0.5]), counts, displs, counts, displs)
    out = spawn_cluster(2, swap, transport=transport)
    assert out[0][0] == 1.5 and out[1][0] == 0.5


def serial_all_to_all(bufs, counts):
    # counts[s][r] values go from s to r; blocks land in source order
    out = []
    for r in range(len(bufs)):
        parts = []
        for s in range(len(bufs)):
            lo = int(counts[s][:r].sum())
            parts.append(bufs[s][lo:lo + counts[s][r]])
        out.append(np.concatenate(parts))
    return out


@pytest.mark.parametrize("transport", TRANSPORTS)
def test_random_all_to_all_matches_serial(transport, rng):
    n = 5
    for _ in range(4):
        counts = rng.integers(0, 6, (n, n))
        bufs = [rng.standard_normal((int(counts[s].sum()), 2)) for s in range(n)]

        def program(comm):
            r = comm.rank
            sc = counts[r]
            rc = counts[:, r]
            sd = np.concatenate([[0], np.cumsum(sc)[:-1]])
            rd = np.concatenate([[0], np.cumsum(rc)[:-1]])
            return comm.all_to_all_variable(bufs[r], sc, sd, rc, rd)
        got = spawn_cluster(n, program, transport=transport)
        for g, want in zip(got, serial_all_to_all(bufs, counts)):
            assert g.tobytes() == want.tobytes()


def test_all_to_all_count_mismatch_fails_everywhere():
    seen = {}

    def program(comm):
        counts = np.array([1, 1])
        recv = np.array([1, 2]) if comm.rank == 0 else counts
        displs = np.array([0, 1])
        try:
            comm.all_to_all_variable(np.arange(2.0), counts, displs, recv, displs)
        except CollectiveError as exc:
            seen[comm.rank] = exc
            raise
    with pytest.raises(ClusterError) as info:
        spawn_cluster(2, program, timeout=10)
    assert isinstance(info.value.cause, CollectiveError)
    assert sorted(seen) == [0, 1]


def test_halo_single_rank_is_noop():
    m = generate_box_mesh(2, 2, 2)
    d = LocalDiscretization(m, AdvectionSetup(N=1))
    assert d.send_plan == {} and d.recv_plan == {}


@pytest.mark.parametrize("transport", TRANSPORTS)
def test_halo_crosses_face_states(transport):
    m = generate_box_mesh(2, 1, 1)
    setup = AdvectionSetup(N=1, velocity=(1.0, 0.0, 0.0))
    off = [0, 1, 2]

    def program(comm):
        r = comm.rank
        d = LocalDiscretization(m, setup, (r, r + 1), off, r)
        d.interpolate(lambda x: np.full((1, len(x)), 10.0 + r))
        halo = HaloExchange(comm, d.send_plan.keys(), d.recv_plan.keys())
        d.compute_traces(d.state)
        halo.post(d.halo_payload())
        d.accept_halo(halo.wait())
        return d.trace.copy(), list(d.neighbor_ranks), d.side_ids.copy()
    out = spawn_cluster(2, program, transport=transport)
    for r, (trace, nbrs, ids) in enumerate(out):
        assert nbrs == [1 - r]
        # the two x-sides couple both elements: role 0 is element 0, role 1 element 1
        x_sides = [i for i, k in enumerate(ids) if sorted(m.sides[k].neighbor_elems) == [0, 1]]
        assert len(x_sides) == 2
        for i in x_sides:
            np.testing.assert_allclose(trace[i, 0], 10.0, rtol=1e-14)
            np.testing.assert_allclose(trace[i, 1], 11.0, rtol=1e-14)


def test_halo_topology_errors():
    comm = Comm(0, 2, QueueTransport(2), timeout=1)
    h = HaloExchange(comm, [1], [1])
    with pytest.raises(TopologyError):
        h.post({})
    with pytest.raises(TopologyError):
        h.wait()


@pytest.mark.parametrize("n_ranks", [2, 4])
def test_multirank_step_matches_serial(mixed4, n_ranks):
    setup = AdvectionSetup(N=2)
    init = sine_wave(setup.velocity)
    dt = 2e-3
    serial = LocalDiscretization(mixed4, setup)
    serial.interpolate(init)
    for s in range(1, 4):
        advance_timestep(serial, dt, step=s)
    off = equal_count_offsets(mixed4.n_elems, n_ranks)

    def program(comm):
        r = comm.rank
        d = LocalDiscretization(mixed4, setup, (off[r], off[r + 1]), off, r)
        d.interpolate(init)
        halo = HaloExchange(comm, d.send_plan.keys(), d.recv_plan.keys())
        for s in range(1, 4):
            advance_timestep(d, dt, halo=halo, step=s)
        return d.get_state()
    got = np.concatenate(spawn_cluster(n_ranks, program))
    assert got.tobytes() == serial.get_state().tobytes()


# ------------------------------------------------------------ wire format

def test_frame_layout():
    buf = wire.encode_frame(0x01020304, b"xy")
    tag, n = struct.unpack_from("<IQ", buf)
    assert tag == 0x01020304 and buf[:4] == b"\x04\x03\x02\x01"
    assert len(buf) == 12 + n
    assert wire.decode_frame(buf + b"junk") == (0x01020304, b"xy", 12 + n)


def test_frame_roundtrip_array():
    a = np.arange(12.0).reshape(3, 4)
    tag, obj, used = wire.decode_frame(wire.encode_frame(7, {"a": a}))
    assert tag == 7 and obj["a"].tobytes() == a.tobytes()


def test_truncated_frames():
    buf = wire.encode_frame(1, list(range(100)))
    with pytest.raises(CollectiveError):
        wire.decode_frame(buf[:5])
    with pytest.raises(CollectiveError):
        wire.decode_frame(buf[:-1])
    with pytest.raises(CollectiveError):
        wire.decode_frame(struct.pack("<IQ", 1, wire.MAX_PAYLOAD + 1))


def test_frames_over_socketpair():
    a, b = socket.socketpair()
    try:
        wire.write_frame(a, 3, "hello")
        wire.write_frame(a, 4, np.ones(1000))
        assert wire.read_frame(b) == (3, "hello")
        tag, arr = wire.read_frame(b)
        assert tag == 4 and arr.sum() == 1000
        a.sendall(wire.encode_frame(5, "cut")[:-2])
        a.close()
        with pytest.raises(CollectiveError):
            wire.read_frame(b)
    finally:
        a.close()
        b.close()


def test_clean_end_of_stream():
    a, b = socket.socketpair()
    a.close()
    try:
        assert wire.read_frame(b) is None
    finally:
        b.close()
