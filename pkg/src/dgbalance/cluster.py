"""Simulated multi-rank runtime.

Each rank is a worker thread with its own inbox.  Messages carry
``(source, tag)`` and are matched exactly; collectives draw a fresh tag
from a per-rank sequence counter, so every rank must issue collectives in
the same order (the usual SPMD contract).  A failing rank broadcasts an
abort message so peers blocked in a receive fail fast instead of waiting
for the timeout.

Two transports exist: in-process queues (default) and loopback TCP
sockets that push every message through the frame format in ``wire``.
"""
from __future__ import annotations

import enum
import logging
import os
import queue
import socket
import threading
import time
from collections import defaultdict, deque

import numpy as np

from . import wire
from .errors import ClusterError, CollectiveError, TopologyError

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 30.0
ABORT_TAG = 0xFFFFFFFE
_POLL = 0.25


class Kind(enum.IntEnum):
    P2P = 1
    GATHER = 2
    ALLTOALL = 3
    HALO = 4


class RankAborted(CollectiveError):
    """Raised in a rank whose peer failed first."""

    def __init__(self, origin, reason):
        super().__init__(f"aborted by rank {origin}: {reason}")
        self.origin = origin


def _detach(obj):
    # queue transport hands objects across threads; arrays must not alias
    if isinstance(obj, np.ndarray):
        return obj.copy()
    if isinstance(obj, (list, tuple)):
        return type(obj)(_detach(o) for o in obj)
    if isinstance(obj, dict):
        return {k: _detach(v) for k, v in obj.items()}
    return obj


class QueueTransport:
    name = "queue"

    def __init__(self, n_ranks: int):
        self.inboxes = [queue.Queue() for _ in range(n_ranks)]

    def send(self, src: int, dest: int, tag: int, obj) -> None:
        self.inboxes[dest].put((src, tag, _detach(obj)))

    def close(self) -> None:
        pass


class SocketTransport:
    """Full mesh of loopback TCP connections, one reader thread per link."""

    name = "socket"

    def __init__(self, n_ranks: int):
        self.inboxes = [queue.Queue() for _ in range(n_ranks)]
        self._out: dict[tuple[int, int], socket.socket] = {}
        self._locks: dict[tuple[int, int], threading.Lock] = {}
        self._readers = []
        self._accepted = []
        listeners = []
        try:
            for _ in range(n_ranks):
                ls = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
                ls.bind(("127.0.0.1", 0))
                ls.listen(max(n_ranks, 1))
                listeners.append(ls)
            for dest, ls in enumerate(listeners):
                for src in range(n_ranks):
                    if src == dest:
                        continue
                    c = socket.create_connection(ls.getsockname())
                    c.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                    a, _ = ls.accept()
                    self._out[(src, dest)] = c
                    self._locks[(src, dest)] = threading.Lock()
                    self._accepted.append(a)
                    t = threading.Thread(target=self._read, args=(a, src, dest), daemon=True)
                    t.start()
                    self._readers.append(t)
        finally:
            for ls in listeners:
                ls.close()

    def _read(self, sock, src, dest):
        try:
            while True:
                frame = wire.read_frame(sock)
                if frame is None:
                    return
                tag, obj = frame
                self.inboxes[dest].put((src, tag, obj))
        except (OSError, CollectiveError) as exc:
            log.debug("socket reader %d->%d stopped: %s", src, dest, exc)

    def send(self, src: int, dest: int, tag: int, obj) -> None:
        if src == dest:
            self.inboxes[dest].put((src, tag, _detach(obj)))
            return
        with self._locks[(src, dest)]:
            wire.write_frame(self._out[(src, dest)], tag, obj)

    def close(self) -> None:
        for c in self._out.values():
            try:
                c.shutdown(socket.SHUT_WR)
            except OSError:
                pass
            c.close()
        for t in self._readers:
            t.join(timeout=5)
        for a in self._accepted:
            a.close()


TRANSPORTS = {"queue": QueueTransport, "socket": SocketTransport}


class Comm:
    """Communicator handed to each rank's program."""

    def __init__(self, rank: int, size: int, transport=None, timeout: float = DEFAULT_TIMEOUT):
        self.rank = rank
        self.size = size
        self.timeout = timeout
        self._transport = transport if transport is not None else QueueTransport(size)
        self._inbox = self._transport.inboxes[rank]
        self._pending: dict[tuple[int, int], deque] = defaultdict(deque)
        self._seq = 0

    # ------------------------------------------------------------ point to point
    def next_tag(self, kind: Kind) -> int:
        self._seq += 1
        return ((self._seq << 4) | int(kind)) & 0xFFFFFFF0 | int(kind)

    def send(self, dest: int, obj, tag: int) -> None:
        if not 0 <= dest < self.size:
            raise CollectiveError(f"rank {self.rank}: destination {dest} out of range")
        self._transport.send(self.rank, dest, tag, obj)

    def recv(self, src: int, tag: int):
        key = (src, tag)
        deadline = time.monotonic() + self.timeout
        while True:
            box = self._pending.get(key)
            if box:
                return box.popleft()
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise CollectiveError(f"rank {self.rank}: timed out after {self.timeout:g} s "
                                      f"waiting for rank {src} (tag {tag:#x})")
            try:
                s, t, obj = self._inbox.get(timeout=min(remaining, _POLL))
            except queue.Empty:
                continue
            if t == ABORT_TAG:
                raise RankAborted(s, obj)
            self._pending[(s, t)].append(obj)

    def abort(self, reason) -> None:
        for r in range(self.size):
            if r != self.rank:
                try:
                    self._transport.send(self.rank, r, ABORT_TAG, repr(reason))
                except OSError:
                    pass

    # -------------------------------------------------------------- collectives
    def all_gather(self, value) -> list:
        tag = self.next_tag(Kind.GATHER)
        for r in range(self.size):
            if r != self.rank:
                self.send(r, value, tag)
        out = [None] * self.size
        out[self.rank] = _detach(value)
        for r in range(self.size):
            if r != self.rank:
                out[r] = self.recv(r, tag)
        return out

    def barrier(self) -> None:
        self.all_gather(None)

    def all_reduce(self, value, op: str = "sum"):
        """Reduction over a fixed rank-ordered pairwise tree, identical on every rank."""
        fn = {"sum": np.add, "max": np.maximum, "min": np.minimum}[op]
        items = [np.asarray(v) for v in self.all_gather(value)]
        while len(items) > 1:
            items = [fn(items[i], items[i + 1]) if i + 1 < len(items) else items[i]
                     for i in range(0, len(items), 2)]
        out = items[0]
        return out.item() if out.ndim == 0 else out

    def all_reduce_sum(self, value):
        return self.all_reduce(value, "sum")

    def all_reduce_max(self, value):
        return self.all_reduce(value, "max")

    def all_to_all_variable(self, sendbuf, send_counts, send_displs, recv_counts, recv_displs):
        """Variable-size all-to-all along axis 0; self blocks are copied locally.

        Received blocks are placed at ``recv_displs`` in source-rank order.  A
        block whose length disagrees with ``recv_counts`` fails the call on
        every rank.
        """
        sendbuf = np.asarray(sendbuf)
        send_counts = np.asarray(send_counts, dtype=np.int64)
        send_displs = np.asarray(send_displs, dtype=np.int64)
        recv_counts = np.asarray(recv_counts, dtype=np.int64)
        recv_displs = np.asarray(recv_displs, dtype=np.int64)
        for name, arr in (("send_counts", send_counts), ("send_displs", send_displs),
                          ("recv_counts", recv_counts), ("recv_displs", recv_displs)):
            if arr.shape != (self.size,):
                raise CollectiveError(f"rank {self.rank}: {name} must have one entry per rank")
        tag = self.next_tag(Kind.ALLTOALL)
        for r in range(self.size):
            if r != self.rank:
                lo = send_displs[r]
                self.send(r, sendbuf[lo:lo + send_counts[r]], tag)
        total = int(recv_counts.sum())
        recvbuf = np.empty((total,) + sendbuf.shape[1:], dtype=sendbuf.dtype)
        ok = True
        problems = []
        for r in range(self.size):
            if r == self.rank:
                lo = send_displs[r]
                block = sendbuf[lo:lo + send_counts[r]]
            else:
                block = self.recv(r, tag)
            if len(block) != recv_counts[r] or recv_displs[r] + len(block) > total:
                ok = False
                problems.append(f"from rank {r}: got {len(block)}, expected {recv_counts[r]}")
                continue
            recvbuf[recv_displs[r]:recv_displs[r] + len(block)] = block
        flags = self.all_gather(ok)
        if not all(flags):
            bad = [r for r, f in enumerate(flags) if not f]
            raise CollectiveError(f"rank {self.rank}: all-to-all count mismatch on ranks {bad}"
                                  + (f" ({'; '.join(problems)})" if problems else ""))
        return recvbuf


class HaloExchange:
    """Split-phase exchange of face data with neighbouring ranks."""

    def __init__(self, comm: Comm, send_ranks, recv_ranks):
        self.comm = comm
        self.send_ranks = sorted(send_ranks)
        self.recv_ranks = sorted(recv_ranks)
        self._tag = None

    def post(self, payload: dict) -> None:
        if sorted(payload) != self.send_ranks:
            raise TopologyError(f"rank {self.comm.rank}: halo payload for ranks {sorted(payload)}, "
                                f"expected {self.send_ranks}")
        self._tag = self.comm.next_tag(Kind.HALO)
        for r in self.send_ranks:
            self.comm.send(r, payload[r], self._tag)

    def wait(self) -> dict:
        if self._tag is None:
            raise TopologyError("halo wait without a matching post")
        out = {r: self.comm.recv(r, self._tag) for r in self.recv_ranks}
        self._tag = None
        return out


def _pin(rank: int, n_ranks: int) -> bool:
    if not hasattr(os, "sched_setaffinity"):
        return False
    cpus = sorted(os.sched_getaffinity(0))
    if len(cpus) < n_ranks:
        return False
    try:
        os.sched_setaffinity(threading.get_native_id(), {cpus[rank]})
    except OSError:
        return False
    return True


def spawn_cluster(n_ranks: int, program, *, transport: str = "queue", timeout: float = DEFAULT_TIMEOUT,
                  pin: bool = True) -> list:
    """Run ``program(comm)`` once per rank and return the per-rank results.

    Any failure is re-raised as ClusterError naming the rank where it
    originated (ranks that only saw the abort are not blamed).
    """
    if int(n_ranks) != n_ranks or n_ranks < 1:
        raise ValueError(f"n_ranks must be a positive integer, got {n_ranks!r}")
    if transport not in TRANSPORTS:
        raise ValueError(f"unknown transport {transport!r}")
    if n_ranks == 1 and transport == "queue":
        comm = Comm(0, 1, QueueTransport(1), timeout)
        try:
            return [program(comm)]
        except Exception as exc:
            raise ClusterError(0, exc) from exc

    tr = TRANSPORTS[transport](n_ranks)
    results = [None] * n_ranks
    errors: dict[int, tuple[float, BaseException]] = {}
    lock = threading.Lock()

    def worker(rank):
        if pin:
            _pin(rank, n_ranks)
        comm = Comm(rank, n_ranks, tr, timeout)
        try:
            results[rank] = program(comm)
        except BaseException as exc:  # noqa: BLE001 - every failure must reach the caller
            with lock:
                errors[rank] = (time.monotonic(), exc)
            if not isinstance(exc, RankAborted):
                comm.abort(exc)

    threads = [threading.Thread(target=worker, args=(r,), name=f"rank-{r}", daemon=True)
               for r in range(n_ranks)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    tr.close()
    if errors:
        originals = {r: v for r, v in errors.items() if not isinstance(v[1], RankAborted)}
        pool = originals or errors
        rank = min(pool, key=lambda r: (pool[r][0], r))
        raise ClusterError(rank, pool[rank][1]) from pool[rank][1]
    return results
