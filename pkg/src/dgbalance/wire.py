"""Length-prefixed frames for the loopback socket transport.

A frame is ``u32 tag | u64 byte count | payload``, little-endian.  The
payload is a pickle of the message object.
"""
from __future__ import annotations

import pickle
import socket
import struct

from .errors import CollectiveError

HEADER = struct.Struct("<IQ")
TAG_MASK = 0xFFFFFFFF
# longest payload accepted from a peer
MAX_PAYLOAD = 1 << 34


def encode_frame(tag: int, obj) -> bytes:
    payload = pickle.dumps(obj, protocol=pickle.HIGHEST_PROTOCOL)
    return HEADER.pack(tag & TAG_MASK, len(payload)) + payload


def decode_frame(buf: bytes):
    """Decode one complete frame; returns ``(tag, obj, bytes_consumed)``."""
    if len(buf) < HEADER.size:
        raise CollectiveError(f"truncated frame header ({len(buf)} of {HEADER.size} bytes)")
    tag, n = HEADER.unpack_from(buf)
    if n > MAX_PAYLOAD:
        raise CollectiveError(f"frame payload of {n} bytes exceeds limit")
    end = HEADER.size + n
    if len(buf) < end:
        raise CollectiveError(f"truncated frame payload ({len(buf) - HEADER.size} of {n} bytes)")
    return tag, pickle.loads(buf[HEADER.size:end]), end


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(min(n - got, 1 << 20))
        if not chunk:
            if got == 0:
                return None
            raise CollectiveError(f"connection closed mid-frame ({got} of {n} bytes)")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket):
    """Blocking read of one frame; returns None on a clean end of stream."""
    head = _recv_exact(sock, HEADER.size)
    if head is None:
        return None
    tag, n = HEADER.unpack(head)
    if n > MAX_PAYLOAD:
        raise CollectiveError(f"frame payload of {n} bytes exceeds limit")
    payload = _recv_exact(sock, n) if n else b""
    if payload is None:
        raise CollectiveError("connection closed before frame payload")
    return tag, pickle.loads(payload)


def write_frame(sock: socket.socket, tag: int, obj) -> None:
    sock.sendall(encode_frame(tag, obj))
