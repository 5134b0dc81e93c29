"""Frame codec for the TCP worker transport.

A frame is a 4-byte big-endian length, a 1-byte opcode and a payload of
little-endian float64 values. The length counts the opcode and payload.
Vector lengths are implied by the frame length.
"""

from __future__ import annotations

import socket
import struct

import numpy as np

BROADCAST_WEIGHTS = 0x01
BROADCAST_TWO_VECTORS = 0x02
REDUCE_GRADIENT = 0x11
REDUCE_TWO_HVP = 0x12
RECONFIGURE_WINDOW = 0x20

OPCODES = {BROADCAST_WEIGHTS, BROADCAST_TWO_VECTORS, REDUCE_GRADIENT, REDUCE_TWO_HVP, RECONFIGURE_WINDOW}

_HEADER = struct.Struct(">IB")
_LE_F64 = np.dtype("<f8")


class WireError(ConnectionError):
    pass


def encode_frame(opcode: int, payload) -> bytes:
    if opcode not in OPCODES:
        raise WireError(f"unknown opcode 0x{opcode:02x}")
    body = np.ascontiguousarray(np.asarray(payload, dtype=np.float64).ravel(), dtype=_LE_F64).tobytes()
    return _HEADER.pack(1 + len(body), opcode) + body


def decode_frame(buf: bytes):
    """Decode one complete frame; returns ``(opcode, payload)``."""
    if len(buf) < _HEADER.size:
        raise WireError("truncated header")
    length, opcode = _HEADER.unpack_from(buf)
    if len(buf) != 4 + length:
        raise WireError(f"frame length {length} does not match buffer of {len(buf)} bytes")
    if opcode not in OPCODES:
        raise WireError(f"unknown opcode 0x{opcode:02x}")
    body = buf[_HEADER.size:]
    if len(body) % 8:
        raise WireError("payload is not a whole number of doubles")
    return opcode, np.frombuffer(body, dtype=_LE_F64).astype(np.float64)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    while n:
        chunk = sock.recv(n)
        if not chunk:
            raise WireError("connection closed mid-frame")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def send_frame(sock: socket.socket, opcode: int, payload) -> None:
    sock.sendall(encode_frame(opcode, payload))


def recv_frame(sock: socket.socket):
    head = _recv_exact(sock, 4)
    (length,) = struct.unpack(">I", head)
    return decode_frame(head + _recv_exact(sock, length))
