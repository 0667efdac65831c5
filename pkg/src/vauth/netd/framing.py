"""Length-prefixed framing: 4-byte big-endian length, 1 type byte, payload.

The length counts the type byte plus the payload.
"""

from __future__ import annotations

import enum
import socket
import struct

MAX_FRAME = 1 << 20
_HEADER = struct.Struct(">IB")


class MsgType(enum.IntEnum):
    HELLO = 0x01
    SERVER_AUTH = 0x02
    CLIENT_AUTH = 0x03
    CALL = 0x04
    REPLY = 0x05
    DISCHARGE_REQUEST = 0x06
    DISCHARGE_REPLY = 0x07
    GROUP_QUERY = 0x08
    GROUP_RESULT = 0x09
    GRANT = 0x0A
    GROUP_UNKNOWN = 0x0B
    CLOSE = 0x0F


class ProtocolError(Exception):
    pass


class ConnectionClosed(ProtocolError):
    pass


def pack_frame(msg_type: int, payload: bytes) -> bytes:
    length = len(payload) + 1
    if length > MAX_FRAME:
        raise ProtocolError(f"frame of {length} bytes exceeds {MAX_FRAME}")
    return _HEADER.pack(length, msg_type) + payload


def unpack_frame(data: bytes) -> tuple[MsgType, bytes]:
    if len(data) < _HEADER.size:
        raise ProtocolError("short frame")
    length, msg_type = _HEADER.unpack_from(data)
    if length != len(data) - 4:
        raise ProtocolError("frame length mismatch")
    return _msg_type(msg_type), data[_HEADER.size:]


def _msg_type(value: int) -> MsgType:
    try:
        return MsgType(value)
    except ValueError:
        raise ProtocolError(f"unknown message type 0x{value:02x}") from None


def _recv_exactly(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionClosed("peer closed the connection")
        buf += chunk
    return bytes(buf)


def write_frame(sock: socket.socket, msg_type: int, payload: bytes) -> None:
    sock.sendall(pack_frame(msg_type, payload))


def read_frame(sock: socket.socket) -> tuple[MsgType, bytes]:
    length, msg_type = _HEADER.unpack(_recv_exactly(sock, _HEADER.size))
    if length < 1 or length > MAX_FRAME:
        raise ProtocolError(f"bad frame length {length}")
    payload = _recv_exactly(sock, length - 1)
    return _msg_type(msg_type), payload
