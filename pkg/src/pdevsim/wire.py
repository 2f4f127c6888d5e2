"""Length-prefixed JSON frames for the distributed protocol.

Every frame is a 4-byte big-endian length followed by a UTF-8 JSON object
with the fixed field names ``command``, ``sender``, ``port``, ``values``
and ``time``. Absent fields are omitted from the body. Virtual-time
infinity is carried as the string ``"inf"`` so that the body stays strict
JSON; event payloads themselves must be finite (see the event-value
contract in the modeling layer).
"""

from __future__ import annotations

import json
import math
import socket
import struct
from dataclasses import dataclass, field

INIT = "INIT"
GET_TN = "GET_TN"
LAMBDA = "LAMBDA"
PROPAGATE = "PROPAGATE"
DELTFCN = "DELTFCN"
CLOCK = "CLOCK"
EXIT = "EXIT"
ACK = "ACK"
TN_REPLY = "TN_REPLY"

COMMANDS = frozenset({INIT, GET_TN, LAMBDA, PROPAGATE, DELTFCN, CLOCK, EXIT,
                      ACK, TN_REPLY})

_MAX_FRAME = 64 * 1024 * 1024
_LENGTH = struct.Struct(">I")


class ProtocolError(Exception):
    """Malformed frame or protocol sequence violation."""


@dataclass(frozen=True)
class WireFrame:
    """One protocol message.

    ``port`` is the destination port of a PROPAGATE; ``values`` carries the
    propagated events (and reply payloads); ``time`` is the virtual time of
    CLOCK and TN_REPLY frames.
    """

    command: str
    sender: str = ""
    port: str = ""
    values: tuple = ()
    time: float | None = None

    def __post_init__(self) -> None:
        if self.command not in COMMANDS:
            raise ProtocolError(f"unknown command {self.command!r}")


def _encode_time(value: float) -> float | str:
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def _decode_time(raw) -> float:
    if raw == "inf":
        return math.inf
    if raw == "-inf":
        return -math.inf
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ProtocolError(f"bad time field: {raw!r}")
    return float(raw)


def encode_frame(frame: WireFrame) -> bytes:
    body: dict = {"command": frame.command}
    if frame.sender:
        body["sender"] = frame.sender
    if frame.port:
        body["port"] = frame.port
    if frame.values:
        body["values"] = list(frame.values)
    if frame.time is not None:
        body["time"] = _encode_time(frame.time)
    try:
        payload = json.dumps(body, separators=(",", ":"), allow_nan=False).encode("utf-8")
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"unencodable frame payload: {exc}") from exc
    if len(payload) > _MAX_FRAME:
        raise ProtocolError(f"frame too large: {len(payload)} bytes")
    return _LENGTH.pack(len(payload)) + payload


def decode_frame(payload: bytes) -> WireFrame:
    try:
        body = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed frame body {payload[:80]!r}: {exc}") from exc
    if not isinstance(body, dict) or "command" not in body:
        raise ProtocolError(f"frame body is not a command object: {payload[:80]!r}")
    command = body["command"]
    if command not in COMMANDS:
        raise ProtocolError(f"unknown command in frame: {command!r}")
    values = body.get("values", [])
    if not isinstance(values, list):
        raise ProtocolError(f"bad values field: {values!r}")
    time_raw = body.get("time")
    return WireFrame(
        command=command,
        sender=body.get("sender", ""),
        port=body.get("port", ""),
        values=tuple(values),
        time=None if time_raw is None else _decode_time(time_raw),
    )


def write_frame(sock: socket.socket, frame: WireFrame) -> None:
    sock.sendall(encode_frame(frame))


def _recv_exact(sock: socket.socket, count: int) -> bytes | None:
    chunks = []
    remaining = count
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            if chunks:
                raise ProtocolError("connection closed mid-frame")
            return None
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> WireFrame | None:
    """Read one frame; None on clean end-of-stream."""
    header = _recv_exact(sock, _LENGTH.size)
    if header is None:
        return None
    (length,) = _LENGTH.unpack(header)
    if length > _MAX_FRAME:
        raise ProtocolError(f"frame length {length} exceeds limit")
    payload = _recv_exact(sock, length)
    if payload is None:
        raise ProtocolError("connection closed mid-frame")
    return decode_frame(payload)
