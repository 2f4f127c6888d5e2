"""Wire frames: framing, codec round-trips, malformed input."""

import math
import socket
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdevsim.wire import (COMMANDS, ProtocolError, WireFrame, decode_frame,
                          encode_frame, read_frame, write_frame)

finite_floats = st.floats(allow_nan=False, allow_infinity=False, width=64)
event_values = st.recursive(
    st.integers(min_value=-2**53, max_value=2**53) | finite_floats |
    st.text(max_size=16),
    lambda children: st.lists(children, max_size=4),
    max_leaves=12)
identifiers = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), max_size=16)

frames = st.builds(
    WireFrame,
    command=st.sampled_from(sorted(COMMANDS)),
    sender=identifiers,
    port=identifiers,
    values=st.lists(event_values, max_size=6).map(tuple),
    time=st.none() | finite_floats | st.sampled_from([math.inf, -math.inf]),
)


@given(frames)
@settings(max_examples=300)
def test_encode_decode_roundtrip(frame):
    assert decode_frame(encode_frame(frame)[4:]) == frame


def test_infinite_time_is_portable_json():
    blob = encode_frame(WireFrame("TN_REPLY", time=math.inf))[4:]
    assert b"inf" in blob and b"Infinity" not in blob
    assert math.isinf(decode_frame(blob).time)


def test_length_prefix_is_big_endian():
    frame = WireFrame("ACK")
    encoded = encode_frame(frame)
    (length,) = struct.unpack(">I", encoded[:4])
    assert length == len(encoded) - 4


def test_frames_cross_a_real_socket():
    left, right = socket.socketpair()
    try:
        sent = [WireFrame("CLOCK", time=0.5),
                WireFrame("PROPAGATE", sender="a", port="in", values=(1, "x", [2.5])),
                WireFrame("ACK", sender="b")]
        for frame in sent:
            write_frame(left, frame)
        received = [read_frame(right) for _ in sent]
        assert received == sent
        left.close()
        assert read_frame(right) is None  # clean EOF
    finally:
        right.close()


def test_unknown_command_rejected():
    with pytest.raises(ProtocolError):
        WireFrame("NOPE")
    with pytest.raises(ProtocolError, match="unknown command"):
        decode_frame(b'{"command":"NOPE"}')


def test_malformed_body_reports_offending_bytes():
    with pytest.raises(ProtocolError, match="not a json"):
        decode_frame(b"not a json body")
    with pytest.raises(ProtocolError, match="command object"):
        decode_frame(b"[1,2,3]")


def test_truncated_frame_detected():
    left, right = socket.socketpair()
    try:
        payload = encode_frame(WireFrame("ACK"))
        left.sendall(payload[:-2])
        left.close()
        with pytest.raises(ProtocolError, match="mid-frame"):
            read_frame(right)
    finally:
        right.close()


def test_oversized_length_rejected():
    left, right = socket.socketpair()
    try:
        left.sendall(struct.pack(">I", 2**31))
        with pytest.raises(ProtocolError, match="exceeds limit"):
            read_frame(right)
    finally:
        left.close()
        right.close()


def test_unencodable_payload_rejected():
    with pytest.raises(ProtocolError):
        encode_frame(WireFrame("ACK", values=(float("nan"),)))
    with pytest.raises(ProtocolError):
        encode_frame(WireFrame("ACK", values=({1, 2},)))


def test_bad_time_field_rejected():
    with pytest.raises(ProtocolError, match="bad time"):
        decode_frame(b'{"command":"CLOCK","time":"soon"}')
