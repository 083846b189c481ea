"""Codec tests: exact bytes, round-trips, framing boundaries, malformed input."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from remfio import wire
from remfio.errors import EncodeError, ProtocolError

from util import random_message


def test_close_request_exact_bytes():
    # smallest message, layout forced: header + 8-byte big-endian handle
    frame = wire.encode_frame(wire.CloseRequest(handle_id=7))
    assert frame == bytes([0x52, 0x46, 0x01, wire.MsgType.CLOSE_REQUEST, 0, 0, 0, 8]) + (
        7
    ).to_bytes(8, "big")
    msg, consumed = wire.decode_frame(frame)
    assert msg == wire.CloseRequest(handle_id=7)
    assert consumed == len(frame) == 16


def test_read_request_roundtrip():
    m = wire.ReadRequest(handle_id=1, offset=0, length=131072)
    out = wire.decode_frame(wire.encode_frame(m))
    assert out is not None and out[0] == m


def test_generated_roundtrip():
    rng = random.Random(0xC0DEC)
    for _ in range(1000):
        m = random_message(rng)
        frame = wire.encode_frame(m)
        decoded, consumed = wire.decode_frame(frame)
        assert decoded == m
        assert consumed == len(frame)
        assert wire.encode_frame(decoded) == frame


def test_empty_input_needs_more():
    assert wire.decode_frame(b"") is None


def test_prefix_safety():
    rng = random.Random(7)
    for _ in range(50):
        frame = wire.encode_frame(random_message(rng))
        for cut in range(len(frame)):
            assert wire.decode_frame(frame[:cut]) is None


def test_concatenation_no_residue():
    rng = random.Random(11)
    m1, m2 = random_message(rng), random_message(rng)
    buf = wire.encode_frame(m1) + wire.encode_frame(m2)
    d1, c1 = wire.decode_frame(buf)
    d2, c2 = wire.decode_frame(buf[c1:])
    assert (d1, d2) == (m1, m2)
    assert c1 + c2 == len(buf)


def test_trailing_byte_left_alone():
    frame = wire.encode_frame(wire.CloseRequest(handle_id=3)) + b"\xff"
    msg, consumed = wire.decode_frame(frame)
    assert msg == wire.CloseRequest(handle_id=3)
    assert consumed == len(frame) - 1


def test_bad_magic():
    frame = bytearray(wire.encode_frame(wire.CloseRequest(handle_id=1)))
    frame[0] = 0x00
    frame[1] = 0x00
    with pytest.raises(ProtocolError):
        wire.decode_frame(bytes(frame))


def test_bad_version():
    frame = bytearray(wire.encode_frame(wire.CloseRequest(handle_id=1)))
    frame[2] = 9
    with pytest.raises(ProtocolError):
        wire.decode_frame(bytes(frame))


def test_unknown_msg_type():
    frame = bytearray(wire.encode_frame(wire.CloseRequest(handle_id=1)))
    frame[3] = 0x7F
    with pytest.raises(ProtocolError):
        wire.decode_frame(bytes(frame))


def test_payload_shorter_than_schema():
    # claim payload_len 4 on a CLOSE frame (schema wants 8)
    bad = bytes([0x52, 0x46, 0x01, wire.MsgType.CLOSE_REQUEST, 0, 0, 0, 4]) + b"\x00" * 4
    with pytest.raises(ProtocolError):
        wire.decode_frame(bad)


def test_payload_longer_than_schema():
    bad = bytes([0x52, 0x46, 0x01, wire.MsgType.CLOSE_REQUEST, 0, 0, 0, 12]) + b"\x00" * 12
    with pytest.raises(ProtocolError):
        wire.decode_frame(bad)


def test_absurd_payload_len_rejected():
    # header claiming a multi-GiB payload must error, not wait for bytes forever
    hdr = bytes([0x52, 0x46, 0x01, wire.MsgType.DATA_CHUNK]) + (1 << 30).to_bytes(4, "big")
    with pytest.raises(ProtocolError):
        wire.decode_frame(hdr)


def test_chunk_payload_cap():
    big = b"\x00" * (wire.MAX_CHUNK_PAYLOAD + 1)
    with pytest.raises(EncodeError):
        wire.encode_frame(wire.DataChunk(handle_id=1, offset=0, payload=big))


def test_string_field_too_long():
    with pytest.raises(EncodeError):
        wire.encode_frame(wire.NsLookup(path="x" * 70000))


def test_frame_decoder_incremental():
    rng = random.Random(23)
    msgs = [random_message(rng) for _ in range(20)]
    stream = b"".join(wire.encode_frame(m) for m in msgs)
    dec = wire.FrameDecoder()
    got = []
    # feed in ragged slices to exercise partial-frame buffering
    pos = 0
    while pos < len(stream):
        step = rng.randint(1, 37)
        got.extend(dec.feed(stream[pos : pos + step]))
        pos += step
    assert got == msgs
    assert dec.pending_bytes() == 0


@settings(max_examples=200, deadline=None)
@given(st.randoms(use_true_random=False))
def test_roundtrip_property(rng):
    m = random_message(rng)
    frame = wire.encode_frame(m)
    decoded, consumed = wire.decode_frame(frame + b"\x01\x02")
    assert decoded == m
    assert consumed == len(frame)
