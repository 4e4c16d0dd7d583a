import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from leapforge.messages import (
    FRAME_LENGTHS,
    Ack,
    ClusterKey,
    Hello,
    MalformedMessage,
    MalformedReason,
    MsgType,
    Revoke,
    SeqRequest,
    SeqResponse,
    decode,
    encode,
    try_decode,
)

ids = st.integers(0, 0xFFFF)
rounds = st.integers(0, 0xFFFFFFFF)


def blob(n):
    return st.binary(min_size=n, max_size=n)


messages = st.one_of(
    st.builds(Hello, sender=ids, nonce=blob(8)),
    st.builds(Ack, sender=ids, dest=ids, nonce=blob(8), tag=blob(8)),
    st.builds(ClusterKey, sender=ids, dest=ids, blob=blob(24)),
    st.builds(SeqRequest, round=rounds, chain_elem=blob(16)),
    st.builds(SeqResponse, sender=ids, round=rounds, blob=blob(24)),
    st.builds(Revoke, revoked=ids, round=rounds, chain_elem=blob(16), tag=blob(8)),
)


@given(messages)
def test_round_trip(msg):
    frame = encode(msg)
    assert len(frame) == FRAME_LENGTHS[msg.type]
    assert frame[0] == msg.type
    assert decode(frame) == msg


def test_frame_lengths():
    assert {t.name: n for t, n in FRAME_LENGTHS.items()} == {
        "HELLO": 11, "ACK": 21, "CLUSTER_KEY": 29, "SEQ_REQ": 23, "SEQ_RESP": 31, "REVOKE": 33,
    }


def test_hello_layout_big_endian():
    frame = encode(Hello(sender=0x0102, nonce=bytes(range(8))))
    assert frame == b"\x01\x01\x02" + bytes(range(8))


def test_revoke_layout():
    msg = Revoke(revoked=9, round=3, chain_elem=b"\xaa" * 16, tag=b"\xbb" * 8)
    frame = encode(msg)
    assert frame[:9] == b"\x06\x00\x00\x00\x09\x00\x00\x00\x03"
    assert frame[:-8] == msg.body()


def test_ack_body_excludes_tag():
    msg = Ack(sender=9, dest=7, nonce=b"n" * 8, tag=b"t" * 8)
    assert encode(msg) == msg.body() + b"t" * 8


@pytest.mark.parametrize("data", [b"", b"\x01", b"\x01\x00"])
def test_short_input(data):
    with pytest.raises(MalformedMessage) as exc:
        decode(data)
    assert exc.value.reason is MalformedReason.TOO_SHORT


def test_unknown_type():
    with pytest.raises(MalformedMessage) as exc:
        decode(b"\xff" + bytes(10))
    assert exc.value.reason is MalformedReason.UNKNOWN_TYPE


def test_trailing_garbage_and_truncation():
    frame = encode(Hello(sender=1, nonce=bytes(8)))
    for bad in (frame + b"\x00", frame[:-1]):
        with pytest.raises(MalformedMessage) as exc:
            decode(bad)
        assert exc.value.reason is MalformedReason.BAD_LENGTH


def test_base_station_frames_need_sender_zero():
    frame = bytearray(encode(SeqRequest(round=1, chain_elem=bytes(16))))
    frame[2] = 5
    with pytest.raises(MalformedMessage) as exc:
        decode(bytes(frame))
    assert exc.value.reason is MalformedReason.BAD_SENDER


def test_encode_refuses_wrong_widths():
    with pytest.raises(ValueError):
        encode(Hello(sender=1, nonce=bytes(7)))
    with pytest.raises(ValueError):
        encode(Hello(sender=0x10000, nonce=bytes(8)))


def test_try_decode_returns_error_object():
    assert isinstance(try_decode(b"\x07abc"), MalformedMessage)
    assert isinstance(try_decode(encode(Hello(sender=1, nonce=bytes(8)))), Hello)


@given(st.binary(max_size=40))
def test_decode_only_raises_malformed(data):
    try:
        msg = decode(data)
    except MalformedMessage:
        return
    assert encode(msg) == data


def test_every_type_value_covered():
    rng = random.Random(0)
    for t in MsgType:
        frame = bytes([t]) + rng.randbytes(FRAME_LENGTHS[t] - 1)
        if t in (MsgType.SEQ_REQ, MsgType.REVOKE):
            frame = frame[:1] + b"\x00\x00" + frame[3:]
        assert decode(frame).type is t
