"""Byte-exact wire messages. All multi-byte integers are big-endian.

    HELLO       0x01 | sender(2) | nonce(8)                                   11 B
    ACK         0x02 | sender(2) | dest(2) | nonce(8) | tag(8)                21 B
    CLUSTER_KEY 0x03 | sender(2) | dest(2) | blob(24)                         29 B
    SEQ_REQ     0x04 | sender(2)=0 | round(4) | chain_elem(16)                23 B
    SEQ_RESP    0x05 | sender(2) | round(4) | blob(24)                        31 B
    REVOKE      0x06 | sender(2)=0 | revoked(2) | round(4) | chain_elem(16) | tag(8)   33 B

The base station always uses id 0. ``round`` is the hash-chain index revealed
by the frame.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Union

BASE_STATION_ID = 0


class MsgType(enum.IntEnum):
    HELLO = 0x01
    ACK = 0x02
    CLUSTER_KEY = 0x03
    SEQ_REQ = 0x04
    SEQ_RESP = 0x05
    REVOKE = 0x06


class MalformedReason(enum.Enum):
    TOO_SHORT = "too_short"
    UNKNOWN_TYPE = "unknown_type"
    BAD_LENGTH = "bad_length"
    BAD_SENDER = "bad_sender"


class MalformedMessage(ValueError):
    def __init__(self, reason: MalformedReason, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason.value}: {detail}" if detail else reason.value)


@dataclass(frozen=True)
class Hello:
    sender: int
    nonce: bytes
    type = MsgType.HELLO


@dataclass(frozen=True)
class Ack:
    sender: int
    dest: int
    nonce: bytes
    tag: bytes
    type = MsgType.ACK

    def body(self) -> bytes:
        """The bytes covered by the ACK tag (everything but the tag)."""
        return struct.pack(">BHH8s", self.type, self.sender, self.dest, self.nonce)


@dataclass(frozen=True)
class ClusterKey:
    sender: int
    dest: int
    blob: bytes
    type = MsgType.CLUSTER_KEY


@dataclass(frozen=True)
class SeqRequest:
    round: int
    chain_elem: bytes
    sender: int = BASE_STATION_ID
    type = MsgType.SEQ_REQ


@dataclass(frozen=True)
class SeqResponse:
    sender: int
    round: int
    blob: bytes
    type = MsgType.SEQ_RESP


@dataclass(frozen=True)
class Revoke:
    revoked: int
    round: int
    chain_elem: bytes
    tag: bytes
    sender: int = BASE_STATION_ID
    type = MsgType.REVOKE

    def body(self) -> bytes:
        return struct.pack(
            ">BHHI16s", self.type, self.sender, self.revoked, self.round, self.chain_elem
        )


WireMessage = Union[Hello, Ack, ClusterKey, SeqRequest, SeqResponse, Revoke]

# type -> (struct layout after the type byte, class, field order)
_LAYOUTS: dict[MsgType, tuple[struct.Struct, type, tuple[str, ...]]] = {
    MsgType.HELLO: (struct.Struct(">H8s"), Hello, ("sender", "nonce")),
    MsgType.ACK: (struct.Struct(">HH8s8s"), Ack, ("sender", "dest", "nonce", "tag")),
    MsgType.CLUSTER_KEY: (struct.Struct(">HH24s"), ClusterKey, ("sender", "dest", "blob")),
    MsgType.SEQ_REQ: (struct.Struct(">HI16s"), SeqRequest, ("sender", "round", "chain_elem")),
    MsgType.SEQ_RESP: (struct.Struct(">HI24s"), SeqResponse, ("sender", "round", "blob")),
    MsgType.REVOKE: (
        struct.Struct(">HHI16s8s"), Revoke, ("sender", "revoked", "round", "chain_elem", "tag"),
    ),
}

FRAME_LENGTHS = {t: 1 + layout.size for t, (layout, _, _) in _LAYOUTS.items()}


def encode(msg: WireMessage) -> bytes:
    layout, cls, fields = _LAYOUTS[msg.type]
    if not isinstance(msg, cls):
        raise TypeError(f"{type(msg).__name__} is not a {cls.__name__}")
    # struct pads short byte strings silently; refuse them instead
    _check_widths(msg, fields)
    try:
        packed = layout.pack(*(getattr(msg, f) for f in fields))
    except struct.error as exc:
        raise ValueError(f"cannot encode {cls.__name__}: {exc}") from exc
    return bytes([msg.type]) + packed


_BYTE_WIDTHS = {"nonce": 8, "tag": 8, "blob": 24, "chain_elem": 16}


def _check_widths(msg: WireMessage, fields: tuple[str, ...]) -> None:
    for name in fields:
        if name in _BYTE_WIDTHS and len(getattr(msg, name)) != _BYTE_WIDTHS[name]:
            raise ValueError(f"{name} must be {_BYTE_WIDTHS[name]} bytes")


def decode(data: bytes) -> WireMessage:
    """Parse one frame. Any defect raises MalformedMessage, nothing else."""
    data = bytes(data)
    if len(data) < 3:
        raise MalformedMessage(MalformedReason.TOO_SHORT, f"{len(data)} bytes")
    try:
        mtype = MsgType(data[0])
    except ValueError:
        raise MalformedMessage(MalformedReason.UNKNOWN_TYPE, f"0x{data[0]:02x}") from None
    layout, cls, fields = _LAYOUTS[mtype]
    if len(data) != 1 + layout.size:
        raise MalformedMessage(
            MalformedReason.BAD_LENGTH, f"{mtype.name} needs {1 + layout.size}, got {len(data)}"
        )
    values = dict(zip(fields, layout.unpack_from(data, 1)))
    if mtype in (MsgType.SEQ_REQ, MsgType.REVOKE) and values["sender"] != BASE_STATION_ID:
        raise MalformedMessage(MalformedReason.BAD_SENDER, f"{mtype.name} sender must be 0")
    return cls(**values)


def try_decode(data: bytes) -> WireMessage | MalformedMessage:
    try:
        return decode(data)
    except MalformedMessage as exc:
        return exc
