"""Symmetric primitives: AES-CMAC PRF, truncated MAC, key wrap, hash chain.

All key material is 128 bits. The PRF is AES-128-CMAC (RFC 4493); tags are
truncated to 8 bytes. Nothing here is constant-time; it is meant for
simulation, not for protecting real secrets.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from cryptography.hazmat.primitives import cmac
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

KEY_LEN = 16
TAG_LEN = 8
NONCE_LEN = 8
WRAP_LEN = KEY_LEN + TAG_LEN
PRF_MAX_INPUT = 64

# domain-separation prefixes inside the wrap construction
_PAD_DOMAIN = b"\x01"
_TAG_DOMAIN = b"\x02"

ZERO_KEY_BYTES = bytes(KEY_LEN)


class AuthenticationFailure(Exception):
    """A wrapped blob did not authenticate (tampering or wrong key)."""


class ChainExhausted(Exception):
    """Every element of a hash chain has already been revealed."""


class KeyRoleError(ValueError):
    """A key was passed where a key of a different role is required."""


class KeyRole(enum.Enum):
    INITIAL = "initial"
    MASTER = "master"
    INDIVIDUAL = "individual"
    PAIRWISE = "pairwise"
    CLUSTER = "cluster"
    GLOBAL = "global"
    CHAIN_ELEMENT = "chain_element"


@dataclass(frozen=True)
class SymKey:
    """A 128-bit key tagged with the role it plays in the protocol."""

    value: bytes
    role: KeyRole

    def __post_init__(self) -> None:
        if not isinstance(self.value, (bytes, bytearray)) or len(self.value) != KEY_LEN:
            raise ValueError(f"SymKey must be {KEY_LEN} bytes")
        object.__setattr__(self, "value", bytes(self.value))

    def __repr__(self) -> str:
        # never print key bytes in full
        return f"SymKey({self.role.value}, {self.value[:2].hex()}..)"

    def with_role(self, role: KeyRole) -> SymKey:
        return SymKey(self.value, role)


class MacTag(bytes):
    """8-byte truncated CMAC tag."""

    def __new__(cls, value: bytes) -> MacTag:
        if len(value) != TAG_LEN:
            raise ValueError(f"MacTag must be {TAG_LEN} bytes, got {len(value)}")
        return super().__new__(cls, value)


class Nonce(bytes):
    """8-byte HELLO nonce."""

    def __new__(cls, value: bytes) -> Nonce:
        if len(value) != NONCE_LEN:
            raise ValueError(f"Nonce must be {NONCE_LEN} bytes, got {len(value)}")
        return super().__new__(cls, value)


def require_role(key: SymKey, *roles: KeyRole) -> None:
    if key.role not in roles:
        names = "/".join(r.value for r in roles)
        raise KeyRoleError(f"expected {names} key, got {key.role.value}")


def _key_bytes(key: SymKey | bytes) -> bytes:
    raw = key.value if isinstance(key, SymKey) else bytes(key)
    if len(raw) != KEY_LEN:
        raise ValueError(f"key must be {KEY_LEN} bytes")
    return raw


def aes_cmac(key: SymKey | bytes, msg: bytes) -> bytes:
    """Full 16-byte AES-128-CMAC of ``msg`` (any length, including empty)."""
    c = cmac.CMAC(algorithms.AES(_key_bytes(key)))
    c.update(bytes(msg))
    return c.finalize()


def aes_encrypt_block(key: SymKey | bytes, block: bytes) -> bytes:
    if len(block) != 16:
        raise ValueError("AES block must be 16 bytes")
    enc = Cipher(algorithms.AES(_key_bytes(key)), modes.ECB()).encryptor()
    return enc.update(block) + enc.finalize()


def aes_decrypt_block(key: SymKey | bytes, block: bytes) -> bytes:
    if len(block) != 16:
        raise ValueError("AES block must be 16 bytes")
    dec = Cipher(algorithms.AES(_key_bytes(key)), modes.ECB()).decryptor()
    return dec.update(block) + dec.finalize()


def prf(key: SymKey, data: bytes, role: KeyRole) -> SymKey:
    """Keyed PRF f_K(data); the caller names the role of the derived key.

    Raises ValueError for empty input or input longer than 64 bytes.
    """
    if not 1 <= len(data) <= PRF_MAX_INPUT:
        raise ValueError(f"prf input must be 1..{PRF_MAX_INPUT} bytes, got {len(data)}")
    return SymKey(aes_cmac(key, data), role)


def mac(key: SymKey, msg: bytes) -> MacTag:
    return MacTag(aes_cmac(key, msg)[:TAG_LEN])


def verify_mac(key: SymKey, msg: bytes, tag: bytes) -> bool:
    """True iff ``tag`` equals mac(key, msg) over all 8 bytes. Never raises on mismatch."""
    if len(tag) != TAG_LEN:
        return False
    return mac(key, msg) == bytes(tag)


def _pad(kek: SymKey, context: bytes) -> bytes:
    # single-block payload, so the counter is always 0
    return prf(kek, _PAD_DOMAIN + context + b"\x00", KeyRole.CHAIN_ELEMENT).value


def wrap_block(kek: SymKey, block: bytes, context: bytes) -> bytes:
    """Encrypt-then-MAC one 16-byte block under ``kek``, bound to ``context``.

    Layout: ``AES_kek(block) XOR pad(context) || mac(kek, ct || context)``.
    """
    if len(block) != KEY_LEN:
        raise ValueError("wrapped block must be 16 bytes")
    if len(context) > PRF_MAX_INPUT - 2:
        raise ValueError("wrap context too long")
    ct = bytes(a ^ b for a, b in zip(aes_encrypt_block(kek, block), _pad(kek, context)))
    return ct + mac(kek, _TAG_DOMAIN + ct + context)


def unwrap_block(kek: SymKey, blob: bytes, context: bytes) -> bytes:
    if len(blob) != WRAP_LEN:
        raise ValueError(f"wrapped blob must be {WRAP_LEN} bytes, got {len(blob)}")
    if len(context) > PRF_MAX_INPUT - 2:
        raise ValueError("wrap context too long")
    ct, tag = blob[:KEY_LEN], blob[KEY_LEN:]
    if not verify_mac(kek, _TAG_DOMAIN + ct + context, tag):
        raise AuthenticationFailure("wrapped key failed authentication")
    return aes_decrypt_block(kek, bytes(a ^ b for a, b in zip(ct, _pad(kek, context))))


def wrap_key(kek: SymKey, payload: SymKey, context: bytes) -> bytes:
    return wrap_block(kek, payload.value, context)


def unwrap_key(kek: SymKey, blob: bytes, context: bytes, role: KeyRole) -> SymKey:
    """Inverse of :func:`wrap_key`; raises AuthenticationFailure on a bad tag."""
    return SymKey(unwrap_block(kek, blob, context), role)


_CHAIN_KEY = SymKey(ZERO_KEY_BYTES, KeyRole.CHAIN_ELEMENT)


def chain_hash(element: bytes) -> bytes:
    return prf(_CHAIN_KEY, element, KeyRole.CHAIN_ELEMENT).value


def _iterate(element: bytes, times: int) -> bytes:
    for _ in range(times):
        element = chain_hash(element)
    return element


@dataclass
class HashChain:
    """One-way chain; element(length) is the seed, element(0) the commitment.

    Reveals walk from index 1 upward, and each revealed element hashes
    forward ``index`` times to the commitment.
    """

    seed: bytes
    length: int
    commitment: bytes = field(init=False)
    next_reveal_index: int = 1
    _elements: list[bytes] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if len(self.seed) != KEY_LEN:
            raise ValueError("chain seed must be 16 bytes")
        if self.length < 1:
            raise ValueError("chain length must be >= 1")
        elements = [bytes(self.seed)]
        for _ in range(self.length):
            elements.append(chain_hash(elements[-1]))
        # elements[k] = H^k(seed) = element(length - k)
        self._elements = elements[::-1]
        self.commitment = self._elements[0]

    def element(self, index: int) -> bytes:
        if not 0 <= index <= self.length:
            raise IndexError(index)
        return self._elements[index]

    @property
    def remaining(self) -> int:
        return self.length - self.next_reveal_index + 1

    def reveal(self) -> tuple[int, bytes]:
        if self.next_reveal_index > self.length:
            raise ChainExhausted(f"all {self.length} chain elements revealed")
        index = self.next_reveal_index
        self.next_reveal_index += 1
        return index, self._elements[index]


def chain_build(seed: bytes, length: int) -> HashChain:
    return HashChain(seed, length)


def chain_verify(candidate: bytes, commitment: bytes, index: int) -> bool:
    if index < 1 or len(candidate) != KEY_LEN:
        return False
    return _iterate(bytes(candidate), index) == bytes(commitment)
