"""Reference implementations used only by the tests.

``ref_cmac`` follows RFC 4493 section 2 step by step on top of a raw AES
block cipher, so it shares nothing with the library's CMAC path except AES.
"""

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

_RB = 0x87


def _aes(key: bytes, block: bytes) -> bytes:
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return enc.update(block) + enc.finalize()


def _dbl(block: bytes) -> bytes:
    n = int.from_bytes(block, "big") << 1
    if n >> 128:
        n = (n & ((1 << 128) - 1)) ^ _RB
    return n.to_bytes(16, "big")


def _xor(a: bytes, b: bytes) -> bytes:
    return bytes(x ^ y for x, y in zip(a, b))


def ref_subkeys(key: bytes) -> tuple[bytes, bytes]:
    k1 = _dbl(_aes(key, bytes(16)))
    return k1, _dbl(k1)


def ref_cmac(key: bytes, msg: bytes) -> bytes:
    k1, k2 = ref_subkeys(key)
    n = max(1, -(-len(msg) // 16))
    complete = len(msg) > 0 and len(msg) % 16 == 0
    last = msg[16 * (n - 1):]
    if complete:
        last = _xor(last, k1)
    else:
        padded = last + b"\x80" + bytes(15 - len(last))
        last = _xor(padded, k2)
    x = bytes(16)
    for i in range(n - 1):
        x = _aes(key, _xor(x, msg[16 * i:16 * i + 16]))
    return _aes(key, _xor(x, last))


def ref_chain_hash(element: bytes) -> bytes:
    return ref_cmac(bytes(16), element)
