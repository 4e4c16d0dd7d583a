"""Per-node key material and its lifecycle.

Derivations (all with the AES-CMAC PRF and 2-byte big-endian node ids):

* individual key   IK_u  = f(K_m, u)      K_m is the network global key
* master key       K_u   = f(K_in, u)     K_in is the erasable initial key
* pairwise key     K_uv  = f(K_v, u)      u is the lower id of the pair

A node keeps K_in and the master keys it derived for neighbours only until
its T_min timer fires; :func:`erase_bootstrap` removes them.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field

from .crypto import (
    KEY_LEN,
    HashChain,
    KeyRole,
    SymKey,
    chain_build,
    prf,
    require_role,
)

SEQ_LEN = 8
MAX_NODE_ID = 0xFFFF
DEFAULT_T_MIN_MS = 2000


class BootstrapErased(Exception):
    """The initial key was needed but has already been erased."""


class StoreDecodeError(ValueError):
    pass


def encode_id(node_id: int) -> bytes:
    if not 0 <= node_id <= MAX_NODE_ID:
        raise ValueError(f"node id out of range: {node_id}")
    return struct.pack(">H", node_id)


def random_key(rng: random.Random, role: KeyRole) -> SymKey:
    return SymKey(rng.getrandbits(8 * KEY_LEN).to_bytes(KEY_LEN, "big"), role)


def derive_individual_key(k_m: SymKey, u: int) -> SymKey:
    require_role(k_m, KeyRole.GLOBAL)
    return prf(k_m, encode_id(u), KeyRole.INDIVIDUAL)


def derive_master_key(k_in: SymKey | None, u: int) -> SymKey:
    """K_u = f(K_in, u). Passing ``None`` means K_in was erased."""
    if k_in is None:
        raise BootstrapErased("initial key already erased")
    require_role(k_in, KeyRole.INITIAL)
    return prf(k_in, encode_id(u), KeyRole.MASTER)


def derive_pairwise_key(k_v_master: SymKey, u: int) -> SymKey:
    require_role(k_v_master, KeyRole.MASTER)
    return prf(k_v_master, encode_id(u), KeyRole.PAIRWISE)


def generate_cluster_key(rng: random.Random) -> SymKey:
    return random_key(rng, KeyRole.CLUSTER)


@dataclass
class NodeKeyStore:
    node_id: int
    individual_key: SymKey
    own_master_key: SymKey
    global_key: SymKey
    sequence_number: bytes
    chain_commitment: bytes
    initial_key: SymKey | None = None
    neighbor_master_cache: dict[int, SymKey] = field(default_factory=dict)
    pairwise_keys: dict[int, SymKey] = field(default_factory=dict)
    own_cluster_key: SymKey | None = None
    neighbor_cluster_keys: dict[int, SymKey] = field(default_factory=dict)
    erased: bool = False

    def __post_init__(self) -> None:
        encode_id(self.node_id)
        if len(self.sequence_number) != SEQ_LEN:
            raise ValueError("sequence number must be 8 bytes")
        if len(self.chain_commitment) != KEY_LEN:
            raise ValueError("chain commitment must be 16 bytes")

    def master_key_for(self, v: int) -> SymKey:
        """K_v, from cache or freshly derived from K_in (cached until erasure)."""
        if v == self.node_id:
            return self.own_master_key
        cached = self.neighbor_master_cache.get(v)
        if cached is not None:
            return cached
        if self.erased:
            raise BootstrapErased(f"node {self.node_id} erased its initial key")
        k_v = derive_master_key(self.initial_key, v)
        self.neighbor_master_cache[v] = k_v
        return k_v

    def pair_key_for(self, peer: int) -> SymKey:
        """The single pairwise key for {self, peer}: f(K_hi, lo)."""
        if peer == self.node_id:
            raise ValueError("no pairwise key with self")
        lo, hi = sorted((self.node_id, peer))
        return derive_pairwise_key(self.master_key_for(hi), lo)

    def set_pairwise(self, peer: int, key: SymKey) -> None:
        if peer == self.node_id:
            raise ValueError("no pairwise key with self")
        require_role(key, KeyRole.PAIRWISE)
        self.pairwise_keys[peer] = key

    def all_keys(self) -> list[SymKey]:
        keys = [self.individual_key, self.own_master_key, self.global_key]
        if self.initial_key is not None:
            keys.append(self.initial_key)
        if self.own_cluster_key is not None:
            keys.append(self.own_cluster_key)
        keys.extend(self.neighbor_master_cache.values())
        keys.extend(self.pairwise_keys.values())
        keys.extend(self.neighbor_cluster_keys.values())
        return keys

    def dump_size(self) -> int:
        """len(self.to_bytes()) without building the dump."""
        singles = [2, 1, KEY_LEN, KEY_LEN, KEY_LEN, SEQ_LEN, KEY_LEN]
        if self.initial_key is not None:
            singles.append(KEY_LEN)
        if self.own_cluster_key is not None:
            singles.append(KEY_LEN)
        entries = (
            len(self.neighbor_master_cache) + len(self.pairwise_keys)
            + len(self.neighbor_cluster_keys)
        )
        return len(_MAGIC) + sum(3 + n for n in singles) + entries * (3 + 2 + KEY_LEN)

    def copy(self) -> NodeKeyStore:
        return NodeKeyStore.from_bytes(self.to_bytes())

    # diagnostic dump: records of tag(1) | length(u16 LE) | value

    def to_bytes(self) -> bytes:
        out = bytearray(_MAGIC)

        def put(tag: int, value: bytes) -> None:
            out.append(tag)
            out.extend(struct.pack("<H", len(value)))
            out.extend(value)

        put(_T_NODE_ID, encode_id(self.node_id))
        put(_T_ERASED, b"\x01" if self.erased else b"\x00")
        put(_T_INDIVIDUAL, self.individual_key.value)
        put(_T_OWN_MASTER, self.own_master_key.value)
        put(_T_GLOBAL, self.global_key.value)
        put(_T_SEQUENCE, self.sequence_number)
        put(_T_COMMITMENT, self.chain_commitment)
        if self.initial_key is not None:
            put(_T_INITIAL, self.initial_key.value)
        if self.own_cluster_key is not None:
            put(_T_OWN_CLUSTER, self.own_cluster_key.value)
        for tag, table in (
            (_T_NEIGHBOR_MASTER, self.neighbor_master_cache),
            (_T_PAIRWISE, self.pairwise_keys),
            (_T_NEIGHBOR_CLUSTER, self.neighbor_cluster_keys),
        ):
            for peer in sorted(table):
                put(tag, encode_id(peer) + table[peer].value)
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> NodeKeyStore:
        if not data.startswith(_MAGIC):
            raise StoreDecodeError("bad magic")
        pos = len(_MAGIC)
        singles: dict[int, bytes] = {}
        tables: dict[int, dict[int, SymKey]] = {
            _T_NEIGHBOR_MASTER: {},
            _T_PAIRWISE: {},
            _T_NEIGHBOR_CLUSTER: {},
        }
        while pos < len(data):
            if pos + 3 > len(data):
                raise StoreDecodeError("truncated record header")
            tag = data[pos]
            (length,) = struct.unpack_from("<H", data, pos + 1)
            pos += 3
            value = data[pos:pos + length]
            if len(value) != length:
                raise StoreDecodeError("truncated record")
            pos += length
            if tag in tables:
                if length != 2 + KEY_LEN:
                    raise StoreDecodeError(f"bad table entry length for tag {tag}")
                peer = struct.unpack(">H", value[:2])[0]
                tables[tag][peer] = SymKey(value[2:], _TABLE_ROLES[tag])
            elif tag in _SINGLE_TAGS:
                singles[tag] = value
            else:
                raise StoreDecodeError(f"unknown tag {tag}")
        try:
            store = cls(
                node_id=struct.unpack(">H", singles[_T_NODE_ID])[0],
                individual_key=SymKey(singles[_T_INDIVIDUAL], KeyRole.INDIVIDUAL),
                own_master_key=SymKey(singles[_T_OWN_MASTER], KeyRole.MASTER),
                global_key=SymKey(singles[_T_GLOBAL], KeyRole.GLOBAL),
                sequence_number=singles[_T_SEQUENCE],
                chain_commitment=singles[_T_COMMITMENT],
                erased=singles[_T_ERASED] == b"\x01",
            )
        except (KeyError, ValueError, struct.error) as exc:
            raise StoreDecodeError(f"missing or invalid field: {exc}") from exc
        if _T_INITIAL in singles:
            store.initial_key = SymKey(singles[_T_INITIAL], KeyRole.INITIAL)
        if _T_OWN_CLUSTER in singles:
            store.own_cluster_key = SymKey(singles[_T_OWN_CLUSTER], KeyRole.CLUSTER)
        store.neighbor_master_cache = tables[_T_NEIGHBOR_MASTER]
        store.pairwise_keys = tables[_T_PAIRWISE]
        store.neighbor_cluster_keys = tables[_T_NEIGHBOR_CLUSTER]
        return store


_MAGIC = b"LKS1"
(
    _T_NODE_ID,
    _T_ERASED,
    _T_INDIVIDUAL,
    _T_OWN_MASTER,
    _T_GLOBAL,
    _T_SEQUENCE,
    _T_COMMITMENT,
    _T_INITIAL,
    _T_OWN_CLUSTER,
    _T_NEIGHBOR_MASTER,
    _T_PAIRWISE,
    _T_NEIGHBOR_CLUSTER,
) = range(1, 13)
_SINGLE_TAGS = {
    _T_NODE_ID, _T_ERASED, _T_INDIVIDUAL, _T_OWN_MASTER, _T_GLOBAL,
    _T_SEQUENCE, _T_COMMITMENT, _T_INITIAL, _T_OWN_CLUSTER,
}
_TABLE_ROLES = {
    _T_NEIGHBOR_MASTER: KeyRole.MASTER,
    _T_PAIRWISE: KeyRole.PAIRWISE,
    _T_NEIGHBOR_CLUSTER: KeyRole.CLUSTER,
}


def erase_bootstrap(store: NodeKeyStore) -> NodeKeyStore:
    """Drop K_in and every cached neighbour master key. Idempotent."""
    store.initial_key = None
    store.neighbor_master_cache.clear()
    store.erased = True
    return store


@dataclass(frozen=True)
class PreloadBundle:
    node_id: int
    initial_key: SymKey
    individual_key: SymKey
    global_key: SymKey
    sequence_number: bytes
    chain_commitment: bytes
    t_min: int = DEFAULT_T_MIN_MS

    def new_store(self) -> NodeKeyStore:
        return NodeKeyStore(
            node_id=self.node_id,
            individual_key=self.individual_key,
            own_master_key=derive_master_key(self.initial_key, self.node_id),
            global_key=self.global_key,
            sequence_number=self.sequence_number,
            chain_commitment=self.chain_commitment,
            initial_key=self.initial_key,
        )


@dataclass
class RegistrySeed:
    """What the base station keeps from preload: K_m, the chain, id -> sequence."""

    k_m: SymKey
    chain: HashChain
    expected: dict[int, bytes]


def preload_network(
    n: int,
    k_in: SymKey,
    k_m: SymKey,
    rng: random.Random,
    t_min: int = DEFAULT_T_MIN_MS,
    chain_length: int = 64,
) -> tuple[list[PreloadBundle], RegistrySeed]:
    """Build bundles for nodes 1..n with distinct random sequence numbers."""
    if n < 1 or n > MAX_NODE_ID - 1:
        raise ValueError(f"node count must be 1..{MAX_NODE_ID - 1}")
    require_role(k_in, KeyRole.INITIAL)
    require_role(k_m, KeyRole.GLOBAL)
    chain = chain_build(random_key(rng, KeyRole.CHAIN_ELEMENT).value, chain_length)
    seen: set[bytes] = set()
    bundles = []
    expected = {}
    for u in range(1, n + 1):
        seq = rng.getrandbits(8 * SEQ_LEN).to_bytes(SEQ_LEN, "big")
        while seq in seen:
            seq = rng.getrandbits(8 * SEQ_LEN).to_bytes(SEQ_LEN, "big")
        seen.add(seq)
        expected[u] = seq
        bundles.append(PreloadBundle(
            node_id=u,
            initial_key=k_in,
            individual_key=derive_individual_key(k_m, u),
            global_key=k_m,
            sequence_number=seq,
            chain_commitment=chain.commitment,
            t_min=t_min,
        ))
    return bundles, RegistrySeed(k_m=k_m, chain=chain, expected=expected)
