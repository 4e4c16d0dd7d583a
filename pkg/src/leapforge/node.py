"""Sensor-node protocol state machine.

Handlers are synchronous: they take the decoded message and the current
simulated time, mutate the runtime, and return the frames the node wants to
transmit. Anything worth recording (phase changes, new keys, drops) is
appended to ``NodeRuntime.log`` for the simulator to drain into its trace.
"""

from __future__ import annotations

import enum
import hashlib
import random
import struct
from collections import Counter
from dataclasses import dataclass, field

from .crypto import (
    AuthenticationFailure,
    KeyRole,
    Nonce,
    chain_verify,
    mac,
    unwrap_key,
    verify_mac,
    wrap_block,
    wrap_key,
)
from .keying import (
    SEQ_LEN,
    BootstrapErased,
    NodeKeyStore,
    PreloadBundle,
    derive_master_key,
    encode_id,
    erase_bootstrap,
    generate_cluster_key,
)
from .messages import (
    Ack,
    ClusterKey,
    Hello,
    Revoke,
    SeqRequest,
    SeqResponse,
    WireMessage,
)

# a base-station frame may skip at most this many chain indices; bounds the
# hashing work an attacker can force with a huge round number
MAX_CHAIN_SKIP = 64


class NodePhase(enum.Enum):
    PRE_DEPLOY = "pre_deploy"
    DISCOVERY = "discovery"
    OPERATIONAL = "operational"
    REVOKED = "revoked"


def key_fingerprint(value: bytes) -> str:
    """Short non-reversible tag for a key, safe to write into traces."""
    return hashlib.sha256(value).hexdigest()[:12]


def cluster_context(sender: int, dest: int) -> bytes:
    return encode_id(sender) + encode_id(dest)


def seq_context(node_id: int, round_: int) -> bytes:
    return encode_id(node_id) + struct.pack(">I", round_)


def pad_sequence(seq: bytes) -> bytes:
    return seq + bytes(16 - SEQ_LEN)


@dataclass
class NodeRuntime:
    store: NodeKeyStore
    rng: random.Random
    t_min: int
    phase: NodePhase = NodePhase.PRE_DEPLOY
    hello_nonce: bytes | None = None
    # HELLOs already answered this discovery window, sender -> nonce
    pending_hellos: dict[int, bytes] = field(default_factory=dict)
    timer: float | None = None
    revoked_set: set[int] = field(default_factory=set)
    last_chain_index: int = 0
    seen_chain_indices: set[int] = field(default_factory=set)
    # fingerprints of every cluster key accepted per sender, to refuse rollbacks
    cluster_history: dict[int, set[str]] = field(default_factory=dict)
    obeys_revocation: bool = True
    counters: Counter = field(default_factory=Counter)
    log: list[tuple[str, dict]] = field(default_factory=list)

    @property
    def node_id(self) -> int:
        return self.store.node_id

    @classmethod
    def boot(
        cls, bundle: PreloadBundle, now: float, rng: random.Random
    ) -> tuple[NodeRuntime, Hello]:
        """Power on a freshly preloaded node: enter discovery and say HELLO."""
        rt = cls(store=bundle.new_store(), rng=rng, t_min=bundle.t_min)
        return rt, rt._start_discovery(now)

    @classmethod
    def from_store(
        cls, store: NodeKeyStore, now: float, rng: random.Random, t_min: int,
        obeys_revocation: bool = True,
    ) -> tuple[NodeRuntime, Hello | None]:
        """Boot a device from an existing (possibly captured) key store.

        A store that still holds K_in goes through discovery; an erased one
        comes up operational and never sends HELLO.
        """
        rt = cls(store=store, rng=rng, t_min=t_min, obeys_revocation=obeys_revocation)
        if store.erased:
            rt._set_phase(NodePhase.OPERATIONAL)
            return rt, None
        return rt, rt._start_discovery(now)

    def _start_discovery(self, now: float) -> Hello:
        self._set_phase(NodePhase.DISCOVERY)
        self.hello_nonce = Nonce(self.rng.getrandbits(64).to_bytes(8, "big"))
        self.timer = now + self.t_min
        return Hello(sender=self.node_id, nonce=self.hello_nonce)

    def _set_phase(self, phase: NodePhase) -> None:
        old = self.phase
        self.phase = phase
        self.log.append(("phase", {"from": old.value, "to": phase.value}))

    def _drop(self, reason: str, msg: WireMessage) -> None:
        self.counters[reason] += 1
        self.log.append(("drop", {"reason": reason, "type": msg.type.name, "from": msg.sender}))

    # dispatch

    def receive(self, msg: WireMessage, now: float) -> list[WireMessage]:
        if self.phase in (NodePhase.REVOKED, NodePhase.PRE_DEPLOY):
            return []
        if isinstance(msg, Hello):
            ack = self.handle_hello(msg, now)
            return [ack] if ack else []
        if isinstance(msg, Ack):
            self.handle_ack(msg, now)
            return []
        if isinstance(msg, ClusterKey):
            self.handle_cluster_key(msg)
            return []
        if isinstance(msg, SeqRequest):
            resp = self.handle_seq_request(msg)
            return [resp] if resp else []
        if isinstance(msg, Revoke):
            return list(self.handle_revoke(msg))
        # SEQ_RESP is addressed to the base station; nodes ignore it
        return []

    # discovery

    def handle_hello(self, msg: Hello, now: float) -> Ack | None:
        if msg.sender == self.node_id:
            return None
        if self.phase is not NodePhase.DISCOVERY:
            self._drop("hello_outside_discovery", msg)
            return None
        if msg.sender in self.revoked_set:
            self._drop("revoked_sender", msg)
            return None
        if self.pending_hellos.get(msg.sender) == bytes(msg.nonce):
            self._drop("duplicate_hello", msg)
            return None
        self.pending_hellos[msg.sender] = bytes(msg.nonce)
        unsigned = Ack(sender=self.node_id, dest=msg.sender, nonce=msg.nonce, tag=bytes(8))
        tag = mac(self.store.own_master_key, unsigned.body())
        return Ack(sender=self.node_id, dest=msg.sender, nonce=msg.nonce, tag=tag)

    def handle_ack(self, msg: Ack, now: float) -> None:
        if msg.dest != self.node_id or msg.sender == self.node_id:
            return
        if self.phase is not NodePhase.DISCOVERY or self.store.erased:
            self._drop("bootstrap_erased", msg)
            return
        if msg.sender in self.revoked_set:
            self._drop("revoked_sender", msg)
            return
        if bytes(msg.nonce) != self.hello_nonce:
            self._drop("nonce_mismatch", msg)
            return
        if msg.sender in self.store.pairwise_keys:
            self._drop("replayed_ack", msg)
            return
        try:
            k_v = derive_master_key(self.store.initial_key, msg.sender)
        except BootstrapErased:
            self._drop("bootstrap_erased", msg)
            return
        if not verify_mac(k_v, msg.body(), msg.tag):
            self._drop("mac_failure", msg)
            return
        self.store.neighbor_master_cache[msg.sender] = k_v
        key = self.store.pair_key_for(msg.sender)
        self.store.set_pairwise(msg.sender, key)
        self.log.append(("pairwise", {"peer": msg.sender, "fp": key_fingerprint(key.value)}))

    def on_tmin_expire(self, now: float) -> list[ClusterKey]:
        """Erase bootstrap keys, go operational, hand out a fresh cluster key."""
        if self.phase is not NodePhase.DISCOVERY:
            return []
        erase_bootstrap(self.store)
        self.pending_hellos.clear()
        self.timer = None
        self.log.append(("erased", {}))
        self._set_phase(NodePhase.OPERATIONAL)
        return self._new_cluster_key()

    def _new_cluster_key(self) -> list[ClusterKey]:
        key = generate_cluster_key(self.rng)
        self.store.own_cluster_key = key
        self.log.append(("cluster_gen", {"fp": key_fingerprint(key.value)}))
        out = []
        for peer in sorted(self.store.pairwise_keys):
            blob = wrap_key(self.store.pairwise_keys[peer], key, cluster_context(self.node_id, peer))
            out.append(ClusterKey(sender=self.node_id, dest=peer, blob=blob))
        return out

    def handle_cluster_key(self, msg: ClusterKey) -> None:
        if msg.dest != self.node_id:
            return
        if msg.sender in self.revoked_set:
            self._drop("revoked_sender", msg)
            return
        kek = self.store.pairwise_keys.get(msg.sender)
        if kek is None:
            self._drop("unknown_sender", msg)
            return
        try:
            key = unwrap_key(kek, msg.blob, cluster_context(msg.sender, msg.dest), KeyRole.CLUSTER)
        except AuthenticationFailure:
            self._drop("auth_failure", msg)
            return
        fp = key_fingerprint(key.value)
        current = self.store.neighbor_cluster_keys.get(msg.sender)
        history = self.cluster_history.setdefault(msg.sender, set())
        if current == key:
            return
        if fp in history:
            self._drop("stale_cluster_key", msg)
            return
        history.add(fp)
        self.store.neighbor_cluster_keys[msg.sender] = key
        self.log.append(("cluster_rx", {"peer": msg.sender, "fp": fp}))

    # base-station traffic

    def _chain_ok(self, index: int, element: bytes) -> bool:
        if index > self.last_chain_index + MAX_CHAIN_SKIP:
            return False
        return chain_verify(element, self.store.chain_commitment, index)

    def handle_seq_request(self, msg: SeqRequest) -> SeqResponse | None:
        if self.phase is not NodePhase.OPERATIONAL:
            self._drop("audit_before_operational", msg)
            return None
        if msg.round <= self.last_chain_index:
            self._drop("stale_round", msg)
            return None
        if not self._chain_ok(msg.round, msg.chain_elem):
            self._drop("chain_failure", msg)
            return None
        self.last_chain_index = msg.round
        self.seen_chain_indices.add(msg.round)
        blob = wrap_block(
            self.store.individual_key,
            pad_sequence(self.store.sequence_number),
            seq_context(self.node_id, msg.round),
        )
        self.log.append(("seq_resp", {"round": msg.round}))
        return SeqResponse(sender=self.node_id, round=msg.round, blob=blob)

    def handle_revoke(self, msg: Revoke) -> list[ClusterKey]:
        if msg.round in self.seen_chain_indices:
            self._drop("stale_round", msg)
            return []
        if not self._chain_ok(msg.round, msg.chain_elem):
            self._drop("chain_failure", msg)
            return []
        if not verify_mac(self.store.global_key, msg.body(), msg.tag):
            self._drop("auth_failure", msg)
            return []
        self.seen_chain_indices.add(msg.round)
        self.last_chain_index = max(self.last_chain_index, msg.round)
        target = msg.revoked
        if target in self.revoked_set:
            return []
        if target == self.node_id:
            if not self.obeys_revocation:
                return []
            self.revoked_set.add(target)
            self.log.append(("revoke_applied", {"revoked": target}))
            self._set_phase(NodePhase.REVOKED)
            return []
        self.revoked_set.add(target)
        was_neighbor = target in self.store.pairwise_keys
        self.store.pairwise_keys.pop(target, None)
        self.store.neighbor_cluster_keys.pop(target, None)
        self.store.neighbor_master_cache.pop(target, None)
        self.pending_hellos.pop(target, None)
        self.log.append(("revoke_applied", {"revoked": target}))
        if was_neighbor and self.phase is NodePhase.OPERATIONAL:
            return self._new_cluster_key()
        return []
