"""Base station: sequence-number audits, verdicts, and revocation broadcasts."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .crypto import AuthenticationFailure, HashChain, SymKey, mac, unwrap_block
from .keying import RegistrySeed, derive_individual_key
from .messages import Revoke, SeqRequest, SeqResponse
from .node import pad_sequence, seq_context

DEFAULT_RESPONSE_DEADLINE_MS = 1000


class AuditStateError(RuntimeError):
    """An audit was opened or closed out of order."""


class NodeStatus(enum.Enum):
    UNVERIFIED = "unverified"
    VERIFIED = "verified"
    FLAGGED = "flagged"
    REVOKED = "revoked"


class FlagReason(enum.Enum):
    MISMATCH = "mismatch"
    MISSING = "missing"
    DUPLICATE = "duplicate"


_ALLOWED = {
    NodeStatus.UNVERIFIED: {NodeStatus.VERIFIED, NodeStatus.FLAGGED},
    NodeStatus.VERIFIED: {NodeStatus.FLAGGED},
    NodeStatus.FLAGGED: {NodeStatus.REVOKED},
    NodeStatus.REVOKED: set(),
}


def transition_allowed(old: NodeStatus, new: NodeStatus) -> bool:
    return old is new or new in _ALLOWED[old]


@dataclass
class AuditVerdict:
    round: int
    verified: set[int] = field(default_factory=set)
    flagged: dict[int, FlagReason] = field(default_factory=dict)
    # (node_id, status, reason, sim_time_ms) in decision order
    entries: list[tuple[int, NodeStatus, FlagReason | None, float]] = field(default_factory=list)


@dataclass
class AuditRegistry:
    expected: dict[int, bytes]
    k_m: SymKey
    chain: HashChain
    response_deadline: float = DEFAULT_RESPONSE_DEADLINE_MS
    status: dict[int, NodeStatus] = field(default_factory=dict)
    current_round: int = 0
    request_index: int | None = None
    deadline: float | None = None
    open: bool = False
    responded: set[int] = field(default_factory=set)
    _verdict: AuditVerdict | None = None
    history: list[tuple[int, NodeStatus, NodeStatus]] = field(default_factory=list)

    @classmethod
    def from_seed(cls, seed: RegistrySeed, response_deadline: float = DEFAULT_RESPONSE_DEADLINE_MS):
        reg = cls(
            expected=dict(seed.expected), k_m=seed.k_m, chain=seed.chain,
            response_deadline=response_deadline,
        )
        reg.status = {u: NodeStatus.UNVERIFIED for u in reg.expected}
        return reg

    def _set(self, u: int, new: NodeStatus) -> None:
        old = self.status.get(u, NodeStatus.UNVERIFIED)
        if not transition_allowed(old, new):
            raise AuditStateError(f"node {u}: illegal status change {old.value} -> {new.value}")
        if old is not new:
            self.history.append((u, old, new))
        self.status[u] = new

    def _flag(self, u: int, reason: FlagReason, now: float) -> None:
        verdict = self._verdict
        if u in verdict.flagged or self.status.get(u) is NodeStatus.REVOKED:
            return
        self._set(u, NodeStatus.FLAGGED)
        verdict.verified.discard(u)
        verdict.flagged[u] = reason
        verdict.entries.append((u, NodeStatus.FLAGGED, reason, now))

    def recompute_individual_key(self, u: int) -> SymKey:
        return derive_individual_key(self.k_m, u)

    def begin_audit(self, now: float) -> SeqRequest:
        """Open the next round and return the SEQ_REQ to flood.

        Raises AuditStateError if the previous round is still open and
        ChainExhausted once every chain element has been used.
        """
        if self.open:
            raise AuditStateError(f"round {self.current_round} is still open")
        index, element = self.chain.reveal()
        self.current_round += 1
        self.request_index = index
        self.deadline = now + self.response_deadline
        self.open = True
        self.responded = set()
        self._verdict = AuditVerdict(round=self.current_round)
        return SeqRequest(round=index, chain_elem=element)

    def ingest_response(self, msg: SeqResponse, now: float) -> None:
        if not self.open or now > self.deadline or msg.round != self.request_index:
            return
        u = msg.sender
        if self.status.get(u) is NodeStatus.REVOKED:
            return
        verdict = self._verdict
        if u in self.responded:
            self._flag(u, FlagReason.DUPLICATE, now)
            return
        self.responded.add(u)
        expected = self.expected.get(u)
        if expected is None:
            self._flag(u, FlagReason.MISMATCH, now)
            return
        try:
            block = unwrap_block(self.recompute_individual_key(u), msg.blob, seq_context(u, msg.round))
        except AuthenticationFailure:
            self._flag(u, FlagReason.MISMATCH, now)
            return
        if block != pad_sequence(expected):
            self._flag(u, FlagReason.MISMATCH, now)
            return
        if u in verdict.flagged:
            return
        self._set(u, NodeStatus.VERIFIED)
        verdict.verified.add(u)
        verdict.entries.append((u, NodeStatus.VERIFIED, None, now))

    def close_audit(self, now: float) -> tuple[AuditVerdict, list[Revoke]]:
        """Flag silent nodes, then revoke every flagged node of this round.

        Only a node verified in an earlier round can go Missing. One the base
        station has never heard from stays Unverified, so a node without a
        route is not mistaken for a compromised one.
        """
        if not self.open:
            raise AuditStateError("no audit round is open")
        if now < self.deadline:
            raise AuditStateError(f"deadline {self.deadline} not reached at {now}")
        for u in sorted(self.expected):
            if self.status[u] is NodeStatus.VERIFIED and u not in self.responded:
                self._flag(u, FlagReason.MISSING, now)
        verdict = self._verdict
        revocations = []
        for u in sorted(verdict.flagged):
            index, element = self.chain.reveal()
            unsigned = Revoke(revoked=u, round=index, chain_elem=element, tag=bytes(8))
            revocations.append(Revoke(
                revoked=u, round=index, chain_elem=element, tag=mac(self.k_m, unsigned.body()),
            ))
            self._set(u, NodeStatus.REVOKED)
        self.open = False
        self._verdict = None
        return verdict, revocations


def verdict_rows(verdict: AuditVerdict) -> list[tuple[int, int, str, str, float]]:
    """Audit-log rows ``(round, node_id, status, reason, sim_time_ms)``."""
    return [
        (verdict.round, u, status.value, reason.value if reason else "", t)
        for u, status, reason, t in verdict.entries
    ]

