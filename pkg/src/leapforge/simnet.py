"""Deterministic discrete-event simulation of a sensor field.

One :class:`Simulation` owns an event heap ordered by (time, seq), a unit-disk
radio, the honest nodes, the base station and any adversary devices. Every
random draw comes from a named substream of the run seed, so a
(scenario, seed) pair always produces the same trace.

Base-station traffic is carried by two simulator services rather than by a
routing protocol: SEQ_REQ and REVOKE frames are flooded (every honest node
rebroadcasts a given frame once), and SEQ_RESP frames travel to the base
station along a shortest hop path of honest relays.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import itertools
import json
import math
import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .basestation import AuditRegistry, verdict_rows
from .crypto import KEY_LEN, ChainExhausted, KeyRole, Nonce, SymKey, prf
from .keying import (
    NodeKeyStore,
    PreloadBundle,
    derive_individual_key,
    derive_master_key,
    encode_id,
    preload_network,
    random_key,
)
from .messages import (
    BASE_STATION_ID,
    Ack,
    Hello,
    MalformedMessage,
    Revoke,
    SeqRequest,
    SeqResponse,
    WireMessage,
    encode,
    try_decode,
)
from .node import NodePhase, NodeRuntime
from .scenario import Clone, Eavesdrop, HelloFlood, Replay, Scenario

ADVERSARY_HANDLE_BASE = 0x10000
REPLAY_SPACING_MS = 0.1


class UnknownNode(KeyError):
    pass


class SimulationError(RuntimeError):
    """An internal invariant of the simulator was violated."""


def substream(seed: int, *labels: Any) -> random.Random:
    """Independent, reproducible RNG for one purpose within a run."""
    digest = hashlib.sha256(repr((seed, *labels)).encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


class EventKind(enum.Enum):
    BOOT = "boot"
    DELIVERY = "delivery"
    TIMER_FIRE = "timer_fire"
    ADVERSARY_ACTION = "adversary_action"
    AUDIT_TICK = "audit_tick"


@dataclass(order=True)
class SimEvent:
    time: float
    seq: int
    kind: EventKind = field(compare=False)
    payload: dict = field(compare=False, default_factory=dict)
    scheduled_at: float = field(compare=False, default=0.0)


@dataclass
class RadioModel:
    range_m: float
    latency_ms: float
    jitter_ms: float
    loss_prob: float
    positions: dict[int, tuple[float, float]] = field(default_factory=dict)
    tx_multiplier: dict[int, float] = field(default_factory=dict)
    rx_multiplier: dict[int, float] = field(default_factory=dict)

    def effective_range(self, sender: int, receiver: int) -> float:
        return self.range_m * max(
            self.tx_multiplier.get(sender, 1.0), self.rx_multiplier.get(receiver, 1.0)
        )

    def in_range(self, sender: int, receiver: int) -> bool:
        (x1, y1), (x2, y2) = self.positions[sender], self.positions[receiver]
        return math.hypot(x1 - x2, y1 - y2) <= self.effective_range(sender, receiver)

    def hop_delay(self, rng: random.Random) -> float:
        return self.latency_ms + rng.uniform(0.0, self.jitter_ms)

    def lost(self, rng: random.Random) -> bool:
        return rng.random() < self.loss_prob

    def deliver_broadcast(
        self, sender: int, now: float, rng: random.Random, lost: list[int] | None = None
    ) -> list[tuple[int, float]]:
        """(receiver, arrival) for every in-range receiver the frame survives to.

        Receivers are visited in id order and each gets one loss draw and one
        jitter draw, so the RNG stream does not depend on dict ordering.
        """
        if sender not in self.positions:
            raise UnknownNode(sender)
        out = []
        for receiver in sorted(self.positions):
            if receiver == sender or not self.in_range(sender, receiver):
                continue
            dropped = self.lost(rng)
            delay = self.hop_delay(rng)
            if dropped:
                if lost is not None:
                    lost.append(receiver)
                continue
            out.append((receiver, now + delay))
        return out


@dataclass
class Device:
    handle: int
    kind: str  # node | base | clone | hello_flood | replay | eavesdrop
    position: tuple[float, float]
    runtime: NodeRuntime | None = None
    config: Any = None
    rng: random.Random | None = None
    seen_floods: set[bytes] = field(default_factory=set)
    recorded: list[bytes] = field(default_factory=list)
    store_size: int = 0

    @property
    def relays(self) -> bool:
        return (
            self.kind == "node"
            and self.runtime is not None
            and self.runtime.phase in (NodePhase.DISCOVERY, NodePhase.OPERATIONAL)
        )


@dataclass
class RunTrace:
    scenario: str
    seed: int
    events: list[dict]
    audit_rows: list[tuple[int, int, str, str, float]]

    def to_jsonl(self) -> str:
        return "".join(event_line(e) + "\n" for e in self.events)

    def audit_csv(self) -> str:
        lines = ["round,node_id,status,reason,sim_time_ms"]
        lines += [f"{r},{u},{s},{why},{t!r}" for r, u, s, why, t in self.audit_rows]
        return "\n".join(lines) + "\n"


def event_line(event: dict) -> str:
    """One JSON-lines record with a fixed field order."""
    return (
        '{"t_ms": ' + json.dumps(event["t_ms"])
        + ', "kind": ' + json.dumps(event["kind"])
        + ', "src": ' + json.dumps(event["src"])
        + ', "dst": ' + json.dumps(event["dst"])
        + ', "detail": ' + json.dumps(event["detail"], sort_keys=True) + "}"
    )


def read_trace(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


class Simulation:
    def __init__(self, scenario: Scenario, seed: int | None = None):
        scenario.validate()
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.now = 0.0
        self.events: list[dict] = []
        self.audit_rows: list[tuple[int, int, str, str, float]] = []
        self._queue: list[SimEvent] = []
        self._seq = itertools.count()
        self._finished = False

        key_rng = substream(self.seed, "keys")
        self.k_in = random_key(key_rng, KeyRole.INITIAL)
        self.k_m = random_key(key_rng, KeyRole.GLOBAL)
        ids = scenario.node_ids
        bundles, reg_seed = preload_network(
            len(ids), self.k_in, self.k_m, key_rng,
            t_min=scenario.t_min_ms, chain_length=scenario.chain_length,
        )
        self.bundles: dict[int, PreloadBundle] = {b.node_id: b for b in bundles}
        self.registry = AuditRegistry.from_seed(reg_seed, scenario.response_deadline_ms)

        self.radio_rng = substream(self.seed, "radio")
        r = scenario.radio
        self.radio = RadioModel(r.range_m, r.latency_ms, r.jitter_ms, r.loss_prob)
        self.devices: dict[int, Device] = {}
        positions = self._place_nodes()
        bs_pos = scenario.base_station or self._default_center(positions)
        self._add_device(Device(BASE_STATION_ID, "base", bs_pos))
        for u, pos in positions.items():
            self._add_device(Device(u, "node", pos, rng=substream(self.seed, "node", u)))

        self._record("setup", detail={
            "nodes": {str(u): list(p) for u, p in positions.items()},
            "base": list(bs_pos),
            "range_m": r.range_m,
            "t_min_ms": scenario.t_min_ms,
        })

        boot_rng = substream(self.seed, "boot")
        for u in ids:
            t = boot_rng.uniform(0.0, scenario.boot_jitter_ms) if scenario.boot_jitter_ms else 0.0
            self._push(t, EventKind.BOOT, handle=u)
        for t in scenario.audit_times():
            self._push(t, EventKind.AUDIT_TICK, action="begin")
        for i, cfg in enumerate(scenario.adversaries):
            self._setup_adversary(i, cfg, bs_pos)

    # setup helpers

    def _place_nodes(self) -> dict[int, tuple[float, float]]:
        s = self.scenario
        if s.placements is not None:
            return {u: tuple(map(float, s.placements[u])) for u in sorted(s.placements)}
        rng = substream(self.seed, "placement")
        return {u: (rng.uniform(0, s.area_m), rng.uniform(0, s.area_m)) for u in s.node_ids}

    def _default_center(self, positions: dict[int, tuple[float, float]]) -> tuple[float, float]:
        if self.scenario.placements is None:
            half = self.scenario.area_m / 2
            return (half, half)
        xs = [p[0] for p in positions.values()]
        ys = [p[1] for p in positions.values()]
        return ((min(xs) + max(xs)) / 2, (min(ys) + max(ys)) / 2)

    def _add_device(self, dev: Device, tx: float = 1.0, rx: float = 1.0) -> None:
        self.devices[dev.handle] = dev
        self.radio.positions[dev.handle] = dev.position
        self.radio.tx_multiplier[dev.handle] = tx
        self.radio.rx_multiplier[dev.handle] = rx

    def _setup_adversary(self, index: int, cfg: Any, default_pos: tuple[float, float]) -> None:
        handle = ADVERSARY_HANDLE_BASE + index
        pos = tuple(cfg.position) if cfg.position is not None else default_pos
        rng = substream(self.seed, "adversary", index)
        if isinstance(cfg, HelloFlood):
            dev = Device(handle, "hello_flood", pos, config=cfg, rng=rng)
            self._add_device(dev, tx=cfg.tx_multiplier, rx=cfg.tx_multiplier)
            for k in range(cfg.hello_count):
                self._push(cfg.start_ms + k * cfg.interval_ms, EventKind.ADVERSARY_ACTION,
                           handle=handle, action="flood_hello")
        elif isinstance(cfg, Clone):
            # the clone device only appears on the radio once it is built
            self.devices[handle] = Device(handle, "clone", pos, config=cfg, rng=rng)
            self._push(cfg.capture_ms, EventKind.ADVERSARY_ACTION, handle=handle, action="capture")
        elif isinstance(cfg, Replay):
            self._add_device(Device(handle, "replay", pos, config=cfg, rng=rng), tx=cfg.tx_multiplier)
            self._push(cfg.replay_ms, EventKind.ADVERSARY_ACTION, handle=handle, action="replay")
        elif isinstance(cfg, Eavesdrop):
            self._add_device(Device(handle, "eavesdrop", pos, config=cfg, rng=rng), rx=cfg.rx_multiplier)

    # event plumbing

    def _push(self, time: float, kind: EventKind, **payload: Any) -> None:
        time = float(time)
        if time < self.now:
            raise SimulationError(f"event at {time} scheduled before now ({self.now})")
        heapq.heappush(self._queue, SimEvent(time, next(self._seq), kind, payload, self.now))

    def _record(self, kind: str, src: int | None = None, dst: int | None = None, **detail: Any) -> None:
        if "detail" in detail and len(detail) == 1:
            detail = detail["detail"]
        self.events.append({"t_ms": self.now, "kind": kind, "src": src, "dst": dst, "detail": detail})

    def run(self, until: float | None = None) -> RunTrace:
        """Process events up to ``until`` (default: the horizon) and return the trace."""
        horizon = self.scenario.horizon_ms
        limit = horizon if until is None else min(until, horizon)
        while self._queue and self._queue[0].time <= limit:
            ev = heapq.heappop(self._queue)
            if ev.time < ev.scheduled_at:
                raise SimulationError("event causality violated")
            self.now = ev.time
            self._dispatch(ev)
        if until is not None and until > self.now:
            self.now = min(until, horizon)
        if until is None and not self._finished:
            self._finished = True
            self._record("end", detail={"quiescent": not self._queue})
        return self.trace()

    def trace(self) -> RunTrace:
        return RunTrace(self.scenario.name, self.seed, self.events, self.audit_rows)

    def _dispatch(self, ev: SimEvent) -> None:
        p = ev.payload
        if ev.kind is EventKind.DELIVERY:
            self._on_delivery(self.devices[p["handle"]], p["frame"], p["src"], p.get("uplink", False))
        elif ev.kind is EventKind.BOOT:
            self._on_boot(self.devices[p["handle"]])
        elif ev.kind is EventKind.TIMER_FIRE:
            dev = self.devices[p["handle"]]
            if dev.runtime is not None:
                self._emit(dev, dev.runtime.on_tmin_expire(self.now))
                self._drain(dev)
        elif ev.kind is EventKind.AUDIT_TICK:
            if p["action"] == "begin":
                self._audit_begin()
            else:
                self._audit_close()
        elif ev.kind is EventKind.ADVERSARY_ACTION:
            self._adversary_action(self.devices[p["handle"]], p)

    # radio

    def _broadcast(self, dev: Device, msg: WireMessage | bytes, relay: bool = False) -> None:
        frame = msg if isinstance(msg, bytes) else encode(msg)
        self._record("tx", src=dev.handle, type=_frame_type(frame), bytes=len(frame), relay=relay)
        lost: list[int] = []
        for receiver, arrival in self.radio.deliver_broadcast(dev.handle, self.now, self.radio_rng, lost):
            self._push(arrival, EventKind.DELIVERY, handle=receiver, frame=frame, src=dev.handle)
        for receiver in lost:
            self._record("drop", src=dev.handle, dst=receiver, reason="radio_loss", type=_frame_type(frame))

    def _emit(self, dev: Device, msgs: Iterable[WireMessage]) -> None:
        for m in msgs:
            if isinstance(m, SeqResponse):
                self._uplink(dev, m)
            else:
                self._broadcast(dev, m)

    def _uplink(self, dev: Device, msg: SeqResponse) -> None:
        frame = encode(msg)
        path = self._route_to_base(dev.handle)
        if path is None:
            self._record("drop", src=dev.handle, dst=BASE_STATION_ID, reason="no_route", type="SEQ_RESP")
            return
        t = self.now
        for hop, (a, b) in enumerate(zip(path, path[1:])):
            self._record("tx", src=a, dst=b, type="SEQ_RESP", bytes=len(frame), relay=hop > 0)
            self._overhear(a, frame)
            dropped = self.radio.lost(self.radio_rng)
            t += self.radio.hop_delay(self.radio_rng)
            if dropped:
                self._record("drop", src=a, dst=b, reason="radio_loss", type="SEQ_RESP")
                return
        self._push(t, EventKind.DELIVERY, handle=BASE_STATION_ID, frame=frame, src=dev.handle, uplink=True)

    def _route_to_base(self, start: int) -> list[int] | None:
        relays = sorted(h for h, d in self.devices.items() if d.relays and h != start)
        parent: dict[int, int | None] = {start: None}
        queue = deque([start])
        while queue:
            cur = queue.popleft()
            if cur == BASE_STATION_ID:
                path = [cur]
                while parent[path[-1]] is not None:
                    path.append(parent[path[-1]])
                return path[::-1]
            for nxt in [BASE_STATION_ID] + relays:
                if nxt not in parent and self.radio.in_range(cur, nxt):
                    parent[nxt] = cur
                    queue.append(nxt)
        return None

    def _overhear(self, sender: int, frame: bytes) -> None:
        for dev in self.devices.values():
            if dev.kind == "eavesdrop" and dev.handle in self.radio.positions \
                    and self.radio.in_range(sender, dev.handle):
                dev.recorded.append(frame)

    # handlers

    def _on_boot(self, dev: Device) -> None:
        rt, hello = NodeRuntime.boot(self.bundles[dev.handle], self.now, dev.rng)
        dev.runtime = rt
        self._drain(dev)
        self._broadcast(dev, hello)
        self._push(rt.timer, EventKind.TIMER_FIRE, handle=dev.handle)

    def _on_delivery(self, dev: Device, frame: bytes, src: int, uplink: bool) -> None:
        decoded = try_decode(frame)
        if isinstance(decoded, MalformedMessage):
            self._record("drop", src=src, dst=dev.handle, reason="malformed", detail_reason=decoded.reason.value)
            return
        msg = decoded
        if dev.kind == "base":
            if uplink and isinstance(msg, SeqResponse):
                self._record("rx", src=src, dst=dev.handle, type="SEQ_RESP", claimed=msg.sender)
                self.registry.ingest_response(msg, self.now)
            return
        if dev.kind in ("replay", "eavesdrop", "hello_flood"):
            self._adversary_hears(dev, frame, msg)
            return
        if isinstance(msg, (SeqRequest, Revoke)):
            if frame in dev.seen_floods:
                return
            dev.seen_floods.add(frame)
            if dev.relays:
                self._broadcast(dev, frame, relay=True)
        rt = dev.runtime
        if rt is None or rt.phase in (NodePhase.REVOKED, NodePhase.PRE_DEPLOY):
            return
        dest = getattr(msg, "dest", None)
        if dest is None or dest == rt.node_id:
            self._record("rx", src=src, dst=dev.handle, type=msg.type.name)
        out = rt.receive(msg, self.now)
        self._drain(dev)
        self._emit(dev, out)

    def deliver_direct(self, handle: int, frame: bytes) -> None:
        """Hand ``frame`` straight to a node's handler at the current time."""
        dev = self.devices[handle]
        rt = dev.runtime
        decoded = try_decode(frame)
        if rt is None or isinstance(decoded, MalformedMessage):
            return
        if rt.phase in (NodePhase.REVOKED, NodePhase.PRE_DEPLOY):
            return
        out = rt.receive(decoded, self.now)
        self._drain(dev)
        self._emit(dev, out)

    def _drain(self, dev: Device) -> None:
        rt = dev.runtime
        if not rt.log:
            return
        claimed = rt.node_id if dev.kind == "clone" else None
        for kind, detail in rt.log:
            if claimed is not None:
                detail = dict(detail, claimed=claimed)
            self._record(kind, src=dev.handle, detail=detail)
        rt.log.clear()
        size = rt.store.dump_size()
        if size != dev.store_size:
            dev.store_size = size
            self._record("store", src=dev.handle, bytes=size)

    # audits

    def _audit_begin(self) -> None:
        reg = self.registry
        try:
            req = reg.begin_audit(self.now)
        except ChainExhausted:
            self._record("chain_exhausted", src=BASE_STATION_ID, detail={"phase": "begin"})
            return
        self._record("audit_begin", src=BASE_STATION_ID, round=reg.current_round, index=req.round)
        base = self.devices[BASE_STATION_ID]
        base.seen_floods.add(encode(req))
        self._broadcast(base, req)
        self._push(reg.deadline, EventKind.AUDIT_TICK, action="close")

    def _audit_close(self) -> None:
        reg = self.registry
        try:
            verdict, revokes = reg.close_audit(self.now)
        except ChainExhausted:
            reg.open = False
            self._record("chain_exhausted", src=BASE_STATION_ID, detail={"phase": "revoke"})
            return
        for row in verdict_rows(verdict):
            rnd, u, status, reason, t = row
            self.audit_rows.append(row)
            self._record("verdict", src=BASE_STATION_ID, round=rnd, node=u, status=status,
                         reason=reason, decided_ms=t)
        base = self.devices[BASE_STATION_ID]
        for rv in revokes:
            self._record("revoke_issued", src=BASE_STATION_ID, revoked=rv.revoked,
                         round=verdict.round, index=rv.round)
            base.seen_floods.add(encode(rv))
            self._broadcast(base, rv)

    # adversaries

    def _adversary_hears(self, dev: Device, frame: bytes, msg: WireMessage) -> None:
        cfg = dev.config
        if dev.kind == "eavesdrop":
            dev.recorded.append(frame)
        elif dev.kind == "replay":
            lo, hi = cfg.record_window_ms
            if lo <= self.now <= hi:
                dev.recorded.append(frame)
        elif dev.kind == "hello_flood":
            if isinstance(msg, Hello) and msg.sender != cfg.attacker_id:
                forged = Ack(
                    sender=cfg.attacker_id, dest=msg.sender, nonce=msg.nonce,
                    tag=dev.rng.getrandbits(64).to_bytes(8, "big"),
                )
                self._record("adversary", src=dev.handle, action="forged_ack", target=msg.sender)
                self._broadcast(dev, forged)
            elif isinstance(msg, Ack) and msg.dest == cfg.attacker_id:
                self._record("adversary", src=dev.handle, action="ack_received", peer=msg.sender)

    def _adversary_action(self, dev: Device, p: dict) -> None:
        action = p["action"]
        cfg = dev.config
        if action == "flood_hello":
            nonce = Nonce(dev.rng.getrandbits(64).to_bytes(8, "big"))
            self._record("adversary", src=dev.handle, action="flood_hello")
            self._broadcast(dev, Hello(sender=cfg.attacker_id, nonce=nonce))
        elif action == "capture":
            self._spawn_clone(dev)
        elif action == "replay":
            self._record("adversary", src=dev.handle, action="replay", frames=len(dev.recorded))
            for i, frame in enumerate(list(dev.recorded)):
                self._push(self.now + i * REPLAY_SPACING_MS, EventKind.ADVERSARY_ACTION,
                           handle=dev.handle, action="replay_frame", frame=frame)
        elif action == "replay_frame":
            self._broadcast(dev, p["frame"])

    def _spawn_clone(self, dev: Device) -> None:
        cfg: Clone = dev.config
        dump = self.capture_now(cfg.victim_id)
        stolen = NodeKeyStore.from_bytes(dump)
        store = build_clone_store(stolen, cfg, dev.rng)
        victim_rt = self.devices[cfg.victim_id].runtime
        self._record("adversary", src=dev.handle, action="capture", victim=cfg.victim_id,
                     claimed=store.node_id, has_initial_key=stolen.initial_key is not None)
        rt, hello = NodeRuntime.from_store(
            store, self.now, dev.rng, int(self.scenario.t_min_ms), obeys_revocation=False,
        )
        if victim_rt is not None:
            rt.last_chain_index = victim_rt.last_chain_index
            rt.seen_chain_indices = set(victim_rt.seen_chain_indices)
            # resume the victim's bootstrap window rather than opening a new one
            if hello is not None and victim_rt.timer is not None and victim_rt.timer > self.now:
                rt.timer = victim_rt.timer
        dev.runtime = rt
        self._add_device(dev)
        self._drain(dev)
        if hello is not None:
            self._broadcast(dev, hello)
            self._push(rt.timer, EventKind.TIMER_FIRE, handle=dev.handle)

    # capture oracle

    def capture_now(self, node_id: int) -> bytes:
        dev = self.devices.get(node_id)
        if dev is None or dev.kind != "node":
            raise UnknownNode(node_id)
        if dev.runtime is None:
            return self.bundles[node_id].new_store().to_bytes()
        return dev.runtime.store.to_bytes()

    def capture_node(self, node_id: int, at: float) -> bytes:
        """Advance the run to ``at`` and dump node ``node_id``'s key store."""
        if node_id not in self.bundles:
            raise UnknownNode(node_id)
        if at < self.now:
            raise ValueError(f"cannot capture in the past ({at} < {self.now})")
        if at > self.scenario.horizon_ms:
            raise ValueError("capture time beyond the run horizon")
        self.run(until=at)
        return self.capture_now(node_id)

    # inspection helpers

    def node_runtimes(self) -> dict[int, NodeRuntime]:
        return {h: d.runtime for h, d in self.devices.items() if d.kind == "node" and d.runtime}

    def honest_ids(self) -> list[int]:
        return sorted(self.bundles)

    def in_range_pairs(self) -> list[tuple[int, int]]:
        ids = self.honest_ids()
        return [(u, v) for u, v in itertools.combinations(ids, 2)
                if self.radio.in_range(u, v) and self.radio.in_range(v, u)]

    def connected_to_base(self) -> set[int]:
        """Honest, non-revoked nodes reachable from the base station by relays."""
        reach = set()
        queue = deque([BASE_STATION_ID])
        while queue:
            cur = queue.popleft()
            for h, d in sorted(self.devices.items()):
                if h in reach or d.kind != "node" or not d.relays:
                    continue
                if self.radio.in_range(cur, h):
                    reach.add(h)
                    queue.append(h)
        return reach

    def all_key_values(self) -> set[bytes]:
        values = {self.k_in.value, self.k_m.value}
        for d in self.devices.values():
            if d.runtime is not None:
                values.update(k.value for k in d.runtime.store.all_keys())
        return values

    def learned_keys(self, handle: int) -> set[bytes]:
        """Key values an eavesdropper saw in plaintext in its recorded frames."""
        return scan_for_keys(self.devices[handle].recorded, self.all_key_values())


def build_clone_store(stolen: NodeKeyStore, cfg: Clone, rng: random.Random) -> NodeKeyStore:
    """Key store an adversary can field after capturing ``stolen``.

    Same id: the whole store is reused. A fabricated id gets keys derived from
    whatever the dump exposes (K_in, the global key). The sequence number is
    guessed unless ``steal_sequence`` is set and the id matches.
    """
    guess = rng.getrandbits(64).to_bytes(8, "big")
    claimed = stolen.node_id if cfg.clone_id is None else cfg.clone_id
    if claimed == stolen.node_id:
        store = stolen.copy()
        if not cfg.steal_sequence:
            store.sequence_number = guess
        return store
    if stolen.initial_key is not None:
        own_master = derive_master_key(stolen.initial_key, claimed)
    else:
        own_master = random_key(rng, KeyRole.MASTER)
    return NodeKeyStore(
        node_id=claimed,
        individual_key=derive_individual_key(stolen.global_key, claimed),
        own_master_key=own_master,
        global_key=stolen.global_key,
        sequence_number=guess,
        chain_commitment=stolen.chain_commitment,
        initial_key=stolen.initial_key,
        erased=stolen.initial_key is None,
    )


def _frame_type(frame: bytes) -> str:
    decoded = try_decode(frame)
    if isinstance(decoded, MalformedMessage):
        return "MALFORMED"
    return decoded.type.name


def scan_for_keys(frames: Iterable[bytes], key_values: set[bytes]) -> set[bytes]:
    found = set()
    for frame in frames:
        for i in range(len(frame) - KEY_LEN + 1):
            window = bytes(frame[i:i + KEY_LEN])
            if window in key_values:
                found.add(window)
    return found


def derivable_values(dump: bytes, candidate_ids: Iterable[int], depth: int = 2) -> set[bytes]:
    """Every 16-byte value reachable from a store dump by PRF chains of ``depth``.

    Starts from all key bytes in the dump and applies f(k, id) for every
    candidate id, repeatedly. Depth 2 covers f(f(K_in, v), u), the longest
    derivation in the scheme.
    """
    store = NodeKeyStore.from_bytes(dump)
    frontier = {k.value for k in store.all_keys()}
    reached = set(frontier)
    ids = [encode_id(u) for u in candidate_ids]
    probe = KeyRole.CHAIN_ELEMENT
    for _ in range(depth):
        nxt = {prf(SymKey(k, probe), i, probe).value for k in frontier for i in ids}
        frontier = nxt - reached
        reached |= nxt
    return reached


def localization_violations(
    dump: bytes, network_pairwise: dict[frozenset, bytes], candidate_ids: Iterable[int]
) -> set[frozenset]:
    """Network pairs whose key is derivable from ``dump`` but not stored in it.

    ``network_pairwise`` maps each established pair {u, v} to its key.
    """
    store = NodeKeyStore.from_bytes(dump)
    local = {frozenset((store.node_id, p)) for p in store.pairwise_keys}
    reachable = derivable_values(dump, candidate_ids)
    return {pair for pair, key in network_pairwise.items() if key in reachable and pair not in local}


def network_pairwise_keys(sim: Simulation) -> dict[frozenset, bytes]:
    out = {}
    for u, rt in sim.node_runtimes().items():
        for v, key in rt.store.pairwise_keys.items():
            out[frozenset((u, v))] = key.value
    return out


def capture_node(scenario: Scenario, node_id: int, at: float, seed: int | None = None) -> bytes:
    return Simulation(scenario, seed).capture_node(node_id, at)


def run(scenario: Scenario, seed: int | None = None) -> RunTrace:
    return Simulation(scenario, seed).run()


__all__ = [
    "Device", "EventKind", "RadioModel", "RunTrace", "SimEvent", "Simulation",
    "SimulationError", "UnknownNode", "build_clone_store", "capture_node",
    "derivable_values", "event_line", "localization_violations",
    "network_pairwise_keys", "read_trace", "run", "scan_for_keys", "substream",
]
