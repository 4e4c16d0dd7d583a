"""Metrics derived from a run trace, and nothing else.

Because the report is computed only from trace events, a saved
``trace.jsonl`` regenerates exactly the ``metrics.csv`` written at run time.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field, fields


@dataclass
class NodeMetrics:
    node_id: int
    boot_ms: float | None = None
    pairwise_count: int = 0
    pairwise_done_ms: float | None = None
    pairwise_latency_ms: float | None = None
    cluster_ready_ms: float | None = None
    # individual keys are preloaded, so they are ready at boot
    individual_ready_ms: float | None = None
    individual_confirmed_ms: float | None = None
    peak_store_bytes: int = 0


@dataclass
class MetricsReport:
    nodes: dict[int, NodeMetrics] = field(default_factory=dict)
    messages_by_type: dict[str, int] = field(default_factory=dict)
    bytes_by_type: dict[str, int] = field(default_factory=dict)
    detection_latency_ms: dict[int, float | None] = field(default_factory=dict)
    in_range_pairs: int = 0
    agreeing_pairs: int = 0

    @property
    def pairwise_success_fraction(self) -> float:
        if self.in_range_pairs == 0:
            return 1.0
        return self.agreeing_pairs / self.in_range_pairs

    @property
    def total_messages(self) -> int:
        return sum(self.messages_by_type.values())

    @property
    def total_bytes(self) -> int:
        return sum(self.bytes_by_type.values())

    def rows(self) -> list[tuple[str, str, object]]:
        out: list[tuple[str, str, object]] = [
            ("in_range_pairs", "all", self.in_range_pairs),
            ("agreeing_pairs", "all", self.agreeing_pairs),
            ("pairwise_success_fraction", "all", self.pairwise_success_fraction),
            ("messages", "all", self.total_messages),
            ("bytes", "all", self.total_bytes),
        ]
        for t in sorted(self.messages_by_type):
            out.append(("messages", t, self.messages_by_type[t]))
            out.append(("bytes", t, self.bytes_by_type[t]))
        for u in sorted(self.nodes):
            nm = self.nodes[u]
            for f in fields(NodeMetrics):
                if f.name != "node_id":
                    out.append((f.name, str(u), getattr(nm, f.name)))
        for u in sorted(self.detection_latency_ms):
            out.append(("detection_latency_ms", str(u), self.detection_latency_ms[u]))
        return out

    def to_csv(self) -> str:
        lines = ["metric,subject,value"]
        for metric, subject, value in self.rows():
            lines.append(f"{metric},{subject},{_fmt(value)}")
        return "\n".join(lines) + "\n"


def _fmt(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def compute_metrics(events: list[dict]) -> MetricsReport:
    setup = next(e for e in events if e["kind"] == "setup")["detail"]
    positions = {int(u): tuple(p) for u, p in setup["nodes"].items()}
    radio_range = setup["range_m"]
    t_min = setup["t_min_ms"]
    report = MetricsReport(nodes={u: NodeMetrics(u) for u in positions})

    pair_fp: dict[tuple[int, int], tuple[str, float]] = {}
    cluster_first: dict[int, dict[int, float]] = defaultdict(dict)
    cluster_gen: dict[int, float] = {}
    revoked_by: dict[int, set[int]] = defaultdict(set)
    audit_start: dict[int, float] = {}
    issued: dict[int, int] = {}
    applied_last: dict[int, float] = {}
    messages: Counter = Counter()
    nbytes: Counter = Counter()

    for e in events:
        kind, src, t, d = e["kind"], e["src"], e["t_ms"], e["detail"]
        if kind == "tx":
            messages[d["type"]] += 1
            nbytes[d["type"]] += d["bytes"]
            continue
        if kind == "audit_begin":
            audit_start[d["round"]] = t
            continue
        if kind == "revoke_issued":
            issued.setdefault(d["revoked"], d["round"])
            continue
        if kind == "verdict":
            nm = report.nodes.get(d["node"])
            if nm and d["status"] == "verified" and nm.individual_confirmed_ms is None:
                nm.individual_confirmed_ms = d["decided_ms"]
            continue
        nm = report.nodes.get(src)
        if nm is None:
            # base station or adversary device
            continue
        if kind == "phase" and d["to"] == "discovery" and nm.boot_ms is None:
            nm.boot_ms = t
            nm.individual_ready_ms = t
        elif kind == "pairwise":
            nm.pairwise_count += 1
            nm.pairwise_done_ms = t
            pair_fp[(src, d["peer"])] = (d["fp"], t)
        elif kind == "cluster_gen":
            cluster_gen.setdefault(src, t)
        elif kind == "cluster_rx":
            cluster_first[src].setdefault(d["peer"], t)
        elif kind == "revoke_applied":
            revoked_by[src].add(d["revoked"])
            applied_last[d["revoked"]] = max(t, applied_last.get(d["revoked"], -math.inf))
        elif kind == "store":
            nm.peak_store_bytes = max(nm.peak_store_bytes, d["bytes"])

    for u, nm in report.nodes.items():
        if nm.boot_ms is not None and nm.pairwise_done_ms is not None:
            nm.pairwise_latency_ms = nm.pairwise_done_ms - nm.boot_ms
        peers = {v for (a, v) in pair_fp if a == u} - revoked_by[u]
        got = cluster_first.get(u, {})
        if u in cluster_gen and peers <= set(got):
            nm.cluster_ready_ms = max([cluster_gen[u]] + [got[v] for v in peers])

    for u, v in itertools.combinations(sorted(positions), 2):
        (x1, y1), (x2, y2) = positions[u], positions[v]
        if math.hypot(x1 - x2, y1 - y2) > radio_range:
            continue
        report.in_range_pairs += 1
        a, b = pair_fp.get((u, v)), pair_fp.get((v, u))
        if a is None or b is None or a[0] != b[0]:
            continue
        bu, bv = report.nodes[u].boot_ms, report.nodes[v].boot_ms
        if a[1] < bu + t_min and b[1] < bv + t_min:
            report.agreeing_pairs += 1

    for u, rnd in issued.items():
        start = audit_start.get(rnd)
        last = applied_last.get(u)
        report.detection_latency_ms[u] = None if start is None or last is None else last - start

    report.messages_by_type = dict(messages)
    report.bytes_by_type = dict(nbytes)
    return report
