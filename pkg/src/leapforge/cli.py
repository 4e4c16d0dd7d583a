"""Command-line entry point: ``leapforge run | sweep | verify-vectors``.

Exit codes: 0 clean, 1 self-test failure, 2 invalid configuration,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .basestation import AuditStateError, transition_allowed
from .metrics import MetricsReport, compute_metrics
from .node import NodePhase
from .scenario import Scenario, ScenarioInvalid, load_scenario
from .selftest import run_self_test
from .simnet import Simulation, SimulationError

log = logging.getLogger("leapforge")

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_INVALID = 2
EXIT_INVARIANT = 3

_PHASE_ORDER = [p.value for p in NodePhase]

SWEEP_COLUMNS = [
    "node_count", "repeat", "seed", "status", "pairwise_success_fraction",
    "mean_establish_ms", "max_establish_ms", "messages", "bytes", "error",
]


class InvariantViolation(RuntimeError):
    pass


@dataclass
class RunResult:
    sim: Simulation
    trace_jsonl: str
    metrics: MetricsReport
    metrics_csv: str
    audit_csv: str


def check_invariants(sim: Simulation) -> list[str]:
    """Post-run structural checks; an empty list means the run is consistent."""
    problems = []
    last_phase: dict[int, int] = {}
    for e in sim.events:
        if e["kind"] != "phase":
            continue
        idx = _PHASE_ORDER.index(e["detail"]["to"])
        if idx < last_phase.get(e["src"], 0):
            problems.append(f"device {e['src']}: phase went backwards at {e['t_ms']}")
        last_phase[e["src"]] = idx
    for u, old, new in sim.registry.history:
        if not transition_allowed(old, new):
            problems.append(f"node {u}: status {old.value} -> {new.value}")
    for u, rt in sim.node_runtimes().items():
        store = rt.store
        if store.erased and (store.initial_key is not None or store.neighbor_master_cache):
            problems.append(f"node {u}: erased store still holds bootstrap keys")
        if u in store.pairwise_keys:
            problems.append(f"node {u}: pairwise key with itself")
        if rt.phase is NodePhase.OPERATIONAL and rt.pending_hellos:
            problems.append(f"node {u}: pending HELLOs after discovery")
    times = [e["t_ms"] for e in sim.events]
    if any(b < a for a, b in zip(times, times[1:])):
        problems.append("trace times are not monotone")
    return problems


def execute(scenario: Scenario, seed: int | None = None) -> RunResult:
    sim = Simulation(scenario, seed)
    try:
        trace = sim.run()
    except (SimulationError, AuditStateError) as exc:
        raise InvariantViolation(str(exc)) from exc
    problems = check_invariants(sim)
    if problems:
        raise InvariantViolation("; ".join(problems))
    metrics = compute_metrics(trace.events)
    return RunResult(sim, trace.to_jsonl(), metrics, metrics.to_csv(), trace.audit_csv())


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def output_root(cli_out: str | None) -> Path:
    return Path(os.environ.get("LEAPFORGE_OUT") or cli_out or "out")


def write_run(result: RunResult, root: Path) -> Path:
    run_dir = root / result.sim.scenario.name / str(result.sim.seed)
    _atomic_write(run_dir / "trace.jsonl", result.trace_jsonl)
    _atomic_write(run_dir / "metrics.csv", result.metrics_csv)
    _atomic_write(run_dir / "audit.csv", result.audit_csv)
    return run_dir


def sweep_seed(base_seed: int, node_count: int, repeat: int) -> int:
    digest = hashlib.sha256(f"{base_seed}:{node_count}:{repeat}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def _sweep_row(args: tuple[Scenario, int, int]) -> dict:
    base, count, repeat = args
    seed = sweep_seed(base.seed, count, repeat)
    row = {"node_count": count, "repeat": repeat, "seed": seed}
    try:
        scenario = base.replace(node_count=count, placements=None, seed=seed)
        m = execute(scenario).metrics
    except Exception as exc:  # a failed run is reported, the sweep goes on
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        return row
    lat = [n.pairwise_latency_ms for n in m.nodes.values() if n.pairwise_latency_ms is not None]
    row.update(
        status="ok",
        pairwise_success_fraction=m.pairwise_success_fraction,
        mean_establish_ms=sum(lat) / len(lat) if lat else "",
        max_establish_ms=max(lat) if lat else "",
        messages=m.total_messages,
        bytes=m.total_bytes,
        error="",
    )
    return row


def sweep(base: Scenario, counts: list[int], repeats: int, jobs: int = 1) -> list[dict]:
    if repeats < 1:
        raise ScenarioInvalid([("repeats", "must be >= 1")])
    if not counts or any(c < 1 for c in counts):
        raise ScenarioInvalid([("counts", "must be a non-empty list of positive integers")])
    base.replace(node_count=max(counts), placements=None).validate()
    work = [(base, c, r) for c in counts for r in range(repeats)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_row, work))
    return [_sweep_row(w) for w in work]


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row.get(k, "") for k in SWEEP_COLUMNS})
    return buf.getvalue()


def _parse_counts(text: str) -> list[int]:
    try:
        return [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad count list: {text!r}") from None


def _load(path: str | None) -> Scenario:
    return load_scenario(path) if path else Scenario()


def cmd_run(args: argparse.Namespace) -> int:
    scenario = _load(args.config)
    if args.seed is not None:
        scenario = scenario.replace(seed=args.seed)
    scenario.validate()
    result = execute(scenario)
    run_dir = write_run(result, output_root(args.out))
    m = result.metrics
    print(f"wrote {run_dir}")
    print(f"pairwise success {m.pairwise_success_fraction:.3f} "
          f"({m.agreeing_pairs}/{m.in_range_pairs} in-range pairs), "
          f"{m.total_messages} frames, {m.total_bytes} bytes")
    flagged = [r for r in result.sim.audit_rows if r[2] == "flagged"]
    for rnd, u, _, reason, t in flagged:
        print(f"round {rnd}: node {u} flagged ({reason}) at {t:.1f} ms")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    base = _load(args.config)
    if args.seed is not None:
        base = base.replace(seed=args.seed)
    rows = sweep(base, args.counts, args.repeats, args.jobs)
    path = output_root(args.out) / base.name / "sweep.csv"
    _atomic_write(path, sweep_csv(rows))
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"wrote {path} ({len(rows)} rows, {failed} failed)")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    cmac = None
    if args.corrupt_prf:
        from .crypto import aes_cmac

        def cmac(key, msg):
            out = bytearray(aes_cmac(key, msg))
            out[0] ^= 1
            return bytes(out)

    results = run_self_test(cmac) if cmac else run_self_test()
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name}  {r.detail}")
    return EXIT_OK if all(r.ok for r in results) else EXIT_SELFTEST


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leapforge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("--config", help="scenario TOML file (defaults if omitted)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output root (env LEAPFORGE_OUT overrides)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="repeat a scenario across node counts")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--counts", type=_parse_counts, default=[2, 5, 10])
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify-vectors", help="crypto known-answer self-test")
    p.add_argument("--corrupt-prf", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ScenarioInvalid as exc:
        for name, reason in exc.errors:
            print(f"invalid config: {name}: {reason}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except InvariantViolation as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
