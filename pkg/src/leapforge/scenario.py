"""Scenario model, validation, and the TOML config format.

Every field has a default, so a config file only needs what it changes::

    name = "ten-nodes"
    seed = 7
    node_count = 10

    [radio]
    range_m = 30.0

    [[adversary]]
    kind = "clone"
    victim_id = 4
    capture_ms = 500
    position = [12.0, 40.0]
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

import tomli
import tomli_w

from .keying import MAX_NODE_ID

# adversary devices claim ids from the top of the 16-bit space by default
DEFAULT_ATTACKER_ID = 0xFFF0


class ScenarioInvalid(ValueError):
    """Scenario failed validation; ``errors`` holds (field, reason) pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{f}: {r}" for f, r in errors))


@dataclass
class RadioParams:
    range_m: float = 30.0
    latency_ms: float = 5.0
    jitter_ms: float = 5.0
    loss_prob: float = 0.0


@dataclass
class HelloFlood:
    tx_multiplier: float = 10.0
    start_ms: float = 0.0
    position: tuple[float, float] | None = None
    attacker_id: int = DEFAULT_ATTACKER_ID
    hello_count: int = 3
    interval_ms: float = 200.0
    kind = "hello_flood"


@dataclass
class Clone:
    victim_id: int = 1
    capture_ms: float = 500.0
    position: tuple[float, float] | None = None
    # None: the clone claims the victim's id; otherwise a fabricated identity
    clone_id: int | None = None
    # copy the victim's sequence number instead of guessing one
    steal_sequence: bool = False
    kind = "clone"


@dataclass
class Replay:
    record_window_ms: tuple[float, float] = (0.0, 10_000.0)
    replay_ms: float = 20_000.0
    position: tuple[float, float] | None = None
    tx_multiplier: float = 1.0
    kind = "replay"


@dataclass
class Eavesdrop:
    position: tuple[float, float] | None = None
    rx_multiplier: float = 1.0
    kind = "eavesdrop"


AdversaryConfig = Union[HelloFlood, Clone, Replay, Eavesdrop]
ADVERSARY_KINDS: dict[str, type] = {
    cls.kind: cls for cls in (HelloFlood, Clone, Replay, Eavesdrop)
}


@dataclass
class Scenario:
    name: str = "scenario"
    seed: int = 0
    node_count: int = 10
    # explicit node placement, id -> (x, y) metres; overrides node_count
    placements: dict[int, tuple[float, float]] | None = None
    area_m: float = 60.0
    base_station: tuple[float, float] | None = None
    radio: RadioParams = field(default_factory=RadioParams)
    t_min_ms: float = 2000.0
    boot_jitter_ms: float = 0.0
    audit_period_ms: float = 5000.0
    # None: first audit at t_min + boot jitter + 1000 ms
    audit_start_ms: float | None = None
    response_deadline_ms: float = 1000.0
    chain_length: int = 64
    horizon_ms: float = 60_000.0
    adversaries: list[AdversaryConfig] = field(default_factory=list)

    @property
    def node_ids(self) -> list[int]:
        if self.placements is not None:
            return sorted(self.placements)
        return list(range(1, self.node_count + 1))

    @property
    def first_audit_ms(self) -> float:
        if self.audit_start_ms is not None:
            return self.audit_start_ms
        return self.t_min_ms + self.boot_jitter_ms + 1000.0

    def audit_times(self) -> list[float]:
        times = []
        t = self.first_audit_ms
        while t + self.response_deadline_ms <= self.horizon_ms:
            times.append(t)
            t += self.audit_period_ms
        return times

    def validate(self) -> None:
        errors: list[tuple[str, str]] = []

        def need(cond: bool, name: str, reason: str) -> None:
            if not cond:
                errors.append((name, reason))

        if self.placements is None:
            need(1 <= self.node_count < DEFAULT_ATTACKER_ID, "node_count",
                 f"must be in 1..{DEFAULT_ATTACKER_ID - 1}")
        else:
            need(len(self.placements) >= 1, "placements", "must not be empty")
            need(sorted(self.placements) == list(range(1, len(self.placements) + 1)),
                 "placements", "node ids must be exactly 1..n")
        need(self.area_m > 0, "area_m", "must be > 0")
        need(self.radio.range_m > 0, "radio.range_m", "must be > 0")
        need(self.radio.latency_ms >= 0, "radio.latency_ms", "must be >= 0")
        need(self.radio.jitter_ms >= 0, "radio.jitter_ms", "must be >= 0")
        need(0.0 <= self.radio.loss_prob <= 1.0, "radio.loss_prob", "must be in [0, 1]")
        need(self.t_min_ms > 0, "t_min_ms", "must be > 0")
        need(self.boot_jitter_ms >= 0, "boot_jitter_ms", "must be >= 0")
        need(self.audit_period_ms > 0, "audit_period_ms", "must be > 0")
        need(self.response_deadline_ms > 0, "response_deadline_ms", "must be > 0")
        need(self.response_deadline_ms < self.audit_period_ms, "response_deadline_ms",
             "must be shorter than audit_period_ms")
        need(self.horizon_ms > 0, "horizon_ms", "must be > 0")
        need(self.chain_length >= 1, "chain_length", "must be >= 1")
        if self.audit_start_ms is not None:
            need(self.audit_start_ms >= 0, "audit_start_ms", "must be >= 0")
        if self.chain_length >= 1 and self.audit_period_ms > 0 and self.response_deadline_ms > 0:
            need(len(self.audit_times()) <= self.chain_length, "chain_length",
                 "shorter than the number of audit rounds in the horizon")
        ids = set(self.node_ids) if not errors else set()
        for i, adv in enumerate(self.adversaries):
            where = f"adversary[{i}]"
            if isinstance(adv, HelloFlood):
                need(adv.tx_multiplier > 0, f"{where}.tx_multiplier", "must be > 0")
                need(adv.hello_count >= 1, f"{where}.hello_count", "must be >= 1")
                need(adv.start_ms >= 0, f"{where}.start_ms", "must be >= 0")
                need(0 <= adv.attacker_id <= MAX_NODE_ID and adv.attacker_id not in ids
                     and adv.attacker_id != 0, f"{where}.attacker_id",
                     "must be a free 16-bit id other than 0")
            elif isinstance(adv, Clone):
                need(adv.victim_id in ids, f"{where}.victim_id", "no such node")
                need(0 <= adv.capture_ms <= self.horizon_ms, f"{where}.capture_ms",
                     "must lie within the horizon")
                if adv.clone_id is not None:
                    need(0 < adv.clone_id <= MAX_NODE_ID, f"{where}.clone_id",
                         "must be a 16-bit id other than 0")
            elif isinstance(adv, Replay):
                lo, hi = adv.record_window_ms
                need(0 <= lo <= hi, f"{where}.record_window_ms", "must be [start, end] with start <= end")
                need(adv.replay_ms >= hi, f"{where}.replay_ms", "must not precede the record window end")
                need(adv.tx_multiplier > 0, f"{where}.tx_multiplier", "must be > 0")
            elif isinstance(adv, Eavesdrop):
                need(adv.rx_multiplier > 0, f"{where}.rx_multiplier", "must be > 0")
            else:
                errors.append((where, f"unknown adversary type {type(adv).__name__}"))
        if errors:
            raise ScenarioInvalid(errors)

    # config file round trip

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if f.name == "radio":
                out["radio"] = dataclasses.asdict(value)
            elif f.name == "placements":
                out["placements"] = {str(k): list(v) for k, v in sorted(value.items())}
            elif f.name == "adversaries":
                if value:
                    out["adversary"] = [_adversary_to_dict(a) for a in value]
            elif isinstance(value, tuple):
                out[f.name] = list(value)
            else:
                out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Scenario:
        data = dict(data)
        errors: list[tuple[str, str]] = []
        kwargs: dict[str, Any] = {}
        known = {f.name for f in dataclasses.fields(cls)} - {"radio", "placements", "adversaries"}
        radio = data.pop("radio", {})
        placements = data.pop("placements", None)
        adversaries = data.pop("adversary", [])
        for key, value in data.items():
            if key not in known:
                errors.append((key, "unknown field"))
            else:
                kwargs[key] = tuple(value) if isinstance(value, list) else value
        try:
            kwargs["radio"] = RadioParams(**radio)
        except TypeError as exc:
            errors.append(("radio", str(exc)))
        if placements is not None:
            try:
                kwargs["placements"] = {int(k): (float(v[0]), float(v[1])) for k, v in placements.items()}
            except (ValueError, TypeError, IndexError, AttributeError) as exc:
                errors.append(("placements", f"expected id -> [x, y]: {exc}"))
        advs = []
        for i, raw in enumerate(adversaries):
            try:
                advs.append(_adversary_from_dict(raw))
            except (TypeError, KeyError, ValueError) as exc:
                errors.append((f"adversary[{i}]", str(exc)))
        kwargs["adversaries"] = advs
        if errors:
            raise ScenarioInvalid(errors)
        try:
            scenario = cls(**kwargs)
        except TypeError as exc:
            raise ScenarioInvalid([("config", str(exc))]) from exc
        _check_types(scenario)
        return scenario

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_toml(cls, text: str) -> Scenario:
        try:
            data = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ScenarioInvalid([("config", f"TOML parse error: {exc}")]) from exc
        return cls.from_dict(data)

    def replace(self, **changes: Any) -> Scenario:
        return dataclasses.replace(self, **changes)


def _check_types(s: Scenario) -> None:
    errors = _field_type_errors(s, "")
    errors += _field_type_errors(s.radio, "radio.")
    for i, adv in enumerate(s.adversaries):
        errors += _field_type_errors(adv, f"adversary[{i}].")
    if not errors and (not s.name or "/" in s.name):
        errors.append(("name", "must be a non-empty string without '/'"))
    if errors:
        raise ScenarioInvalid(errors)


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


# annotation (without "| None") -> (check, message)
_TYPE_CHECKS = {
    "int": (lambda v: isinstance(v, int) and not isinstance(v, bool), "must be an integer"),
    "float": (_is_number, "must be a number"),
    "bool": (lambda v: isinstance(v, bool), "must be true or false"),
    "str": (lambda v: isinstance(v, str), "must be a string"),
    "tuple[float, float]": (
        lambda v: isinstance(v, tuple) and len(v) == 2 and all(map(_is_number, v)),
        "must be a pair of numbers",
    ),
}


def _field_type_errors(obj: Any, prefix: str) -> list[tuple[str, str]]:
    errors = []
    for f in dataclasses.fields(obj):
        optional = f.type.endswith(" | None")
        check = _TYPE_CHECKS.get(f.type.removesuffix(" | None"))
        if check is None:
            continue
        value = getattr(obj, f.name)
        if value is None and optional:
            continue
        if not check[0](value):
            errors.append((prefix + f.name, check[1]))
    return errors


def _adversary_to_dict(adv: AdversaryConfig) -> dict[str, Any]:
    out: dict[str, Any] = {"kind": adv.kind}
    for key, value in dataclasses.asdict(adv).items():
        if value is None:
            continue
        out[key] = list(value) if isinstance(value, tuple) else value
    return out


def _adversary_from_dict(raw: dict[str, Any]) -> AdversaryConfig:
    raw = dict(raw)
    kind = raw.pop("kind")
    if kind not in ADVERSARY_KINDS:
        raise ValueError(f"unknown adversary kind {kind!r}")
    fields = {k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()}
    return ADVERSARY_KINDS[kind](**fields)


def load_scenario(path: str | Path) -> Scenario:
    return Scenario.from_toml(Path(path).read_text())


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(scenario.to_toml())
