"""Scenario description: bus parameters, ECU clocks and transmit schedules.

A scenario is the complete, seedable input of one simulation run.  Scenarios
are stored as YAML documents; see docs/scenario-format.md for the schema.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Any

import yaml

from .errors import ScenarioError
from .frames import FrameId

if TYPE_CHECKING:  # pragma: no cover
    from .attacks import AttackSpec

MAX_ABS_SKEW_PPM = 10000.0


@dataclass(frozen=True)
class ClockModel:
    """Per-ECU local clock: linear drift plus zero-mean per-message noise.

    The clock offset of message i on a period-T schedule is
    ``skew_ppm * (i*T) * 1e-6 + noise + phase_us``.
    """

    skew_ppm: float = 0.0
    offset_jitter_us: float = 0.0
    phase_us: float = 0.0

    def validate(self):
        if abs(self.skew_ppm) > MAX_ABS_SKEW_PPM:
            raise ScenarioError(f"|skew_ppm| {self.skew_ppm} exceeds {MAX_ABS_SKEW_PPM}")
        if self.offset_jitter_us < 0:
            raise ScenarioError("offset_jitter_us must be >= 0")


@dataclass(frozen=True)
class ScheduleEntry:
    """One periodic message stream of an ECU.

    ``window_start_ms``/``window_end_ms`` bound the ideal send instants that
    are actually emitted; attack transforms use them to silence a stream or
    confine an injection to an attack window.
    """

    id: FrameId
    period_ms: float
    first_ms: float = 0.0
    window_start_ms: float = 0.0
    window_end_ms: float | None = None
    dlc: int = 8

    def validate(self):
        if self.period_ms <= 0:
            raise ScenarioError(f"period for {self.id.text} must be > 0")
        if self.first_ms < 0:
            raise ScenarioError("first_ms must be >= 0")
        if not 0 <= self.dlc <= 8:
            raise ScenarioError("dlc must be in [0, 8]")


@dataclass(frozen=True)
class EcuSpec:
    """A CAN node: label, clock, and what it transmits."""

    label: str
    clock: ClockModel = field(default_factory=ClockModel)
    schedule: tuple[ScheduleEntry, ...] = ()
    is_attacker: bool = False

    def __post_init__(self):
        object.__setattr__(self, "schedule", tuple(self.schedule))

    def validate(self):
        if not self.label:
            raise ScenarioError("ECU label must be nonempty")
        self.clock.validate()
        for entry in self.schedule:
            entry.validate()


@dataclass(frozen=True)
class BusSpec:
    """Shared-medium parameters of the bus."""

    bitrate_bps: int = 500_000
    frame_bits: int = 131
    base_delay_us: float = 10.0
    delay_jitter_us: float = 2.0
    stuff_multiplier: float = 1.0

    def validate(self):
        if self.bitrate_bps <= 0:
            raise ScenarioError("bitrate_bps must be > 0")
        if self.frame_bits <= 0:
            raise ScenarioError("frame_bits must be > 0")
        if self.delay_jitter_us < 0:
            raise ScenarioError("delay_jitter_us must be >= 0")
        if self.stuff_multiplier < 1.0:
            raise ScenarioError("stuff_multiplier must be >= 1.0")


@dataclass(frozen=True)
class Scenario:
    """A full simulation input.  Immutable; attack transforms return copies."""

    bus: BusSpec
    ecus: tuple[EcuSpec, ...]
    duration_ms: float
    seed: int = 0
    attack: "AttackSpec | None" = None

    def __post_init__(self):
        object.__setattr__(self, "ecus", tuple(self.ecus))

    def validate(self):
        if self.duration_ms <= 0:
            raise ScenarioError("duration_ms must be > 0")
        if not self.ecus:
            raise ScenarioError("scenario needs at least one ECU")
        self.bus.validate()
        labels: set[str] = set()
        scheduled: dict[int, str] = {}
        for ecu in self.ecus:
            ecu.validate()
            if ecu.label in labels:
                raise ScenarioError(f"duplicate ECU label {ecu.label!r}")
            labels.add(ecu.label)
            if ecu.is_attacker:
                continue
            for entry in ecu.schedule:
                owner = scheduled.get(entry.id.value)
                if owner is not None and owner != ecu.label:
                    raise ScenarioError(
                        f"id {entry.id.text} scheduled by both {owner} and {ecu.label}"
                    )
                scheduled[entry.id.value] = ecu.label
        if self.attack is not None:
            self.attack.validate(self)

    def ecu(self, label: str) -> EcuSpec:
        for ecu in self.ecus:
            if ecu.label == label:
                return ecu
        raise ScenarioError(f"no ECU labelled {label!r}")

    def normal_ids(self) -> dict[int, str]:
        """Mapping id value -> owning normal ECU label."""
        out: dict[int, str] = {}
        for ecu in self.ecus:
            if ecu.is_attacker:
                continue
            for entry in ecu.schedule:
                out[entry.id.value] = ecu.label
        return out

    def with_attacker(self, attacker: EcuSpec) -> "Scenario":
        return replace(self, ecus=self.ecus + (attacker,))

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "bus": {
                "bitrate_bps": self.bus.bitrate_bps,
                "frame_bits": self.bus.frame_bits,
                "base_delay_us": self.bus.base_delay_us,
                "delay_jitter_us": self.bus.delay_jitter_us,
                "stuff_multiplier": self.bus.stuff_multiplier,
            },
            "ecus": [
                {
                    "label": ecu.label,
                    "clock": {
                        "skew_ppm": ecu.clock.skew_ppm,
                        "offset_jitter_us": ecu.clock.offset_jitter_us,
                        "phase_us": ecu.clock.phase_us,
                    },
                    "schedule": [
                        {
                            "id": entry.id.value,
                            "extended": entry.id.extended,
                            "period_ms": entry.period_ms,
                            "first_ms": entry.first_ms,
                            "window_start_ms": entry.window_start_ms,
                            "window_end_ms": entry.window_end_ms,
                            "dlc": entry.dlc,
                        }
                        for entry in ecu.schedule
                    ],
                    "is_attacker": ecu.is_attacker,
                }
                for ecu in self.ecus
            ],
            "duration_ms": self.duration_ms,
            "seed": self.seed,
        }
        if self.attack is not None:
            doc["attack"] = self.attack.to_dict()
        return doc

    def sha256(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def _clock_from_dict(doc: dict[str, Any]) -> ClockModel:
    return ClockModel(
        skew_ppm=float(doc.get("skew_ppm", 0.0)),
        offset_jitter_us=float(doc.get("offset_jitter_us", 0.0)),
        phase_us=float(doc.get("phase_us", 0.0)),
    )


def _entry_from_dict(doc: dict[str, Any]) -> ScheduleEntry:
    if "id" not in doc or "period_ms" not in doc:
        raise ScenarioError("schedule entry needs 'id' and 'period_ms'")
    end = doc.get("window_end_ms")
    return ScheduleEntry(
        id=FrameId(int(doc["id"]), extended=bool(doc.get("extended", True))),
        period_ms=float(doc["period_ms"]),
        first_ms=float(doc.get("first_ms", 0.0)),
        window_start_ms=float(doc.get("window_start_ms", 0.0)),
        window_end_ms=None if end is None else float(end),
        dlc=int(doc.get("dlc", 8)),
    )


def scenario_from_dict(doc: dict[str, Any]) -> Scenario:
    """Build and validate a Scenario from a plain mapping (parsed YAML/JSON)."""
    from .attacks import AttackSpec  # local import to avoid a module cycle

    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping")
    for key in ("ecus", "duration_ms"):
        if key not in doc:
            raise ScenarioError(f"scenario is missing required key {key!r}")
    bus_doc = doc.get("bus", {})
    bus = BusSpec(
        bitrate_bps=int(bus_doc.get("bitrate_bps", 500_000)),
        frame_bits=int(bus_doc.get("frame_bits", 131)),
        base_delay_us=float(bus_doc.get("base_delay_us", 10.0)),
        delay_jitter_us=float(bus_doc.get("delay_jitter_us", 2.0)),
        stuff_multiplier=float(bus_doc.get("stuff_multiplier", 1.0)),
    )
    ecus = []
    for ecu_doc in doc["ecus"]:
        ecus.append(
            EcuSpec(
                label=str(ecu_doc.get("label", "")),
                clock=_clock_from_dict(ecu_doc.get("clock", {})),
                schedule=tuple(_entry_from_dict(e) for e in ecu_doc.get("schedule", [])),
                is_attacker=bool(ecu_doc.get("is_attacker", False)),
            )
        )
    attack = None
    if doc.get("attack") is not None:
        attack = AttackSpec.from_dict(doc["attack"])
    scenario = Scenario(
        bus=bus,
        ecus=tuple(ecus),
        duration_ms=float(doc["duration_ms"]),
        seed=int(doc.get("seed", 0)),
        attack=attack,
    )
    scenario.validate()
    return scenario


def schedule_maps(scenario: Scenario) -> tuple[dict[str, float], dict[str, str]]:
    """Per-id nominal periods (us) and id -> owning ECU labels, normal ECUs only."""
    periods: dict[str, float] = {}
    groups: dict[str, str] = {}
    for ecu in scenario.ecus:
        if ecu.is_attacker:
            continue
        for entry in ecu.schedule:
            periods[entry.id.text] = entry.period_ms * 1000.0
            groups[entry.id.text] = ecu.label
    return periods, groups


def load_scenario(text: str) -> Scenario:
    """Parse a YAML scenario document."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"invalid YAML: {exc}") from exc
    return scenario_from_dict(doc)


def load_scenario_file(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return load_scenario(fh.read())


def dump_scenario(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario.to_dict(), sort_keys=True)
