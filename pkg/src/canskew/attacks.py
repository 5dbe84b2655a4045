"""Attack specifications and scenario transforms.

Attacks are modeled as transforms producing a new :class:`Scenario` in which
the attacker participates in bus arbitration as a first-class node, so DoS
queueing physics falls out of the simulator rather than being faked on the
trace afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any

from .errors import ScenarioError
from .frames import FrameId
from .scenario import ClockModel, EcuSpec, Scenario, ScheduleEntry

DOS = "dos"
FUZZY = "fuzzy"
IMPERSONATION = "impersonation"
KINDS = (DOS, FUZZY, IMPERSONATION)

FLOOD_ID = FrameId(0x000, extended=False)


@dataclass(frozen=True)
class AttackSpec:
    """One attack to inject into a scenario.

    Kind-specific parameters:

    * ``dos``: ``flood_period_us`` (spacing of top-priority flood frames) and
      ``duration_ms``.
    * ``fuzzy``: ``target_ids`` (identifiers to spoof), ``injection_period_ms``
      (defaults to each victim stream's own period) and optional
      ``duration_ms`` (None = until the end of the run).
    * ``impersonation``: ``target_label`` (ECU to silence and replace);
      persists until the end of the run.
    """

    kind: str
    start_ms: float
    duration_ms: float | None = None
    attacker_label: str = "X"
    attacker_clock: ClockModel = ClockModel()
    flood_period_us: float | None = None
    target_ids: tuple[FrameId, ...] = ()
    injection_period_ms: float | None = None
    target_label: str | None = None
    allow_unknown_ids: bool = False

    def __post_init__(self):
        object.__setattr__(self, "target_ids", tuple(self.target_ids))

    def validate(self, scenario: Scenario):
        from .simulator import frame_time  # deferred: simulator imports this module

        if self.kind not in KINDS:
            raise ScenarioError(f"unknown attack kind {self.kind!r}")
        if self.start_ms < 0:
            raise ScenarioError("attack start_ms must be >= 0")
        if self.duration_ms is not None and self.duration_ms < 0:
            raise ScenarioError("attack duration_ms must be >= 0")
        self.attacker_clock.validate()
        normal_ids = scenario.normal_ids()
        if self.kind == DOS:
            if self.flood_period_us is None:
                raise ScenarioError("DoS attack needs flood_period_us")
            ft = frame_time(scenario.bus.frame_bits, scenario.bus.bitrate_bps)
            ft *= scenario.bus.stuff_multiplier
            if self.flood_period_us < ft:
                raise ScenarioError(
                    f"flood_period_us {self.flood_period_us} below frame time {ft}"
                )
            if self.duration_ms is None:
                raise ScenarioError("DoS attack needs duration_ms")
            if FLOOD_ID.value in normal_ids:
                raise ScenarioError("id 0x000 is already scheduled by a normal ECU")
        elif self.kind == FUZZY:
            if not self.target_ids:
                raise ScenarioError("fuzzy attack needs a nonempty target id set")
            if not self.allow_unknown_ids:
                for fid in self.target_ids:
                    if fid.value not in normal_ids:
                        raise ScenarioError(
                            f"fuzzy target {fid.text} is not scheduled by any normal ECU"
                        )
        else:
            if not self.target_label:
                raise ScenarioError("impersonation attack needs target_label")
            target = next(
                (e for e in scenario.ecus if e.label == self.target_label), None
            )
            if target is None or target.is_attacker:
                raise ScenarioError(
                    f"impersonation target {self.target_label!r} is not a normal ECU"
                )

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "start_ms": self.start_ms,
            "duration_ms": self.duration_ms,
            "attacker": {
                "label": self.attacker_label,
                "clock": {
                    "skew_ppm": self.attacker_clock.skew_ppm,
                    "offset_jitter_us": self.attacker_clock.offset_jitter_us,
                    "phase_us": self.attacker_clock.phase_us,
                },
            },
            "flood_period_us": self.flood_period_us,
            "target_ids": [
                {"id": fid.value, "extended": fid.extended} for fid in self.target_ids
            ],
            "injection_period_ms": self.injection_period_ms,
            "target_label": self.target_label,
            "allow_unknown_ids": self.allow_unknown_ids,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "AttackSpec":
        if "kind" not in doc or "start_ms" not in doc:
            raise ScenarioError("attack section needs 'kind' and 'start_ms'")
        attacker = doc.get("attacker", {})
        clock_doc = attacker.get("clock", {})
        targets = []
        for item in doc.get("target_ids", []) or []:
            if isinstance(item, dict):
                targets.append(
                    FrameId(int(item["id"]), extended=bool(item.get("extended", True)))
                )
            else:
                targets.append(FrameId(int(item)))
        duration = doc.get("duration_ms")
        injection = doc.get("injection_period_ms")
        flood = doc.get("flood_period_us")
        return cls(
            kind=str(doc["kind"]).lower(),
            start_ms=float(doc["start_ms"]),
            duration_ms=None if duration is None else float(duration),
            attacker_label=str(attacker.get("label", "X")),
            attacker_clock=ClockModel(
                skew_ppm=float(clock_doc.get("skew_ppm", 0.0)),
                offset_jitter_us=float(clock_doc.get("offset_jitter_us", 0.0)),
                phase_us=float(clock_doc.get("phase_us", 0.0)),
            ),
            flood_period_us=None if flood is None else float(flood),
            target_ids=tuple(targets),
            injection_period_ms=None if injection is None else float(injection),
            target_label=doc.get("target_label"),
            allow_unknown_ids=bool(doc.get("allow_unknown_ids", False)),
        )


def _attack_window_end(spec: AttackSpec) -> float | None:
    if spec.duration_ms is None:
        return None
    return spec.start_ms + spec.duration_ms


def apply_dos(scenario: Scenario, spec: AttackSpec) -> Scenario:
    """Add an attacker node flooding id 0x000 during the attack window."""
    if spec.kind != DOS:
        raise ScenarioError(f"apply_dos got attack kind {spec.kind!r}")
    spec.validate(scenario)
    schedule: tuple[ScheduleEntry, ...] = ()
    if spec.duration_ms:
        schedule = (
            ScheduleEntry(
                id=FLOOD_ID,
                period_ms=spec.flood_period_us / 1000.0,
                first_ms=spec.start_ms,
                window_start_ms=spec.start_ms,
                window_end_ms=_attack_window_end(spec),
                dlc=0,
            ),
        )
    attacker = EcuSpec(
        label=spec.attacker_label,
        clock=spec.attacker_clock,
        schedule=schedule,
        is_attacker=True,
    )
    return scenario.with_attacker(attacker)


def apply_fuzzy(scenario: Scenario, spec: AttackSpec) -> Scenario:
    """Add an attacker injecting spoofed copies of the target identifiers."""
    if spec.kind != FUZZY:
        raise ScenarioError(f"apply_fuzzy got attack kind {spec.kind!r}")
    spec.validate(scenario)
    periods = {
        entry.id.value: entry.period_ms
        for ecu in scenario.ecus
        if not ecu.is_attacker
        for entry in ecu.schedule
    }
    schedule = []
    for fid in spec.target_ids:
        period = spec.injection_period_ms
        if period is None:
            period = periods.get(fid.value)
        if period is None:
            raise ScenarioError(
                f"no injection period for unknown target {fid.text}; "
                "set injection_period_ms"
            )
        schedule.append(
            ScheduleEntry(
                id=fid,
                period_ms=period,
                first_ms=spec.start_ms,
                window_start_ms=spec.start_ms,
                window_end_ms=_attack_window_end(spec),
            )
        )
    attacker = EcuSpec(
        label=spec.attacker_label,
        clock=spec.attacker_clock,
        schedule=tuple(schedule),
        is_attacker=True,
    )
    return scenario.with_attacker(attacker)


def apply_impersonation(scenario: Scenario, spec: AttackSpec) -> Scenario:
    """Silence the target ECU at start_ms and replay its schedule from the
    attacker's clock, preserving each stream's ideal send grid."""
    if spec.kind != IMPERSONATION:
        raise ScenarioError(f"apply_impersonation got attack kind {spec.kind!r}")
    spec.validate(scenario)
    target = scenario.ecu(spec.target_label)
    ecus = []
    for ecu in scenario.ecus:
        if ecu.label != spec.target_label:
            ecus.append(ecu)
            continue
        silenced = tuple(
            replace(
                entry,
                window_end_ms=spec.start_ms
                if entry.window_end_ms is None
                else min(entry.window_end_ms, spec.start_ms),
            )
            for entry in ecu.schedule
        )
        ecus.append(replace(ecu, schedule=silenced))
    attacker_schedule = tuple(
        replace(
            entry,
            window_start_ms=max(entry.window_start_ms, spec.start_ms),
            window_end_ms=entry.window_end_ms,
        )
        for entry in target.schedule
    )
    attacker = EcuSpec(
        label=spec.attacker_label,
        clock=spec.attacker_clock,
        schedule=attacker_schedule,
        is_attacker=True,
    )
    return replace(scenario, ecus=tuple(ecus) + (attacker,))


def apply_attack(scenario: Scenario) -> Scenario:
    """Expand ``scenario.attack`` into an attacker node; no-op if absent."""
    spec = scenario.attack
    if spec is None:
        return scenario
    if any(ecu.is_attacker for ecu in scenario.ecus):
        return scenario  # already expanded
    if any(ecu.label == spec.attacker_label for ecu in scenario.ecus):
        raise ScenarioError(
            f"attacker label {spec.attacker_label!r} collides with an existing ECU"
        )
    if spec.kind == DOS:
        return apply_dos(scenario, spec)
    if spec.kind == FUZZY:
        return apply_fuzzy(scenario, spec)
    return apply_impersonation(scenario, spec)
