"""Pydantic request/response models of the HTTP service."""

from __future__ import annotations

from typing import Any

from pydantic import BaseModel, Field


class ClockIn(BaseModel):
    skew_ppm: float = 0.0
    offset_jitter_us: float = 0.0
    phase_us: float = 0.0


class ScheduleEntryIn(BaseModel):
    id: int
    extended: bool = True
    period_ms: float
    first_ms: float = 0.0
    window_start_ms: float = 0.0
    window_end_ms: float | None = None
    dlc: int = 8


class EcuIn(BaseModel):
    label: str
    clock: ClockIn = Field(default_factory=ClockIn)
    schedule: list[ScheduleEntryIn] = Field(default_factory=list)
    is_attacker: bool = False


class BusIn(BaseModel):
    bitrate_bps: int = 500_000
    frame_bits: int = 131
    base_delay_us: float = 10.0
    delay_jitter_us: float = 2.0
    stuff_multiplier: float = 1.0


class AttackIn(BaseModel):
    kind: str
    start_ms: float
    duration_ms: float | None = None
    attacker_label: str = "X"
    attacker_clock: ClockIn = Field(default_factory=ClockIn)
    flood_period_us: float | None = None
    target_ids: list[int] = Field(default_factory=list)
    injection_period_ms: float | None = None
    target_label: str | None = None
    allow_unknown_ids: bool = False

    def to_core_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "start_ms": self.start_ms,
            "duration_ms": self.duration_ms,
            "attacker": {
                "label": self.attacker_label,
                "clock": self.attacker_clock.model_dump(),
            },
            "flood_period_us": self.flood_period_us,
            "target_ids": list(self.target_ids),
            "injection_period_ms": self.injection_period_ms,
            "target_label": self.target_label,
            "allow_unknown_ids": self.allow_unknown_ids,
        }


class ScenarioIn(BaseModel):
    bus: BusIn = Field(default_factory=BusIn)
    ecus: list[EcuIn]
    duration_ms: float
    seed: int = 0
    attack: AttackIn | None = None

    def to_core_dict(self) -> dict[str, Any]:
        doc = self.model_dump(exclude={"attack"})
        if self.attack is not None:
            doc["attack"] = self.attack.to_core_dict()
        return doc


class AnalysisParams(BaseModel):
    """Estimator/detector knobs; defaults mirror the CLI defaults."""

    batch_size: int = 20
    forgetting: float = Field(default=0.9995, alias="lambda")
    kappa: float = 4.0
    gamma: float = 5.0
    min_batches: int = 10
    z: float = 3.0
    signed_accumulation: bool = False
    period_ms: float | None = None

    model_config = {"populate_by_name": True}


class SimulateRequest(BaseModel):
    """Exactly one of ``scenario``, ``scenario_yaml``, ``scenario_name``."""

    scenario: ScenarioIn | None = None
    scenario_yaml: str | None = None
    scenario_name: str | None = None
    seed: int | None = None


class SimulateResponse(BaseModel):
    trace: str
    frames: int
    duration_ms: float
    scenario_sha256: str
    warnings: list[str] = Field(default_factory=list)


class FingerprintModel(BaseModel):
    key: str
    skew_us_per_s: float
    ci_us_per_s: float
    n_batches: int


class FingerprintRequest(BaseModel):
    trace: str
    params: AnalysisParams = Field(default_factory=AnalysisParams)
    scenario_yaml: str | None = None  # supplies periods and id->ECU grouping
    scenario_name: str | None = None


class FingerprintResponse(BaseModel):
    db: str
    fingerprints: list[FingerprintModel]
    table: str
    warnings: list[str] = Field(default_factory=list)


class EventModel(BaseModel):
    time_us: int
    id: str
    kind: str
    classified: str
    suspected_source: str | None
    evidence: dict[str, Any] = Field(default_factory=dict)


class DetectRequest(BaseModel):
    trace: str
    db: str
    params: AnalysisParams = Field(default_factory=AnalysisParams)


class DetectResponse(BaseModel):
    events: list[EventModel]
    series_csv: str
    report: str  # line-delimited event records
    summary: str
    fingerprints: list[FingerprintModel]
    warnings: list[str] = Field(default_factory=list)


class ReportInput(BaseModel):
    name: str
    series_csv: str


class ReportRequest(BaseModel):
    inputs: list[ReportInput]


class ReportResponse(BaseModel):
    files: dict[str, str]
    manifest: str


class ScenarioListResponse(BaseModel):
    names: list[str]


class ScenarioTextResponse(BaseModel):
    name: str
    yaml: str
