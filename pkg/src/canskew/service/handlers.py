"""Service operations, independent of the HTTP transport.

Each handler is a pure function from request model to response model; the
FastAPI routes and the CLI both dispatch here, so local and remote use are
byte-identical.
"""

from __future__ import annotations

import hashlib

from ..bundled import load_bundled
from ..detector import AnalysisConfig, analyze, render_events, render_summary
from ..errors import InvalidInputError, ScenarioError, TraceFormatError
from ..fingerprint import fingerprint_trace
from ..scenario import Scenario, load_scenario, schedule_maps, scenario_from_dict
from ..simulator import run
from ..traceio import (
    arrivals_by_id,
    parse_db,
    parse_series_csv,
    parse_trace,
    write_db,
    write_series_csv,
    write_trace,
)
from .models import (
    AnalysisParams,
    DetectRequest,
    DetectResponse,
    EventModel,
    FingerprintModel,
    FingerprintRequest,
    FingerprintResponse,
    ReportRequest,
    ReportResponse,
    SimulateRequest,
    SimulateResponse,
)


def _resolve_scenario(
    scenario_in, scenario_yaml: str | None, scenario_name: str | None
) -> Scenario:
    provided = [
        name
        for name, value in (
            ("scenario", scenario_in),
            ("scenario_yaml", scenario_yaml),
            ("scenario_name", scenario_name),
        )
        if value is not None
    ]
    if len(provided) != 1:
        raise ScenarioError(
            "provide exactly one of scenario, scenario_yaml, scenario_name"
        )
    if scenario_in is not None:
        return scenario_from_dict(scenario_in.to_core_dict())
    if scenario_yaml is not None:
        return load_scenario(scenario_yaml)
    return load_scenario(load_bundled(scenario_name))


def _config_from_params(params: AnalysisParams) -> AnalysisConfig:
    return AnalysisConfig(
        batch_size=params.batch_size,
        lam=params.forgetting,
        kappa=params.kappa,
        gamma=params.gamma,
        min_batches=params.min_batches,
        z=params.z,
        signed_accumulation=params.signed_accumulation,
        period_us=None if params.period_ms is None else params.period_ms * 1000.0,
    )


def handle_simulate(req: SimulateRequest) -> SimulateResponse:
    scenario = _resolve_scenario(req.scenario, req.scenario_yaml, req.scenario_name)
    if req.seed is not None:
        from dataclasses import replace

        scenario = replace(scenario, seed=req.seed)
    doc = run(scenario)
    return SimulateResponse(
        trace=write_trace(doc),
        frames=len(doc.entries),
        duration_ms=scenario.duration_ms,
        scenario_sha256=doc.metadata["scenario_sha256"],
        warnings=list(doc.warnings),
    )


def _fingerprint_table(fingerprints) -> str:
    lines = [f"{'id':>10}  {'skew (us/s)':>14}  {'ci':>10}  {'batches':>7}"]
    for fp in fingerprints:
        lines.append(
            f"{fp.key:>10}  {fp.skew_us_per_s:>+14.3f}  {fp.ci_us_per_s:>10.3f}  "
            f"{fp.n_batches:>7}"
        )
    return "\n".join(lines) + "\n"


def handle_fingerprint(req: FingerprintRequest) -> FingerprintResponse:
    trace = parse_trace(req.trace)
    params = req.params
    periods: dict[str, float] = {}
    groups: dict[str, str] = {}
    if req.scenario_yaml is not None or req.scenario_name is not None:
        scenario = _resolve_scenario(None, req.scenario_yaml, req.scenario_name)
        periods, groups = schedule_maps(scenario)
    if params.period_ms is not None:
        periods = {key: params.period_ms * 1000.0 for key in arrivals_by_id(trace)}
    records, fingerprints, warnings = fingerprint_trace(
        trace,
        batch_size=params.batch_size,
        lam=params.forgetting,
        min_batches=params.min_batches,
        z=params.z,
        periods_us=periods,
        groups=groups,
    )
    metadata = {
        "trace_sha256": hashlib.sha256(req.trace.encode()).hexdigest(),
        "batch_size": str(params.batch_size),
    }
    return FingerprintResponse(
        db=write_db(records, metadata),
        fingerprints=[FingerprintModel(**fp.__dict__) for fp in fingerprints],
        table=_fingerprint_table(fingerprints),
        warnings=warnings,
    )


def handle_detect(req: DetectRequest) -> DetectResponse:
    trace = parse_trace(req.trace)
    records, _ = parse_db(req.db)
    if not records:
        raise InvalidInputError("fingerprint database is empty")
    config = _config_from_params(req.params)
    result = analyze(trace, config, records)
    return DetectResponse(
        events=[
            EventModel(
                time_us=ev.time_us,
                id=ev.id,
                kind=ev.kind,
                classified=ev.classified,
                suspected_source=ev.suspected_source,
                evidence=ev.evidence,
            )
            for ev in result.events
        ],
        series_csv=write_series_csv(result.rows),
        report=render_events(result.events),
        summary=render_summary(result),
        fingerprints=[FingerprintModel(**fp.__dict__) for fp in result.fingerprints],
        warnings=result.warnings,
    )


def handle_report(req: ReportRequest) -> ReportResponse:
    if not req.inputs:
        raise InvalidInputError("report needs at least one analysis input")
    files: dict[str, str] = {}
    manifest_lines = ["canskew report manifest"]
    for item in req.inputs:
        try:
            rows = parse_series_csv(item.series_csv)
        except TraceFormatError as exc:
            raise TraceFormatError(f"{item.name}: {exc}") from exc
        files[f"fig_{item.name}.csv"] = write_series_csv(rows)
        ids = sorted({row.id for row in rows})
        manifest_lines.append(
            f"{item.name}: ids={','.join(ids) if ids else '-'} points={len(rows)}"
        )
    return ReportResponse(files=files, manifest="\n".join(manifest_lines) + "\n")
