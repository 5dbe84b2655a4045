"""FastAPI application wrapping the core toolkit."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from ..bundled import list_scenarios, load_bundled
from ..errors import (
    CanSkewError,
    InsufficientDataError,
    InvalidInputError,
    ScenarioError,
    TraceFormatError,
)
from . import handlers
from .models import (
    DetectRequest,
    DetectResponse,
    FingerprintRequest,
    FingerprintResponse,
    ReportRequest,
    ReportResponse,
    ScenarioListResponse,
    ScenarioTextResponse,
    SimulateRequest,
    SimulateResponse,
)


def _wrap(func, *args):
    try:
        return func(*args)
    except (ScenarioError, TraceFormatError, InvalidInputError, InsufficientDataError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    except CanSkewError as exc:  # pragma: no cover - defensive
        raise HTTPException(status_code=500, detail=str(exc)) from exc


def create_app() -> FastAPI:
    app = FastAPI(
        title="canskew",
        description="CAN bus simulation and clock-skew fingerprinting IDS",
        version="0.1.0",
    )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get("/scenarios", response_model=ScenarioListResponse)
    def scenarios() -> ScenarioListResponse:
        return ScenarioListResponse(names=list_scenarios())

    @app.get("/scenarios/{name}", response_model=ScenarioTextResponse)
    def scenario_text(name: str) -> ScenarioTextResponse:
        try:
            text = load_bundled(name)
        except ScenarioError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return ScenarioTextResponse(name=name, yaml=text)

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest) -> SimulateResponse:
        return _wrap(handlers.handle_simulate, req)

    @app.post("/fingerprint", response_model=FingerprintResponse)
    def fingerprint(req: FingerprintRequest) -> FingerprintResponse:
        return _wrap(handlers.handle_fingerprint, req)

    @app.post("/detect", response_model=DetectResponse)
    def detect(req: DetectRequest) -> DetectResponse:
        return _wrap(handlers.handle_detect, req)

    @app.post("/report", response_model=ReportResponse)
    def report(req: ReportRequest) -> ReportResponse:
        return _wrap(handlers.handle_report, req)

    return app


app = create_app()
