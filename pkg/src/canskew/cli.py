"""Command-line client of the canskew service.

Commands build the same request models the HTTP API accepts and dispatch
them either in-process (default) or to a running server via ``--server``.
Exit codes: 0 success, 2 schema/format errors, 3 missing inputs,
1 internal faults.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .bundled import list_scenarios, load_bundled
from .errors import (
    CanSkewError,
    InsufficientDataError,
    InvalidInputError,
    ScenarioError,
    TraceFormatError,
)
from .service import handlers
from .service.models import (
    AnalysisParams,
    DetectRequest,
    FingerprintRequest,
    ReportInput,
    ReportRequest,
    SimulateRequest,
)

EXIT_INTERNAL = 1
EXIT_SCHEMA = 2
EXIT_MISSING = 3

_SCHEMA_ERRORS = (ScenarioError, TraceFormatError, InvalidInputError, InsufficientDataError)


class Client:
    """Dispatches requests in-process or to a remote canskew server."""

    def __init__(self, server: str | None):
        self.server = server.rstrip("/") if server else None

    def _post(self, path: str, request, response_model):
        if self.server is None:
            handler = {
                "/simulate": handlers.handle_simulate,
                "/fingerprint": handlers.handle_fingerprint,
                "/detect": handlers.handle_detect,
                "/report": handlers.handle_report,
            }[path]
            return handler(request)
        import httpx

        resp = httpx.post(
            f"{self.server}{path}",
            json=request.model_dump(mode="json", by_alias=True),
            timeout=300.0,
        )
        if resp.status_code == 422:
            raise ScenarioError(str(resp.json().get("detail", resp.text)))
        resp.raise_for_status()
        return response_model(**resp.json())

    def simulate(self, req: SimulateRequest):
        from .service.models import SimulateResponse

        return self._post("/simulate", req, SimulateResponse)

    def fingerprint(self, req: FingerprintRequest):
        from .service.models import FingerprintResponse

        return self._post("/fingerprint", req, FingerprintResponse)

    def detect(self, req: DetectRequest):
        from .service.models import DetectResponse

        return self._post("/detect", req, DetectResponse)

    def report(self, req: ReportRequest):
        from .service.models import ReportResponse

        return self._post("/report", req, ReportResponse)


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _read_file(path: str, what: str) -> str:
    p = Path(path)
    if not p.is_file():
        _fail(EXIT_MISSING, f"{what} file not found: {path}")
    return p.read_text(encoding="utf-8")


def _scenario_request_fields(scenario: str) -> dict:
    """A --scenario value is a YAML path or a bundled scenario name."""
    if Path(scenario).is_file():
        return {"scenario_yaml": Path(scenario).read_text(encoding="utf-8")}
    if scenario in list_scenarios():
        return {"scenario_name": scenario}
    _fail(EXIT_MISSING, f"scenario {scenario!r} is neither a file nor a bundled name")


def _out_dir(out: str) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _params(**kwargs) -> AnalysisParams:
    return AnalysisParams(**{k: v for k, v in kwargs.items() if v is not None})


_analysis_options = [
    click.option("--batch-size", type=int, default=None, help="messages per offset batch"),
    click.option("--lambda", "lam", type=float, default=None, help="RLS forgetting factor"),
    click.option("--min-batches", type=int, default=None, help="batches needed per fingerprint"),
    click.option("--period-ms", type=float, default=None, help="override the nominal period"),
]


def _apply(options):
    def wrap(func):
        for option in reversed(options):
            func = option(func)
        return func

    return wrap


class _ErrorMappingGroup(click.Group):
    """Maps domain errors to the documented exit codes (see module docstring)."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except _SCHEMA_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(EXIT_SCHEMA)
        except FileNotFoundError as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(EXIT_MISSING)
        except CanSkewError as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(EXIT_INTERNAL)


@click.group(cls=_ErrorMappingGroup)
@click.option("--server", default=None, help="URL of a running canskew server")
@click.pass_context
def main(ctx, server):
    """Simulate CAN traffic and detect attacks via clock-skew fingerprints."""
    ctx.obj = Client(server)


@main.command()
@click.option("--scenario", required=True, help="scenario YAML path or bundled name")
@click.option("--out", default=".", help="output directory")
@click.option("--seed", type=int, default=None, help="override the scenario seed")
@click.pass_obj
def simulate(client: Client, scenario, out, seed):
    """Run a scenario and write its candump-style trace."""
    fields = _scenario_request_fields(scenario)
    resp = client.simulate(SimulateRequest(seed=seed, **fields))
    stem = Path(scenario).stem
    path = _out_dir(out) / f"{stem}.trace"
    path.write_text(resp.trace, encoding="utf-8")
    click.echo(
        f"wrote {path} ({resp.frames} frames, {resp.duration_ms:.0f} ms, "
        f"scenario {resp.scenario_sha256[:12]})"
    )
    for warning in resp.warnings:
        click.echo(f"warning: {warning}", err=True)


@main.command()
@click.option("--trace", required=True, help="attack-free trace to fingerprint")
@click.option("--scenario", default=None, help="scenario for periods and ECU grouping")
@click.option("--out", default=".", help="output directory")
@_apply(_analysis_options)
@click.pass_obj
def fingerprint(client: Client, trace, scenario, out, batch_size, lam, min_batches, period_ms):
    """Estimate per-id/per-ECU clock skews and persist the fingerprint DB."""
    req = FingerprintRequest(
        trace=_read_file(trace, "trace"),
        params=_params(
            batch_size=batch_size, forgetting=lam, min_batches=min_batches,
            period_ms=period_ms,
        ),
        **(_scenario_request_fields(scenario) if scenario else {}),
    )
    resp = client.fingerprint(req)
    path = _out_dir(out) / f"{Path(trace).stem}.db"
    path.write_text(resp.db, encoding="utf-8")
    click.echo(resp.table, nl=False)
    click.echo(f"wrote {path}")
    for warning in resp.warnings:
        click.echo(f"warning: {warning}", err=True)


@main.command()
@click.option("--trace", required=True, help="trace to analyze")
@click.option("--db", required=True, help="fingerprint database from `fingerprint`")
@click.option("--out", default=".", help="output directory")
@click.option("--kappa", type=float, default=None, help="CUSUM drift allowance")
@click.option("--gamma", type=float, default=None, help="CUSUM alarm threshold")
@click.option(
    "--signed-accumulation",
    is_flag=True,
    default=False,
    help="export the signed running sum instead of absolute accumulation",
)
@_apply(_analysis_options)
@click.pass_obj
def detect(
    client: Client, trace, db, out, kappa, gamma, signed_accumulation,
    batch_size, lam, min_batches, period_ms,
):
    """Detect and classify attacks in a trace against a fingerprint DB."""
    db_path = Path(db)
    if not db_path.is_file():
        _fail(EXIT_MISSING, f"fingerprint db not found: {db} (run `canskew fingerprint` first)")
    req = DetectRequest(
        trace=_read_file(trace, "trace"),
        db=db_path.read_text(encoding="utf-8"),
        params=_params(
            batch_size=batch_size, forgetting=lam, min_batches=min_batches,
            period_ms=period_ms, kappa=kappa, gamma=gamma,
            signed_accumulation=signed_accumulation or None,
        ),
    )
    resp = client.detect(req)
    out_path = _out_dir(out)
    stem = Path(trace).stem
    (out_path / f"{stem}.events").write_text(resp.report, encoding="utf-8")
    (out_path / f"{stem}.series.csv").write_text(resp.series_csv, encoding="utf-8")
    (out_path / f"{stem}.summary.txt").write_text(resp.summary, encoding="utf-8")
    click.echo(resp.summary, nl=False)
    click.echo(f"wrote {out_path / (stem + '.events')} and companions")
    for warning in resp.warnings:
        click.echo(f"warning: {warning}", err=True)


@main.command()
@click.argument("series_csvs", nargs=-1, required=True)
@click.option("--out", default=".", help="output directory")
@click.pass_obj
def report(client: Client, series_csvs, out):
    """Consolidate detect outputs into plot-ready figure data files."""
    inputs = [
        ReportInput(name=Path(path).stem.removesuffix(".series"), series_csv=_read_file(path, "series CSV"))
        for path in series_csvs
    ]
    resp = client.report(ReportRequest(inputs=inputs))
    out_path = _out_dir(out)
    for name, content in sorted(resp.files.items()):
        (out_path / name).write_text(content, encoding="utf-8")
        click.echo(f"wrote {out_path / name}")
    (out_path / "manifest.txt").write_text(resp.manifest, encoding="utf-8")
    click.echo(f"wrote {out_path / 'manifest.txt'}")


@main.command()
@click.option("--show", default=None, help="print one bundled scenario")
def scenarios(show):
    """List (or print) the bundled scenarios."""
    if show is not None:
        click.echo(load_bundled(show), nl=False)
        return
    for name in list_scenarios():
        click.echo(name)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the canskew HTTP service."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":  # pragma: no cover
    main()
