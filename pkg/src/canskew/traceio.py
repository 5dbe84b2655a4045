"""Text persistence: candump-compatible traces, series CSV, fingerprint DBs.

All writers are pure and byte-stable: identical inputs produce identical
bytes on any platform.  Floats are serialized with ``repr``, which is the
shortest exact round-trip spelling, so parse -> write reproduces the file.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, TraceFormatError
from .frames import CanFrame, FrameId, TimestampedFrame

TRACE_HEADER = "# canskew trace v1"
DB_HEADER = "# canskew fingerprint db v1"

_LINE_RE = re.compile(
    r"^\((\d+)\.(\d{6})\)\s+(\S+)\s+([0-9A-Fa-f]{3}|[0-9A-Fa-f]{8})#([0-9A-Fa-f]*)\s*$"
)


@dataclass
class TraceDocument:
    """A timestamped trace plus run metadata."""

    entries: list[TimestampedFrame] = field(default_factory=list)
    metadata: dict[str, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def validate(self):
        last = -1
        for entry in self.entries:
            if entry.arrival_us <= last:
                raise InvalidInputError("trace arrivals must be strictly increasing")
            last = entry.arrival_us


def arrivals_by_id(doc: TraceDocument) -> dict[str, np.ndarray]:
    """Arrival times (float microseconds) grouped by canonical id text."""
    grouped: dict[str, list[int]] = {}
    for entry in doc.entries:
        grouped.setdefault(entry.frame.id.text, []).append(entry.arrival_us)
    return {key: np.asarray(values, dtype=float) for key, values in grouped.items()}


def _format_timestamp(arrival_us: int) -> str:
    return f"({arrival_us // 1_000_000}.{arrival_us % 1_000_000:06d})"


def _iface_for(source: str | None) -> str:
    return f"can{source}" if source else "can0"


def write_trace(doc: TraceDocument) -> str:
    """Serialize a trace as candump-style text with `#` metadata comments."""
    lines = [TRACE_HEADER]
    for key in sorted(doc.metadata):
        lines.append(f"# {key}: {doc.metadata[key]}")
    for warning in doc.warnings:
        lines.append(f"# warning: {warning}")
    for entry in doc.entries:
        frame = entry.frame
        lines.append(
            f"{_format_timestamp(entry.arrival_us)} {_iface_for(frame.source)} "
            f"{frame.id.text}#{frame.payload.hex().upper()}"
        )
    return "\n".join(lines) + "\n"


def parse_trace(text: str) -> TraceDocument:
    """Parse candump-style text.  Unknown comment lines are ignored; malformed
    frame lines raise :class:`TraceFormatError` with their line number."""
    doc = TraceDocument()
    last_arrival = -1
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if ": " in body:
                key, value = body.split(": ", 1)
                if key == "warning":
                    doc.warnings.append(value)
                elif re.fullmatch(r"[A-Za-z0-9_.-]+", key):
                    doc.metadata[key] = value
            continue
        match = _LINE_RE.match(line)
        if match is None:
            raise TraceFormatError(f"unparseable trace line {line!r}", line=lineno)
        seconds, micros, iface, id_text, data = match.groups()
        if len(data) % 2 != 0:
            raise TraceFormatError("payload hex has odd length", line=lineno)
        if len(data) > 16:
            raise TraceFormatError("payload longer than 8 bytes", line=lineno)
        arrival = int(seconds) * 1_000_000 + int(micros)
        if arrival <= last_arrival:
            raise TraceFormatError(
                f"non-monotonic timestamp {seconds}.{micros}", line=lineno
            )
        last_arrival = arrival
        source = iface[3:] if iface.startswith("can") and len(iface) > 3 else iface
        payload = bytes.fromhex(data)
        doc.entries.append(
            TimestampedFrame(
                arrival_us=arrival,
                frame=CanFrame(
                    id=FrameId.from_text(id_text),
                    dlc=len(payload),
                    payload=payload,
                    source=source,
                ),
            )
        )
    return doc


# --- series CSV -------------------------------------------------------------

SERIES_COLUMNS = (
    "id",
    "batch_index",
    "elapsed_time_us",
    "accumulated_offset_us",
    "skew_estimate",
    "identification_error",
)


@dataclass(frozen=True)
class SeriesRow:
    """One analyzed batch point of one identifier."""

    id: str
    batch_index: int
    elapsed_time_us: float
    accumulated_offset_us: float
    skew_estimate: float
    identification_error: float


def write_series_csv(rows: list[SeriesRow]) -> str:
    lines = [",".join(SERIES_COLUMNS)]
    for row in sorted(rows, key=lambda r: (r.id, r.batch_index)):
        lines.append(
            f"{row.id},{row.batch_index},{row.elapsed_time_us!r},"
            f"{row.accumulated_offset_us!r},{row.skew_estimate!r},"
            f"{row.identification_error!r}"
        )
    return "\n".join(lines) + "\n"


def parse_series_csv(text: str) -> list[SeriesRow]:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines or lines[0] != ",".join(SERIES_COLUMNS):
        raise TraceFormatError("series CSV header missing or malformed", line=1)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(SERIES_COLUMNS):
            raise TraceFormatError(
                f"expected {len(SERIES_COLUMNS)} columns, got {len(parts)}",
                line=lineno,
            )
        try:
            rows.append(
                SeriesRow(
                    id=parts[0],
                    batch_index=int(parts[1]),
                    elapsed_time_us=float(parts[2]),
                    accumulated_offset_us=float(parts[3]),
                    skew_estimate=float(parts[4]),
                    identification_error=float(parts[5]),
                )
            )
        except ValueError as exc:
            raise TraceFormatError(str(exc), line=lineno) from exc
    return rows


# --- fingerprint database ---------------------------------------------------


@dataclass(frozen=True)
class DbRecord:
    """One persisted fingerprint: per identifier (kind='id') or per ECU."""

    kind: str  # 'id' or 'ecu'
    key: str
    skew_us_per_s: float
    ci_us_per_s: float
    n_batches: int
    period_us: float | None = None
    ecu: str | None = None


def write_db(records: list[DbRecord], metadata: dict[str, str] | None = None) -> str:
    lines = [DB_HEADER]
    for key in sorted(metadata or {}):
        lines.append(f"# {key}: {metadata[key]}")
    ordered = sorted(records, key=lambda r: (r.kind, r.key))
    for rec in ordered:
        period = "-" if rec.period_us is None else repr(rec.period_us)
        ecu = rec.ecu if rec.ecu is not None else "-"
        lines.append(
            f"{rec.kind} {rec.key} ecu={ecu} period_us={period} "
            f"skew_us_per_s={rec.skew_us_per_s!r} ci_us_per_s={rec.ci_us_per_s!r} "
            f"n_batches={rec.n_batches}"
        )
    return "\n".join(lines) + "\n"


def parse_db(text: str) -> tuple[list[DbRecord], dict[str, str]]:
    records: list[DbRecord] = []
    metadata: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if ": " in body and not body.startswith("canskew"):
                key, value = body.split(": ", 1)
                metadata[key] = value
            continue
        parts = line.split()
        if len(parts) != 7 or parts[0] not in ("id", "ecu"):
            raise TraceFormatError(f"unparseable db line {line!r}", line=lineno)
        fields: dict[str, str] = {}
        for token in parts[2:]:
            if "=" not in token:
                raise TraceFormatError(f"bad db field {token!r}", line=lineno)
            name, value = token.split("=", 1)
            fields[name] = value
        try:
            records.append(
                DbRecord(
                    kind=parts[0],
                    key=parts[1],
                    skew_us_per_s=float(fields["skew_us_per_s"]),
                    ci_us_per_s=float(fields["ci_us_per_s"]),
                    n_batches=int(fields["n_batches"]),
                    period_us=None
                    if fields["period_us"] == "-"
                    else float(fields["period_us"]),
                    ecu=None if fields["ecu"] == "-" else fields["ecu"],
                )
            )
        except (KeyError, ValueError) as exc:
            raise TraceFormatError(f"bad db record: {exc}", line=lineno) from exc
    return records, metadata
