"""Change detection on accumulated-offset slopes and attack classification.

Each identifier is streamed through the fingerprinting pipeline; the first
difference of the RLS identification error is normalized and fed to a
two-sided CUSUM.  An alarm
closes the current fit segment; after a short settling gap a fresh segment
re-fingerprints the post-change stream so the classifier can compare the
before/after skews, per-id rates, and bus-wide context.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .fingerprint import (
    AccumulatedOffsetSeries,
    Fingerprint,
    OffsetBatch,
    SkewEstimator,
    accumulate,
    fingerprint_from_estimator,
    make_batches,
    match,
    skew_from_slope,
)
from .traceio import DbRecord, SeriesRow, TraceDocument, arrivals_by_id

KIND_SLOPE = "SlopeChange"
KIND_RATE = "RateAnomaly"
KIND_UNKNOWN_ID = "UnknownId"

CLASS_DOS = "DoS"
CLASS_FUZZY = "Fuzzy"
CLASS_IMPERSONATION = "Impersonation"
CLASS_UNKNOWN = "Unknown"


@dataclass
class AnalysisConfig:
    """Tunables of the fingerprint + detection pipeline."""

    batch_size: int = 20
    lam: float = 0.9995
    kappa: float = 4.0
    gamma: float = 5.0
    min_batches: int = 10
    z: float = 3.0
    signed_accumulation: bool = False  # exported series style
    warmup_batches: int = 15  # per segment, alarms suppressed
    settle_batches: int = 2  # batches skipped after an alarm
    ewma_alpha: float = 0.01
    cluster_window_batches: int = 3
    rate_increase_ratio: float = 1.5
    flood_rate_factor: float = 10.0
    post_window_batches: int = 5
    period_us: float | None = None  # overrides db periods when set

    def validate(self):
        if self.batch_size < 2:
            raise InvalidInputError("batch_size must be >= 2")
        if not 0.9 < self.lam <= 1.0:
            raise InvalidInputError("lambda must be in (0.9, 1.0]")
        if not self.gamma > self.kappa >= 0:
            raise InvalidInputError("need gamma > kappa >= 0")


class CusumDetector:
    """Two-sided CUSUM over normalized identification errors.

    Errors are standardized with exponentially weighted running mean and
    variance (variance initialized to 1 so an untrained detector is
    conservative), then accumulated with drift allowance ``kappa``; an alarm
    fires when either side exceeds ``gamma``.
    """

    def __init__(self, kappa: float = 4.0, gamma: float = 5.0, alpha: float = 0.01):
        if not gamma > kappa >= 0:
            raise InvalidInputError("need gamma > kappa >= 0")
        self.kappa = kappa
        self.gamma = gamma
        self.alpha = alpha
        self.l_plus = 0.0
        self.l_minus = 0.0
        self.error_mean = 0.0
        self.error_var = 1.0

    def update(self, e: float) -> bool:
        """Consume one identification error; True when an alarm fires.

        The running statistics are not updated on an alarming sample, so the
        change itself does not poison the noise model.
        """
        std = max(math.sqrt(self.error_var), 1e-12)
        normalized = (e - self.error_mean) / std
        self.l_plus = max(0.0, self.l_plus + normalized - self.kappa)
        self.l_minus = max(0.0, self.l_minus - normalized - self.kappa)
        alarm = max(self.l_plus, self.l_minus) > self.gamma
        if not alarm:
            diff = e - self.error_mean
            incr = self.alpha * diff
            self.error_mean += incr
            self.error_var = (1.0 - self.alpha) * (self.error_var + diff * incr)
        return alarm

    def reset(self):
        self.l_plus = 0.0
        self.l_minus = 0.0
        self.error_mean = 0.0
        self.error_var = 1.0


def cusum_update(state: CusumDetector, e: float) -> tuple[CusumDetector, bool]:
    """Functional wrapper over :meth:`CusumDetector.update`."""
    return state, state.update(e)


@dataclass(frozen=True)
class DetectionEvent:
    """An alarm with its classification and suspected source ECU."""

    time_us: int
    id: str
    kind: str
    classified: str
    suspected_source: str | None
    evidence: dict = field(default_factory=dict)


@dataclass
class _Segment:
    start_batch: int
    anchor_us: float
    estimator: SkewEstimator
    cusum: CusumDetector
    acc_us: float = 0.0
    ended_in_alarm: bool = False
    prev_error_us: float | None = None
    warmup_innovations: list[float] = field(default_factory=list)

    def fingerprint(self, key: str, min_batches: int, z: float) -> Fingerprint | None:
        est = self.estimator
        if self.ended_in_alarm and est.n >= 2:
            # refit without the alarming point, which belongs to the change
            est = SkewEstimator(lam=self.estimator.lam)
            for t_s, acc in self.estimator.points[:-1]:
                est.update(t_s * 1e6, acc)
        if est.n < min_batches:
            return None
        return fingerprint_from_estimator(est, key, min_batches, z)


@dataclass
class _Alarm:
    id: str
    batch_index: int
    time_us: int
    pre_fp: Fingerprint | None
    post_fp: Fingerprint | None
    pre_median_interval_us: float
    post_median_interval_us: float


@dataclass
class _IdAnalysis:
    id: str
    period_us: float
    arrivals: np.ndarray
    rows: list[SeriesRow]
    export_series: AccumulatedOffsetSeries | None
    first_fp: Fingerprint | None
    alarms: list[_Alarm]


@dataclass
class AnalysisResult:
    series: list[AccumulatedOffsetSeries]
    rows: list[SeriesRow]
    fingerprints: list[Fingerprint]
    events: list[DetectionEvent]
    warnings: list[str]


def _median_interval(arrivals: np.ndarray) -> float:
    if arrivals.size < 2:
        return math.inf
    return float(np.median(np.diff(arrivals)))


def _analyze_id(
    id_text: str, arrivals: np.ndarray, period_us: float, cfg: AnalysisConfig
) -> _IdAnalysis:
    batches = make_batches(arrivals, id_text, period_us, cfg.batch_size)
    rows: list[SeriesRow] = []
    alarms: list[_Alarm] = []
    if not batches:
        return _IdAnalysis(id_text, period_us, arrivals, rows, None, None, alarms)

    stream_t0 = float(arrivals[0])
    export_acc = 0.0
    segments: list[_Segment] = []
    segment: _Segment | None = None
    settle = 0

    for k, batch in enumerate(batches):
        export_acc += (
            batch.avg_offset_us
            if cfg.signed_accumulation
            else abs(batch.avg_offset_us)
        )
        if settle > 0:
            settle -= 1
            rows.append(
                SeriesRow(
                    id=id_text,
                    batch_index=k,
                    elapsed_time_us=batch.end_time_us - stream_t0,
                    accumulated_offset_us=export_acc,
                    skew_estimate=0.0,
                    identification_error=0.0,
                )
            )
            continue
        if segment is None:
            segment = _Segment(
                start_batch=k,
                anchor_us=float(arrivals[k * cfg.batch_size]),
                estimator=SkewEstimator(lam=cfg.lam),
                cusum=CusumDetector(cfg.kappa, cfg.gamma, cfg.ewma_alpha),
            )
            segments.append(segment)
        segment.acc_us += batch.avg_offset_us
        # +period so the fit abscissa of batch j is exactly (j+1) batch spans
        elapsed = batch.end_time_us - segment.anchor_us + period_us
        slope, e = segment.estimator.update(elapsed, segment.acc_us)
        # The raw residual wanders (accumulated noise is a random walk), so
        # the change statistic is its first difference, which is stationary.
        innovation = 0.0 if segment.prev_error_us is None else e - segment.prev_error_us
        segment.prev_error_us = e
        alarm = False
        if segment.estimator.n <= cfg.warmup_batches:
            # n >= 3: the first residual predates any fit, so the first
            # difference is meaningful only from the third point on
            if segment.estimator.n >= 3:
                segment.warmup_innovations.append(innovation)
            if segment.estimator.n == cfg.warmup_batches and segment.warmup_innovations:
                warm = np.asarray(segment.warmup_innovations)
                segment.cusum.error_mean = float(np.mean(warm))
                segment.cusum.error_var = max(
                    float(np.var(warm, ddof=1)) if warm.size > 1 else 0.0, 1e-12
                )
        else:
            alarm = segment.cusum.update(innovation)
        rows.append(
            SeriesRow(
                id=id_text,
                batch_index=k,
                elapsed_time_us=batch.end_time_us - stream_t0,
                accumulated_offset_us=export_acc,
                skew_estimate=skew_from_slope(slope),
                identification_error=e,
            )
        )
        if alarm:
            segment.ended_in_alarm = True
            pre_arr = arrivals[segment.start_batch * cfg.batch_size : k * cfg.batch_size]
            post_arr = arrivals[
                (k + 1) * cfg.batch_size : (k + 1 + cfg.post_window_batches)
                * cfg.batch_size
            ]
            alarms.append(
                _Alarm(
                    id=id_text,
                    batch_index=k,
                    time_us=int(batch.end_time_us),
                    pre_fp=segment.fingerprint(id_text, cfg.min_batches, cfg.z),
                    post_fp=None,
                    pre_median_interval_us=_median_interval(pre_arr),
                    post_median_interval_us=_median_interval(post_arr),
                )
            )
            segment = None
            settle = cfg.settle_batches

    # attach each alarm's post-change fingerprint from the following segment
    post_fps = [seg.fingerprint(id_text, cfg.min_batches, cfg.z) for seg in segments]
    for i, alarm in enumerate(alarms):
        if i + 1 < len(segments):
            alarm.post_fp = post_fps[i + 1]

    export_series = accumulate(
        batches, signed=cfg.signed_accumulation, t0=stream_t0
    )
    first_fp = segments[0].fingerprint(id_text, cfg.min_batches, cfg.z) if segments else None
    return _IdAnalysis(id_text, period_us, arrivals, rows, export_series, first_fp, alarms)


@dataclass(frozen=True)
class FloodEvidence:
    """A high-rate top-priority stream not present in the fingerprint DB."""

    id: str
    first_us: int
    last_us: int
    median_interval_us: float


@dataclass
class ClassificationContext:
    """Everything the classifier may consult about one alarm."""

    alarm: _Alarm
    cluster_id_count: int  # distinct ids alarming near this alarm
    tracked_id_count: int
    cluster_window_us: float
    floods: list[FloodEvidence]
    db_id_records: dict[str, DbRecord]
    db_ecu_fps: list[Fingerprint]
    rate_increase_ratio: float = 1.5


def classify(ctx: ClassificationContext) -> tuple[str, str | None, dict]:
    """Decision rules mapping one alarm to (attack class, suspected source).

    DoS: many identifiers disturbed together while a flood occupied the bus.
    Fuzzy: the identifier's arrival rate increased (a second sender).
    Impersonation: rate unchanged, but the post-change skew persistently
    departs from the identifier's registered fingerprint.
    Unknown is the fallback whenever the evidence is ambiguous.
    """
    alarm = ctx.alarm
    evidence: dict = {
        "cluster_ids": ctx.cluster_id_count,
        "pre_median_interval_us": alarm.pre_median_interval_us,
        "post_median_interval_us": alarm.post_median_interval_us,
    }
    if alarm.pre_fp is not None:
        evidence["pre_skew_us_per_s"] = alarm.pre_fp.skew_us_per_s
        evidence["pre_ci_us_per_s"] = alarm.pre_fp.ci_us_per_s
    if alarm.post_fp is not None:
        evidence["post_skew_us_per_s"] = alarm.post_fp.skew_us_per_s
        evidence["post_ci_us_per_s"] = alarm.post_fp.ci_us_per_s

    # (a) bus-wide transient + observed flood -> DoS
    dos_min_ids = max(3, math.ceil(0.5 * ctx.tracked_id_count))
    flood_hit = next(
        (
            flood
            for flood in ctx.floods
            if flood.first_us <= alarm.time_us
            and alarm.time_us - flood.last_us <= ctx.cluster_window_us
        ),
        None,
    )
    if flood_hit is not None and ctx.cluster_id_count >= dos_min_ids:
        evidence["flood_id"] = flood_hit.id
        source = None
        flood_record = ctx.db_id_records.get(flood_hit.id)
        if flood_record is not None and flood_record.ecu is not None:
            source = flood_record.ecu
        return CLASS_DOS, source, evidence

    # (b) per-id rate increase -> Fuzzy (a second sender shares the id)
    pre_i = alarm.pre_median_interval_us
    post_i = alarm.post_median_interval_us
    if (
        math.isfinite(pre_i)
        and math.isfinite(post_i)
        and post_i > 0
        and pre_i / post_i >= ctx.rate_increase_ratio
    ):
        source = None
        if alarm.post_fp is not None and ctx.db_ecu_fps:
            source = match(alarm.post_fp, ctx.db_ecu_fps)
        return CLASS_FUZZY, source, evidence

    # (c) persistent skew change away from the registered fingerprint
    record = ctx.db_id_records.get(alarm.id)
    if record is not None and alarm.pre_fp is not None and alarm.post_fp is not None:
        reg = Fingerprint(
            key=record.key,
            skew_us_per_s=record.skew_us_per_s,
            ci_us_per_s=record.ci_us_per_s,
            n_batches=record.n_batches,
        )
        pre_matches = (
            abs(alarm.pre_fp.skew_us_per_s - reg.skew_us_per_s)
            <= alarm.pre_fp.ci_us_per_s + reg.ci_us_per_s
        )
        post_departs = (
            abs(alarm.post_fp.skew_us_per_s - reg.skew_us_per_s)
            > alarm.post_fp.ci_us_per_s + reg.ci_us_per_s
        )
        if pre_matches and post_departs:
            if record.ecu is not None:
                evidence["victim"] = record.ecu
            source = None
            if ctx.db_ecu_fps:
                source = match(alarm.post_fp, ctx.db_ecu_fps)
            return CLASS_IMPERSONATION, source, evidence

    return CLASS_UNKNOWN, None, evidence


def analyze(
    trace: TraceDocument, config: AnalysisConfig, db: list[DbRecord]
) -> AnalysisResult:
    """Stream a trace through fingerprinting + CUSUM and classify the alarms."""
    config.validate()
    warnings: list[str] = []
    grouped = arrivals_by_id(trace)

    db_id_records = {rec.key: rec for rec in db if rec.kind == "id"}
    db_ecu_fps = [
        Fingerprint(rec.key, rec.skew_us_per_s, rec.ci_us_per_s, rec.n_batches)
        for rec in db
        if rec.kind == "ecu"
    ]

    known_periods: dict[str, float] = {}
    for key, rec in db_id_records.items():
        period = config.period_us if config.period_us is not None else rec.period_us
        if period is not None:
            known_periods[key] = period

    events: list[DetectionEvent] = []
    floods: list[FloodEvidence] = []

    # Unknown identifiers: anything on the bus absent from the database.
    min_known_period = min(known_periods.values(), default=math.inf)
    min_known_value = min(
        (int(key, 16) for key in db_id_records), default=0x20000000
    )
    for key in sorted(set(grouped) - set(db_id_records)):
        arrivals = grouped[key]
        interval = _median_interval(arrivals)
        is_flood = (
            interval * config.flood_rate_factor < min_known_period
            and int(key, 16) <= min_known_value
        )
        if is_flood:
            floods.append(
                FloodEvidence(
                    id=key,
                    first_us=int(arrivals[0]),
                    last_us=int(arrivals[-1]),
                    median_interval_us=interval,
                )
            )

    analyses: list[_IdAnalysis] = []
    for key in sorted(known_periods):
        if key not in grouped:
            continue
        analyses.append(
            _analyze_id(key, grouped[key], known_periods[key], config)
        )
    if not analyses:
        warnings.append("no known periodic identifiers found in trace")

    tracked = len(analyses)
    max_period = max((a.period_us for a in analyses), default=0.0)
    cluster_window_us = (
        config.cluster_window_batches * config.batch_size * max_period
    )

    all_alarms = [alarm for a in analyses for alarm in a.alarms]
    for alarm in all_alarms:
        near_ids = {
            other.id
            for other in all_alarms
            if abs(other.time_us - alarm.time_us) <= cluster_window_us
        }
        ctx = ClassificationContext(
            alarm=alarm,
            cluster_id_count=len(near_ids),
            tracked_id_count=tracked,
            cluster_window_us=cluster_window_us,
            floods=floods,
            db_id_records=db_id_records,
            db_ecu_fps=db_ecu_fps,
            rate_increase_ratio=config.rate_increase_ratio,
        )
        classified, source, evidence = classify(ctx)
        kind = KIND_RATE if classified == CLASS_FUZZY else KIND_SLOPE
        events.append(
            DetectionEvent(
                time_us=alarm.time_us,
                id=alarm.id,
                kind=kind,
                classified=classified,
                suspected_source=source,
                evidence=evidence,
            )
        )

    # UnknownId events (flood streams are classified as the DoS vehicle when
    # the bus-wide disturbance confirms them).
    alarmed_ids = {alarm.id for alarm in all_alarms}
    for key in sorted(set(grouped) - set(db_id_records)):
        if not db_id_records:
            break
        arrivals = grouped[key]
        flood = next((f for f in floods if f.id == key), None)
        classified = CLASS_UNKNOWN
        if flood is not None and len(alarmed_ids) >= max(3, math.ceil(0.5 * tracked)):
            classified = CLASS_DOS
        events.append(
            DetectionEvent(
                time_us=int(arrivals[0]),
                id=key,
                kind=KIND_UNKNOWN_ID,
                classified=classified,
                suspected_source=None,
                evidence={"frames": int(arrivals.size)},
            )
        )

    events.sort(key=lambda ev: (ev.time_us, ev.id))
    rows = [row for a in analyses for row in a.rows]
    series = [a.export_series for a in analyses if a.export_series is not None]
    fingerprints = [a.first_fp for a in analyses if a.first_fp is not None]
    return AnalysisResult(
        series=series,
        rows=rows,
        fingerprints=fingerprints,
        events=events,
        warnings=warnings,
    )


def render_summary(result: AnalysisResult) -> str:
    """Human-readable one-page account of an analysis."""
    lines = ["canskew detection summary", "=" * 26]
    if result.warnings:
        for warning in result.warnings:
            lines.append(f"warning: {warning}")
    lines.append(f"identifiers analyzed: {len(result.series)}")
    lines.append(f"events: {len(result.events)}")
    for ev in result.events:
        source = ev.suspected_source or "unknown"
        lines.append(
            f"  t={ev.time_us / 1e6:.6f}s id={ev.id} kind={ev.kind} "
            f"class={ev.classified} source={source}"
        )
    if result.fingerprints:
        lines.append("fingerprints (pre-change segment):")
        for fp in result.fingerprints:
            lines.append(
                f"  {fp.key}: {fp.skew_us_per_s:+.3f} +/- {fp.ci_us_per_s:.3f} us/s "
                f"({fp.n_batches} batches)"
            )
    return "\n".join(lines) + "\n"


def render_events(events: list[DetectionEvent]) -> str:
    """Line-delimited event records: one event per line, key=value fields."""
    lines = []
    for ev in events:
        fields = [
            f"time_us={ev.time_us}",
            f"id={ev.id}",
            f"kind={ev.kind}",
            f"class={ev.classified}",
            f"source={ev.suspected_source or 'unknown'}",
        ]
        for key in sorted(ev.evidence):
            value = ev.evidence[key]
            if isinstance(value, float):
                value = f"{value!r}"
            fields.append(f"{key}={value}")
        lines.append(" ".join(fields))
    return "\n".join(lines) + ("\n" if lines else "")
