"""Clock-skew fingerprinting from periodic message arrival times.

Pipeline: consecutive arrivals of one identifier are grouped into batches of
N; each batch's average clock offset is the mean gap between measured
arrivals and an ideal periodic grid anchored at the batch's first arrival;
batch averages are accumulated into a series that is linear in time for a
constant-skew sender; a recursive least-squares fit through the origin of
that series yields the slope, and a calibrated transform of the slope is the
sender's clock skew in us/s (~ppm).

Calibration note: offsets inside a batch grow linearly from 0, so the batch
average equals *half* the drift accrued over one batch.  The accumulated
series of a clock drifting at s ppm therefore has slope s/(2(1+s*1e-6))
us/s; :func:`skew_from_slope` inverts that mapping exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, InvalidInputError

DEFAULT_LAMBDA = 0.9995
DEFAULT_MIN_BATCHES = 10
DEFAULT_Z = 3.0
_INITIAL_P = 1e12  # near-uninformative prior so RLS(lambda=1) matches OLS


@dataclass(frozen=True)
class OffsetBatch:
    """Average clock offset of one batch of N consecutive arrivals."""

    id: str
    batch_index: int
    avg_offset_us: float
    end_time_us: float
    n: int


@dataclass(frozen=True)
class AccumulatedOffsetSeries:
    """Per-identifier accumulated offset curve: (elapsed_us, accumulated_us)."""

    id: str
    points: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class Fingerprint:
    """Estimated clock skew with a confidence half-width."""

    key: str
    skew_us_per_s: float
    ci_us_per_s: float
    n_batches: int


def batch_avg_offset(arrivals, period_us: float) -> float:
    """Average gap between measured arrivals and an ideal periodic grid
    anchored at the batch's first arrival.

    For arrivals a_0..a_{N-1} returns mean over i>=1 of a_i - (a_0 + i*T).
    """
    arrivals = np.asarray(arrivals, dtype=float)
    if arrivals.size < 2:
        raise InsufficientDataError("a batch needs at least 2 arrivals")
    if np.any(np.diff(arrivals) <= 0):
        raise InvalidInputError("batch arrivals must be strictly increasing")
    if period_us <= 0:
        raise InvalidInputError("period_us must be > 0")
    i = np.arange(1, arrivals.size)
    gaps = arrivals[1:] - (arrivals[0] + i * period_us)
    return float(np.mean(gaps))


def make_batches(
    arrivals, id_text: str, period_us: float, batch_size: int, first_index: int = 0
) -> list[OffsetBatch]:
    """Split an arrival stream into consecutive non-overlapping batches.

    A trailing partial batch of fewer than ``batch_size`` arrivals is
    dropped.  ``first_index`` offsets the emitted batch indices so segmented
    analyses keep a global numbering.
    """
    if batch_size < 2:
        raise InvalidInputError("batch_size must be >= 2")
    arrivals = np.asarray(arrivals, dtype=float)
    batches = []
    for k in range(arrivals.size // batch_size):
        chunk = arrivals[k * batch_size : (k + 1) * batch_size]
        batches.append(
            OffsetBatch(
                id=id_text,
                batch_index=first_index + k,
                avg_offset_us=batch_avg_offset(chunk, period_us),
                end_time_us=float(chunk[-1]),
                n=batch_size,
            )
        )
    return batches


def accumulate(
    batches: list[OffsetBatch], signed: bool = False, t0: float = 0.0
) -> AccumulatedOffsetSeries:
    """Running sum of batch average offsets (absolute values by default).

    Point k is (end_time_us_k - t0, sum over j<=k of |avg_offset_j|); with
    ``signed=True`` the plain signed running sum is used instead.
    """
    if not batches:
        raise InsufficientDataError("accumulate needs at least one batch")
    ids = {b.id for b in batches}
    if len(ids) > 1:
        raise InvalidInputError(f"accumulate got mixed ids {sorted(ids)}")
    indices = [b.batch_index for b in batches]
    if indices != sorted(indices):
        raise InvalidInputError("batches must be ordered by batch_index")
    times = [b.end_time_us for b in batches]
    if any(b >= a for b, a in zip(times, times[1:])):
        raise InvalidInputError("batch end times must be strictly increasing")
    total = 0.0
    points = []
    for batch in batches:
        total += batch.avg_offset_us if signed else abs(batch.avg_offset_us)
        points.append((batch.end_time_us - t0, total))
    return AccumulatedOffsetSeries(id=batches[0].id, points=tuple(points))


class SkewEstimator:
    """Scalar recursive least squares through the origin with forgetting.

    Fits accumulated offset (us) against elapsed time (converted to seconds)
    so the slope is in us/s.  ``update`` returns the identification error
    computed *before* the update: the residual of the new point against the
    previous fit.
    """

    def __init__(self, lam: float = DEFAULT_LAMBDA):
        if not 0.9 < lam <= 1.0:
            raise InvalidInputError(f"forgetting factor {lam} outside (0.9, 1.0]")
        self.lam = lam
        self.slope = 0.0
        self.p = _INITIAL_P
        self.last_elapsed_us = -np.inf
        self.points: list[tuple[float, float]] = []  # (t_seconds, acc_us)

    @property
    def n(self) -> int:
        return len(self.points)

    def update(self, elapsed_us: float, accumulated_us: float) -> tuple[float, float]:
        """Consume one series point; returns (updated slope, identification error)."""
        if elapsed_us <= self.last_elapsed_us:
            raise InvalidInputError("series time must be strictly increasing")
        self.last_elapsed_us = elapsed_us
        t = elapsed_us / 1e6
        e = accumulated_us - self.slope * t
        denom = self.lam + t * self.p * t
        gain = self.p * t / denom
        self.slope += gain * e
        # algebraically (p - gain*t*p)/lam, written without the cancellation
        # that loses ~10 digits when the prior p dwarfs 1/t^2
        self.p = self.p / denom
        self.points.append((t, accumulated_us))
        return self.slope, e

    def slope_standard_error(self) -> float:
        """Standard error of the fitted slope.

        The accumulated series' noise is a random walk (each batch adds an
        independent offset-noise term), so the error is propagated from the
        per-batch increments rather than treating residuals as independent.
        """
        if self.n < 2:
            return 0.0
        pts = np.asarray(self.points)
        t, y = pts[:, 0], pts[:, 1]
        resid = y - self.slope * t
        increments = np.diff(resid, prepend=0.0)
        sigma_b2 = float(np.sum(increments**2) / (increments.size - 1))
        st2 = float(np.sum(t**2))
        suffix = np.cumsum(t[::-1])[::-1]
        var = sigma_b2 * float(np.sum(suffix**2)) / (st2**2)
        return float(np.sqrt(var))


def update_skew(
    state: SkewEstimator, point: tuple[float, float]
) -> tuple[SkewEstimator, float, float]:
    """Functional wrapper over :meth:`SkewEstimator.update`."""
    slope, e = state.update(point[0], point[1])
    return state, slope, e


def skew_from_slope(slope_us_per_s: float) -> float:
    """Invert the batch-averaging calibration: series slope -> clock skew.

    A clock at s ppm produces a series slope m = s/(2(1+s*1e-6)) us/s; this
    returns s given m.
    """
    return 2.0 * slope_us_per_s / (1.0 - 2e-6 * slope_us_per_s)


def _skew_ci_from_slope_ci(slope: float, slope_ci: float) -> float:
    # derivative of skew_from_slope at the estimate
    denom = 1.0 - 2e-6 * slope
    return abs(2.0 / (denom * denom)) * slope_ci


def fingerprint_from_estimator(
    estimator: SkewEstimator,
    key: str,
    min_batches: int = DEFAULT_MIN_BATCHES,
    z: float = DEFAULT_Z,
) -> Fingerprint:
    if estimator.n < min_batches:
        raise InsufficientDataError(
            f"{key}: {estimator.n} batches < min_batches {min_batches}"
        )
    se = estimator.slope_standard_error()
    return Fingerprint(
        key=key,
        skew_us_per_s=skew_from_slope(estimator.slope),
        ci_us_per_s=_skew_ci_from_slope_ci(estimator.slope, z * se),
        n_batches=estimator.n,
    )


def fingerprint_of(
    series: AccumulatedOffsetSeries,
    lam: float = DEFAULT_LAMBDA,
    min_batches: int = DEFAULT_MIN_BATCHES,
    z: float = DEFAULT_Z,
) -> Fingerprint:
    """Fingerprint an accumulated-offset series (signed accumulation expected
    for a sign-correct skew estimate)."""
    estimator = SkewEstimator(lam=lam)
    for elapsed_us, acc_us in series.points:
        estimator.update(elapsed_us, acc_us)
    return fingerprint_from_estimator(estimator, series.id, min_batches, z)


def match(fp: Fingerprint, db: list[Fingerprint]) -> str | None:
    """Unique database entry whose skew interval overlaps ``fp``'s; ``None``
    when no entry, or more than one, matches (ambiguity is surfaced)."""
    if not db:
        raise InvalidInputError("match needs a nonempty fingerprint database")
    hits = [
        entry
        for entry in db
        if abs(fp.skew_us_per_s - entry.skew_us_per_s)
        <= fp.ci_us_per_s + entry.ci_us_per_s
    ]
    if len(hits) == 1:
        return hits[0].key
    return None


def learn_period_us(arrivals) -> float:
    """Fallback nominal period: median inter-arrival, rounded to whole ms.

    Rounding to the millisecond grid recovers the shared nominal period
    instead of the sender's drifted one, which would otherwise cancel the
    very skew being measured.
    """
    arrivals = np.asarray(arrivals, dtype=float)
    if arrivals.size < 2:
        raise InsufficientDataError("need at least 2 arrivals to learn a period")
    median = float(np.median(np.diff(arrivals)))
    return max(1000.0, round(median / 1000.0) * 1000.0)


def fingerprint_trace(
    trace,
    batch_size: int = 20,
    lam: float = DEFAULT_LAMBDA,
    min_batches: int = DEFAULT_MIN_BATCHES,
    z: float = DEFAULT_Z,
    periods_us: dict[str, float] | None = None,
    groups: dict[str, str] | None = None,
):
    """Fingerprint every identifier of an (assumed attack-free) trace.

    ``periods_us`` maps id text to its nominal period; missing entries are
    learned from the stream (with a warning).  ``groups`` maps id text to the
    owning ECU label; when present, per-ECU combined fingerprints are added.
    Returns (db records, per-id fingerprints, warnings).
    """
    from .traceio import DbRecord, arrivals_by_id

    periods_us = dict(periods_us or {})
    groups = groups or {}
    records: list[DbRecord] = []
    fingerprints: list[Fingerprint] = []
    warnings: list[str] = []
    per_ecu: dict[str, list[Fingerprint]] = {}

    for id_text, arrivals in sorted(arrivals_by_id(trace).items()):
        period = periods_us.get(id_text)
        if period is None:
            if arrivals.size < 2:
                warnings.append(f"{id_text}: too few arrivals to learn a period")
                continue
            period = learn_period_us(arrivals)
            warnings.append(
                f"{id_text}: period not configured, learned {period:.0f} us"
            )
        batches = make_batches(arrivals, id_text, period, batch_size)
        if len(batches) < min_batches:
            warnings.append(
                f"{id_text}: only {len(batches)} batches, need {min_batches}"
            )
            continue
        anchor = float(arrivals[0])
        # +period on the abscissa: batch j then sits at exactly (j+1) spans
        series = accumulate(batches, signed=True, t0=anchor - period)
        fp = fingerprint_of(series, lam=lam, min_batches=min_batches, z=z)
        fingerprints.append(fp)
        ecu = groups.get(id_text)
        records.append(
            DbRecord(
                kind="id",
                key=id_text,
                skew_us_per_s=fp.skew_us_per_s,
                ci_us_per_s=fp.ci_us_per_s,
                n_batches=fp.n_batches,
                period_us=period,
                ecu=ecu,
            )
        )
        if ecu is not None:
            per_ecu.setdefault(ecu, []).append(fp)

    for label in sorted(per_ecu):
        combined = combine_fingerprints(per_ecu[label], label)
        records.append(
            DbRecord(
                kind="ecu",
                key=label,
                skew_us_per_s=combined.skew_us_per_s,
                ci_us_per_s=combined.ci_us_per_s,
                n_batches=combined.n_batches,
            )
        )
    return records, fingerprints, warnings


def combine_fingerprints(fps: list[Fingerprint], key: str) -> Fingerprint:
    """Inverse-variance weighted combination of one ECU's per-id fingerprints."""
    if not fps:
        raise InsufficientDataError("combine_fingerprints needs at least one input")
    floor = 1e-12
    weights = np.array([1.0 / max(fp.ci_us_per_s, floor) ** 2 for fp in fps])
    skews = np.array([fp.skew_us_per_s for fp in fps])
    combined = float(np.sum(weights * skews) / np.sum(weights))
    ci = float(np.sqrt(1.0 / np.sum(weights)))
    if all(fp.ci_us_per_s <= floor for fp in fps):
        ci = 0.0
    return Fingerprint(
        key=key,
        skew_us_per_s=combined,
        ci_us_per_s=ci,
        n_batches=sum(fp.n_batches for fp in fps),
    )
