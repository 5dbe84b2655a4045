"""Deterministic discrete-event simulation of a CAN bus.

Each ECU enqueues its periodic frames at intended send times derived from its
own (skewed, jittered) clock.  Whenever the bus goes idle, the lowest
identifier among queued frames wins arbitration, occupies the bus for one
frame time, and is delivered after a propagation delay.  Identical
(scenario, seed) pairs yield byte-identical traces.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .frames import CanFrame, FrameId, TimestampedFrame
from .scenario import ClockModel, Scenario
from .traceio import TraceDocument

# Pending-queue depth beyond which the run is flagged as saturated.
SATURATION_BACKLOG = 500

# Slack for float round-off when deciding whether a frame is ready at a
# bus-idle instant (microseconds).
_READY_EPS = 1e-6


def frame_time(frame_bits: int, bitrate_bps: int) -> float:
    """Wire occupancy of one frame in microseconds, rounded to 0.1 us."""
    if frame_bits <= 0 or bitrate_bps <= 0:
        raise InvalidInputError("frame_bits and bitrate_bps must be > 0")
    return round(frame_bits / bitrate_bps * 1e6, 1)


def intended_send_time(
    clock: ClockModel, i: int, period_us: float, eps_us: float = 0.0
) -> float:
    """Local-clock send instant of message ``i`` on a period-T schedule.

    Returns ``i*T + O_i`` where ``O_i = skew_ppm * (i*T) * 1e-6 + eps + phase``.
    With a zero-skew, zero-jitter, zero-phase clock this is exactly ``i*T``.
    """
    if i < 0 or period_us <= 0:
        raise InvalidInputError("need i >= 0 and period_us > 0")
    ideal = i * period_us
    return ideal + clock.skew_ppm * ideal * 1e-6 + eps_us + clock.phase_us


def arbitrate(ready: list[CanFrame]) -> CanFrame:
    """The frame winning bus arbitration: numerically smallest identifier,
    with a deterministic (source, payload) tie-break for spoofed duplicates."""
    if not ready:
        raise InvalidInputError("arbitrate needs a nonempty ready set")
    return min(ready, key=lambda f: (f.id.value, f.source or "", f.payload))


def stream_rng(seed: int, label: str, entry_index: int) -> np.random.Generator:
    """Independent generator per (ECU, schedule entry).

    Keyed so that adding or truncating one stream never perturbs another
    stream's noise draws.
    """
    return np.random.default_rng(
        [seed & 0xFFFFFFFFFFFFFFFF, entry_index, *label.encode()]
    )


@dataclass(frozen=True)
class _SendEvent:
    send_us: float
    id_value: int
    extended: bool
    source: str
    payload: bytes
    dlc: int
    delay_us: float


def _generate_events(scenario: Scenario) -> list[_SendEvent]:
    bus = scenario.bus
    duration_us = scenario.duration_ms * 1000.0
    events: list[_SendEvent] = []
    for ecu in scenario.ecus:
        for entry_index, entry in enumerate(ecu.schedule):
            rng = stream_rng(scenario.seed, ecu.label, entry_index)
            period_us = entry.period_ms * 1000.0
            first_us = entry.first_ms * 1000.0
            # Upper bound on message count; individual messages are then
            # filtered by the entry's active window and the run duration.
            n = int((duration_us - first_us) // period_us) + 2
            if n <= 0:
                continue
            idx = np.arange(n)
            eps = rng.normal(0.0, ecu.clock.offset_jitter_us, n)
            delay_noise = rng.normal(0.0, bus.delay_jitter_us, n)
            ideal = first_us + idx * period_us
            send = (
                first_us
                + idx * period_us
                + ecu.clock.skew_ppm * (idx * period_us) * 1e-6
                + eps
                + ecu.clock.phase_us
            )
            delays = np.maximum(0.0, bus.base_delay_us + delay_noise)
            win_start = entry.window_start_ms * 1000.0
            win_end = (
                None if entry.window_end_ms is None else entry.window_end_ms * 1000.0
            )
            payload = bytes(entry.dlc)
            for i in range(n):
                if ideal[i] < win_start:
                    continue
                if win_end is not None and ideal[i] >= win_end:
                    break
                if send[i] >= duration_us:  # run covers [0, duration)
                    continue
                events.append(
                    _SendEvent(
                        send_us=max(0.0, float(send[i])),
                        id_value=entry.id.value,
                        extended=entry.id.extended,
                        source=ecu.label,
                        payload=payload,
                        dlc=entry.dlc,
                        delay_us=float(delays[i]),
                    )
                )
    events.sort(key=lambda e: (e.send_us, e.id_value, e.source))
    return events


def run(scenario: Scenario) -> TraceDocument:
    """Simulate a scenario (expanding its attack, if any) into a trace."""
    from .attacks import apply_attack

    scenario.validate()
    scenario_hash = scenario.sha256()
    expanded = apply_attack(scenario)
    expanded.validate()

    bus = expanded.bus
    ft_us = frame_time(bus.frame_bits, bus.bitrate_bps) * bus.stuff_multiplier
    events = _generate_events(expanded)

    entries: list[TimestampedFrame] = []
    pending: list[tuple[int, str, bytes, int]] = []  # arbitration key + event index
    idx = 0
    t = 0.0
    last_arrival = -1
    max_backlog = 0
    while idx < len(events) or pending:
        if not pending:
            t = max(t, events[idx].send_us)
        while idx < len(events) and events[idx].send_us <= t + _READY_EPS:
            ev = events[idx]
            heapq.heappush(pending, (ev.id_value, ev.source, ev.payload, idx))
            idx += 1
        if not pending:
            continue
        max_backlog = max(max_backlog, len(pending))
        _, _, _, ev_idx = heapq.heappop(pending)
        ev = events[ev_idx]
        tx_end = t + ft_us
        arrival = int(round(tx_end + ev.delay_us))
        if arrival <= last_arrival:
            arrival = last_arrival + 1
        last_arrival = arrival
        entries.append(
            TimestampedFrame(
                arrival_us=arrival,
                frame=CanFrame(
                    id=FrameId(ev.id_value, extended=ev.extended),
                    dlc=ev.dlc,
                    payload=ev.payload,
                    source=ev.source,
                ),
            )
        )
        t = tx_end

    doc = TraceDocument(
        entries=entries,
        metadata={
            "scenario_sha256": scenario_hash,
            "seed": str(scenario.seed),
            "bitrate_bps": str(bus.bitrate_bps),
            "frames": str(len(entries)),
        },
    )
    if max_backlog > SATURATION_BACKLOG:
        doc.warnings.append(
            f"bus saturated: pending queue reached {max_backlog} frames"
        )
    return doc
