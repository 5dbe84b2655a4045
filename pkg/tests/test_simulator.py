import numpy as np
import pytest

from canskew import BusSpec, ClockModel, EcuSpec, Scenario, ScheduleEntry
from canskew.errors import InvalidInputError
from canskew.frames import CanFrame, FrameId
from canskew.simulator import arbitrate, frame_time, intended_send_time, run
from canskew.traceio import arrivals_by_id, write_trace


def quiet_bus():
    return BusSpec(base_delay_us=10.0, delay_jitter_us=0.0)


def single_id_scenario(duration_ms=200.0, period_ms=50.0):
    ecu = EcuSpec(
        label="A",
        clock=ClockModel(),
        schedule=(ScheduleEntry(id=FrameId(0x1), period_ms=period_ms),),
    )
    return Scenario(bus=quiet_bus(), ecus=(ecu,), duration_ms=duration_ms, seed=0)


class TestFrameTime:
    def test_extended_frame_at_500kbps(self):
        assert frame_time(131, 500_000) == 262.0

    def test_unit_case(self):
        assert frame_time(1, 1_000_000) == 1.0

    def test_rounded_to_tenth_microsecond(self):
        assert frame_time(100, 300_000) == round(100 / 0.3, 1)

    def test_rejects_nonpositive(self):
        with pytest.raises(InvalidInputError):
            frame_time(0, 500_000)
        with pytest.raises(InvalidInputError):
            frame_time(131, 0)


class TestIntendedSendTime:
    def test_ideal_clock(self):
        assert intended_send_time(ClockModel(), 3, 50_000.0) == 150_000.0

    def test_positive_skew(self):
        clock = ClockModel(skew_ppm=100.0)
        assert intended_send_time(clock, 20, 50_000.0) == pytest.approx(1_000_100.0)

    def test_negative_skew(self):
        clock = ClockModel(skew_ppm=-100.0)
        assert intended_send_time(clock, 20, 50_000.0) == pytest.approx(999_900.0)

    def test_phase_and_noise_add(self):
        clock = ClockModel(phase_us=7.0)
        assert intended_send_time(clock, 0, 50_000.0, eps_us=2.5) == 9.5

    def test_rejects_bad_args(self):
        with pytest.raises(InvalidInputError):
            intended_send_time(ClockModel(), -1, 50_000.0)
        with pytest.raises(InvalidInputError):
            intended_send_time(ClockModel(), 1, 0.0)


class TestArbitrate:
    def test_flood_id_wins(self):
        ready = [
            CanFrame(FrameId(0x2C0, extended=False)),
            CanFrame(FrameId(0x000, extended=False), dlc=0, payload=b""),
            CanFrame(FrameId(0x5A2, extended=False)),
        ]
        assert arbitrate(ready).id.value == 0x000

    def test_lower_id_wins(self):
        ready = [
            CanFrame(FrameId(0x5A2, extended=False)),
            CanFrame(FrameId(0x2C0, extended=False)),
        ]
        assert arbitrate(ready).id.value == 0x2C0

    def test_singleton(self):
        frame = CanFrame(FrameId(0x00000005))
        assert arbitrate([frame]) is frame

    def test_duplicate_id_tie_break_is_deterministic(self):
        a = CanFrame(FrameId(0x5), source="A")
        x = CanFrame(FrameId(0x5), source="X")
        assert arbitrate([x, a]) is a
        assert arbitrate([a, x]) is a

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            arbitrate([])


class TestRun:
    def test_ideal_periodic_source(self):
        # send at i*T, transmit for 262.0 us, arrive base_delay later
        doc = run(single_id_scenario())
        arrivals = [entry.arrival_us for entry in doc.entries]
        assert arrivals == [272, 50_272, 100_272, 150_272]

    def test_interarrivals_exactly_period(self):
        doc = run(single_id_scenario(duration_ms=2_000.0))
        diffs = np.diff([entry.arrival_us for entry in doc.entries])
        assert set(diffs.tolist()) == {50_000}

    def test_nine_ids_every_fifty_ms(self, normal_doc):
        grouped = arrivals_by_id(normal_doc)
        assert len(grouped) == 9
        for arrivals in grouped.values():
            assert abs(float(np.median(np.diff(arrivals))) - 50_000.0) < 100.0

    def test_determinism(self):
        scenario = single_id_scenario(duration_ms=3_000.0)
        assert write_trace(run(scenario)) == write_trace(run(scenario))

    def test_arrivals_strictly_increase(self, normal_doc):
        arrivals = [entry.arrival_us for entry in normal_doc.entries]
        assert all(b > a for a, b in zip(arrivals, arrivals[1:]))

    def test_busy_bus_spacing_at_least_frame_time(self):
        # two zero-noise ECUs sending at the same instants: the loser of each
        # arbitration arrives one frame time after the winner
        ecus = tuple(
            EcuSpec(
                label=label,
                schedule=(ScheduleEntry(id=FrameId(value), period_ms=50.0),),
            )
            for label, value in (("A", 0x1), ("B", 0x2))
        )
        doc = run(Scenario(bus=quiet_bus(), ecus=ecus, duration_ms=500.0, seed=0))
        arrivals = [entry.arrival_us for entry in doc.entries]
        gaps = np.diff(arrivals)
        assert np.min(gaps[::2]) >= 262

    def test_saturation_warning(self):
        # offered load well above one frame per frame_time
        doc = run(single_id_scenario(duration_ms=500.0, period_ms=0.2))
        assert any("saturated" in warning for warning in doc.warnings)

    def test_metadata_records_scenario_hash(self):
        scenario = single_id_scenario()
        doc = run(scenario)
        assert doc.metadata["scenario_sha256"] == scenario.sha256()
        assert doc.metadata["frames"] == str(len(doc.entries))

    def test_window_confines_sends(self):
        entry = ScheduleEntry(
            id=FrameId(0x1), period_ms=50.0, window_start_ms=100.0, window_end_ms=200.0
        )
        ecu = EcuSpec(label="A", schedule=(entry,))
        doc = run(Scenario(bus=quiet_bus(), ecus=(ecu,), duration_ms=400.0, seed=0))
        sends = [e.arrival_us - 272 for e in doc.entries]
        assert sends == [100_000, 150_000]
