"""canskew: CAN bus simulation and clock-skew fingerprinting IDS toolkit."""

from .attacks import AttackSpec, apply_attack, apply_dos, apply_fuzzy, apply_impersonation
from .detector import (
    AnalysisConfig,
    AnalysisResult,
    CusumDetector,
    DetectionEvent,
    analyze,
    classify,
    cusum_update,
)
from .errors import (
    CanSkewError,
    InsufficientDataError,
    InvalidInputError,
    ScenarioError,
    TraceFormatError,
)
from .fingerprint import (
    AccumulatedOffsetSeries,
    Fingerprint,
    OffsetBatch,
    SkewEstimator,
    accumulate,
    batch_avg_offset,
    fingerprint_of,
    fingerprint_trace,
    make_batches,
    match,
    skew_from_slope,
    update_skew,
)
from .frames import CanFrame, FrameId, TimestampedFrame
from .scenario import (
    BusSpec,
    ClockModel,
    EcuSpec,
    Scenario,
    ScheduleEntry,
    dump_scenario,
    load_scenario,
    load_scenario_file,
)
from .simulator import arbitrate, frame_time, intended_send_time, run
from .traceio import (
    DbRecord,
    SeriesRow,
    TraceDocument,
    parse_db,
    parse_trace,
    write_db,
    write_series_csv,
    write_trace,
)

__version__ = "0.1.0"
