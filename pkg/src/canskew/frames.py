"""CAN frame domain types."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InvalidInputError

MAX_STANDARD_ID = 0x7FF
MAX_EXTENDED_ID = 0x1FFFFFFF


@dataclass(frozen=True, order=True)
class FrameId:
    """A CAN identifier.

    ``extended`` distinguishes 29-bit identifiers (written as 8 hex digits)
    from 11-bit ones (3 hex digits); the distinction matters for arbitration
    logs and for candump-compatible serialization.
    """

    value: int
    extended: bool = True

    def __post_init__(self):
        limit = MAX_EXTENDED_ID if self.extended else MAX_STANDARD_ID
        if not 0 <= self.value <= limit:
            raise InvalidInputError(
                f"frame id 0x{self.value:X} out of range for "
                f"{'extended' if self.extended else 'standard'} identifier"
            )

    @property
    def text(self) -> str:
        """Canonical hex spelling: 8 digits extended, 3 standard."""
        return f"{self.value:08X}" if self.extended else f"{self.value:03X}"

    @classmethod
    def from_text(cls, text: str) -> "FrameId":
        if len(text) not in (3, 8):
            raise InvalidInputError(f"frame id {text!r} must be 3 or 8 hex digits")
        return cls(int(text, 16), extended=len(text) == 8)


@dataclass(frozen=True)
class CanFrame:
    """A CAN data frame as seen on the bus."""

    id: FrameId
    dlc: int = 8
    payload: bytes = field(default=b"\x00" * 8)
    source: str | None = None

    def __post_init__(self):
        if not 0 <= self.dlc <= 8:
            raise InvalidInputError(f"dlc {self.dlc} outside [0, 8]")
        if len(self.payload) != self.dlc:
            raise InvalidInputError(
                f"payload length {len(self.payload)} != dlc {self.dlc}"
            )


@dataclass(frozen=True)
class TimestampedFrame:
    """A frame with its receiver-side arrival time in whole microseconds."""

    arrival_us: int
    frame: CanFrame

    def __post_init__(self):
        if self.arrival_us < 0:
            raise InvalidInputError("arrival time must be non-negative")
