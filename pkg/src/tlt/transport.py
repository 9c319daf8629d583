"""Constrained-radio framing with fragmentation and an in-memory channel.

Frame layouts (sizes mirror BLE payload budgets):

    advertising frame, 19 bytes, hard cap 31:
        magic(1)=0x54  version(1)=0x01  flags(1)  uuid(16)

    data frame, header 5 bytes, total <= 255 (extended: <= 1650):
        msg_type(1)  frag_index(1)  frag_total(1)  payload_len(2, big-endian)
        payload

Fragmented payloads are cut into 250-byte slices so each standard frame
stays within 255 bytes. An extended frame shares the header and simply
allows a larger payload; the `extended` flag is codec metadata, not a wire
bit. The transport does not authenticate anything: corruption surfaces as a
signature failure at the verifier.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from . import crypto
from .errors import InconsistentSet, MissingFragment, ParseError, PayloadTooLarge

ADV_MAGIC = 0x54
ADV_VERSION = 0x01
ADV_FRAME_LEN = 19
ADV_MAX = 31

DATA_HEADER_LEN = 5
DATA_MAX = 255
EXTENDED_MAX = 1650
FRAG_PAYLOAD = DATA_MAX - DATA_HEADER_LEN  # 250
EXTENDED_PAYLOAD_MAX = EXTENDED_MAX - DATA_HEADER_LEN  # 1645
MAX_FRAGMENTED_PAYLOAD = FRAG_PAYLOAD * 0xFF  # frag_total is one byte

MSG_CHALLENGE = 0x01
MSG_RESPONSE = 0x02
MSG_FRAGMENT = 0x03

FLAG_OPERATIONAL = 0x01

# Optional hex tracing hook for the CLI's --trace-frames.
_trace = None


def set_frame_trace(writer) -> None:
    """Install a callable(direction, frame_bytes) invoked on encode/parse."""
    global _trace
    _trace = writer


def _traced(direction: str, data: bytes) -> bytes:
    if _trace is not None:
        _trace(direction, data)
    return data


# ---------------------------------------------------------------------------
# Advertising frames
# ---------------------------------------------------------------------------

def encode_advertisement(uuid: bytes, flags: int = 0) -> bytes:
    """19-byte broadcast frame carrying the device UUID."""
    if len(uuid) != crypto.UUID_LEN:
        raise ParseError(f"uuid must be {crypto.UUID_LEN} bytes")
    frame = bytes([ADV_MAGIC, ADV_VERSION, flags & 0xFF]) + bytes(uuid)
    assert len(frame) == ADV_FRAME_LEN <= ADV_MAX
    return _traced("enc", frame)


def parse_advertisement(data: bytes) -> bytes:
    """Extract the UUID; raises ParseError on bad magic/version/length."""
    data = bytes(data)
    _traced("dec", data)
    if len(data) != ADV_FRAME_LEN:
        raise ParseError(f"advertising frame must be {ADV_FRAME_LEN} bytes, got {len(data)}")
    if data[0] != ADV_MAGIC:
        raise ParseError("bad advertising magic byte")
    if data[1] != ADV_VERSION:
        raise ParseError("unsupported advertising version")
    return data[3:]


# ---------------------------------------------------------------------------
# Data frames
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DataFrame:
    msg_type: int
    frag_index: int
    frag_total: int
    payload: bytes
    extended: bool = False

    def __post_init__(self):
        if not 0 <= self.msg_type <= 0xFF:
            raise ParseError("msg_type out of range")
        if not 1 <= self.frag_total <= 0xFF:
            raise ParseError("frag_total must be 1..255")
        if not 0 <= self.frag_index < self.frag_total:
            raise ParseError("frag_index must be below frag_total")
        limit = EXTENDED_PAYLOAD_MAX if self.extended else FRAG_PAYLOAD
        if len(self.payload) > limit:
            raise PayloadTooLarge(f"frame payload {len(self.payload)} exceeds {limit} bytes")


def encode_data_frame(frame: DataFrame) -> bytes:
    out = (
        bytes([frame.msg_type, frame.frag_index, frame.frag_total])
        + len(frame.payload).to_bytes(2, "big")
        + frame.payload
    )
    assert len(out) <= (EXTENDED_MAX if frame.extended else DATA_MAX)
    return _traced("enc", out)


def parse_data_frame(data: bytes) -> DataFrame:
    data = bytes(data)
    _traced("dec", data)
    if len(data) < DATA_HEADER_LEN:
        raise ParseError("truncated data frame header")
    if len(data) > EXTENDED_MAX:
        raise ParseError(f"frame exceeds {EXTENDED_MAX} bytes")
    payload_len = int.from_bytes(data[3:5], "big")
    if DATA_HEADER_LEN + payload_len != len(data):
        raise ParseError("payload length does not match frame size")
    frag_index, frag_total = data[1], data[2]
    if frag_total < 1 or frag_index >= frag_total:
        raise ParseError("bad fragment counters")
    return DataFrame(
        msg_type=data[0],
        frag_index=frag_index,
        frag_total=frag_total,
        payload=data[5:],
        extended=len(data) > DATA_MAX,
    )


def fragment(msg_type: int, payload: bytes, extended: bool = False) -> list[DataFrame]:
    """Split a payload into the minimal set of frames.

    With extended=True a payload that fits a single 1650-byte frame is sent
    whole; anything larger falls back to standard 250-byte fragmentation.
    """
    payload = bytes(payload)
    if len(payload) > MAX_FRAGMENTED_PAYLOAD:
        raise PayloadTooLarge(
            f"payload {len(payload)} exceeds fragmentation limit {MAX_FRAGMENTED_PAYLOAD}"
        )
    if extended and len(payload) <= EXTENDED_PAYLOAD_MAX:
        return [DataFrame(msg_type, 0, 1, payload, extended=len(payload) > FRAG_PAYLOAD)]
    slices = [payload[i : i + FRAG_PAYLOAD] for i in range(0, len(payload), FRAG_PAYLOAD)] or [b""]
    total = len(slices)
    return [DataFrame(msg_type, i, total, part) for i, part in enumerate(slices)]


def reassemble(frames) -> tuple[int, bytes]:
    """Inverse of fragment; tolerates reordering within the set."""
    frames = list(frames)
    if not frames:
        raise MissingFragment("no frames")
    msg_type = frames[0].msg_type
    total = frames[0].frag_total
    for f in frames:
        if f.msg_type != msg_type or f.frag_total != total:
            raise InconsistentSet("frames disagree on msg_type or frag_total")
    by_index = {}
    for f in frames:
        if f.frag_index in by_index:
            raise InconsistentSet(f"duplicate fragment {f.frag_index}")
        by_index[f.frag_index] = f
    missing = [i for i in range(total) if i not in by_index]
    if missing:
        raise MissingFragment(f"missing fragment(s) {missing}")
    return msg_type, b"".join(by_index[i].payload for i in range(total))


# ---------------------------------------------------------------------------
# In-memory channel (test double for the radio)
# ---------------------------------------------------------------------------

class Endpoint:
    """One side of a channel; single producer and single consumer."""

    def __init__(self, outgoing: deque, incoming: deque, channel: "Channel", direction: str):
        self._out = outgoing
        self._in = incoming
        self._channel = channel
        self._direction = direction

    def send(self, frame_bytes: bytes) -> None:
        data = self._channel._apply_fault(self._direction, bytes(frame_bytes))
        if data is not None:
            self._out.append(data)

    def recv(self) -> bytes | None:
        """Next frame, or None when the queue is empty."""
        return self._in.popleft() if self._in else None


class Channel:
    """Bidirectional in-memory frame queue with optional fault injectors.

    A fault injector is callable(frame_bytes) returning replacement bytes or
    None to drop the frame. Ordering is preserved when no faults fire.
    """

    def __init__(self):
        self._a_to_b: deque = deque()
        self._b_to_a: deque = deque()
        self._faults = {"a2b": None, "b2a": None}

    def endpoint_a(self) -> Endpoint:
        return Endpoint(self._a_to_b, self._b_to_a, self, "a2b")

    def endpoint_b(self) -> Endpoint:
        return Endpoint(self._b_to_a, self._a_to_b, self, "b2a")

    def set_fault(self, direction: str, injector) -> None:
        if direction not in self._faults:
            raise ValueError("direction must be 'a2b' or 'b2a'")
        self._faults[direction] = injector

    def _apply_fault(self, direction: str, data: bytes) -> bytes | None:
        injector = self._faults[direction]
        return data if injector is None else injector(data)
