"""Device -> server wire format and uplink accounting.

Fixed binary framing so byte counts are stable across runs and
languages: a 4-byte big-endian body length, then the body as a 1-byte
message type, 8-byte big-endian session id, and a canonical
field-ordered encoding (fixed-width big-endian integers, IEEE-754
big-endian doubles, strings as 4-byte length + UTF-8, lists as 4-byte
count + elements).  Encoding is injective; decode is its inverse.

Payloads may arrive out of order within a session; the store downstream
is order-insensitive by design.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable

from .model import OcrPayload, PayloadKind, QualityFlag, Rect, Resolution, TextSpan


class WireError(ValueError):
    """Base decode failure; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class IncompleteFrameError(WireError):
    pass


class UnsupportedTypeError(WireError):
    pass


class CorruptFrameError(WireError):
    pass


MSG_OCR_PAYLOAD = 1
MSG_VIDEO_SEGMENT = 2
MSG_SELECTION_EVENT = 3
MSG_SESSION_START = 4
MSG_SESSION_END = 5

_RESOLUTION_CODE = {Resolution.MP3: 1, Resolution.MP5: 2, Resolution.MP12: 3}
_CODE_RESOLUTION = {v: k for k, v in _RESOLUTION_CODE.items()}
_FLAG_CODE = {
    QualityFlag.BLURRY: 1,
    QualityFlag.UPSIDE_DOWN: 2,
    QualityFlag.CROPPED: 3,
    QualityFlag.POOR_LIGHTING: 4,
}
_CODE_FLAG = {v: k for k, v in _FLAG_CODE.items()}


@dataclass(frozen=True)
class VideoSegment:
    start_ms: int
    duration_ms: int
    fps: float
    resolution: Resolution
    bitrate_bps: int

    def __post_init__(self) -> None:
        if self.duration_ms <= 0:
            raise ValueError("duration_ms must be positive")
        if self.bitrate_bps <= 0:
            raise ValueError("bitrate_bps must be positive")


@dataclass(frozen=True)
class SelectionEvent:
    frame_ts_ms: int


@dataclass(frozen=True)
class SessionStart:
    pass


@dataclass(frozen=True)
class SessionEnd:
    pass


Body = OcrPayload | VideoSegment | SelectionEvent | SessionStart | SessionEnd


@dataclass(frozen=True)
class WireMessage:
    session_id: int
    body: Body

    @property
    def msg_type(self) -> int:
        return {
            OcrPayload: MSG_OCR_PAYLOAD,
            VideoSegment: MSG_VIDEO_SEGMENT,
            SelectionEvent: MSG_SELECTION_EVENT,
            SessionStart: MSG_SESSION_START,
            SessionEnd: MSG_SESSION_END,
        }[type(self.body)]


class _Writer:
    def __init__(self) -> None:
        self.parts: list[bytes] = []

    def u8(self, v: int) -> None:
        self.parts.append(struct.pack(">B", v))

    def u32(self, v: int) -> None:
        self.parts.append(struct.pack(">I", v))

    def u64(self, v: int) -> None:
        self.parts.append(struct.pack(">Q", v))

    def f64(self, v: float) -> None:
        self.parts.append(struct.pack(">d", v))

    def string(self, s: str) -> None:
        raw = s.encode("utf-8")
        self.u32(len(raw))
        self.parts.append(raw)

    def rect(self, r: Rect) -> None:
        for v in (r.x, r.y, r.w, r.h):
            self.f64(v)

    def join(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, data: bytes, base_offset: int):
        self.data = data
        self.pos = 0
        self.base = base_offset

    @property
    def offset(self) -> int:
        return self.base + self.pos

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptFrameError("body truncated", self.offset)
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack(">d", self.take(8))[0]

    def string(self) -> str:
        n = self.u32()
        return self.take(n).decode("utf-8")

    def rect(self) -> Rect:
        return Rect(self.f64(), self.f64(), self.f64(), self.f64())


def _encode_span(w: _Writer, span: TextSpan) -> None:
    w.string(span.text)
    w.rect(span.bbox)
    w.f64(span.conf)


def _decode_span(r: _Reader) -> TextSpan:
    return TextSpan(text=r.string(), bbox=r.rect(), conf=r.f64())


def encode(msg: WireMessage) -> bytes:
    w = _Writer()
    w.u8(msg.msg_type)
    w.u64(msg.session_id)
    body = msg.body
    if isinstance(body, OcrPayload):
        w.u8(int(body.kind))
        w.u64(body.frame_ts_ms)
        w.u8(1 if body.selection else 0)
        flags = sorted(_FLAG_CODE[f] for f in body.quality_flags)
        w.u32(len(flags))
        for code in flags:
            w.u8(code)
        w.u32(len(body.spans))
        for span in body.spans:
            _encode_span(w, span)
    elif isinstance(body, VideoSegment):
        w.u64(body.start_ms)
        w.u64(body.duration_ms)
        w.f64(body.fps)
        w.u8(_RESOLUTION_CODE[body.resolution])
        w.u64(body.bitrate_bps)
    elif isinstance(body, SelectionEvent):
        w.u64(body.frame_ts_ms)
    # SessionStart / SessionEnd carry no fields.
    payload = w.join()
    return struct.pack(">I", len(payload)) + payload


def decode(data: bytes) -> WireMessage:
    if len(data) < 4:
        raise IncompleteFrameError("missing length header", len(data))
    body_len = struct.unpack(">I", data[:4])[0]
    if len(data) < 4 + body_len:
        raise IncompleteFrameError("frame shorter than declared length", len(data))
    if len(data) > 4 + body_len:
        raise CorruptFrameError("trailing bytes after frame", 4 + body_len)
    if body_len < 9:
        raise CorruptFrameError("body too short for header", 4)
    r = _Reader(data[4 : 4 + body_len], base_offset=4)
    msg_type = r.u8()
    session_id = r.u64()
    body: Body
    if msg_type == MSG_OCR_PAYLOAD:
        kind_code = r.u8()
        try:
            kind = PayloadKind(kind_code)
        except ValueError:
            raise CorruptFrameError(f"unknown payload kind {kind_code}", r.offset - 1) from None
        frame_ts = r.u64()
        selection = r.u8() != 0
        flags = set()
        for _ in range(r.u32()):
            code = r.u8()
            if code not in _CODE_FLAG:
                raise CorruptFrameError(f"unknown quality flag {code}", r.offset - 1)
            flags.add(_CODE_FLAG[code])
        spans = tuple(_decode_span(r) for _ in range(r.u32()))
        body = OcrPayload(
            kind=kind, frame_ts_ms=frame_ts, spans=spans,
            selection=selection, quality_flags=frozenset(flags),
        )
    elif msg_type == MSG_VIDEO_SEGMENT:
        start_ms = r.u64()
        duration_ms = r.u64()
        fps = r.f64()
        res_code = r.u8()
        if res_code not in _CODE_RESOLUTION:
            raise CorruptFrameError(f"unknown resolution code {res_code}", r.offset - 1)
        body = VideoSegment(
            start_ms=start_ms, duration_ms=duration_ms, fps=fps,
            resolution=_CODE_RESOLUTION[res_code], bitrate_bps=r.u64(),
        )
    elif msg_type == MSG_SELECTION_EVENT:
        body = SelectionEvent(frame_ts_ms=r.u64())
    elif msg_type == MSG_SESSION_START:
        body = SessionStart()
    elif msg_type == MSG_SESSION_END:
        body = SessionEnd()
    else:
        raise UnsupportedTypeError(f"unsupported message type {msg_type}", 4)
    if r.pos != body_len:
        raise CorruptFrameError("body length mismatch", r.offset)
    return WireMessage(session_id=session_id, body=body)


@dataclass(frozen=True)
class UplinkLedger:
    """Exact per-session bit accounting for the simulated uplink."""

    video_bits: Fraction = Fraction(0)
    payload_bits: int = 0
    message_count: int = 0


def account(ledger: UplinkLedger, msg: WireMessage) -> UplinkLedger:
    """Charge one message to the ledger.

    Every message is charged its encoded length in bits.  A video
    segment additionally charges its simulated stream
    (bitrate x duration); the descriptor itself only counts its bytes.
    """
    video = ledger.video_bits
    if isinstance(msg.body, VideoSegment):
        video += Fraction(msg.body.bitrate_bps * msg.body.duration_ms, 1000)
    return UplinkLedger(
        video_bits=video,
        payload_bits=ledger.payload_bits + len(encode(msg)) * 8,
        message_count=ledger.message_count + 1,
    )


def account_all(ledger: UplinkLedger, msgs: Iterable[WireMessage]) -> UplinkLedger:
    for msg in msgs:
        ledger = account(ledger, msg)
    return ledger


def total_bits(ledger: UplinkLedger) -> Fraction:
    return ledger.video_bits + ledger.payload_bits


def merge(a: UplinkLedger, b: UplinkLedger) -> UplinkLedger:
    return UplinkLedger(
        video_bits=a.video_bits + b.video_bits,
        payload_bits=a.payload_bits + b.payload_bits,
        message_count=a.message_count + b.message_count,
    )
