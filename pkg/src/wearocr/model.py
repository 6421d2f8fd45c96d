"""Core domain types shared by the whole pipeline.

Everything here is an immutable value object: frames and their sensor
context as read from a trace, detections, OCR text spans, the payload
unit sent device -> server, and user queries.  Timestamps are integer
milliseconds (frames, payloads, queries) and integer microseconds
(IMU, exposure) so that ordering is total and exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterable, Sequence


class Resolution(str, Enum):
    MP3 = "MP3"
    MP5 = "MP5"
    MP12 = "MP12"


class DetectionClass(str, Enum):
    HAND_POINTING = "HandPointing"
    HAND_HOLDING = "HandHolding"
    OTHER_HAND_INTERACTION = "OtherHandInteraction"
    TEXT_OBJECT = "TextObject"


class PayloadKind(IntEnum):
    TEXT_OCR = 1
    NO_TEXT = 2
    SIMILAR_SCENE = 3
    BLURRY = 4
    RESOURCE_CONSTRAINT = 5


class QualityFlag(str, Enum):
    BLURRY = "Blurry"
    UPSIDE_DOWN = "UpsideDown"
    CROPPED = "Cropped"
    POOR_LIGHTING = "PoorLighting"


class QueryMode(str, Enum):
    READOUT = "Readout"
    TRANSLATION = "Translation"
    QA = "Qa"


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle in normalized [0,1] image coordinates."""

    x: float
    y: float
    w: float
    h: float

    def within_unit_square(self) -> bool:
        return (
            0.0 <= self.x <= 1.0
            and 0.0 <= self.y <= 1.0
            and self.w >= 0.0
            and self.h >= 0.0
            and self.x + self.w <= 1.0 + 1e-9
            and self.y + self.h <= 1.0 + 1e-9
        )

    def area(self) -> float:
        return self.w * self.h

    def intersects(self, other: "Rect") -> bool:
        return not (
            self.x + self.w < other.x
            or other.x + other.w < self.x
            or self.y + self.h < other.y
            or other.y + other.h < self.y
        )


@dataclass(frozen=True)
class ImuSample:
    ts_us: int
    gyro: tuple[float, float, float]
    accel: tuple[float, float, float]

    def norm6(self) -> float:
        """Euclidean norm of the concatenated 6-dof gyro+accel vector."""
        return math.sqrt(sum(v * v for v in self.gyro) + sum(v * v for v in self.accel))


@dataclass(frozen=True)
class Detection:
    cls: DetectionClass
    bbox: Rect
    conf: float
    keypoints: tuple[tuple[float, float], ...] | None = None


@dataclass(frozen=True)
class TextSpan:
    text: str
    bbox: Rect
    conf: float


@dataclass(frozen=True)
class FrameRecord:
    ts_ms: int
    resolution: Resolution
    exposure_us: int
    imu: tuple[ImuSample, ...]
    detections: tuple[Detection, ...]
    scene_sig: tuple[float, ...]
    gt_words: tuple[str, ...]
    user_selection: bool = False


@dataclass(frozen=True)
class OcrPayload:
    """The device -> server unit: one of five payload types.

    ``synthesized`` is a server-side marker set on retrieval fallbacks;
    it never travels over the wire.
    """

    kind: PayloadKind
    frame_ts_ms: int
    spans: tuple[TextSpan, ...] = ()
    selection: bool = False
    quality_flags: frozenset[QualityFlag] = frozenset()
    synthesized: bool = False

    def is_valid_for_retrieval(self) -> bool:
        return self.kind in (PayloadKind.TEXT_OCR, PayloadKind.NO_TEXT)

    def text(self) -> str:
        return " ".join(s.text for s in self.spans)


@dataclass(frozen=True)
class QueryRecord:
    ts_ms: int
    speech_start_ms: int
    question: str
    mode: QueryMode
    target_lang: str | None = None


def _finite(values: Iterable[float]) -> bool:
    return all(math.isfinite(v) for v in values)


def validate_trace(frames: Sequence[FrameRecord]) -> list[str]:
    """Check every frame against the trace invariants.

    Returns a list of violation messages, each naming the frame index;
    an empty list means the trace is valid.  Violations are data, not
    faults: nothing is raised.
    """
    violations: list[str] = []
    sig_dim: int | None = None
    prev_ts: int | None = None
    for i, frame in enumerate(frames):
        if prev_ts is not None and frame.ts_ms <= prev_ts:
            violations.append(f"frame {i}: non-increasing timestamp at index {i}")
        prev_ts = frame.ts_ms
        if frame.exposure_us <= 0:
            violations.append(f"frame {i}: exposure_us must be positive")
        if sig_dim is None:
            sig_dim = len(frame.scene_sig)
        elif len(frame.scene_sig) != sig_dim:
            violations.append(
                f"frame {i}: scene_sig dimension {len(frame.scene_sig)} != {sig_dim}"
            )
        if not _finite(frame.scene_sig):
            violations.append(f"frame {i}: scene_sig has non-finite component")
        for j, sample in enumerate(frame.imu):
            if sample.ts_us < 0:
                violations.append(f"frame {i}: imu sample {j} has negative ts_us")
            if not (_finite(sample.gyro) and _finite(sample.accel)):
                violations.append(f"frame {i}: imu sample {j} has non-finite vector")
        for j, det in enumerate(frame.detections):
            if not (0.0 <= det.conf <= 1.0):
                violations.append(f"frame {i}: detection {j} confidence out of range")
            if not det.bbox.within_unit_square():
                violations.append(f"frame {i}: detection {j} bbox outside unit square")
            if det.keypoints is not None and det.cls is not DetectionClass.HAND_POINTING:
                violations.append(
                    f"frame {i}: detection {j} keypoints only legal for HandPointing"
                )
        for j, word in enumerate(frame.gt_words):
            if not word:
                violations.append(f"frame {i}: gt word {j} is empty")
    return violations


def validate_payload(payload: OcrPayload) -> list[str]:
    """Invariant check for a single payload (used at wire decode time)."""
    violations: list[str] = []
    if payload.kind is PayloadKind.TEXT_OCR and not payload.spans:
        violations.append("TextOcr payload must carry at least one span")
    if payload.kind is not PayloadKind.TEXT_OCR and payload.spans:
        violations.append("non-TextOcr payload must carry no spans")
    for j, span in enumerate(payload.spans):
        if not span.text:
            violations.append(f"span {j}: empty text")
        if not (0.0 <= span.conf <= 1.0):
            violations.append(f"span {j}: confidence out of range")
    return violations
