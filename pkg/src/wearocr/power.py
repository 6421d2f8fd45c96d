"""Table-anchored relative power model.

Two deliberately separate baselines, loaded from a versioned anchor
file: streaming configurations relative to 12MP/30fps capture, and
on-device capture+OCR configurations relative to 12fps with no OCR.
The two "1.0x" rows are not commensurable, so a session report shows
them side by side and never fuses them into a single number.

Within an anchored device row group, power is piecewise-linear in word
count across the {0, 30, 100} anchors and clamps above 100 words.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from importlib import resources

from .model import Resolution

_ANCHOR_RESOURCE = "power_anchors.json"


class OcrMode(str, Enum):
    NO_OCR = "NoOcr"
    OCR_ALL_FRAMES = "OcrAllFrames"
    OCR_SAMPLED_2FPS = "OcrSampled2fps"
    SFS_12MP_INPUT = "Sfs12MpInput"
    SFS_3MP_INPUT = "Sfs3MpInput"


class PowerBaseline(str, Enum):
    STREAM_12MP_30FPS = "Stream12MP30fps"
    NO_OCR_12FPS = "NoOcr12fps"


class NoAnchorError(ValueError):
    """Configuration has no table anchor; message names the nearest rows."""


@dataclass(frozen=True)
class StreamConfig:
    resolution: Resolution
    fps: int
    bitrate_bps: int


@dataclass(frozen=True)
class DeviceConfig:
    fps: int
    ocr_mode: OcrMode
    words_per_text_frame: float = 0.0

    def __post_init__(self) -> None:
        if self.words_per_text_frame < 0:
            raise ValueError("words_per_text_frame must be non-negative")


def _load_raw() -> bytes:
    return resources.files("wearocr.data").joinpath(_ANCHOR_RESOURCE).read_bytes()


class PowerAnchors:
    def __init__(self, raw: bytes | None = None):
        raw = raw if raw is not None else _load_raw()
        self.checksum = hashlib.sha256(raw).hexdigest()
        data = json.loads(raw)
        self.stream_rows: dict[tuple[Resolution, int, int], float] = {}
        for row in data["stream"]["rows"]:
            key = (Resolution(row["resolution"]), row["fps"], row["bitrate_bps"])
            self.stream_rows[key] = float(row["multiplier"])
        self.device_flat: dict[tuple[int, OcrMode], float] = {}
        self.device_words: dict[tuple[int, OcrMode], list[tuple[int, float]]] = {}
        for row in data["device"]["rows"]:
            key = (row["fps"], OcrMode(row["ocr_mode"]))
            if "words" in row:
                anchors = sorted((int(w), float(m)) for w, m in row["words"].items())
                self.device_words[key] = anchors
            else:
                self.device_flat[key] = float(row["multiplier"])

    def stream_multiplier(self, config: StreamConfig) -> float:
        key = (config.resolution, config.fps, config.bitrate_bps)
        try:
            return self.stream_rows[key]
        except KeyError:
            rows = ", ".join(
                f"({r.value}, {fps} fps, {bps} bps)" for r, fps, bps in self.stream_rows
            )
            raise NoAnchorError(
                f"no streaming anchor for {config}; anchored rows: {rows}"
            ) from None

    def device_multiplier(self, config: DeviceConfig) -> float:
        key = (config.fps, config.ocr_mode)
        if key in self.device_flat:
            return self.device_flat[key]
        if key not in self.device_words:
            rows = ", ".join(
                f"({fps} fps, {mode.value})"
                for fps, mode in list(self.device_flat) + list(self.device_words)
            )
            raise NoAnchorError(
                f"no device anchor for ({config.fps} fps, {config.ocr_mode.value}); "
                f"anchored rows: {rows}"
            ) from None
        anchors = self.device_words[key]
        words = min(config.words_per_text_frame, anchors[-1][0])
        if words <= anchors[0][0]:
            return anchors[0][1]
        for (x0, y0), (x1, y1) in zip(anchors, anchors[1:]):
            if words <= x1:
                return y0 + (y1 - y0) * (words - x0) / (x1 - x0)
        return anchors[-1][1]


_DEFAULT_ANCHORS: PowerAnchors | None = None


def default_anchors() -> PowerAnchors:
    global _DEFAULT_ANCHORS
    if _DEFAULT_ANCHORS is None:
        _DEFAULT_ANCHORS = PowerAnchors()
    return _DEFAULT_ANCHORS


def relative_power(
    config: StreamConfig | DeviceConfig, anchors: PowerAnchors | None = None
) -> float:
    """Relative power multiplier for a configuration against its table family."""
    anchors = anchors or default_anchors()
    if isinstance(config, StreamConfig):
        return anchors.stream_multiplier(config)
    return anchors.device_multiplier(config)


@dataclass(frozen=True)
class SessionPowerReport:
    stream_multiplier: float
    stream_baseline: PowerBaseline
    device_multiplier: float
    device_baseline: PowerBaseline
    device_words_per_text_frame: float
    words_clamped: bool
    anchor_checksum: str


def session_power_report(
    stream_config: StreamConfig,
    device_config: DeviceConfig,
    anchors: PowerAnchors | None = None,
) -> SessionPowerReport:
    """Side-by-side multipliers for the video path and the device OCR path.

    The two baselines are incommensurable; no combined figure is
    fabricated.  Word counts above the last anchor are clamped and
    flagged.
    """
    anchors = anchors or default_anchors()
    return SessionPowerReport(
        stream_multiplier=anchors.stream_multiplier(stream_config),
        stream_baseline=PowerBaseline.STREAM_12MP_30FPS,
        device_multiplier=anchors.device_multiplier(device_config),
        device_baseline=PowerBaseline.NO_OCR_12FPS,
        device_words_per_text_frame=device_config.words_per_text_frame,
        words_clamped=device_config.words_per_text_frame > 100,
        anchor_checksum=anchors.checksum,
    )
