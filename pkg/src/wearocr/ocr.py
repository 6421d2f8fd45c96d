"""Deterministic mock OCR.

Recognition quality is anchored to measured word accuracy per capture
resolution, latency to measured per-frame inference times as a function
of word count.  Randomness is counter-based (seed, frame timestamp,
token index) so a given trace always produces byte-identical results.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Sequence

from .model import Rect, Resolution, TextSpan

DEFAULT_ACCURACY_ANCHORS: dict[Resolution, float] = {
    Resolution.MP3: 0.1980,
    Resolution.MP5: 0.5644,
    Resolution.MP12: 0.8904,
}

DEFAULT_LATENCY_ANCHORS: tuple[tuple[int, float], ...] = (
    (0, 341.0),
    (30, 396.0),
    (100, 1188.0),
    (1000, 4976.0),
)

# Visually-confusable substitutions applied to mis-recognized characters.
_CONFUSIONS = {
    "6": "8", "8": "6", "0": "O", "O": "0", "1": "l", "l": "1",
    "5": "S", "S": "5", "B": "8", "o": "0", "i": "l", "Z": "2", "2": "Z",
}


@dataclass(frozen=True)
class OcrConfig:
    accuracy_anchors: dict[Resolution, float] = field(
        default_factory=lambda: dict(DEFAULT_ACCURACY_ANCHORS)
    )
    latency_anchors: tuple[tuple[int, float], ...] = DEFAULT_LATENCY_ANCHORS
    seed: int = 0

    def __post_init__(self) -> None:
        for res, acc in self.accuracy_anchors.items():
            if not 0.0 <= acc <= 1.0:
                raise ValueError(f"accuracy anchor for {res} out of [0,1]: {acc}")
        pairs = self.latency_anchors
        if any(a[0] >= b[0] or a[1] >= b[1] for a, b in zip(pairs, pairs[1:])):
            raise ValueError("latency anchors must be strictly increasing in both coordinates")


@dataclass(frozen=True)
class OcrResult:
    spans: tuple[TextSpan, ...]
    simulated_latency_ms: float
    words_attempted: int
    words_correct: int


def word_accuracy(resolution: Resolution, config: OcrConfig | None = None) -> float:
    anchors = (config or OcrConfig()).accuracy_anchors
    return anchors[resolution]


def ocr_latency_ms(word_count: int, config: OcrConfig | None = None) -> float:
    """Piecewise-linear latency in word count; exact at every anchor.

    Beyond the last anchor the final segment's slope extrapolates.
    """
    if word_count < 0:
        raise ValueError("word_count must be non-negative")
    anchors = (config or OcrConfig()).latency_anchors
    if word_count <= anchors[0][0]:
        return anchors[0][1]
    for (x0, y0), (x1, y1) in zip(anchors, anchors[1:]):
        if word_count <= x1:
            return y0 + (y1 - y0) * (word_count - x0) / (x1 - x0)
    (x0, y0), (x1, y1) = anchors[-2], anchors[-1]
    slope = (y1 - y0) / (x1 - x0)
    return y1 + slope * (word_count - x1)


def _unit_uniform(seed: int, frame_ts_ms: int, token_index: int, lane: int) -> float:
    """Deterministic uniform in [0,1) from a hashed counter."""
    digest = hashlib.sha256(
        struct.pack(">qqqq", seed, frame_ts_ms, token_index, lane)
    ).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def _corrupt(token: str, seed: int, frame_ts_ms: int, token_index: int) -> str:
    """Single-character substitution at a seed-derived position."""
    pos = int(_unit_uniform(seed, frame_ts_ms, token_index, lane=1) * len(token))
    pos = min(pos, len(token) - 1)
    ch = token[pos]
    sub = _CONFUSIONS.get(ch)
    if sub is None:
        # Shift within the ASCII printable range, guaranteed != ch.
        sub = chr(33 + (ord(ch) - 33 + 1) % 94) if ch.isprintable() else "?"
        if sub == ch:
            sub = "?"
    return token[:pos] + sub + token[pos + 1 :]


def run_mock_ocr(
    gt_words: Sequence[str],
    resolution: Resolution,
    roi: Rect | None,
    config: OcrConfig,
    frame_ts_ms: int,
) -> OcrResult:
    """Recognize each ground-truth token independently at the anchored accuracy.

    Mis-recognized tokens come back edit-distance 1 from the truth so
    downstream similarity grouping still clusters variants.  Spans are
    laid out left-to-right inside the ROI (or the full image).
    """
    accuracy = word_accuracy(resolution, config)
    box = roi if roi is not None else Rect(0.0, 0.0, 1.0, 1.0)
    n = len(gt_words)
    spans: list[TextSpan] = []
    correct = 0
    for i, token in enumerate(gt_words):
        if _unit_uniform(config.seed, frame_ts_ms, i, lane=0) < accuracy:
            out = token
            correct += 1
        else:
            out = _corrupt(token, config.seed, frame_ts_ms, i)
        cell_w = box.w / n
        spans.append(
            TextSpan(
                text=out,
                bbox=Rect(box.x + i * cell_w, box.y, cell_w, box.h),
                conf=accuracy,
            )
        )
    return OcrResult(
        spans=tuple(spans),
        simulated_latency_ms=ocr_latency_ms(n, config),
        words_attempted=n,
        words_correct=correct,
    )
