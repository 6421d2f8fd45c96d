"""Server-side text post-processing applied to exemplars before prompt use.

Normalization and temporal consolidation are implemented; richer
enrichers (autocorrection, entity linking, confidence calibration) plug
in through a hook registry and default to the identity.
"""

from __future__ import annotations

import logging
import re
from dataclasses import replace
from typing import Callable, Sequence

from .osm import OcrContextEntry, text_similarity

log = logging.getLogger(__name__)

_CONTROL = re.compile(r"[\x00-\x08\x0b-\x1f\x7f]")
_WS = re.compile(r"\s+")

EnrichmentHook = Callable[[list[OcrContextEntry]], list[OcrContextEntry]]


def normalize(text: str) -> str:
    """Trim, collapse whitespace, strip control characters; idempotent."""
    return _WS.sub(" ", _CONTROL.sub("", text)).strip()


def normalize_entries(entries: Sequence[OcrContextEntry]) -> list[OcrContextEntry]:
    return [replace(e, text=normalize(e.text)) for e in entries]


def consolidate(
    entries: Sequence[OcrContextEntry], gap_ms: int = 5000, threshold: float = 0.8
) -> list[OcrContextEntry]:
    """Merge adjacent near-duplicate entries close in time.

    Two neighbours merge when their text similarity reaches the
    threshold and their timestamps are at most ``gap_ms`` apart; the
    merged entry sits at the later timestamp and keeps the longer text.
    Never reorders, never grows the list; idempotent.
    """
    out: list[OcrContextEntry] = []
    for entry in entries:
        if (
            out
            and entry.ts_ms - out[-1].ts_ms <= gap_ms
            and text_similarity([out[-1].text], [entry.text]) >= threshold
        ):
            prev = out[-1]
            longer = prev.text if len(prev.text) >= len(entry.text) else entry.text
            out[-1] = OcrContextEntry(
                ts_ms=entry.ts_ms,
                text=longer,
                quality_flags=prev.quality_flags | entry.quality_flags,
                is_selection=prev.is_selection or entry.is_selection,
            )
        else:
            out.append(entry)
    return out


class EnrichmentPipeline:
    """Ordered hook registry; configured once before a session starts."""

    def __init__(self) -> None:
        self._hooks: list[tuple[str, EnrichmentHook]] = []

    def register(self, name: str, hook: EnrichmentHook) -> None:
        self._hooks.append((name, hook))

    def apply(self, entries: Sequence[OcrContextEntry]) -> list[OcrContextEntry]:
        """Run hooks in registration order; a failing hook is skipped."""
        current = list(entries)
        for name, hook in self._hooks:
            try:
                current = hook(current)
            except Exception:
                log.warning("enrichment hook %r failed; passing entries through", name)
        return current
