"""OCR session manager: the server-side timestamp-ordered payload store.

Payloads arrive sparse, irregular, and possibly out of order.  The
store keys them by frame timestamp, partitions text-bearing payloads
into similarity groups (each with a single exemplar, the longest
highest-quality text), and answers point and batch retrievals with
fallback to the latest valid payload before the requested time.

Grouping is a pure function of the stored payload set: it is derived by
replaying payloads in ascending timestamp order, so every ingestion
order yields identical retrieval results.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .model import OcrPayload, PayloadKind, QualityFlag, QueryRecord

DEFAULT_TEXT_SIMILARITY_THRESHOLD = 0.8


def _tokens(texts: Iterable[str]) -> frozenset[str]:
    out: set[str] = set()
    for text in texts:
        out.update(text.lower().split())
    return frozenset(out)


def text_similarity(a: Sequence[str], b: Sequence[str]) -> float:
    """Jaccard similarity of lowercase token sets; 1.0 when both are empty."""
    ta, tb = _tokens(a), _tokens(b)
    if not ta and not tb:
        return 1.0
    union = ta | tb
    if not union:
        return 1.0
    return len(ta & tb) / len(union)


def payload_similarity(a: OcrPayload, b: OcrPayload) -> float:
    return text_similarity([s.text for s in a.spans], [s.text for s in b.spans])


def select_exemplar(members: Sequence[OcrPayload]) -> int:
    """Timestamp of the group member with the longest, highest-quality text.

    Primary key is total character count of the spans; ties go to higher
    mean span confidence, then to the latest timestamp.
    """
    if not members:
        raise ValueError("group must be non-empty")

    def key(p: OcrPayload) -> tuple[int, float, int]:
        chars = sum(len(s.text) for s in p.spans)
        mean_conf = sum(s.conf for s in p.spans) / len(p.spans) if p.spans else 0.0
        return (chars, mean_conf, p.frame_ts_ms)

    return max(members, key=key).frame_ts_ms


@dataclass(frozen=True)
class OcrGroup:
    members: tuple[int, ...]
    exemplar_ts: int
    is_selection: bool

    @property
    def group_latest_ts(self) -> int:
        return max(self.members)


@dataclass(frozen=True)
class OcrContextEntry:
    ts_ms: int
    text: str
    quality_flags: frozenset[QualityFlag]
    is_selection: bool


class SessionTimeline:
    """Mutable store; all retrieval views are derived from the payload set."""

    def __init__(self, text_similarity_threshold: float = DEFAULT_TEXT_SIMILARITY_THRESHOLD):
        self.theta_text = text_similarity_threshold
        self._payloads: dict[int, OcrPayload] = {}
        self._cache: tuple[list[int], list[int], list[OcrGroup], int | None] | None = None

    def ingest(self, payload: OcrPayload) -> "SessionTimeline":
        """Store a payload; a later payload at the same timestamp replaces it."""
        self._payloads[payload.frame_ts_ms] = payload
        self._cache = None
        return self

    def payloads(self) -> list[OcrPayload]:
        """All payloads in ascending timestamp order."""
        return [self._payloads[ts] for ts in sorted(self._payloads)]

    # -- derived structure ------------------------------------------------

    def _derived(self) -> tuple[list[int], list[int], list[OcrGroup], int | None]:
        if self._cache is None:
            all_ts = sorted(self._payloads)
            valid_ts = [
                ts for ts in all_ts if self._payloads[ts].is_valid_for_retrieval()
            ]
            groups = self._build_groups(all_ts)
            selection_ts = [ts for ts in all_ts if self._payloads[ts].selection]
            latest_selection = max(selection_ts) if selection_ts else None
            self._cache = (all_ts, valid_ts, groups, latest_selection)
        return self._cache

    def _build_groups(self, all_ts: list[int]) -> list[OcrGroup]:
        # Single-pass greedy grouping in ascending timestamp order: a
        # payload joins the first existing group whose current exemplar
        # it matches at theta_text; selection payloads stay singletons.
        member_lists: list[list[int]] = []
        exemplars: list[int] = []
        selection_flags: list[bool] = []
        for ts in all_ts:
            payload = self._payloads[ts]
            if payload.kind is not PayloadKind.TEXT_OCR:
                continue
            if payload.selection:
                member_lists.append([ts])
                exemplars.append(ts)
                selection_flags.append(True)
                continue
            for gi in range(len(member_lists)):
                if selection_flags[gi]:
                    continue
                exemplar = self._payloads[exemplars[gi]]
                if payload_similarity(payload, exemplar) >= self.theta_text:
                    member_lists[gi].append(ts)
                    exemplars[gi] = select_exemplar(
                        [self._payloads[m] for m in member_lists[gi]]
                    )
                    break
            else:
                member_lists.append([ts])
                exemplars.append(ts)
                selection_flags.append(False)
        return [
            OcrGroup(members=tuple(m), exemplar_ts=e, is_selection=s)
            for m, e, s in zip(member_lists, exemplars, selection_flags)
        ]

    def groups(self) -> list[OcrGroup]:
        return self._derived()[2]

    @property
    def latest_selection_ts(self) -> int | None:
        return self._derived()[3]

    def group_of(self, ts: int) -> OcrGroup | None:
        for group in self.groups():
            if ts in group.members:
                return group
        return None

    # -- retrieval --------------------------------------------------------

    def _get_with_source(self, t: int) -> tuple[OcrPayload, int | None]:
        """Retrieval result plus the source timestamp it came from.

        Source is None for synthesized results.
        """
        _, valid_ts, _, _ = self._derived()
        exact = self._payloads.get(t)
        if exact is not None and exact.is_valid_for_retrieval():
            return exact, t
        idx = bisect.bisect_left(valid_ts, t)
        if idx > 0:
            source = valid_ts[idx - 1]
            return replace(self._payloads[source], frame_ts_ms=t), source
        return (
            OcrPayload(kind=PayloadKind.NO_TEXT, frame_ts_ms=t, synthesized=True),
            None,
        )

    def get(self, t: int) -> OcrPayload:
        """Latest valid payload at or before ``t``.

        A payload of a valid kind exactly at ``t`` is returned as-is.
        Otherwise the latest valid payload strictly before ``t`` is
        returned with its timestamp rewritten to ``t``; with nothing
        before either, a synthesized empty payload at ``t``.
        """
        return self._get_with_source(t)[0]

    def get_batch(self, timestamps: Sequence[int]) -> list[OcrPayload]:
        """Point retrieval per timestamp, with group dedup and a nonempty guarantee.

        When several results come from the same similarity group, only
        the one with the largest returned timestamp is kept (carrying
        the group exemplar's text); the other slots degrade to
        synthesized empty payloads so result order still follows the
        request order.  If everything comes back empty while the store
        holds any text payload, the latest text payload at or before the
        largest requested timestamp (or, failing that, the earliest one
        after it) is appended.
        """
        if not timestamps:
            raise ValueError("timestamps must be non-empty")
        raw = [self._get_with_source(t) for t in timestamps]

        by_group: dict[int, list[int]] = {}
        group_index: dict[int, OcrGroup] = {}
        for i, (payload, source) in enumerate(raw):
            if source is None or payload.kind is not PayloadKind.TEXT_OCR:
                continue
            group = self.group_of(source)
            if group is None:
                continue
            gid = id(group)
            group_index[gid] = group
            by_group.setdefault(gid, []).append(i)

        results: list[OcrPayload] = [p for p, _ in raw]
        for gid, indices in by_group.items():
            group = group_index[gid]
            keep = max(indices, key=lambda i: (results[i].frame_ts_ms, i))
            exemplar = self._payloads[group.exemplar_ts]
            results[keep] = replace(
                results[keep],
                spans=exemplar.spans,
                quality_flags=exemplar.quality_flags,
            )
            for i in indices:
                if i != keep:
                    results[i] = OcrPayload(
                        kind=PayloadKind.NO_TEXT,
                        frame_ts_ms=results[i].frame_ts_ms,
                        synthesized=True,
                    )

        def is_empty(p: OcrPayload) -> bool:
            return p.synthesized or p.kind is not PayloadKind.TEXT_OCR

        if all(is_empty(p) for p in results):
            text_ts = sorted(
                ts for ts, p in self._payloads.items() if p.kind is PayloadKind.TEXT_OCR
            )
            if text_ts:
                limit = max(timestamps)
                at_or_before = [ts for ts in text_ts if ts <= limit]
                fallback_ts = at_or_before[-1] if at_or_before else text_ts[0]
                results.append(self._payloads[fallback_ts])
        return results

    def build_ocr_context(
        self, query: QueryRecord, window_ms: int
    ) -> list[OcrContextEntry]:
        """Group exemplars whose freshest member falls in the query window.

        One entry per group, stamped at the group's latest timestamp and
        carrying the exemplar's text and quality flags, ascending by
        timestamp.  Only the overall latest selection keeps its
        selection mark; stale selections flow through as ordinary
        entries.
        """
        if window_ms <= 0:
            raise ValueError("window_ms must be positive")
        lo, hi = query.ts_ms - window_ms, query.ts_ms
        latest_selection = self.latest_selection_ts
        entries = []
        for group in self.groups():
            latest = group.group_latest_ts
            if not lo <= latest <= hi:
                continue
            exemplar = self._payloads[group.exemplar_ts]
            entries.append(
                OcrContextEntry(
                    ts_ms=latest,
                    text=exemplar.text(),
                    quality_flags=exemplar.quality_flags,
                    is_selection=group.is_selection and latest == latest_selection,
                )
            )
        entries.sort(key=lambda e: e.ts_ms)
        return entries
