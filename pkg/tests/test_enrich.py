import random
from dataclasses import replace

from hypothesis import given, settings
from hypothesis import strategies as st

from wearocr.enrich import EnrichmentPipeline, consolidate, normalize, normalize_entries
from wearocr.model import QualityFlag
from wearocr.osm import OcrContextEntry


def entry(ts, text, flags=frozenset(), selected=False):
    return OcrContextEntry(ts_ms=ts, text=text, quality_flags=flags, is_selection=selected)


class TestNormalize:
    def test_collapses_whitespace(self):
        assert normalize("  GATE\t B12 ") == "GATE B12"

    def test_already_normal_unchanged(self):
        assert normalize("GATE B12") == "GATE B12"

    def test_strips_control_bytes(self):
        assert normalize("GA\x07TE \x00B12") == "GATE B12"

    def test_preserves_case_and_punctuation(self):
        assert normalize("Gate: B-12, now!") == "Gate: B-12, now!"

    @given(st.text(max_size=40))
    @settings(max_examples=200)
    def test_idempotent(self, text):
        assert normalize(normalize(text)) == normalize(text)

    def test_normalize_entries_maps_text_only(self):
        entries = [entry(10, " a  b ", flags=frozenset({QualityFlag.BLURRY}), selected=True)]
        out = normalize_entries(entries)
        assert out == [replace(entries[0], text="a b")]


class TestConsolidate:
    def test_near_duplicates_merge_at_later_ts(self):
        out = consolidate([entry(1000, "GATE B12"), entry(1200, "GATE B12")])
        assert out == [entry(1200, "GATE B12")]

    def test_gap_exceeded_keeps_both(self):
        entries = [entry(1000, "GATE B12"), entry(61_000, "GATE B12")]
        assert consolidate(entries) == entries

    def test_singleton_unchanged(self):
        entries = [entry(1000, "GATE B12")]
        assert consolidate(entries) == entries

    def test_merge_keeps_longer_text_and_unions_flags(self):
        out = consolidate(
            [
                entry(1000, "GATE B12 BOARDING NOW", flags=frozenset({QualityFlag.BLURRY})),
                entry(
                    1200,
                    "GATE B12 BOARDING NOW SOON",
                    flags=frozenset({QualityFlag.CROPPED}),
                ),
            ]
        )
        assert out == [
            entry(
                1200,
                "GATE B12 BOARDING NOW SOON",
                flags=frozenset({QualityFlag.BLURRY, QualityFlag.CROPPED}),
            )
        ]

    def test_merge_preserves_selection(self):
        out = consolidate([entry(1000, "sign", selected=True), entry(1200, "sign")])
        assert out[0].is_selection

    def test_dissimilar_neighbours_kept(self):
        entries = [entry(1000, "gate b12"), entry(1200, "platform six")]
        assert consolidate(entries) == entries

    def test_never_grows_never_reorders_idempotent(self):
        rng = random.Random(23)
        vocab = ["gate", "b12", "boarding", "exit", "now"]
        for _ in range(50):
            ts = 0
            entries = []
            for _ in range(rng.randint(0, 12)):
                ts += rng.randint(100, 8000)
                words = rng.sample(vocab, rng.randint(1, 4))
                entries.append(entry(ts, " ".join(words)))
            out = consolidate(entries)
            assert len(out) <= len(entries)
            assert [e.ts_ms for e in out] == sorted(e.ts_ms for e in out)
            assert consolidate(out) == out


class TestPipeline:
    def test_no_hooks_identity(self):
        entries = [entry(10, "a"), entry(20, "b")]
        assert EnrichmentPipeline().apply(entries) == entries

    def test_uppercasing_hook(self):
        pipeline = EnrichmentPipeline()
        pipeline.register(
            "upper", lambda es: [replace(e, text=e.text.upper()) for e in es]
        )
        out = pipeline.apply([entry(10, "gate b12")])
        assert out == [entry(10, "GATE B12")]

    def test_composition_order(self):
        pipeline = EnrichmentPipeline()
        pipeline.register("f", lambda es: [replace(e, text=e.text + "f") for e in es])
        pipeline.register("g", lambda es: [replace(e, text=e.text + "g") for e in es])
        out = pipeline.apply([entry(10, "x")])
        assert out[0].text == "xfg"

    def test_failing_hook_passes_entries_through(self, caplog):
        def boom(_entries):
            raise RuntimeError("model unavailable")

        pipeline = EnrichmentPipeline()
        pipeline.register("boom", boom)
        pipeline.register(
            "upper", lambda es: [replace(e, text=e.text.upper()) for e in es]
        )
        entries = [entry(10, "gate")]
        with caplog.at_level("WARNING", logger="wearocr.enrich"):
            out = pipeline.apply(entries)
        assert out == [entry(10, "GATE")]
        assert any("boom" in record.message for record in caplog.records)
