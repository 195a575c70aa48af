import pathlib

import pytest
from pydantic import ValidationError

from apps.CORE.enums import Label
from apps.CORE.utils import derive_rng, read_jsonl
from apps.deid.services import MRN_PLACEHOLDER, PATNAME_PLACEHOLDER, deidentify_report, load_lookup_table
from apps.ocr.services import read_word_table
from apps.pipeline.schemas import ManifestEntry
from apps.segmentation.services import assign_labels, segment_report
from apps.synth.schemas import SentenceTemplate, SynthConfig
from apps.synth.services import (
    CONFUSIONS,
    LOOKUP_NAME,
    MANIFEST_NAME,
    PAGE_HEIGHT,
    PAGE_WIDTH,
    draw_gold,
    generate_corpus,
    generate_report,
    inject_ocr_noise,
    report_id_for,
)
from tests.bases import make_page


def gold_texts(config: SynthConfig, report_id: str) -> set[str]:
    # The noiseless twin of a report has the same layout, so its gold tokens mark the positions to compare.
    report = generate_report(config=config.copy(update={"noise_rate": 0.0}), report_id=report_id)
    ahi, sao2 = report.gold.ahi_values[0], report.gold.sao2_values[0]
    return {f"{ahi:.1f}", f"{sao2:.0f}", f"{sao2:.1f}", f"{sao2:.0f}%", f"{sao2:.1f}%"}


class TestGenerateReport:
    def test_pure_function_of_seed_and_id(self) -> None:
        config = SynthConfig(seed=5)

        first = generate_report(config=config, report_id="R00007")
        second = generate_report(config=config, report_id="R00007")
        other = generate_report(config=config, report_id="R00008")

        assert first == second
        assert first != other
        assert generate_report(config=config.copy(update={"seed": 6}), report_id="R00007") != first

    @pytest.mark.parametrize(argnames="index", argvalues=range(1, 21))
    def test_gold_values_are_printed_on_first_page(self, index: int) -> None:
        report = generate_report(config=SynthConfig(seed=2), report_id=report_id_for(index))
        labeled = assign_labels(
            instances=segment_report(report_id=report.report_id, pages=report.pages), gold=report.gold
        )

        first_page = {instance.label for instance in labeled if instance.page == 1}
        assert {Label.AHI, Label.SAO2} <= first_page
        assert report.gold.ahi_values and report.gold.sao2_values
        assert 0.5 <= report.gold.ahi_values[0] <= 120.0
        assert 60.0 <= report.gold.sao2_values[0] <= 100.0

    def test_identifying_header(self) -> None:
        report = generate_report(config=SynthConfig(seed=1), report_id="R00001")
        tokens = report.pages[0].tokens

        assert "Patient:" in tokens
        assert report.patient_name_tokens[0] in tokens
        assert report.patient_name_tokens[1] in tokens
        assert report.mrn in tokens
        assert all(report.mrn not in page.tokens for page in report.pages[1:])

    @pytest.mark.parametrize(argnames="pages", argvalues=((1, 1), (2, 3), (4, 4)))
    def test_page_count_range(self, pages: tuple[int, int]) -> None:
        config = SynthConfig(pages_per_report=pages, seed=3)

        counts = {len(generate_report(config=config, report_id=report_id_for(i)).pages) for i in range(1, 16)}

        assert min(counts) >= pages[0]
        assert max(counts) <= pages[1]

    def test_boxes_stay_on_page(self) -> None:
        report = generate_report(config=SynthConfig(seed=4, pages_per_report=(3, 3)), report_id="R00002")

        for number, page in enumerate(report.pages, start=1):
            assert page.page == number
            for word in page.words:
                assert 0 <= word.left and word.right < PAGE_WIDTH
                assert 0 <= word.top <= PAGE_HEIGHT

    def test_distractors_add_other_candidates(self) -> None:
        def others(density: int) -> int:
            config = SynthConfig(seed=8, distractor_density=density, pages_per_report=(1, 1), collision_rate=0.0)
            report = generate_report(config=config, report_id="R00001")
            instances = segment_report(report_id=report.report_id, pages=report.pages)
            labeled = assign_labels(instances=instances, gold=report.gold)
            return sum(instance.label is Label.OTHER for instance in labeled)

        assert others(6) > others(0)


def test_draw_gold_formats() -> None:
    rng = derive_rng(0, "gold")

    for _ in range(200):
        ahi, ahi_text, sao2, sao2_text = draw_gold(rng)

        assert float(ahi_text) == ahi
        assert float(sao2_text.rstrip("%")) == sao2


class TestInjectOcrNoise:
    def test_zero_rate_is_identity(self) -> None:
        page = make_page(["Oxygen", "SaO2", "was", "90.5%"])

        assert inject_ocr_noise(words=page, rate=0.0, seed=1) == page

    def test_geometry_and_token_count_kept(self) -> None:
        page = make_page(["lllll", "SSSSS", "00000", "55555", "iiiii", "OOOOO", "xyz"])

        noisy = inject_ocr_noise(words=page, rate=0.9, seed=1)

        assert len(noisy.words) == len(page.words)
        assert [word.copy(update={"text": ""}) for word in noisy.words] == [
            word.copy(update={"text": ""}) for word in page.words
        ]
        assert noisy.tokens[-1] == "xyz"
        assert noisy.tokens != page.tokens

    def test_substitutions_come_from_confusion_table(self) -> None:
        page = make_page(["lSi50O"] * 30)

        noisy = inject_ocr_noise(words=page, rate=0.5, seed=9)

        for original, token in zip(page.tokens, noisy.tokens):
            for before, after in zip(original, token):
                assert after == before or after in CONFUSIONS[before]

    def test_deterministic(self) -> None:
        page = make_page(["lSi50O"] * 10)

        assert inject_ocr_noise(words=page, rate=0.3, seed=4) == inject_ocr_noise(words=page, rate=0.3, seed=4)

    def test_gold_tokens_mostly_survive_light_noise(self) -> None:
        config = SynthConfig(seed=21, noise_rate=0.02)
        total = survived = 0

        for index in range(1, 201):
            report_id = report_id_for(index)
            clean = generate_report(config=config.copy(update={"noise_rate": 0.0}), report_id=report_id)
            noisy = generate_report(config=config, report_id=report_id)
            targets = gold_texts(config, report_id)
            for clean_page, noisy_page in zip(clean.pages, noisy.pages):
                for before, after in zip(clean_page.tokens, noisy_page.tokens):
                    if before in targets:
                        total += 1
                        survived += before == after

        assert total >= 400
        assert survived / total >= 0.95


class TestSynthConfig:
    def test_template_needs_both_slots(self) -> None:
        with pytest.raises(ValidationError, match="exactly one"):
            SentenceTemplate(text="AHI was {ahi} .")

        with pytest.raises(ValidationError, match="exactly one"):
            SentenceTemplate(text="AHI {ahi} then {ahi} and SaO2 {sao2}")

    @pytest.mark.parametrize(
        argnames=("field", "value"),
        argvalues=(
            ("pages_per_report", (0, 2)),
            ("pages_per_report", (3, 2)),
            ("filler_sentences", (4, 1)),
            ("noise_rate", 1.0),
            ("n_reports", 0),
        ),
    )
    def test_invalid_values(self, field: str, value: object) -> None:
        with pytest.raises(ValidationError):
            SynthConfig(**{field: value})

    def test_unknown_key_rejected(self) -> None:
        with pytest.raises(ValidationError):
            SynthConfig(reports=10)

    def test_custom_template_used(self) -> None:
        config = SynthConfig(templates=[SentenceTemplate(text="Index {ahi} ; nadir {sao2} .")], seed=1)

        tokens = generate_report(config=config, report_id="R00001").pages[0].tokens

        assert "Index" in tokens
        assert "nadir" in tokens


class TestGenerateCorpus:
    def test_files(self, tmp_path: pathlib.Path) -> None:
        config = SynthConfig(n_reports=6, seed=13)

        manifest = generate_corpus(config=config, output_dir=tmp_path, n_jobs=1)

        assert manifest == tmp_path / MANIFEST_NAME
        entries = [ManifestEntry.parse_obj(row) for row in read_jsonl(manifest)]
        assert [entry.report_id for entry in entries] == [report_id_for(index) for index in range(1, 7)]
        for entry in entries:
            report = generate_report(config=config, report_id=entry.report_id)
            assert entry.gold == report.gold
            assert entry.pages == [f"words/{entry.report_id}_p{page.page}.tsv" for page in report.pages]
            assert [page.tokens for name in entry.pages for page in read_word_table(path=tmp_path / name)] == [
                page.tokens for page in report.pages
            ]

    def test_lookup_deidentifies_headers(self, tmp_path: pathlib.Path) -> None:
        config = SynthConfig(n_reports=5, seed=17)
        generate_corpus(config=config, output_dir=tmp_path, n_jobs=1)

        lookups = load_lookup_table(path=tmp_path / LOOKUP_NAME)

        assert sorted(lookups) == [report_id_for(index) for index in range(1, 6)]
        for report_id, lookup in lookups.items():
            report = generate_report(config=config, report_id=report_id)
            assert lookup.patient_name_tokens == report.patient_name_tokens
            assert lookup.mrn_values == [report.mrn]
            pages = deidentify_report(report_id=report_id, pages=report.pages, lookups=lookups)
            tokens = [token for page in pages for token in page.tokens]
            assert report.mrn not in tokens
            assert not set(report.patient_name_tokens) & set(tokens)
            assert PATNAME_PLACEHOLDER in tokens
            assert MRN_PLACEHOLDER in tokens

    def test_parallel_output_matches_serial(self, tmp_path: pathlib.Path) -> None:
        config = SynthConfig(n_reports=4, seed=19)

        serial = generate_corpus(config=config, output_dir=tmp_path / "serial", n_jobs=1)
        parallel = generate_corpus(config=config, output_dir=tmp_path / "parallel", n_jobs=2)

        assert serial.read_bytes() == parallel.read_bytes()
