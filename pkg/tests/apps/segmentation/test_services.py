import pathlib

import pandas as pd
import pytest

from apps.CORE.enums import Label
from apps.CORE.exceptions import InvalidInputException, UnparseableCandidateException
from apps.ocr.schemas import PageWords
from apps.segmentation.schemas import GoldRecord, Instance
from apps.segmentation.services import (
    assign_labels,
    extract_segment,
    find_candidates,
    is_word,
    parse_numeric,
    segment_report,
    summarize_dataset,
    write_instances_csv,
)
from tests.apps.segmentation.factories import InstanceFactory
from tests.bases import make_page

TABLE1_ROWS = (
    (
        26.0,
        (735, 388, 61, 26),
        "hypopneas, 120 met the AASM Version 2 scoring rule, while 26 met the Medicare scoring rule. The total "
        "APNEA/HYPOPNEA INDEX (AHI)",
        Label.OTHER,
    ),
    (
        19.5,
        (1048, 385, 111, 50),
        "the Medicare scoring rule. The total APNEA/HYPOPNEA INDEX (AHI) was 19.5 . The patient also had 0 "
        "respiratory event related arousals (RERA)",
        Label.AHI,
    ),
    (
        120.0,
        (232, 456, 150, 25),
        "and an apnea index of 1.3. There were 129 hypopneas, 120 met the AASM Version 2 scoring rule, while 26 met",
        Label.OTHER,
    ),
)


class TestTable1:
    @pytest.mark.parametrize(argnames=("value", "box", "segment", "label"), argvalues=TABLE1_ROWS)
    def test_row(
        self, table1_page: PageWords, value: float, box: tuple[int, int, int, int], segment: str, label: Label
    ) -> None:
        instances = segment_report(report_id="R00001", pages=[table1_page])
        labeled = assign_labels(
            instances=instances, gold=GoldRecord(report_id="R00001", ahi_values=[19.5], sao2_values=[88.0])
        )

        (instance,) = [item for item in labeled if item.numeric_value == value]
        assert (instance.left, instance.top, instance.width, instance.height) == box
        assert instance.segment == segment
        assert instance.label is label
        assert instance.page == 1


class TestFindCandidates:
    @pytest.mark.parametrize(
        argnames=("tokens", "expected"),
        argvalues=(
            (["AHI", "was", "19.5", "."], [2]),
            (["[DATE]", "[MRN]"], []),
            (["88%", "120", "1,200"], [0, 1, 2]),
            ([".", ",", "%", "..."], []),
            (["SaO2", "88%.", "(88%)", "x1"], [1]),
        ),
    )
    def test_candidates(self, tokens: list[str], expected: list[int]) -> None:
        assert find_candidates(words=make_page(tokens)) == expected


class TestParseNumeric:
    @pytest.mark.parametrize(
        argnames=("token", "expected"),
        argvalues=(("19.5", 19.5), ("120", 120.0), ("88%", 88.0), ("1,200", 1200.0), ("1.3.", 1.3), ("0.5", 0.5)),
    )
    def test_values(self, token: str, expected: float) -> None:
        assert parse_numeric(token=token) == expected

    @pytest.mark.parametrize(argnames="token", argvalues=("1.2.3", "..", "%"))
    def test_unparseable(self, token: str) -> None:
        with pytest.raises(UnparseableCandidateException):
            parse_numeric(token=token)

    def test_dropped_candidates(self) -> None:
        instances = segment_report(report_id="R1", pages=[make_page(["version", "1.2.3", "AHI", "19.5"])])

        assert [instance.token for instance in instances] == ["19.5"]


class TestExtractSegment:
    def test_first_word_on_page(self) -> None:
        tokens = [str(number) for number in range(30)]

        assert extract_segment(words=make_page(tokens), idx=0).split(" ") == tokens[:11]

    def test_single_word_page(self) -> None:
        assert extract_segment(words=make_page(["19.5"]), idx=0) == "19.5"

    @pytest.mark.parametrize(argnames="idx", argvalues=(0, 3, 10, 15, 29))
    def test_word_count(self, idx: int) -> None:
        tokens = [f"w{number}" for number in range(30)]

        segment = extract_segment(words=make_page(tokens), idx=idx, radius=10)

        assert len(segment.split(" ")) == min(idx, 10) + 1 + min(29 - idx, 10)

    def test_punctuation_rides_along(self) -> None:
        tokens = ["a", "b", ".", "c", "7", "-", "d", "e"]

        assert extract_segment(words=make_page(tokens), idx=4, radius=2) == "b . c 7 - d e"

    def test_out_of_range(self) -> None:
        with pytest.raises(InvalidInputException):
            extract_segment(words=make_page(["a"]), idx=3)

    def test_windows_stay_on_page(self) -> None:
        pages = [make_page(["before", "page", "break"], page=1), make_page(["42", "after"], page=2)]

        (instance,) = segment_report(report_id="R1", pages=pages)

        assert instance.segment == "42 after"
        assert instance.page == 2


@pytest.mark.parametrize(
    argnames=("token", "expected"), argvalues=(("AHI", True), ("19.5", True), (".", False), ("(", False), ("-", False))
)
def test_is_word(token: str, expected: bool) -> None:
    assert is_word(token) is expected


class TestAssignLabels:
    def test_repeated_value(self) -> None:
        instances = segment_report(report_id="R1", pages=[make_page(["88", "x", "88%", "y", "88.0"])])

        labeled = assign_labels(instances=instances, gold=GoldRecord(report_id="R1", sao2_values=[88.0]))

        assert [instance.label for instance in labeled] == [Label.SAO2] * 3

    def test_ahi_wins_collision(self, caplog: pytest.LogCaptureFixture) -> None:
        instances = segment_report(report_id="R1", pages=[make_page(["90"])])

        labeled = assign_labels(
            instances=instances, gold=GoldRecord(report_id="R1", ahi_values=[90.0], sao2_values=[90.0])
        )

        assert labeled[0].label is Label.AHI
        assert "matches both AHI and SaO2" in caplog.text

    def test_epsilon(self) -> None:
        instances = segment_report(report_id="R1", pages=[make_page(["19.5", "19.6"])])

        labeled = assign_labels(instances=instances, gold=GoldRecord(report_id="R1", ahi_values=[19.5000001]))

        assert [instance.label for instance in labeled] == [Label.AHI, Label.OTHER]

    def test_report_mismatch(self) -> None:
        with pytest.raises(InvalidInputException):
            assign_labels(instances=[InstanceFactory.build(report_id="R1")], gold=GoldRecord(report_id="R2"))

    def test_label_counts(self, table1_page: PageWords) -> None:
        instances = segment_report(report_id="R1", pages=[table1_page])

        labeled = assign_labels(instances=instances, gold=GoldRecord(report_id="R1", ahi_values=[19.5]))

        assert len(labeled) == len(instances) == len(find_candidates(words=table1_page))
        assert sum(instance.label is not None for instance in labeled) == len(instances)


class TestInstanceSchema:
    def test_segment_must_contain_token(self) -> None:
        with pytest.raises(ValueError):
            InstanceFactory.build(token="19.5", segment="no value here")

    def test_numeric_value_finite(self) -> None:
        with pytest.raises(ValueError):
            InstanceFactory.build(numeric_value=float("inf"))


def test_write_instances_csv(tmp_path: pathlib.Path, table1_page: PageWords) -> None:
    instances = assign_labels(
        instances=segment_report(report_id="R1", pages=[table1_page]),
        gold=GoldRecord(report_id="R1", ahi_values=[19.5]),
    )

    path = write_instances_csv(instances=instances, path=tmp_path / "instances.csv")

    assert path.read_text().splitlines()[0] == (
        '"report_id","left","top","width","height","page","numeric_value","segment","label"'
    )
    frame = pd.read_csv(path)
    assert len(frame) == len(instances)
    assert frame.loc[frame["numeric_value"] == 19.5, "label"].tolist() == ["AHI"]


def test_summarize_dataset() -> None:
    instances = [
        InstanceFactory.build(report_id="R1", label=Label.AHI),
        InstanceFactory.build(report_id="R1", label=Label.OTHER),
        InstanceFactory.build(report_id="R2", label=Label.SAO2),
        InstanceFactory.build(report_id="R3", label=Label.OTHER),
    ]

    summary = summarize_dataset(
        instances=instances, page_counts={"R1": 2, "R2": 1, "R3": 3}, splits={"train": ["R1", "R2"], "test": ["R3"]}
    )

    assert summary.row("all").dict() == {
        "split": "all", "reports": 3, "pages": 6, "numeric_values": 4, "ahi": 1, "sao2": 1, "other": 2
    }
    assert (summary.row("train").reports, summary.row("train").numeric_values) == (2, 3)
    assert summary.row("test").other == 1
    assert isinstance(instances[0], Instance)
