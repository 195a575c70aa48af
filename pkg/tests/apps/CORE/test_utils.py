import datetime
import pathlib
import zoneinfo

import numpy as np
import pytest
from faker import Faker
from pytest_mock import MockerFixture

from apps.CORE.utils import (
    bytes_hash,
    content_hash,
    derive_rng,
    get_timestamp,
    get_utc_timezone,
    orjson_dumps,
    read_json,
    read_jsonl,
    utc_now,
    write_json,
    write_jsonl,
)


def test_get_utc_timezone() -> None:
    result = get_utc_timezone()

    assert result == zoneinfo.ZoneInfo(key="UTC")
    assert isinstance(result, zoneinfo.ZoneInfo)


def test_utc_now(faker: Faker, mocker: MockerFixture) -> None:
    expected_datetime: datetime.datetime = faker.date_time(tzinfo=zoneinfo.ZoneInfo(key="UTC"))
    date_time_mock = mocker.patch("apps.CORE.utils.datetime")
    date_time_mock.datetime.now.return_value = expected_datetime

    result = utc_now()

    assert result == expected_datetime
    assert result.tzinfo == zoneinfo.ZoneInfo(key="UTC")


@pytest.mark.parametrize(
    argnames=["data", "expected_result"],
    argvalues=(
        ("test", '"test"'),
        ([0, 1], "[0,1]"),
        ({"1": 1, "2": 2}, '{"1":1,"2":2}'),
        (1, "1"),
        (3.14, "3.14"),
        (True, "true"),
        (None, "null"),
        (np.array([1.5, 2.0]), "[1.5,2.0]"),
        (pathlib.Path("a/b.tsv"), '"a/b.tsv"'),
    ),
)
def test_orjson_dumps(data, expected_result) -> None:
    result = orjson_dumps(v=data)

    assert isinstance(result, str)
    assert result == expected_result


def test_get_timestamp(faker: Faker) -> None:
    date_time = faker.date_time(tzinfo=zoneinfo.ZoneInfo(key="UTC"))

    assert get_timestamp(v=date_time) == round(date_time.timestamp() * 1000, 3)


class TestContentHash:
    def test_key_order_does_not_matter(self, faker: Faker) -> None:
        data = faker.pydict(nb_elements=6, value_types=[int, str, float])

        assert content_hash(data) == content_hash(dict(reversed(list(data.items()))))

    def test_values_matter(self) -> None:
        assert content_hash({"seed": 0}) != content_hash({"seed": 1})

    def test_bytes_hash(self, faker: Faker) -> None:
        data = faker.binary(length=64)

        assert bytes_hash(data) == bytes_hash(bytes(data))
        assert len(bytes_hash(data)) == 64


class TestDeriveRng:
    def test_reproducible(self, faker: Faker) -> None:
        seed, key = faker.pyint(), faker.pystr()

        assert derive_rng(seed, key).random() == derive_rng(seed, key).random()

    @pytest.mark.parametrize(
        argnames=("keys_a", "keys_b"),
        argvalues=((("R00001",), ("R00002",)), (("epoch", 1), ("epoch", 2)), (("subset",), ("subset", 10))),
    )
    def test_keys_give_independent_streams(self, keys_a: tuple, keys_b: tuple) -> None:
        assert derive_rng(0, *keys_a).random() != derive_rng(0, *keys_b).random()


class TestJsonFiles:
    def test_json(self, tmp_path: pathlib.Path, faker: Faker) -> None:
        data = faker.pydict(nb_elements=5, value_types=[int, str, bool])

        path = write_json(tmp_path / "nested" / "data.json", data)

        assert path.exists()
        assert read_json(path) == data

    def test_jsonl(self, tmp_path: pathlib.Path) -> None:
        rows = [{"report_id": "R00001", "pages": 2}, {"report_id": "R00002", "pages": 1}]

        path = write_jsonl(tmp_path / "rows.jsonl", rows)

        assert path.read_text().count("\n") == 2
        assert read_jsonl(path) == rows
