from faker import Faker
from pydantic_factories import Use

from apps.CORE.enums import Label
from apps.segmentation.schemas import GoldRecord, Instance
from tests.bases import BaseRawFactory

__all__ = ("InstanceFactory", "GoldRecordFactory")

faker = Faker()


def segment_around(token: str) -> str:
    return " ".join([*faker.words(nb=5), token, *faker.words(nb=5)])


class InstanceFactory(BaseRawFactory):
    __model__ = Instance

    report_id = Use(lambda: f"R{faker.pyint(min_value=1, max_value=99999):05d}")
    left = Use(faker.pyint, min_value=0, max_value=2000)
    top = Use(faker.pyint, min_value=0, max_value=3000)
    width = Use(faker.pyint, min_value=1, max_value=300)
    height = Use(faker.pyint, min_value=1, max_value=80)
    page = Use(faker.pyint, min_value=1, max_value=4)
    numeric_value = 19.5
    token = "19.5"
    segment = Use(segment_around, "19.5")
    order_key = Use(lambda: (1, faker.pyint(min_value=1, max_value=9), faker.pyint(min_value=1, max_value=9), 1))
    label = Label.OTHER


class GoldRecordFactory(BaseRawFactory):
    __model__ = GoldRecord

    report_id = "R00001"
    ahi_values = Use(lambda: [round(faker.pyfloat(min_value=0.5, max_value=120), 1)])
    sao2_values = Use(lambda: [float(faker.pyint(min_value=60, max_value=100))])
