from faker import Faker
from pydantic_factories import Use

from apps.ocr.schemas import WordBox
from tests.bases import BaseRawFactory

__all__ = ("WordBoxFactory",)

faker = Faker()


class WordBoxFactory(BaseRawFactory):
    __model__ = WordBox

    text = Use(faker.word)
    left = Use(faker.pyint, min_value=0, max_value=2000)
    top = Use(faker.pyint, min_value=0, max_value=3000)
    width = Use(faker.pyint, min_value=1, max_value=300)
    height = Use(faker.pyint, min_value=1, max_value=80)
    page = 1
    confidence = 90.0
