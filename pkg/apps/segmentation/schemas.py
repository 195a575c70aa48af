import math

from pydantic import Field, root_validator, validator

from apps.CORE.enums import Label
from apps.CORE.schemas import BaseOutSchema, FrozenSchema
from apps.CORE.types import OrderKey

__all__ = ("Instance", "GoldRecord", "SplitSummary", "DatasetSummary")


class Instance(FrozenSchema):
    """One numeric candidate with its position, value and context segment (one row of the analytical dataset)."""

    report_id: str
    left: int = Field(ge=0)
    top: int = Field(ge=0)
    width: int = Field(gt=0)
    height: int = Field(gt=0)
    page: int = Field(ge=1)
    numeric_value: float
    segment: str
    token: str
    order_key: OrderKey
    label: Label | None = Field(default=None)

    @validator("numeric_value")
    def validate_numeric_value(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("Numeric value must be finite")
        return v

    @root_validator(skip_on_failure=True)
    def validate_segment(cls, values: dict) -> dict:
        if values["token"] not in values["segment"].split(" "):
            raise ValueError("Segment must contain the candidate token")
        return values

    @property
    def reading_order(self) -> tuple[int, OrderKey]:
        return self.page, self.order_key

    @property
    def structured(self) -> tuple[float, float, float, float, float, float]:
        return (
            float(self.left),
            float(self.top),
            float(self.width),
            float(self.height),
            float(self.page),
            float(self.numeric_value),
        )


class GoldRecord(FrozenSchema):
    report_id: str = Field(min_length=1)
    ahi_values: list[float] = Field(default=[])
    sao2_values: list[float] = Field(default=[])

    @validator("ahi_values", "sao2_values", each_item=True)
    def validate_values(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("Gold values must be finite")
        return v

    def values_for(self, label: Label) -> list[float]:
        if label is Label.AHI:
            return self.ahi_values
        if label is Label.SAO2:
            return self.sao2_values
        raise ValueError(f"No gold values are recorded for label '{label.value}'")


class SplitSummary(BaseOutSchema):
    split: str
    reports: int = Field(default=0, ge=0)
    pages: int = Field(default=0, ge=0)
    numeric_values: int = Field(default=0, ge=0)
    ahi: int = Field(default=0, ge=0)
    sao2: int = Field(default=0, ge=0)
    other: int = Field(default=0, ge=0)


class DatasetSummary(BaseOutSchema):
    rows: list[SplitSummary] = Field(default=[])

    def row(self, split: str) -> SplitSummary:
        return next(row for row in self.rows if row.split == split)
