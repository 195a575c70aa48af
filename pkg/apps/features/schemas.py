import math

from pydantic import Field, root_validator, validator

from apps.CORE.schemas import FrozenSchema
from apps.features.stopwords import ENGLISH_STOPWORDS

__all__ = ("STRUCTURED_FEATURES", "Vocabulary", "FeatureVector", "Scaler")

STRUCTURED_FEATURES: tuple[str, ...] = ("left", "top", "width", "height", "page", "numeric_value")


class Vocabulary(FrozenSchema):
    """Training-set terms in column order with their smoothed idf."""

    terms: list[str] = Field(default=[])
    idf: list[float] = Field(default=[])
    doc_count: int = Field(ge=1)

    @validator("terms")
    def validate_terms(cls, v: list[str]) -> list[str]:
        if len(set(v)) != len(v):
            raise ValueError("Vocabulary terms must be unique")
        for term in v:
            if not term or term != term.lower() or term in ENGLISH_STOPWORDS:
                raise ValueError(f"Invalid vocabulary term '{term}'")
        return v

    @root_validator(skip_on_failure=True)
    def validate_idf(cls, values: dict) -> dict:
        if len(values["idf"]) != len(values["terms"]):
            raise ValueError("One idf value per term is required")
        if any(not math.isfinite(value) or value <= 0 for value in values["idf"]):
            raise ValueError("Idf values must be finite and positive")
        return values

    @property
    def index(self) -> dict[str, int]:
        return {term: position for position, term in enumerate(self.terms)}

    def __len__(self) -> int:
        return len(self.terms)


class FeatureVector(FrozenSchema):
    """Six structured features plus a sparse tf-idf block over a vocabulary of `dimension` terms."""

    structured: tuple[float, float, float, float, float, float]
    tfidf: dict[int, float] = Field(default={})
    dimension: int = Field(ge=0)

    @root_validator(skip_on_failure=True)
    def validate_tfidf(cls, values: dict) -> dict:
        for position in values["tfidf"]:
            if not 0 <= position < values["dimension"]:
                raise ValueError(f"Tf-idf index {position} outside vocabulary of {values['dimension']} terms")
        return values

    @property
    def width(self) -> int:
        return len(STRUCTURED_FEATURES) + self.dimension


class Scaler(FrozenSchema):
    """Per-feature training mean and standard deviation (population) of the structured block."""

    mean: list[float]
    std: list[float]

    @root_validator(skip_on_failure=True)
    def validate_lengths(cls, values: dict) -> dict:
        if len(values["mean"]) != len(STRUCTURED_FEATURES) or len(values["std"]) != len(STRUCTURED_FEATURES):
            raise ValueError(f"Scaler needs {len(STRUCTURED_FEATURES)} means and deviations")
        return values
