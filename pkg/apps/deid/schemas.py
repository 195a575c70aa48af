from pydantic import Field, validator

from apps.CORE.schemas import FrozenSchema

__all__ = ("TRAILING_PUNCTUATION", "DeidLookup", "match_key")

TRAILING_PUNCTUATION = ".,;:!?"


def match_key(token: str) -> str:
    """Whole-token comparison key: trailing punctuation stripped, casefolded."""
    return token.rstrip(TRAILING_PUNCTUATION).casefold()


class DeidLookup(FrozenSchema):
    """Identifiers of one report's patient that must not survive in the word stream."""

    report_id: str = Field(min_length=1)
    patient_name_tokens: list[str] = Field(default=[])
    mrn_values: list[str] = Field(default=[])

    @validator("patient_name_tokens", "mrn_values", each_item=True)
    def validate_tokens(cls, v: str) -> str:
        v = v.strip()
        if not match_key(v):
            raise ValueError("Lookup tokens must be nonempty")
        return v

    @property
    def names(self) -> frozenset[str]:
        return frozenset(match_key(token) for token in self.patient_name_tokens)

    @property
    def mrns(self) -> frozenset[str]:
        return frozenset(match_key(token) for token in self.mrn_values)
