from pydantic import Field, root_validator, validator

from apps.CORE.schemas import ConfigSchema, FrozenSchema
from apps.ocr.schemas import PageWords
from apps.segmentation.schemas import GoldRecord

__all__ = ("AHI_SLOT", "SAO2_SLOT", "DEFAULT_TEMPLATES", "SentenceTemplate", "SynthConfig", "SyntheticReport")

AHI_SLOT = "{ahi}"
SAO2_SLOT = "{sao2}"


class SentenceTemplate(ConfigSchema):
    """Findings paragraph with one `{ahi}` and one `{sao2}` slot, picked per report with probability ~ weight."""

    text: str
    weight: float = Field(default=1.0, gt=0)

    @validator("text")
    def validate_text(cls, v: str) -> str:
        if v.count(AHI_SLOT) != 1 or v.count(SAO2_SLOT) != 1:
            raise ValueError(f"Template must hold exactly one {AHI_SLOT} and one {SAO2_SLOT} slot")
        return v


# Laboratory styles: reports of one laboratory share their findings paragraph.
DEFAULT_TEMPLATES: list[SentenceTemplate] = [
    SentenceTemplate(
        text="The total APNEA/HYPOPNEA INDEX (AHI) was {ahi} . The lowest oxygen saturation (SaO2) during sleep "
        "was {sao2} .",
        weight=3.0,
    ),
    SentenceTemplate(
        text="Overall AHI: {ahi} events per hour of sleep. Minimum SaO2 recorded was {sao2} on room air.",
        weight=2.0,
    ),
    SentenceTemplate(
        text="Respiratory analysis showed an apnea-hypopnea index of {ahi} per hour. Oxygen desaturation nadir "
        "SaO2 {sao2} was noted during REM sleep.",
        weight=1.0,
    ),
]


class SynthConfig(ConfigSchema):
    n_reports: int = Field(default=200, ge=1)
    pages_per_report: tuple[int, int] = Field(default=(1, 4))
    templates: list[SentenceTemplate] = Field(default_factory=lambda: list(DEFAULT_TEMPLATES), min_items=1)
    distractor_density: int = Field(default=4, ge=0, description="Distractor numeric tokens per page")
    noise_rate: float = Field(default=0.0, ge=0, lt=1, description="Per-character substitution probability")
    repeat_rate: float = Field(default=0.1, ge=0, le=1, description="Chance each later page repeats the findings")
    collision_rate: float = Field(default=0.02, ge=0, le=1, description="Chance a distractor reuses the gold AHI")
    filler_sentences: tuple[int, int] = Field(default=(3, 8))
    seed: int = Field(default=0)

    @root_validator(skip_on_failure=True)
    def validate_ranges(cls, values: dict) -> dict:
        for name in ("pages_per_report", "filler_sentences"):
            low, high = values[name]
            if low < (1 if name == "pages_per_report" else 0) or high < low:
                raise ValueError(f"Invalid range {name}=({low}, {high})")
        return values


class SyntheticReport(FrozenSchema):
    report_id: str
    pages: list[PageWords]
    gold: GoldRecord
    patient_name_tokens: list[str]
    mrn: str
