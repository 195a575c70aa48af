import math

from pydantic import Field, root_validator, validator

from apps.CORE.enums import CLASS_ORDER, Label
from apps.CORE.schemas import BaseOutSchema, FrozenSchema
from apps.CORE.types import OrderKey, ProbTriple
from apps.evaluation.enums import Metric
from apps.segmentation.schemas import Instance

__all__ = (
    "SIMPLEX_TOLERANCE",
    "ScoredInstance",
    "SegmentMetrics",
    "DeLongResult",
    "ChiSquareResult",
    "DocumentAccuracy",
    "ClassReport",
    "Comparison",
    "EvalReport",
)

SIMPLEX_TOLERANCE = 1e-9


class ScoredInstance(FrozenSchema):
    instance: Instance
    prob: ProbTriple
    gold: Label | None = Field(default=None)

    @validator("prob")
    def validate_prob(cls, v: ProbTriple) -> ProbTriple:
        if any(not -SIMPLEX_TOLERANCE <= value <= 1 + SIMPLEX_TOLERANCE for value in v):
            raise ValueError("Probabilities must lie in [0, 1]")
        if abs(sum(v) - 1.0) > SIMPLEX_TOLERANCE:
            raise ValueError(f"Probabilities must sum to 1, got {sum(v)}")
        return v

    @property
    def report_id(self) -> str:
        return self.instance.report_id

    @property
    def key(self) -> tuple[str, int, OrderKey]:
        """Identity of the underlying candidate across runs."""
        return self.instance.report_id, self.instance.page, self.instance.order_key

    @property
    def predicted(self) -> Label:
        """Argmax class; ties resolve in class order (AHI > SaO2 > Other)."""
        best = max(range(len(CLASS_ORDER)), key=lambda position: (self.prob[position], -position))
        return CLASS_ORDER[best]

    def probability(self, label: Label) -> float:
        return self.prob[CLASS_ORDER.index(Label(label))]


class SegmentMetrics(BaseOutSchema):
    """One-vs-rest rates; None where the denominator is empty."""

    recall: float | None = Field(default=None, ge=0, le=1)
    precision: float | None = Field(default=None, ge=0, le=1)
    true_positives: int = Field(default=0, ge=0)
    false_positives: int = Field(default=0, ge=0)
    false_negatives: int = Field(default=0, ge=0)


class DeLongResult(BaseOutSchema):
    auc_a: float
    auc_b: float
    var_a: float
    var_b: float
    covariance: float
    z: float
    p_two_sided: float = Field(ge=0, le=1)


class ChiSquareResult(BaseOutSchema):
    statistic: float = Field(ge=0)
    p: float = Field(ge=0, le=1)


class DocumentAccuracy(BaseOutSchema):
    accuracy: float = Field(ge=0, le=1)
    correct: int = Field(ge=0)
    total: int = Field(ge=1)
    ci_low: float = Field(ge=0, le=1)
    ci_high: float = Field(ge=0, le=1)


class ClassReport(BaseOutSchema):
    label: Label
    recall: float | None = Field(default=None, ge=0, le=1)
    precision: float | None = Field(default=None, ge=0, le=1)
    auroc: float | None = Field(default=None, ge=0, le=1)
    auroc_ci_low: float | None = Field(default=None, ge=0, le=1)
    auroc_ci_high: float | None = Field(default=None, ge=0, le=1)
    document: DocumentAccuracy | None = Field(default=None)


class Comparison(BaseOutSchema):
    pair: tuple[str, str]
    label: Label
    metric: Metric
    statistic: float
    p_raw: float = Field(ge=0, le=1)
    p_adjusted: float = Field(ge=0, le=1)

    @root_validator(skip_on_failure=True)
    def validate_adjustment(cls, values: dict) -> dict:
        if values["p_adjusted"] < values["p_raw"]:
            raise ValueError("Adjusted p-value cannot be smaller than the raw one")
        return values


class EvalReport(BaseOutSchema):
    """Per-class segment and document metrics of one model, plus any pairwise comparisons."""

    model: str
    classes: list[ClassReport]
    comparisons: list[Comparison] = Field(default=[])
    instances: int = Field(ge=0)
    documents: int = Field(ge=0)

    @validator("classes")
    def validate_classes(cls, v: list[ClassReport]) -> list[ClassReport]:
        for report in v:
            for value in (report.recall, report.precision, report.auroc):
                if value is not None and math.isnan(value):
                    raise ValueError("Rates must be numbers or undefined")
        return v

    def for_label(self, label: Label) -> ClassReport:
        return next(report for report in self.classes if report.label is Label(label))
