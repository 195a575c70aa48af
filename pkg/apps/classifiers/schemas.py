import typing

from pydantic import Field, validator

from apps.classifiers.enums import ClassifierKind, Penalty
from apps.CORE.enums import CLASS_ORDER, Label
from apps.CORE.schemas import BaseOutSchema, FrozenSchema
from apps.CORE.types import HyperParam

__all__ = ("DEFAULT_HYPERPARAMS", "ClassifierSpec", "TrainedClassifier", "SpecScore", "CrossValidationResult")

_LINEAR_DEFAULTS: dict[str, HyperParam] = {"learning_rate": 1.0, "max_iter": 2000, "tol": 1e-6}

DEFAULT_HYPERPARAMS: dict[ClassifierKind, dict[str, HyperParam]] = {
    ClassifierKind.LR: {"penalty": Penalty.NONE.value, "lam": 0.0, **_LINEAR_DEFAULTS},
    ClassifierKind.LASSO: {"penalty": Penalty.L1.value, "lam": 0.01, **_LINEAR_DEFAULTS},
    ClassifierKind.RIDGE: {"penalty": Penalty.L2.value, "lam": 0.01, **_LINEAR_DEFAULTS},
    ClassifierKind.SVM: {"degree": 3, "coef0": 1.0, "gamma": "scale", "lam": 0.01, "epochs": 10},
    ClassifierKind.KNN: {"k": 3},
    ClassifierKind.NAIVE_BAYES: {"alpha": 0.5, "structured_width": 6},
    ClassifierKind.RANDOM_FOREST: {
        "n_trees": 100,
        "max_depth": None,
        "min_leaf": 1,
        "bootstrap": True,
        "max_features": "sqrt",
    },
}


class ClassifierSpec(FrozenSchema):
    """Classifier kind plus its hyperparameters, missing keys filled from the kind's defaults."""

    kind: ClassifierKind
    hyperparams: dict[str, HyperParam] = Field(default={})

    @validator("hyperparams", always=True)
    def validate_hyperparams(cls, v: dict[str, HyperParam], values: dict) -> dict[str, HyperParam]:
        kind = values.get("kind")
        if kind is None:
            return v
        defaults = DEFAULT_HYPERPARAMS[kind]
        unknown = sorted(set(v) - set(defaults))
        if unknown:
            raise ValueError(f"Unknown hyperparameter '{unknown[0]}' for {kind.value}")
        return {**defaults, **v}

    @property
    def name(self) -> str:
        """`Lasso(lam=0.1)`: the kind with the hyperparameters that differ from its defaults."""
        defaults = DEFAULT_HYPERPARAMS[self.kind]
        changed = ", ".join(f"{key}={value}" for key, value in self.hyperparams.items() if defaults[key] != value)
        return f"{self.kind.value}({changed})" if changed else self.kind.value


class TrainedClassifier(FrozenSchema):
    spec: ClassifierSpec
    model: typing.Any
    n_features: int = Field(ge=1)
    seed: int
    classes: tuple[Label, Label, Label] = Field(default=CLASS_ORDER)
    artifacts: dict[str, str] = Field(default={})


class SpecScore(BaseOutSchema):
    spec: ClassifierSpec
    fold_accuracies: list[float]
    mean_accuracy: float


class CrossValidationResult(BaseOutSchema):
    best_spec: ClassifierSpec
    scores: list[SpecScore]
    folds: dict[str, int]
    model: TrainedClassifier
