import pathlib
import typing

import joblib
import numpy as np

from apps.classifiers.enums import PARAMETRIC_KINDS, ClassifierKind
from apps.classifiers.models import MODEL_CLASSES, N_CLASSES
from apps.classifiers.schemas import ClassifierSpec, CrossValidationResult, SpecScore, TrainedClassifier
from apps.CORE.enums import CLASS_ORDER, Label
from apps.CORE.exceptions import InvalidInputException
from apps.CORE.types import StrOrPath
from apps.CORE.utils import read_json, write_json
from apps.features.schemas import FeatureVector
from apps.features.services import to_matrix
from loggers import get_logger
from settings import Settings

__all__ = (
    "MODEL_FORMAT_VERSION",
    "encode_labels",
    "train",
    "train_matrix",
    "predict_proba",
    "predict_proba_batch",
    "predict_proba_matrix",
    "assign_folds",
    "cross_validate",
    "default_grid",
    "save_classifier",
    "load_classifier",
)

logger = get_logger(name=__name__)

MODEL_FORMAT_VERSION = 1
DEFAULT_FOLDS = 5
GRID_VALUES: dict[ClassifierKind, tuple[str, tuple[typing.Any, ...]]] = {
    ClassifierKind.LASSO: ("lam", (0.001, 0.01, 0.1)),
    ClassifierKind.RIDGE: ("lam", (0.001, 0.01, 0.1)),
    ClassifierKind.SVM: ("lam", (0.001, 0.01, 0.1)),
    ClassifierKind.KNN: ("k", (1, 3, 5)),
    ClassifierKind.NAIVE_BAYES: ("alpha", (0.1, 0.5, 1.0)),
    ClassifierKind.RANDOM_FOREST: ("n_trees", (50, 100, 200)),
}


def encode_labels(labels: typing.Sequence[Label]) -> np.ndarray:
    """Class indices into CLASS_ORDER."""
    positions = {label: position for position, label in enumerate(CLASS_ORDER)}
    try:
        return np.array([positions[Label(label)] for label in labels], dtype=np.int64)
    except (KeyError, ValueError) as error:
        raise InvalidInputException(message=f"Unknown label {error}.") from error


def train_matrix(*, spec: ClassifierSpec, X: np.ndarray, y: np.ndarray, seed: int) -> TrainedClassifier:
    """Fit `spec` on a dense feature matrix and class-index targets."""
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise InvalidInputException(
            message=f"Feature matrix of shape {X.shape} does not match {y.shape[0]} labels.",
            data={"X": list(X.shape), "y": int(y.shape[0])},
            stage="train",
        )
    if X.shape[0] == 0:
        raise InvalidInputException(message="Cannot train on an empty set.", stage="train")
    if spec.kind in PARAMETRIC_KINDS:
        present = set(np.unique(y).tolist())
        for position, label in enumerate(CLASS_ORDER):
            if position not in present:
                raise InvalidInputException(
                    message=f"Class '{label.value}' is missing from the training data of {spec.kind.value}.",
                    data={"class": label.value},
                    stage="train",
                )
    model = MODEL_CLASSES[spec.kind](**spec.hyperparams).fit(X, y, np.random.default_rng(seed))
    logger.debug(msg=f"Trained {spec.name} on {X.shape[0]} instances x {X.shape[1]} features.")
    return TrainedClassifier(spec=spec, model=model, n_features=X.shape[1], seed=seed)


def train(
    *, spec: ClassifierSpec, vectors: typing.Sequence[FeatureVector], labels: typing.Sequence[Label], seed: int
) -> TrainedClassifier:
    """
    Fit one classifier on feature vectors.

    Raises:
        InvalidInputException: |vectors| != |labels|, mixed vector dimensions, or (LR, Lasso, Ridge, SVM,
            NaiveBayes) a class absent from the labels.
    """
    if len(vectors) != len(labels):
        raise InvalidInputException(
            message=f"{len(vectors)} feature vectors but {len(labels)} labels.", stage="train"
        )
    return train_matrix(spec=spec, X=to_matrix(vectors=vectors), y=encode_labels(labels), seed=seed)


def predict_proba_matrix(*, model: TrainedClassifier, X: np.ndarray) -> np.ndarray:
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise InvalidInputException(
            message=f"Expected {model.n_features} features, got shape {X.shape}.",
            data={"expected": model.n_features, "shape": list(X.shape)},
            stage="predict",
        )
    if X.shape[0] == 0:
        return np.zeros((0, N_CLASSES))
    probabilities = model.model.predict_proba(X)
    return probabilities / probabilities.sum(axis=1, keepdims=True)


def predict_proba_batch(*, model: TrainedClassifier, vectors: typing.Sequence[FeatureVector]) -> np.ndarray:
    return predict_proba_matrix(model=model, X=to_matrix(vectors=vectors))


def predict_proba(*, model: TrainedClassifier, vector: FeatureVector) -> tuple[float, float, float]:
    """[p_AHI, p_SaO2, p_Other] for one feature vector."""
    row = predict_proba_matrix(model=model, X=to_matrix(vectors=[vector]))[0]
    return float(row[0]), float(row[1]), float(row[2])


def assign_folds(*, report_ids: typing.Sequence[str], folds: int, seed: int) -> dict[str, int]:
    """Round-robin fold index for each distinct report after a seeded shuffle of the sorted ids."""
    unique = sorted(set(report_ids))
    if len(unique) < folds:
        raise InvalidInputException(
            message=f"{folds}-fold cross-validation needs at least {folds} reports, got {len(unique)}.",
            data={"reports": len(unique), "folds": folds},
            stage="cross_validate",
        )
    order = np.random.default_rng(seed).permutation(len(unique))
    return {unique[index]: position % folds for position, index in enumerate(order)}


def _fold_accuracy(spec: ClassifierSpec, X: np.ndarray, y: np.ndarray, held_out: np.ndarray, seed: int) -> float:
    fitted = train_matrix(spec=spec, X=X[~held_out], y=y[~held_out], seed=seed)
    predicted = np.argmax(predict_proba_matrix(model=fitted, X=X[held_out]), axis=1)
    return float(np.mean(predicted == y[held_out]))


def cross_validate(
    *,
    grid: typing.Sequence[ClassifierSpec],
    vectors: typing.Sequence[FeatureVector],
    labels: typing.Sequence[Label],
    report_ids: typing.Sequence[str],
    folds: int = DEFAULT_FOLDS,
    seed: int,
    n_jobs: int | None = None,
) -> CrossValidationResult:
    """
    Report-level k-fold search over `grid`, then retrain the best spec on all data.

    Args:
        grid: Candidate specs; ties on mean validation accuracy go to the earliest one.
        vectors: Development feature vectors.
        labels: Gold labels aligned with `vectors`.
        report_ids: Owning report of every vector; all instances of one report share a fold.
        folds (int): Number of folds. Defaults: `5`
        seed (int): Seed for fold assignment and model fitting.
        n_jobs (int): Parallel (spec, fold) fits. Defaults: `Settings.JOBS`

    Returns:
        CrossValidationResult: Best spec, per-spec fold accuracies, fold map and the retrained model.
    """
    if not grid:
        raise InvalidInputException(message="Cross-validation grid is empty.", stage="cross_validate")
    if not len(vectors) == len(labels) == len(report_ids):
        raise InvalidInputException(message="Vectors, labels and report ids must align.", stage="cross_validate")

    X, y = to_matrix(vectors=vectors), encode_labels(labels)
    fold_of = assign_folds(report_ids=report_ids, folds=folds, seed=seed)
    instance_folds = np.array([fold_of[report_id] for report_id in report_ids])

    tasks = [(spec, fold) for spec in grid for fold in range(folds)]
    accuracies = joblib.Parallel(n_jobs=n_jobs or Settings.JOBS)(
        joblib.delayed(_fold_accuracy)(spec, X, y, instance_folds == fold, seed) for spec, fold in tasks
    )
    scores = []
    for position, spec in enumerate(grid):
        fold_accuracies = accuracies[position * folds : (position + 1) * folds]
        scores.append(
            SpecScore(spec=spec, fold_accuracies=fold_accuracies, mean_accuracy=float(np.mean(fold_accuracies)))
        )
        logger.info(msg=f"CV {spec.name}: mean accuracy {scores[-1].mean_accuracy:.4f}.")

    best = max(range(len(scores)), key=lambda position: (scores[position].mean_accuracy, -position))
    best_spec = grid[best]
    model = train_matrix(spec=best_spec, X=X, y=y, seed=seed)
    return CrossValidationResult(best_spec=best_spec, scores=scores, folds=fold_of, model=model)


def default_grid(*, kind: ClassifierKind) -> list[ClassifierSpec]:
    """Search grid of a kind; LR has no tunable hyperparameter and searches only its defaults."""
    kind = ClassifierKind(kind)
    if kind not in GRID_VALUES:
        return [ClassifierSpec(kind=kind)]
    key, values = GRID_VALUES[kind]
    return [ClassifierSpec(kind=kind, hyperparams={key: value}) for value in values]


def save_classifier(*, model: TrainedClassifier, path: StrOrPath) -> pathlib.Path:
    """Versioned JSON: kind tag, hyperparameters, fitted parameters, class order and artifact hashes."""
    return write_json(
        path,
        {
            "version": MODEL_FORMAT_VERSION,
            "spec": model.spec.dict(),
            "n_features": model.n_features,
            "seed": model.seed,
            "classes": [label.value for label in model.classes],
            "artifacts": model.artifacts,
            "params": model.model.get_params(),
        },
    )


def load_classifier(*, path: StrOrPath) -> TrainedClassifier:
    data = read_json(path)
    if data.get("version") != MODEL_FORMAT_VERSION:
        raise InvalidInputException(
            message=f"Unsupported model format version {data.get('version')}.", data={"path": str(path)}
        )
    spec = ClassifierSpec.parse_obj(data["spec"])
    model = MODEL_CLASSES[spec.kind].from_params(hyperparams=spec.hyperparams, params=data["params"])
    return TrainedClassifier(
        spec=spec,
        model=model,
        n_features=data["n_features"],
        seed=data["seed"],
        classes=tuple(Label(label) for label in data["classes"]),
        artifacts=data["artifacts"],
    )
