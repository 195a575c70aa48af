import pathlib

import numpy as np
import pytest

from apps.classifiers.enums import ClassifierKind
from apps.classifiers.models import KNearestModel
from apps.classifiers.schemas import DEFAULT_HYPERPARAMS, ClassifierSpec
from apps.classifiers.services import (
    assign_folds,
    cross_validate,
    default_grid,
    encode_labels,
    load_classifier,
    predict_proba,
    predict_proba_matrix,
    save_classifier,
    train,
    train_matrix,
)
from apps.CORE.enums import CLASS_ORDER, Label
from apps.CORE.exceptions import InvalidInputException
from apps.features.schemas import FeatureVector

FAST_HYPERPARAMS: dict[ClassifierKind, dict] = {
    ClassifierKind.RANDOM_FOREST: {"n_trees": 15},
}


def blobs(n_per_class: int = 30, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Three classes, each high on its own structured column, plus two nonnegative noise columns."""
    rng = np.random.default_rng(seed)
    rows, targets = [], []
    for label in range(3):
        center = np.ones(6)
        center[label] = 5.0
        rows.append(np.hstack([rng.normal(center, 0.3, size=(n_per_class, 6)), rng.uniform(0, 0.2, (n_per_class, 2))]))
        targets.append(np.full(n_per_class, label))
    return np.vstack(rows), np.concatenate(targets)


def spec_of(kind: ClassifierKind, **hyperparams: object) -> ClassifierSpec:
    return ClassifierSpec(kind=kind, hyperparams={**FAST_HYPERPARAMS.get(kind, {}), **hyperparams})


class TestModels:
    @pytest.mark.parametrize(argnames="kind", argvalues=list(ClassifierKind))
    def test_fit_predict(self, kind: ClassifierKind) -> None:
        X, y = blobs()

        model = train_matrix(spec=spec_of(kind), X=X, y=y, seed=1)
        probabilities = predict_proba_matrix(model=model, X=X)

        assert probabilities.shape == (90, 3)
        np.testing.assert_allclose(probabilities.sum(axis=1), 1.0)
        assert np.all(probabilities >= 0)
        assert np.mean(np.argmax(probabilities, axis=1) == y) >= 0.9

    @pytest.mark.parametrize(argnames="kind", argvalues=list(ClassifierKind))
    def test_deterministic(self, kind: ClassifierKind) -> None:
        X, y = blobs()

        first = predict_proba_matrix(model=train_matrix(spec=spec_of(kind), X=X, y=y, seed=4), X=X)
        second = predict_proba_matrix(model=train_matrix(spec=spec_of(kind), X=X, y=y, seed=4), X=X)

        np.testing.assert_array_equal(first, second)

    @pytest.mark.parametrize(argnames="kind", argvalues=list(ClassifierKind))
    def test_model_file(self, tmp_path: pathlib.Path, kind: ClassifierKind) -> None:
        X, y = blobs(n_per_class=10)
        model = train_matrix(spec=spec_of(kind), X=X, y=y, seed=2)

        loaded = load_classifier(path=save_classifier(model=model, path=tmp_path / "model.json"))

        assert loaded.spec == model.spec
        assert loaded.classes == CLASS_ORDER
        np.testing.assert_allclose(predict_proba_matrix(model=loaded, X=X), predict_proba_matrix(model=model, X=X))

    @pytest.mark.parametrize(
        argnames="kind",
        argvalues=(
            ClassifierKind.LR,
            ClassifierKind.LASSO,
            ClassifierKind.RIDGE,
            ClassifierKind.SVM,
            ClassifierKind.NAIVE_BAYES,
        ),
    )
    def test_missing_class(self, kind: ClassifierKind) -> None:
        X, y = blobs()
        kept = y != 1

        with pytest.raises(InvalidInputException, match="SaO2"):
            train_matrix(spec=spec_of(kind), X=X[kept], y=y[kept], seed=0)

    @pytest.mark.parametrize(argnames="kind", argvalues=(ClassifierKind.KNN, ClassifierKind.RANDOM_FOREST))
    def test_missing_class_allowed(self, kind: ClassifierKind) -> None:
        X, y = blobs()
        kept = y != 1

        probabilities = predict_proba_matrix(model=train_matrix(spec=spec_of(kind), X=X[kept], y=y[kept], seed=0), X=X)

        assert np.all(probabilities[:, 1] == 0)

    def test_lasso_zeroes_noise(self) -> None:
        X, y = blobs()

        lasso = train_matrix(spec=spec_of(ClassifierKind.LASSO, lam=0.1), X=X, y=y, seed=0)

        assert np.all(lasso.model.weights[6:] == 0)

    def test_knn_tie_goes_to_lower_index(self) -> None:
        model = KNearestModel(k=1).fit(np.array([[1.0], [-1.0]]), np.array([2, 0]), np.random.default_rng(0))

        assert model.predict_proba(np.array([[0.0]])).tolist() == [[0.0, 0.0, 1.0]]

    def test_naive_bayes_negative_tfidf(self) -> None:
        X, y = blobs()
        X[0, 7] = -1.0

        with pytest.raises(InvalidInputException):
            train_matrix(spec=spec_of(ClassifierKind.NAIVE_BAYES), X=X, y=y, seed=0)


class TestTrain:
    def test_feature_vectors(self) -> None:
        X, y = blobs(n_per_class=5)
        vectors = [FeatureVector(structured=tuple(row[:6]), tfidf={0: row[6], 1: row[7]}, dimension=2) for row in X]
        labels = [CLASS_ORDER[target] for target in y]

        model = train(spec=spec_of(ClassifierKind.LR), vectors=vectors, labels=labels, seed=0)
        p_ahi, p_sao2, p_other = predict_proba(model=model, vector=vectors[0])

        assert model.n_features == 8
        assert p_ahi + p_sao2 + p_other == pytest.approx(1.0)
        assert p_ahi == max(p_ahi, p_sao2, p_other)

    def test_misaligned(self) -> None:
        with pytest.raises(InvalidInputException):
            train(
                spec=spec_of(ClassifierKind.LR),
                vectors=[FeatureVector(structured=(0.0,) * 6, dimension=0)],
                labels=[],
                seed=0,
            )

    def test_wrong_width_at_predict(self) -> None:
        X, y = blobs(n_per_class=5)
        model = train_matrix(spec=spec_of(ClassifierKind.KNN), X=X, y=y, seed=0)

        with pytest.raises(InvalidInputException):
            predict_proba_matrix(model=model, X=X[:, :6])

    def test_encode_labels(self) -> None:
        assert encode_labels([Label.OTHER, Label.AHI, Label.SAO2]).tolist() == [2, 0, 1]
        with pytest.raises(InvalidInputException):
            encode_labels(["Spo2"])


class TestSpec:
    def test_defaults_filled(self) -> None:
        spec = ClassifierSpec(kind=ClassifierKind.LASSO, hyperparams={"lam": 0.1})

        assert spec.hyperparams["penalty"] == "l1"
        assert spec.name == "Lasso(lam=0.1)"
        assert ClassifierSpec(kind=ClassifierKind.KNN).name == "kNN"

    def test_unknown_hyperparameter(self) -> None:
        with pytest.raises(ValueError):
            ClassifierSpec(kind=ClassifierKind.KNN, hyperparams={"lam": 0.1})

    @pytest.mark.parametrize(
        argnames=("kind", "size"),
        argvalues=((ClassifierKind.LR, 1), (ClassifierKind.RIDGE, 3), (ClassifierKind.RANDOM_FOREST, 3)),
    )
    def test_default_grid(self, kind: ClassifierKind, size: int) -> None:
        grid = default_grid(kind=kind)

        assert len(grid) == size
        assert all(spec.kind is kind for spec in grid)
        assert all(set(DEFAULT_HYPERPARAMS[kind]) <= set(spec.hyperparams) for spec in grid)

    @pytest.mark.parametrize(argnames="kind", argvalues=list(ClassifierKind))
    def test_bare_spec_gets_defaults(self, kind: ClassifierKind) -> None:
        assert ClassifierSpec(kind=kind).hyperparams == DEFAULT_HYPERPARAMS[kind]

    @pytest.mark.parametrize(argnames="kind", argvalues=list(ClassifierKind))
    def test_default_grid_fits(self, kind: ClassifierKind) -> None:
        X, y = blobs()

        model = train_matrix(spec=default_grid(kind=kind)[0], X=X, y=y, seed=1)

        assert predict_proba_matrix(model=model, X=X).shape == (90, 3)


class TestCrossValidation:
    def test_assign_folds(self) -> None:
        report_ids = [f"R{number:03d}" for number in range(23) for _ in range(3)]

        folds = assign_folds(report_ids=report_ids, folds=5, seed=9)

        assert sorted(folds) == sorted(set(report_ids))
        assert sorted(np.bincount(list(folds.values())).tolist()) == [4, 4, 5, 5, 5]
        assert folds == assign_folds(report_ids=list(reversed(report_ids)), folds=5, seed=9)

    def test_too_few_reports(self) -> None:
        with pytest.raises(InvalidInputException):
            assign_folds(report_ids=["R1", "R2"], folds=5, seed=0)

    def test_search(self) -> None:
        X, y = blobs()
        vectors = [FeatureVector(structured=tuple(row[:6]), tfidf={0: row[6], 1: row[7]}, dimension=2) for row in X]
        labels = [CLASS_ORDER[target] for target in y]
        report_ids = [f"R{index % 15:02d}" for index in range(len(vectors))]
        grid = [spec_of(ClassifierKind.KNN, k=k) for k in (1, 5)]

        result = cross_validate(grid=grid, vectors=vectors, labels=labels, report_ids=report_ids, seed=3)

        assert [len(score.fold_accuracies) for score in result.scores] == [5, 5]
        assert result.best_spec == max(
            grid, key=lambda spec: (result.scores[grid.index(spec)].mean_accuracy, -grid.index(spec))
        )
        assert result.model.spec == result.best_spec
        assert set(result.folds) == set(report_ids)

    def test_tie_goes_to_first_spec(self) -> None:
        X, y = blobs()
        vectors = [FeatureVector(structured=tuple(row[:6]), dimension=0) for row in X]
        labels = [CLASS_ORDER[target] for target in y]
        grid = [spec_of(ClassifierKind.KNN, k=3), spec_of(ClassifierKind.KNN, k=5)]

        result = cross_validate(
            grid=grid, vectors=vectors, labels=labels, report_ids=[str(index) for index in range(90)], seed=0
        )

        assert [score.mean_accuracy for score in result.scores] == [1.0, 1.0]
        assert result.best_spec.hyperparams["k"] == 3

    def test_empty_grid(self) -> None:
        with pytest.raises(InvalidInputException):
            cross_validate(grid=[], vectors=[], labels=[], report_ids=[], seed=0)
