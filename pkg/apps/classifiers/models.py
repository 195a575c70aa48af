"""Fitted model classes behind the seven classifier kinds. Labels are class indices into CLASS_ORDER."""
import abc
import math
import typing

import numpy as np
from scipy.special import softmax

from apps.classifiers.enums import ClassifierKind, Penalty
from apps.CORE.enums import CLASS_ORDER
from apps.CORE.exceptions import InvalidInputException, NumericException
from apps.CORE.types import HyperParam

__all__ = (
    "N_CLASSES",
    "ClassifierModel",
    "LogisticModel",
    "KernelSVMModel",
    "KNearestModel",
    "NaiveBayesModel",
    "DecisionTree",
    "RandomForestModel",
    "MODEL_CLASSES",
)

N_CLASSES = len(CLASS_ORDER)


class ClassifierModel(abc.ABC):
    """Shared fit / predict_proba / parameter-export interface."""

    def __init__(self, **hyperparams: HyperParam):
        self.hyperparams = hyperparams

    @abc.abstractmethod
    def fit(self, X: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> "ClassifierModel":
        ...

    @abc.abstractmethod
    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """(n, 3) probability rows in CLASS_ORDER."""

    @abc.abstractmethod
    def get_params(self) -> dict[str, typing.Any]:
        """Fitted parameters as JSON-ready values."""

    @abc.abstractmethod
    def set_params(self, params: dict[str, typing.Any]) -> None:
        ...

    @classmethod
    def from_params(cls, hyperparams: dict[str, HyperParam], params: dict[str, typing.Any]) -> "ClassifierModel":
        model = cls(**hyperparams)
        model.set_params(params)
        return model


class LogisticModel(ClassifierModel):
    """
    Multinomial logistic regression by full-batch gradient descent.

    Penalty `none` (LR), `l1` (Lasso, proximal soft-thresholding) or `l2` (Ridge); the bias is never penalized.
    The step is `learning_rate` over a Lipschitz bound of the loss gradient, so raw and scaled features both converge.
    """

    def fit(self, X: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> "LogisticModel":
        penalty = Penalty(self.hyperparams["penalty"])
        lam = float(self.hyperparams["lam"])
        n = X.shape[0]
        design = np.hstack([X, np.ones((n, 1))])
        targets = np.eye(N_CLASSES)[y]
        lipschitz = 0.5 * np.linalg.norm(design, ord=2) ** 2 / n + (lam if penalty is Penalty.L2 else 0.0)
        step = float(self.hyperparams["learning_rate"]) / max(lipschitz, 1e-12)

        weights = np.zeros((design.shape[1], N_CLASSES))
        for iteration in range(int(self.hyperparams["max_iter"])):
            gradient = design.T @ (softmax(design @ weights, axis=1) - targets) / n
            if penalty is Penalty.L2:
                gradient[:-1] += lam * weights[:-1]
            updated = weights - step * gradient
            if penalty is Penalty.L1:
                updated[:-1] = np.sign(updated[:-1]) * np.maximum(np.abs(updated[:-1]) - step * lam, 0.0)
            delta = float(np.max(np.abs(updated - weights)))
            weights = updated
            if not math.isfinite(delta):
                raise NumericException(message="Logistic regression diverged.", data={"iteration": iteration})
            if delta < float(self.hyperparams["tol"]):
                break
        self.weights, self.bias = weights[:-1], weights[-1]
        return self

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights + self.bias

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.decision_scores(X), axis=1)

    def get_params(self) -> dict[str, typing.Any]:
        return {"weights": self.weights.tolist(), "bias": self.bias.tolist()}

    def set_params(self, params: dict[str, typing.Any]) -> None:
        self.weights = np.asarray(params["weights"], dtype=np.float64).reshape(-1, N_CLASSES)
        self.bias = np.asarray(params["bias"], dtype=np.float64)


class KernelSVMModel(ClassifierModel):
    """
    One-vs-rest kernel SVM trained with kernelized stochastic subgradient steps on the hinge loss.

    Kernel: (gamma * <x, x'> + coef0) ** degree; `gamma="scale"` means 1 / (n_features * X.var()).
    Probabilities are a softmax over the three decision scores.
    """

    def _kernel(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        return (self.gamma * (A @ B.T) + float(self.hyperparams["coef0"])) ** int(self.hyperparams["degree"])

    def fit(self, X: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> "KernelSVMModel":
        n, d = X.shape
        gamma = self.hyperparams["gamma"]
        if gamma == "scale":
            variance = float(X.var())
            self.gamma = 1.0 / (d * variance) if variance > 0 else 1.0
        else:
            self.gamma = float(gamma)
        lam = float(self.hyperparams["lam"])
        steps = int(self.hyperparams["epochs"]) * n
        picks = rng.integers(0, n, size=steps)

        counts = np.zeros((N_CLASSES, n))
        for label in range(N_CLASSES):
            signs = np.where(y == label, 1.0, -1.0)
            # running sum_j count_j * sign_j * K(x_j, x_i) over all i
            margins = np.zeros(n)
            for t, i in enumerate(picks, start=1):
                if signs[i] * margins[i] / (lam * t) < 1.0:
                    counts[label, i] += 1.0
                    margins += signs[i] * self._kernel(X[i : i + 1], X)[0]

        support = np.flatnonzero(counts.sum(axis=0) > 0)
        signs = np.where(y[None, :] == np.arange(N_CLASSES)[:, None], 1.0, -1.0)
        self.support_vectors = X[support]
        self.dual_coef = (counts * signs)[:, support] / (lam * max(steps, 1))
        return self

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        if self.support_vectors.shape[0] == 0:
            return np.zeros((X.shape[0], N_CLASSES))
        return self._kernel(X, self.support_vectors) @ self.dual_coef.T

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.decision_scores(X), axis=1)

    def get_params(self) -> dict[str, typing.Any]:
        return {
            "gamma": self.gamma,
            "support_vectors": self.support_vectors.tolist(),
            "dual_coef": self.dual_coef.tolist(),
        }

    def set_params(self, params: dict[str, typing.Any]) -> None:
        self.gamma = float(params["gamma"])
        self.dual_coef = np.asarray(params["dual_coef"], dtype=np.float64).reshape(N_CLASSES, -1)
        self.support_vectors = np.asarray(params["support_vectors"], dtype=np.float64).reshape(
            self.dual_coef.shape[1], -1
        )


class KNearestModel(ClassifierModel):
    """Euclidean k-nearest neighbours; probability = vote fraction, distance ties go to the lower training index."""

    def fit(self, X: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> "KNearestModel":
        self.X = np.array(X, dtype=np.float64, copy=True)
        self.y = np.array(y, dtype=np.int64, copy=True)
        return self

    def neighbours(self, x: np.ndarray) -> np.ndarray:
        distances = np.sum((self.X - x) ** 2, axis=1)
        k = min(int(self.hyperparams["k"]), self.X.shape[0])
        return np.argsort(distances, kind="stable")[:k]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        result = np.zeros((X.shape[0], N_CLASSES))
        for row, x in enumerate(X):
            votes = np.bincount(self.y[self.neighbours(x)], minlength=N_CLASSES)
            result[row] = votes / votes.sum()
        return result

    def get_params(self) -> dict[str, typing.Any]:
        return {"X": self.X.tolist(), "y": self.y.tolist()}

    def set_params(self, params: dict[str, typing.Any]) -> None:
        self.y = np.asarray(params["y"], dtype=np.int64)
        self.X = np.asarray(params["X"], dtype=np.float64).reshape(self.y.shape[0], -1)


class NaiveBayesModel(ClassifierModel):
    """
    Multinomial naive Bayes with additive smoothing `alpha`.

    The first `structured_width` columns are min-max scaled to [0, 1] on the training set (clipped at predict time);
    the remaining columns must already be nonnegative.
    """

    def _transform(self, X: np.ndarray) -> np.ndarray:
        width = self.structured_width
        span = np.where(self.span > 0, self.span, 1.0)
        structured = np.where(self.span > 0, (X[:, :width] - self.minimum) / span, 0.0)
        return np.hstack([np.clip(structured, 0.0, 1.0), np.maximum(X[:, width:], 0.0)])

    def fit(self, X: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> "NaiveBayesModel":
        width = int(self.hyperparams["structured_width"])
        if width > X.shape[1]:
            raise InvalidInputException(
                message=f"structured_width {width} exceeds the {X.shape[1]} feature columns.", data={"width": width}
            )
        if np.any(X[:, width:] < 0):
            raise InvalidInputException(message="Multinomial naive Bayes needs nonnegative features.")
        self.structured_width = width
        self.minimum = X[:, :width].min(axis=0)
        self.span = X[:, :width].max(axis=0) - self.minimum
        features = self._transform(X)

        alpha = float(self.hyperparams["alpha"])
        totals = np.vstack([features[y == label].sum(axis=0) for label in range(N_CLASSES)])
        self.log_likelihood = np.log(totals + alpha) - np.log(
            totals.sum(axis=1, keepdims=True) + alpha * features.shape[1]
        )
        self.log_prior = np.log(np.bincount(y, minlength=N_CLASSES) / y.shape[0])
        return self

    def joint_log_likelihood(self, X: np.ndarray) -> np.ndarray:
        return self._transform(X) @ self.log_likelihood.T + self.log_prior

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.joint_log_likelihood(X), axis=1)

    def get_params(self) -> dict[str, typing.Any]:
        return {
            "structured_width": self.structured_width,
            "minimum": self.minimum.tolist(),
            "span": self.span.tolist(),
            "log_likelihood": self.log_likelihood.tolist(),
            "log_prior": self.log_prior.tolist(),
        }

    def set_params(self, params: dict[str, typing.Any]) -> None:
        self.structured_width = int(params["structured_width"])
        self.minimum = np.asarray(params["minimum"], dtype=np.float64)
        self.span = np.asarray(params["span"], dtype=np.float64)
        self.log_likelihood = np.asarray(params["log_likelihood"], dtype=np.float64).reshape(N_CLASSES, -1)
        self.log_prior = np.asarray(params["log_prior"], dtype=np.float64)


class DecisionTree:
    """CART classification tree stored as flat node arrays; leaves have `left == -1`."""

    LEAF = -1

    def __init__(self, *, max_depth: int | None, min_leaf: int, max_features: int, rng: np.random.Generator):
        self.max_depth = max_depth
        self.min_leaf = max(int(min_leaf), 1)
        self.max_features = max_features
        self.rng = rng
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[list[float]] = []

    @staticmethod
    def gini(counts: np.ndarray) -> np.ndarray:
        totals = counts.sum(axis=-1)
        safe = np.where(totals > 0, totals, 1.0)
        return 1.0 - np.sum((counts / safe[..., None]) ** 2, axis=-1)

    def _split_feature(self, values: np.ndarray, labels: np.ndarray) -> tuple[float, float] | None:
        """(weighted child impurity, threshold) of the best cut on one feature, None if no valid cut exists."""
        order = np.argsort(values, kind="stable")
        values, labels = values[order], labels[order]
        n = values.shape[0]
        left_counts = np.cumsum(np.eye(N_CLASSES)[labels], axis=0)[:-1]
        right_counts = left_counts[-1] + np.eye(N_CLASSES)[labels[-1]] - left_counts if n > 1 else left_counts
        sizes = np.arange(1, n)
        valid = (values[1:] > values[:-1]) & (sizes >= self.min_leaf) & (n - sizes >= self.min_leaf)
        if not np.any(valid):
            return None
        impurity = (sizes * self.gini(left_counts) + (n - sizes) * self.gini(right_counts)) / n
        impurity = np.where(valid, impurity, np.inf)
        cut = int(np.argmin(impurity))
        threshold = (values[cut] + values[cut + 1]) / 2.0
        if threshold >= values[cut + 1]:
            threshold = values[cut]
        return float(impurity[cut]), float(threshold)

    def _best_split(self, X: np.ndarray, rows: np.ndarray, y: np.ndarray) -> tuple[int, float] | None:
        """Best cut among `max_features` random features, searching further features until a valid cut appears."""
        best: tuple[float, int, float] | None = None
        for position, feature in enumerate(self.rng.permutation(X.shape[1])):
            if position >= self.max_features and best is not None:
                break
            split = self._split_feature(X[rows, feature], y)
            if split is not None and (best is None or split[0] < best[0]):
                best = (split[0], int(feature), split[1])
        return None if best is None else (best[1], best[2])

    def _add_node(self, y: np.ndarray) -> int:
        counts = np.bincount(y, minlength=N_CLASSES).astype(np.float64)
        self.feature.append(self.LEAF)
        self.threshold.append(0.0)
        self.left.append(self.LEAF)
        self.right.append(self.LEAF)
        self.value.append((counts / counts.sum()).tolist())
        return len(self.value) - 1

    def fit(self, X: np.ndarray, y: np.ndarray) -> "DecisionTree":
        stack = [(self._add_node(y), np.arange(X.shape[0]), 0)]
        while stack:
            node, rows, depth = stack.pop()
            labels = y[rows]
            if np.all(labels == labels[0]) or (self.max_depth is not None and depth >= self.max_depth):
                continue
            if rows.shape[0] < 2 * self.min_leaf:
                continue
            split = self._best_split(X, rows, labels)
            if split is None:
                continue
            feature, threshold = split
            goes_left = X[rows, feature] <= threshold
            left_rows, right_rows = rows[goes_left], rows[~goes_left]
            self.feature[node], self.threshold[node] = feature, threshold
            self.left[node] = self._add_node(y[left_rows])
            self.right[node] = self._add_node(y[right_rows])
            stack.append((self.right[node], right_rows, depth + 1))
            stack.append((self.left[node], left_rows, depth + 1))
        return self

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row."""
        feature, threshold = np.asarray(self.feature), np.asarray(self.threshold)
        left, right = np.asarray(self.left), np.asarray(self.right)
        nodes = np.zeros(X.shape[0], dtype=np.int64)
        active = left[nodes] != self.LEAF
        while np.any(active):
            current = nodes[active]
            goes_left = X[np.flatnonzero(active), feature[current]] <= threshold[current]
            nodes[active] = np.where(goes_left, left[current], right[current])
            active = left[nodes] != self.LEAF
        return nodes

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.value)[self.apply(X)]

    def to_dict(self) -> dict[str, list]:
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "value": self.value,
        }

    @classmethod
    def from_dict(cls, data: dict[str, list]) -> "DecisionTree":
        tree = cls(max_depth=None, min_leaf=1, max_features=1, rng=np.random.default_rng(0))
        tree.feature = [int(v) for v in data["feature"]]
        tree.threshold = [float(v) for v in data["threshold"]]
        tree.left = [int(v) for v in data["left"]]
        tree.right = [int(v) for v in data["right"]]
        tree.value = [list(map(float, v)) for v in data["value"]]
        return tree


class RandomForestModel(ClassifierModel):
    """Bagged Gini trees with random feature subsets per split; probability = mean of leaf class frequencies."""

    def _max_features(self, n_features: int) -> int:
        setting = self.hyperparams["max_features"]
        if setting == "sqrt":
            return max(1, int(math.sqrt(n_features)))
        if setting in ("all", None):
            return n_features
        return max(1, min(int(setting), n_features))

    def fit(self, X: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> "RandomForestModel":
        n = X.shape[0]
        max_depth = self.hyperparams["max_depth"]
        self.trees = []
        for _ in range(int(self.hyperparams["n_trees"])):
            tree_rng = np.random.default_rng(rng.integers(0, 2**63 - 1))
            rows = tree_rng.integers(0, n, size=n) if self.hyperparams["bootstrap"] else np.arange(n)
            tree = DecisionTree(
                max_depth=None if max_depth is None else int(max_depth),
                min_leaf=int(self.hyperparams["min_leaf"]),
                max_features=self._max_features(X.shape[1]),
                rng=tree_rng,
            )
            self.trees.append(tree.fit(X[rows], y[rows]))
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return np.mean([tree.predict_proba(X) for tree in self.trees], axis=0)

    def get_params(self) -> dict[str, typing.Any]:
        return {"trees": [tree.to_dict() for tree in self.trees]}

    def set_params(self, params: dict[str, typing.Any]) -> None:
        self.trees = [DecisionTree.from_dict(data) for data in params["trees"]]


MODEL_CLASSES: dict[ClassifierKind, type[ClassifierModel]] = {
    ClassifierKind.LR: LogisticModel,
    ClassifierKind.LASSO: LogisticModel,
    ClassifierKind.RIDGE: LogisticModel,
    ClassifierKind.SVM: KernelSVMModel,
    ClassifierKind.KNN: KNearestModel,
    ClassifierKind.NAIVE_BAYES: NaiveBayesModel,
    ClassifierKind.RANDOM_FOREST: RandomForestModel,
}
