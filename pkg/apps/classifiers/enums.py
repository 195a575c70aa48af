import enum


class ClassifierKind(str, enum.Enum):
    """The seven bag-of-words classifiers."""

    LR = "LR"
    LASSO = "Lasso"
    RIDGE = "Ridge"
    SVM = "SVM"
    KNN = "kNN"
    NAIVE_BAYES = "NaiveBayes"
    RANDOM_FOREST = "RandomForest"


class Penalty(str, enum.Enum):
    NONE = "none"
    L1 = "l1"
    L2 = "l2"


# Kinds that fit per-class parameters and therefore need every class in the training data.
PARAMETRIC_KINDS: frozenset[ClassifierKind] = frozenset(
    {ClassifierKind.LR, ClassifierKind.LASSO, ClassifierKind.RIDGE, ClassifierKind.SVM, ClassifierKind.NAIVE_BAYES}
)
