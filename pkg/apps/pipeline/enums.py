import enum


class ModelFamily(str, enum.Enum):
    CLASSICAL = "classical"
    NEURAL = "neural"


class AblationKind(str, enum.Enum):
    PREPROCESS = "preprocess"  # one run per preprocessing recipe
    STRUCTURED_BRANCH = "structured_branch"  # include_structured on/off
    TRAIN_SIZE = "train_size"  # training subsets of growing size


class SplitName(str, enum.Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class Stage(str, enum.Enum):
    """Run stages in execution order; a failed run records the stage it stopped in."""

    LOAD = "load"
    PREPROCESS = "preprocess"
    OCR = "ocr"
    DEID = "deid"
    SEGMENT = "segment"
    LABEL = "label"
    SPLIT = "split"
    FEATURES = "features"
    TRAIN = "train"
    PREDICT = "predict"
    EVALUATE = "evaluate"
