import enum


class EncoderKind(str, enum.Enum):
    """Sequence-branch encoder."""

    MEAN_POOL = "mean_pool"
    BILSTM = "bilstm"


class OutputActivation(str, enum.Enum):
    SOFTMAX = "softmax"  # categorical cross-entropy
    SIGMOID = "sigmoid"  # per-class binary cross-entropy


class Mode(str, enum.Enum):
    TRAIN = "train"
    INFER = "infer"
