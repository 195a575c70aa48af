import math
import typing

import numpy as np
from pydantic import Field, root_validator, validator

from apps.CORE.schemas import BaseOutSchema, ConfigSchema, FrozenSchema
from apps.neural.enums import EncoderKind, OutputActivation

__all__ = (
    "PAD_TOKEN",
    "UNK_TOKEN",
    "PAD_ID",
    "UNK_ID",
    "StructuredBranchConfig",
    "SequenceBranchConfig",
    "ClassifierHeadConfig",
    "NetworkConfig",
    "TrainConfig",
    "CBOWConfig",
    "TokenCodec",
    "Batch",
    "Checkpoint",
    "EpochRecord",
    "TrainResult",
    "CBOWResult",
    "AdamState",
)

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1


class StructuredBranchConfig(ConfigSchema):
    batchnorm: bool = Field(default=True)
    ffnn_layers: int = Field(default=2, ge=0)
    width: int = Field(default=100, gt=0)
    dropout: float = Field(default=0.2, ge=0, lt=1)


class SequenceBranchConfig(ConfigSchema):
    encoder: EncoderKind = Field(default=EncoderKind.MEAN_POOL)
    max_len: int = Field(default=32, ge=21)
    embed_dim: int = Field(default=100, gt=0)
    lstm_layers: int = Field(default=2, ge=1)
    lstm_hidden: int = Field(default=100, gt=0)
    ffnn_width: int = Field(default=100, gt=0)
    dropout: float = Field(default=0.2, ge=0, lt=1)


class ClassifierHeadConfig(ConfigSchema):
    width: int = Field(default=200, gt=0)
    dropout: float = Field(default=0.2, ge=0, lt=1)
    output: OutputActivation = Field(default=OutputActivation.SOFTMAX)
    classes: typing.Literal[3] = Field(default=3)


class NetworkConfig(ConfigSchema):
    """Dual-branch network: structured features and token sequence joined before the classifier layers."""

    structured_branch: StructuredBranchConfig = Field(default_factory=StructuredBranchConfig)
    sequence_branch: SequenceBranchConfig = Field(default_factory=SequenceBranchConfig)
    classifier: ClassifierHeadConfig = Field(default_factory=ClassifierHeadConfig)
    include_structured: bool = Field(default=True)


class TrainConfig(ConfigSchema):
    batch_size: int = Field(default=64, ge=1)
    learning_rate: float = Field(default=2e-4, gt=0)
    epochs: int = Field(default=100, ge=1)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    seed: int = Field(default=0)


class CBOWConfig(ConfigSchema):
    """Embedding pretraining on the training segments; `dim` must equal the network's `embed_dim`."""

    enabled: bool = Field(default=False)
    dim: int = Field(default=100, gt=0)
    window: int = Field(default=2, ge=1)
    negatives: int = Field(default=5, ge=1)
    epochs: int = Field(default=5, ge=0)
    learning_rate: float = Field(default=0.025, gt=0)


class TokenCodec(FrozenSchema):
    """Token <-> id map; id 0 is PAD and id 1 is UNK, ids are dense."""

    tokens: list[str] = Field(default=[PAD_TOKEN, UNK_TOKEN])

    @validator("tokens")
    def validate_tokens(cls, v: list[str]) -> list[str]:
        if v[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("Codec must start with the PAD and UNK tokens")
        if len(set(v)) != len(v):
            raise ValueError("Codec tokens must be unique")
        return v

    @property
    def ids(self) -> dict[str, int]:
        return {token: position for position, token in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)


class Batch(BaseOutSchema):
    """Network input: structured matrix (n, 6) and token-id matrix (n, max_len); `labels` are class indices."""

    structured: np.ndarray
    tokens: np.ndarray
    labels: np.ndarray | None = Field(default=None)

    @root_validator(skip_on_failure=True)
    def validate_rows(cls, values: dict) -> dict:
        rows = values["tokens"].shape[0]
        if values["structured"].shape[0] != rows:
            raise ValueError("structured and tokens must have the same number of rows")
        if values["labels"] is not None and values["labels"].shape[0] != rows:
            raise ValueError("labels and tokens must have the same number of rows")
        return values

    def __len__(self) -> int:
        return int(self.tokens.shape[0])

    def take(self, rows: np.ndarray) -> "Batch":
        return Batch(
            structured=self.structured[rows],
            tokens=self.tokens[rows],
            labels=None if self.labels is None else self.labels[rows],
        )


class Checkpoint(BaseOutSchema):
    epoch: int = Field(ge=0)
    parameters: np.ndarray
    offsets: dict[str, tuple[int, tuple[int, ...]]]
    buffers: dict[str, list[float]] = Field(default={})
    train_loss: float = Field(default=math.nan)
    validation_loss: float = Field(ge=0)
    rng_state: dict[str, typing.Any] = Field(default={})

    @validator("parameters")
    def validate_parameters(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise ValueError("Checkpoint parameters must be finite")
        return v


class EpochRecord(BaseOutSchema):
    epoch: int
    train_loss: float
    val_loss: float


class TrainResult(BaseOutSchema):
    best: Checkpoint
    history: list[EpochRecord]
    diverged: bool = Field(default=False)


class CBOWResult(BaseOutSchema):
    embeddings: np.ndarray
    losses: list[float]


class AdamState(BaseOutSchema):
    """Per-parameter first/second moments and the number of steps taken."""

    m: np.ndarray
    v: np.ndarray
    step: int = Field(default=0, ge=0)

    @classmethod
    def initial(cls, size: int) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size))
