"""The dual-branch network: structured branch + sequence branch, concatenated into the classifier layers."""
import typing

import numpy as np

from apps.CORE.exceptions import InvalidInputException, NumericException
from apps.features.schemas import STRUCTURED_FEATURES
from apps.neural.enums import EncoderKind, Mode
from apps.neural.layers import (
    BatchNorm,
    BiLSTMEncoder,
    Dense,
    Dropout,
    Embedding,
    Layer,
    MeanPoolEncoder,
    ReLU,
    SequenceEncoder,
    output_loss,
    output_probabilities,
)
from apps.neural.schemas import PAD_ID, Batch, Checkpoint, NetworkConfig
from loggers import get_logger

__all__ = ("DualBranchNetwork",)

logger = get_logger(name=__name__)

STRUCTURED_WIDTH = len(STRUCTURED_FEATURES)
N_CLASSES = 3


def _check_finite(values: np.ndarray, *, layer: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NumericException(
            message=f"Non-finite values produced by layer '{layer}'.", data={"layer": layer}, stage="neural"
        )


class DualBranchNetwork:
    """
    Built network with every parameter bound to one flat array.

    `values` and `grads` are flat float64 arrays; layer parameter/gradient dicts are views into them, so an
    optimizer updating `values` in place updates the layers. `offsets` maps `<layer>.<param>` to
    `(start, shape)` in the flat array.
    """

    def __init__(
        self,
        *,
        config: NetworkConfig,
        vocab_size: int,
        rng: np.random.Generator,
        embeddings: np.ndarray | None = None,
    ):
        self.config = config
        self.vocab_size = vocab_size
        structured, sequence, head = config.structured_branch, config.sequence_branch, config.classifier
        if embeddings is not None and embeddings.shape != (vocab_size, sequence.embed_dim):
            raise InvalidInputException(
                message=f"Pretrained embeddings of shape {embeddings.shape} where "
                f"{(vocab_size, sequence.embed_dim)} is expected.",
                data={"tensor": "embeddings"},
                stage="neural",
            )

        self.structured_layers: list[tuple[str, Layer]] = []
        width = STRUCTURED_WIDTH
        if config.include_structured:
            if structured.batchnorm:
                self.structured_layers.append(("structured.batchnorm", BatchNorm(STRUCTURED_WIDTH)))
            for depth in range(structured.ffnn_layers):
                self.structured_layers += [
                    (f"structured.dense{depth}", Dense(width, structured.width, rng=rng)),
                    (f"structured.relu{depth}", ReLU()),
                    (f"structured.dropout{depth}", Dropout(structured.dropout)),
                ]
                width = structured.width
        structured_out = width if config.include_structured else 0

        self.embedding = Embedding(vocab_size, sequence.embed_dim, rng=rng, weights=embeddings)
        self.encoder: SequenceEncoder
        if sequence.encoder is EncoderKind.BILSTM:
            self.encoder = BiLSTMEncoder(sequence.embed_dim, sequence.lstm_hidden, sequence.lstm_layers, rng=rng)
        else:
            self.encoder = MeanPoolEncoder(sequence.embed_dim)
        self.sequence_layers: list[tuple[str, Layer]] = [
            ("sequence.dense", Dense(self.encoder.output_dim, sequence.ffnn_width, rng=rng)),
            ("sequence.relu", ReLU()),
            ("sequence.dropout", Dropout(sequence.dropout)),
        ]

        self.head_layers: list[tuple[str, Layer]] = [
            ("classifier.dense", Dense(structured_out + sequence.ffnn_width, head.width, rng=rng)),
            ("classifier.relu", ReLU()),
            ("classifier.dropout", Dropout(head.dropout)),
            ("classifier.output", Dense(head.width, N_CLASSES, rng=rng)),
        ]
        self._structured_out = structured_out
        self._logits: np.ndarray | None = None
        self._bind()

    def named_layers(self) -> typing.Iterator[tuple[str, Layer]]:
        yield from self.structured_layers
        yield "sequence.embedding", self.embedding
        if isinstance(self.encoder, BiLSTMEncoder):
            for name, layer in self.encoder.sublayers():
                yield f"sequence.encoder.{name}", layer
        else:
            yield "sequence.encoder", self.encoder
        yield from self.sequence_layers
        yield from self.head_layers

    def _bind(self) -> None:
        self.offsets: dict[str, tuple[int, tuple[int, ...]]] = {}
        start = 0
        for name, layer in self.named_layers():
            for key, value in layer.params.items():
                self.offsets[f"{name}.{key}"] = (start, value.shape)
                start += value.size
        self.values = np.zeros(start)
        self.grads = np.zeros(start)
        for name, layer in self.named_layers():
            for key in list(layer.params):
                offset, shape = self.offsets[f"{name}.{key}"]
                end = offset + int(np.prod(shape))
                self.values[offset:end] = layer.params[key].ravel()
                layer.params[key] = self.values[offset:end].reshape(shape)
                layer.grads[key] = self.grads[offset:end].reshape(shape)

    @property
    def size(self) -> int:
        return int(self.values.size)

    def parameter(self, name: str) -> np.ndarray:
        """View of one parameter, e.g. `classifier.output.b`."""
        offset, shape = self.offsets[name]
        return self.values[offset : offset + int(np.prod(shape))].reshape(shape)

    def gradient(self, name: str) -> np.ndarray:
        offset, shape = self.offsets[name]
        return self.grads[offset : offset + int(np.prod(shape))].reshape(shape)

    def _validate(self, batch: Batch) -> None:
        max_len = self.config.sequence_branch.max_len
        tokens = batch.tokens
        if tokens.ndim != 2 or tokens.shape[1] != max_len or not np.issubdtype(tokens.dtype, np.integer):
            raise InvalidInputException(
                message=f"Tensor 'tokens' must be an integer matrix (batch, {max_len}), got {tokens.shape}.",
                data={"tensor": "tokens", "shape": list(tokens.shape)},
                stage="neural",
            )
        if tokens.size and (tokens.min() < 0 or tokens.max() >= self.vocab_size):
            raise InvalidInputException(
                message=f"Tensor 'tokens' holds ids outside [0, {self.vocab_size}).",
                data={"tensor": "tokens"},
                stage="neural",
            )
        if self.config.include_structured and (
            batch.structured.ndim != 2 or batch.structured.shape[1] != STRUCTURED_WIDTH
        ):
            raise InvalidInputException(
                message=f"Tensor 'structured' must be (batch, {STRUCTURED_WIDTH}), got {batch.structured.shape}.",
                data={"tensor": "structured", "shape": list(batch.structured.shape)},
                stage="neural",
            )

    @staticmethod
    def _run(layers: list[tuple[str, Layer]], x: np.ndarray, training: bool, rng: np.random.Generator) -> np.ndarray:
        for name, layer in layers:
            x = layer.forward(x, training=training, rng=rng)
            _check_finite(x, layer=name)
        return x

    @staticmethod
    def _run_backward(layers: list[tuple[str, Layer]], grad: np.ndarray) -> np.ndarray:
        for _, layer in reversed(layers):
            grad = layer.backward(grad)
        return grad

    def logits(self, batch: Batch, *, mode: Mode, rng: np.random.Generator | None = None) -> np.ndarray:
        self._validate(batch)
        training = Mode(mode) is Mode.TRAIN
        if training and rng is None:
            raise InvalidInputException(message="Train-mode forward needs a random generator.", stage="neural")

        tokens = batch.tokens
        embedded = self.embedding.forward(tokens, training=training)
        encoded = self.encoder.encode(embedded, tokens != PAD_ID, training=training)
        _check_finite(encoded, layer="sequence.encoder")
        parts = [self._run(self.sequence_layers, encoded, training, rng)]
        if self.config.include_structured:
            structured = np.asarray(batch.structured, dtype=np.float64)
            parts.insert(0, self._run(self.structured_layers, structured, training, rng))
        logits = self._run(self.head_layers, np.concatenate(parts, axis=1), training, rng)
        self._logits = logits if training else None
        return logits

    def forward(self, batch: Batch, *, mode: Mode, rng: np.random.Generator | None = None) -> np.ndarray:
        """(batch, 3) class probabilities; softmax rows sum to 1, sigmoid entries lie in (0, 1)."""
        return output_probabilities(self.logits(batch, mode=mode, rng=rng), self.config.classifier.output)

    def targets(self, labels: np.ndarray) -> np.ndarray:
        """Class indices become one-hot rows; (batch, 3) target matrices pass through."""
        labels = np.asarray(labels)
        if labels.ndim == 1:
            return np.eye(N_CLASSES)[labels.astype(np.int64)]
        return labels.astype(np.float64)

    def loss(self, batch: Batch, labels: np.ndarray, *, mode: Mode, rng: np.random.Generator | None = None) -> float:
        logits = self.logits(batch, mode=mode, rng=rng)
        value, _ = output_loss(logits, self.targets(labels), self.config.classifier.output)
        if not np.isfinite(value):
            raise NumericException(message="Non-finite loss.", data={"layer": "loss"}, stage="neural")
        return value

    def backward(self, labels: np.ndarray) -> tuple[float, np.ndarray]:
        """
        Loss of the last train-mode forward pass and its gradient w.r.t. every parameter.

        Returns:
            tuple: (loss, flat gradient array aligned with `values`)

        Raises:
            InvalidInputException: no train-mode forward pass was recorded.
            NumericException: the loss is not finite.
        """
        if self._logits is None:
            raise InvalidInputException(
                message="Backward needs a preceding train-mode forward pass.", stage="neural"
            )
        value, grad = output_loss(self._logits, self.targets(labels), self.config.classifier.output)
        if not np.isfinite(value):
            raise NumericException(message="Non-finite loss.", data={"layer": "loss"}, stage="neural")

        self.grads[...] = 0.0
        grad = self._run_backward(self.head_layers, grad)
        if self.config.include_structured:
            self._run_backward(self.structured_layers, grad[:, : self._structured_out])
        grad = self._run_backward(self.sequence_layers, grad[:, self._structured_out :])
        self.embedding.backward(self.encoder.backward(grad))
        _check_finite(self.grads, layer="gradients")
        return value, self.grads

    def buffers(self) -> dict[str, list[float]]:
        return {
            f"{name}.{key}": buffer.tolist()
            for name, layer in self.named_layers()
            for key, buffer in layer.buffers.items()
        }

    def checkpoint(
        self, *, epoch: int, train_loss: float, validation_loss: float, rng_state: dict | None = None
    ) -> Checkpoint:
        return Checkpoint(
            epoch=epoch,
            parameters=self.values.copy(),
            offsets=self.offsets,
            buffers=self.buffers(),
            train_loss=train_loss,
            validation_loss=validation_loss,
            rng_state=rng_state or {},
        )

    def load_checkpoint(self, checkpoint: Checkpoint) -> None:
        offsets = {name: (start, tuple(shape)) for name, (start, shape) in checkpoint.offsets.items()}
        if offsets != self.offsets:
            raise InvalidInputException(
                message="Checkpoint layout does not match the network.", data={"tensor": "parameters"}, stage="neural"
            )
        self.values[...] = checkpoint.parameters
        for name, layer in self.named_layers():
            for key, buffer in layer.buffers.items():
                buffer[...] = checkpoint.buffers[f"{name}.{key}"]

    @classmethod
    def from_checkpoint(cls, *, config: NetworkConfig, vocab_size: int, checkpoint: Checkpoint) -> "DualBranchNetwork":
        network = cls(config=config, vocab_size=vocab_size, rng=np.random.default_rng(0))
        network.load_checkpoint(checkpoint)
        return network
