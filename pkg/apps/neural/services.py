import collections
import math
import pathlib
import typing

import numpy as np
import pandas as pd
from scipy.special import expit, log_expit

from apps.CORE.exceptions import InvalidInputException, NumericException
from apps.CORE.types import StrOrPath
from apps.CORE.utils import derive_rng, read_json, write_json
from apps.features.schemas import Scaler
from apps.features.services import tokenize_normalize
from apps.neural.enums import Mode, OutputActivation
from apps.neural.models import DualBranchNetwork
from apps.neural.schemas import (
    PAD_ID,
    PAD_TOKEN,
    UNK_ID,
    UNK_TOKEN,
    AdamState,
    Batch,
    CBOWConfig,
    CBOWResult,
    Checkpoint,
    EpochRecord,
    NetworkConfig,
    TokenCodec,
    TrainConfig,
    TrainResult,
)
from apps.segmentation.schemas import Instance
from loggers import get_logger
from settings import Settings

__all__ = (
    "CHECKPOINT_FORMAT_VERSION",
    "build_codec",
    "encode_tokens",
    "encode_instances",
    "cbow_loss_and_grads",
    "pretrain_cbow",
    "adam_step",
    "train_network",
    "predict_network",
    "write_loss_history",
    "save_checkpoint",
    "load_checkpoint",
)

logger = get_logger(name=__name__)

CHECKPOINT_FORMAT_VERSION = 1
PARAMETER_DTYPE = "<f8"
UNIGRAM_POWER = 0.75
PREDICT_CHUNK = 1024


def build_codec(*, corpus: typing.Sequence[list[str]]) -> TokenCodec:
    """Ids 0 and 1 for PAD and UNK, then training tokens by descending frequency (ties lexicographic)."""
    counts = collections.Counter(token for tokens in corpus for token in tokens)
    counts.pop(PAD_TOKEN, None)
    counts.pop(UNK_TOKEN, None)
    return TokenCodec(tokens=[PAD_TOKEN, UNK_TOKEN, *sorted(counts, key=lambda token: (-counts[token], token))])


def encode_tokens(
    *, tokens: list[str], codec: TokenCodec, max_len: int, ids: dict[str, int] | None = None
) -> np.ndarray:
    """Ids padded with PAD (or truncated at the tail) to `max_len`; unknown tokens map to UNK."""
    ids = codec.ids if ids is None else ids
    encoded = np.full(max_len, PAD_ID, dtype=np.int64)
    values = [ids.get(token, UNK_ID) for token in tokens[:max_len]]
    encoded[: len(values)] = values
    return encoded


def _scale_block(block: np.ndarray, scaler: Scaler | None) -> np.ndarray:
    if scaler is None:
        return block
    mean = np.asarray(scaler.mean, dtype=np.float64)
    std = np.asarray(scaler.std, dtype=np.float64)
    return np.where(std > 0, (block - mean) / np.where(std > 0, std, 1.0), block)


def encode_instances(
    *,
    instances: typing.Sequence[Instance],
    codec: TokenCodec,
    max_len: int,
    scaler: Scaler | None = None,
    labels: np.ndarray | None = None,
) -> Batch:
    """Structured block (z-scored when `scaler` is given) and token-id matrix of the normalized segments."""
    ids = codec.ids
    structured = np.array([instance.structured for instance in instances], dtype=np.float64).reshape(-1, 6)
    tokens = np.array(
        [
            encode_tokens(tokens=tokenize_normalize(segment=instance.segment), codec=codec, max_len=max_len, ids=ids)
            for instance in instances
        ],
        dtype=np.int64,
    ).reshape(-1, max_len)
    return Batch(structured=_scale_block(structured, scaler), tokens=tokens, labels=labels)


def cbow_loss_and_grads(
    W_in: np.ndarray,
    W_out: np.ndarray,
    context_ids: np.ndarray,
    center_id: int,
    negative_ids: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """
    Negative-sampling loss of predicting `center_id` from the averaged context embeddings.

    loss = -log sigmoid(u_c . h) - sum_n log sigmoid(-u_n . h), h = mean(W_in[context_ids]).

    Returns:
        tuple: (loss, gradient w.r.t. each context row of W_in (same for every row),
            gradient rows of W_out aligned with `[center_id, *negative_ids]`)
    """
    h = W_in[context_ids].mean(axis=0)
    rows = np.concatenate([[center_id], negative_ids]).astype(np.int64)
    signs = np.concatenate([[1.0], -np.ones(len(negative_ids))])
    scores = W_out[rows] @ h
    loss = -float(np.sum(log_expit(signs * scores)))
    # d/ds of -log sigmoid(sign * s)
    coefficients = -signs * expit(-signs * scores)
    grad_out = coefficients[:, None] * h[None, :]
    grad_h = coefficients @ W_out[rows]
    return loss, grad_h / len(context_ids), grad_out


def pretrain_cbow(
    *, corpus: typing.Sequence[list[str]], codec: TokenCodec, config: CBOWConfig, seed: int
) -> CBOWResult:
    """
    CBOW embeddings with negative sampling, trained by per-position SGD over the training segments.

    Input embeddings start uniform in +-0.5/dim, output embeddings at zero; negatives are drawn from the
    unigram distribution raised to 0.75 (PAD and UNK excluded). Deterministic for a given seed.
    The PAD row is zeroed after training; with 0 epochs the seeded initialization is returned unchanged.

    Raises:
        InvalidInputException: the corpus holds no token.
    """
    if not any(corpus):
        raise InvalidInputException(message="Cannot pretrain embeddings on an empty corpus.", stage="neural")
    rng = derive_rng(seed, "cbow")
    vocab_size, dim = len(codec), config.dim
    W_in = rng.uniform(-0.5 / dim, 0.5 / dim, size=(vocab_size, dim))
    W_out = np.zeros((vocab_size, dim))

    ids = codec.ids
    sentences = [np.array([ids.get(token, UNK_ID) for token in tokens], dtype=np.int64) for tokens in corpus]
    counts = np.bincount(np.concatenate(sentences), minlength=vocab_size).astype(np.float64)
    counts[[PAD_ID, UNK_ID]] = 0.0
    if counts.sum() == 0:
        return CBOWResult(embeddings=W_in, losses=[])
    noise = counts**UNIGRAM_POWER
    noise /= noise.sum()

    losses: list[float] = []
    for epoch in range(config.epochs):
        total, positions = 0.0, 0
        for sentence_index in rng.permutation(len(sentences)):
            sentence = sentences[sentence_index]
            negatives = rng.choice(vocab_size, size=(len(sentence), config.negatives), p=noise)
            for position, center in enumerate(sentence):
                context = np.concatenate(
                    [
                        sentence[max(0, position - config.window) : position],
                        sentence[position + 1 : position + 1 + config.window],
                    ]
                )
                if context.size == 0:
                    continue
                loss, grad_context, grad_out = cbow_loss_and_grads(
                    W_in, W_out, context, int(center), negatives[position]
                )
                rows = np.concatenate([[center], negatives[position]])
                np.add.at(W_out, rows, -config.learning_rate * grad_out)
                np.add.at(W_in, context, -config.learning_rate * grad_context)
                total += loss
                positions += 1
        losses.append(total / max(positions, 1))
        logger.debug(msg=f"CBOW epoch {epoch + 1}: loss {losses[-1]:.5f}.")
    if config.epochs:
        W_in[PAD_ID] = 0.0
    return CBOWResult(embeddings=W_in, losses=losses)


def adam_step(
    *, params: np.ndarray, grads: np.ndarray, state: AdamState, config: TrainConfig
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; `params` and the state moments are updated in place."""
    state.step += 1
    state.m *= config.beta1
    state.m += (1 - config.beta1) * grads
    state.v *= config.beta2
    state.v += (1 - config.beta2) * grads**2
    m_hat = state.m / (1 - config.beta1**state.step)
    v_hat = state.v / (1 - config.beta2**state.step)
    params -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    return params, state


def _run_epoch(
    network: DualBranchNetwork, train: Batch, tconfig: TrainConfig, state: AdamState, rng: np.random.Generator
) -> float:
    order = rng.permutation(len(train))
    total = 0.0
    for start in range(0, len(order), tconfig.batch_size):
        batch = train.take(order[start : start + tconfig.batch_size])
        network.logits(batch, mode=Mode.TRAIN, rng=rng)
        loss, grads = network.backward(batch.labels)
        adam_step(params=network.values, grads=grads, state=state, config=tconfig)
        total += loss * len(batch)
    return total / len(order)


def train_network(
    *,
    config: NetworkConfig,
    tconfig: TrainConfig,
    train: Batch,
    validation: Batch,
    vocab_size: int,
    embeddings: np.ndarray | None = None,
    output_dir: StrOrPath | None = None,
) -> TrainResult:
    """
    Adam training with a checkpoint after every epoch; the checkpoint with the lowest validation
    cross-entropy wins (ties go to the earlier epoch).

    Args:
        config (NetworkConfig): Architecture.
        tconfig (TrainConfig): Optimizer, batch size, epochs and seed.
        train (Batch): Training inputs with labels.
        validation (Batch): Validation inputs with labels.
        vocab_size (int): Token codec size.
        embeddings: Optional pretrained (vocab_size, embed_dim) matrix.
        output_dir: Where the loss history (and, with `Settings.KEEP_EPOCH_CHECKPOINTS`, every epoch's
            checkpoint) is written.

    Returns:
        TrainResult: Best checkpoint, per-epoch losses and whether training diverged.

    Raises:
        InvalidInputException: an empty or unlabeled set.
        NumericException: the loss is not finite in the first epoch, so no checkpoint exists.
    """
    for name, batch in (("train", train), ("validation", validation)):
        if len(batch) == 0 or batch.labels is None:
            raise InvalidInputException(
                message=f"The {name} set must be nonempty and labeled.", data={"set": name}, stage="train"
            )
    network = DualBranchNetwork(
        config=config, vocab_size=vocab_size, rng=derive_rng(tconfig.seed, "init"), embeddings=embeddings
    )
    state = AdamState.initial(network.size)
    best: Checkpoint | None = None
    history: list[EpochRecord] = []
    diverged = False

    for epoch in range(tconfig.epochs):
        try:
            train_loss = _run_epoch(network, train, tconfig, state, derive_rng(tconfig.seed, "epoch", epoch))
            validation_loss = network.loss(validation, validation.labels, mode=Mode.INFER)
        except NumericException as error:
            if best is None:
                raise
            logger.warning(msg=f"Training diverged in epoch {epoch + 1} ({error.message}); keeping epoch {best.epoch}.")
            diverged = True
            break

        history.append(EpochRecord(epoch=epoch + 1, train_loss=train_loss, val_loss=validation_loss))
        checkpoint = network.checkpoint(
            epoch=epoch + 1,
            train_loss=train_loss,
            validation_loss=validation_loss,
            rng_state={"seed": tconfig.seed, "epoch": epoch + 1},
        )
        if best is None or validation_loss < best.validation_loss:
            best = checkpoint
        if output_dir is not None and Settings.KEEP_EPOCH_CHECKPOINTS:
            save_checkpoint(checkpoint=checkpoint, path=pathlib.Path(output_dir) / f"epoch_{epoch + 1:03d}.json")
        logger.info(msg=f"Epoch {epoch + 1}/{tconfig.epochs}: train {train_loss:.5f}, val {validation_loss:.5f}.")

    if output_dir is not None:
        write_loss_history(history=history, path=pathlib.Path(output_dir) / "loss_history.csv")
    return TrainResult(best=best, history=history, diverged=diverged)


def predict_network(*, network: DualBranchNetwork, batch: Batch) -> np.ndarray:
    """Inference-mode class probabilities; sigmoid outputs are renormalized so every row sums to 1."""
    if len(batch) == 0:
        return np.zeros((0, 3))
    chunks = [
        network.forward(batch.take(np.arange(start, min(start + PREDICT_CHUNK, len(batch)))), mode=Mode.INFER)
        for start in range(0, len(batch), PREDICT_CHUNK)
    ]
    probabilities = np.concatenate(chunks, axis=0)
    if network.config.classifier.output is OutputActivation.SIGMOID:
        probabilities = probabilities / probabilities.sum(axis=1, keepdims=True)
    return probabilities


def write_loss_history(*, history: typing.Sequence[EpochRecord], path: StrOrPath) -> pathlib.Path:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([record.dict() for record in history], columns=["epoch", "train_loss", "val_loss"])
    frame.to_csv(path, index=False, float_format="%.10g")
    return path


def save_checkpoint(*, checkpoint: Checkpoint, path: StrOrPath) -> pathlib.Path:
    """JSON metadata at `path` plus the raw little-endian float64 parameters next to it (`.bin`)."""
    path = pathlib.Path(path)
    blob = path.with_suffix(".bin")
    path.parent.mkdir(parents=True, exist_ok=True)
    blob.write_bytes(checkpoint.parameters.astype(PARAMETER_DTYPE).tobytes())
    return write_json(
        path,
        {
            "version": CHECKPOINT_FORMAT_VERSION,
            "epoch": checkpoint.epoch,
            "dtype": PARAMETER_DTYPE,
            "size": int(checkpoint.parameters.size),
            "blob": blob.name,
            "offsets": {name: [start, list(shape)] for name, (start, shape) in checkpoint.offsets.items()},
            "buffers": checkpoint.buffers,
            "train_loss": None if math.isnan(checkpoint.train_loss) else checkpoint.train_loss,
            "validation_loss": checkpoint.validation_loss,
            "rng_state": checkpoint.rng_state,
        },
    )


def load_checkpoint(*, path: StrOrPath) -> Checkpoint:
    path = pathlib.Path(path)
    data = read_json(path)
    if data.get("version") != CHECKPOINT_FORMAT_VERSION:
        raise InvalidInputException(
            message=f"Unsupported checkpoint format version {data.get('version')}.", data={"path": str(path)}
        )
    parameters = np.frombuffer((path.parent / data["blob"]).read_bytes(), dtype=data["dtype"]).astype(np.float64)
    if parameters.size != data["size"]:
        raise InvalidInputException(
            message=f"Checkpoint blob holds {parameters.size} values, {data['size']} expected.",
            data={"path": str(path)},
        )
    return Checkpoint(
        epoch=data["epoch"],
        parameters=parameters,
        offsets={name: (start, tuple(shape)) for name, (start, shape) in data["offsets"].items()},
        buffers=data["buffers"],
        train_loss=math.nan if data["train_loss"] is None else data["train_loss"],
        validation_loss=data["validation_loss"],
        rng_state=data["rng_state"],
    )
