"""Segment tokenization, tf-idf vocabulary and structured-feature scaling."""
import collections
import math
import pathlib
import re
import typing

import numpy as np

from apps.CORE.exceptions import InvalidInputException
from apps.CORE.types import StrOrPath
from apps.CORE.utils import read_json, write_json
from apps.features.schemas import STRUCTURED_FEATURES, FeatureVector, Scaler, Vocabulary
from apps.features.stopwords import ENGLISH_STOPWORDS
from apps.segmentation.schemas import Instance
from loggers import get_logger
from settings import Settings

__all__ = (
    "tokenize_normalize",
    "fit_vocab",
    "vectorize",
    "fit_scaler",
    "apply_scaler",
    "to_matrix",
    "save_vocab",
    "load_vocab",
    "save_scaler",
    "load_scaler",
)

logger = get_logger(name=__name__)

EDGE_PUNCTUATION = re.compile(r"^[\W_]+|[\W_]+$")


def tokenize_normalize(*, segment: str) -> list[str]:
    """
    Whitespace split, lowercase, strip leading/trailing non-alphanumerics, drop empties and stopwords.

    Examples:
        >>> tokenize_normalize(segment="The total APNEA/HYPOPNEA INDEX (AHI)")
        ['total', 'apnea/hypopnea', 'index', 'ahi']
    """
    tokens = (EDGE_PUNCTUATION.sub("", token.lower()) for token in segment.split())
    return [token for token in tokens if token and token not in ENGLISH_STOPWORDS]


def fit_vocab(*, segments: typing.Sequence[list[str]], cap: int | None = None) -> Vocabulary:
    """
    Top-`cap` terms by total term frequency (ties lexicographic) with idf(t) = ln((1 + N) / (1 + df(t))) + 1.

    Args:
        segments: Tokenized training segments; N is their count.
        cap (int): Maximum vocabulary size. Defaults: `Settings.VOCAB_CAP` (400)

    Raises:
        InvalidInputException: no segment holds a token.
    """
    cap = Settings.VOCAB_CAP if cap is None else cap
    if not any(segments):
        raise InvalidInputException(message="Cannot fit a vocabulary on an empty corpus.", stage="features")

    term_frequency: collections.Counter[str] = collections.Counter()
    document_frequency: collections.Counter[str] = collections.Counter()
    for tokens in segments:
        term_frequency.update(tokens)
        document_frequency.update(set(tokens))

    terms = sorted(term_frequency, key=lambda term: (-term_frequency[term], term))[:cap]
    doc_count = len(segments)
    idf = [math.log((1 + doc_count) / (1 + document_frequency[term])) + 1.0 for term in terms]
    logger.debug(msg=f"Fitted vocabulary of {len(terms)} terms on {doc_count} segments.")
    return Vocabulary(terms=terms, idf=idf, doc_count=doc_count)


def vectorize(*, instance: Instance, vocab: Vocabulary, index: dict[str, int] | None = None) -> FeatureVector:
    """Structured block from the instance plus the L2-normalized tf-idf of its in-vocabulary tokens."""
    index = vocab.index if index is None else index
    counts = collections.Counter(
        index[token] for token in tokenize_normalize(segment=instance.segment) if token in index
    )
    weights = {position: count * vocab.idf[position] for position, count in sorted(counts.items())}
    norm = math.sqrt(sum(weight * weight for weight in weights.values()))
    if norm > 0:
        weights = {position: weight / norm for position, weight in weights.items()}
    return FeatureVector(structured=instance.structured, tfidf=weights, dimension=len(vocab))


def fit_scaler(*, vectors: typing.Sequence[FeatureVector]) -> Scaler:
    """Training mean and population standard deviation of each structured feature."""
    if len(vectors) < 2:
        raise InvalidInputException(
            message="At least 2 training vectors are needed to fit a scaler.",
            data={"vectors": len(vectors)},
            stage="features",
        )
    block = np.array([vector.structured for vector in vectors], dtype=np.float64)
    return Scaler(mean=block.mean(axis=0).tolist(), std=block.std(axis=0).tolist())


def apply_scaler(*, vector: FeatureVector, scaler: Scaler) -> FeatureVector:
    """Z-score the structured block; zero-variance features pass through unchanged, tf-idf is untouched."""
    values = np.asarray(vector.structured, dtype=np.float64)
    mean = np.asarray(scaler.mean, dtype=np.float64)
    std = np.asarray(scaler.std, dtype=np.float64)
    scaled = np.where(std > 0, (values - mean) / np.where(std > 0, std, 1.0), values)
    return vector.copy(update={"structured": tuple(float(value) for value in scaled)})


def to_matrix(*, vectors: typing.Sequence[FeatureVector], dimension: int | None = None) -> np.ndarray:
    """Dense (n, 6 + dimension) matrix, structured block first."""
    if dimension is None:
        dimension = vectors[0].dimension if vectors else 0
    matrix = np.zeros((len(vectors), len(STRUCTURED_FEATURES) + dimension), dtype=np.float64)
    for row, vector in enumerate(vectors):
        if vector.dimension != dimension:
            raise InvalidInputException(
                message=f"Feature vector of dimension {vector.dimension} where {dimension} is expected.",
                data={"row": row},
            )
        matrix[row, : len(STRUCTURED_FEATURES)] = vector.structured
        for position, weight in vector.tfidf.items():
            matrix[row, len(STRUCTURED_FEATURES) + position] = weight
    return matrix


def save_vocab(*, vocab: Vocabulary, path: StrOrPath) -> pathlib.Path:
    return write_json(path, vocab.dict())


def load_vocab(*, path: StrOrPath) -> Vocabulary:
    return Vocabulary.parse_obj(read_json(path))


def save_scaler(*, scaler: Scaler, path: StrOrPath) -> pathlib.Path:
    return write_json(path, scaler.dict())


def load_scaler(*, path: StrOrPath) -> Scaler:
    return Scaler.parse_obj(read_json(path))
