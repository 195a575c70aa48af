import pathlib
import typing
from typing import Any

import numpy as np
from pydantic_factories import ModelFactory

from apps.CORE.types import OrderKey
from apps.ocr.schemas import PageWords, WordBox

__all__ = ("BaseRawFactory", "make_page", "numerical_gradient", "relative_error", "experiment_payload")

WORD_WIDTH = 60
WORD_HEIGHT = 30
LINE_WORDS = 12


class BaseRawFactory(ModelFactory):
    @classmethod
    def get_mock_value(cls, field_type: Any) -> Any:
        type_name = str(getattr(field_type, "__name__", ""))
        if type_name == "Path":
            return cls.get_faker().file_path(depth=2)

        return super().get_mock_value(field_type)


def make_page(
    tokens: typing.Sequence[str], *, page: int = 1, boxes: dict[int, tuple[int, int, int, int]] | None = None
) -> PageWords:
    """
    Page of word boxes laid out on a simple grid, one paragraph; `boxes` overrides (left, top, width, height)
    of chosen token indices.
    """
    boxes = boxes or {}
    words = []
    for index, text in enumerate(tokens):
        line, column = divmod(index, LINE_WORDS)
        left, top, width, height = boxes.get(
            index, (100 + column * (WORD_WIDTH + 10), 100 + line * (WORD_HEIGHT + 20), WORD_WIDTH, WORD_HEIGHT)
        )
        order_key: OrderKey = (1, 1, line + 1, column + 1)
        words.append(
            WordBox(text=text, left=left, top=top, width=width, height=height, page=page, order_key=order_key)
        )
    return PageWords(page=page, words=words)


def numerical_gradient(func: typing.Callable[[], float], array: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of `func` with respect to every entry of `array` (perturbed in place)."""
    gradient = np.zeros_like(array, dtype=np.float64)
    iterator = np.nditer(array, flags=["multi_index"])
    for _ in iterator:
        index = iterator.multi_index
        original = array[index]
        array[index] = original + eps
        plus = func()
        array[index] = original - eps
        minus = func()
        array[index] = original
        gradient[index] = (plus - minus) / (2 * eps)
    return gradient


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / (||a|| + ||n||), 0 when both are zero."""
    analytic, numeric = np.ravel(analytic).astype(np.float64), np.ravel(numeric).astype(np.float64)
    scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    return float(np.linalg.norm(analytic - numeric) / scale) if scale > 0 else 0.0


def experiment_payload(manifest: pathlib.Path, workdir: pathlib.Path, **model: typing.Any) -> dict:
    """Experiment config dict around `model` (defaults to logistic regression)."""
    return {
        "name": "test",
        "model": model or {"family": "classical", "kind": "LR"},
        "paths": {"manifest": str(manifest), "workdir": str(workdir)},
    }
