import pathlib

from pydantic import Field, validator

from apps.CORE.schemas import FrozenSchema
from apps.CORE.types import OrderKey

__all__ = ("WordBox", "PageWords")


class WordBox(FrozenSchema):
    """One recognized token with its pixel box and reading-order key (block, paragraph, line, word)."""

    text: str
    left: int = Field(ge=0)
    top: int = Field(ge=0)
    width: int = Field(gt=0)
    height: int = Field(gt=0)
    page: int = Field(ge=1)
    order_key: OrderKey
    confidence: float = Field(default=-1.0, ge=-1, le=100)

    @property
    def right(self) -> int:
        """Last pixel column covered by the box."""
        return self.left + self.width - 1

    @property
    def bottom(self) -> int:
        return self.top + self.height - 1


class PageWords(FrozenSchema):
    page: int = Field(ge=1)
    words: list[WordBox] = Field(default=[])
    source_image: pathlib.Path | None = Field(default=None)

    @validator("words")
    def validate_words(cls, v: list[WordBox], values: dict) -> list[WordBox]:
        """Keep words in reading order; every word must belong to this page."""
        page = values.get("page")
        for word in v:
            if word.page != page:
                raise ValueError(f"Word '{word.text}' is on page {word.page}, expected page {page}")
        return sorted(v, key=lambda word: word.order_key)

    @property
    def tokens(self) -> list[str]:
        return [word.text for word in self.words]

    def replace_tokens(self, tokens: list[str]) -> "PageWords":
        """Same geometry and order, new texts."""
        if len(tokens) != len(self.words):
            raise ValueError("Token count must be preserved")
        words = [word.copy(update={"text": text}) for word, text in zip(self.words, tokens)]
        return self.copy(update={"words": words})
