"""Engine word-table codec and inspection overlays."""
import itertools
import pathlib

import cv2
import numpy as np

from apps.CORE.exceptions import ParseException
from apps.CORE.types import StrOrPath
from apps.imaging.schemas import GrayImage
from apps.imaging.services import save_gray_image
from apps.ocr.schemas import PageWords, WordBox
from loggers import get_logger

__all__ = (
    "TSV_COLUMNS",
    "WORD_LEVEL",
    "parse_word_table",
    "serialize_word_table",
    "read_word_table",
    "write_word_table",
    "render_overlay",
    "overlay_path",
)

logger = get_logger(name=__name__)

TSV_COLUMNS: tuple[str, ...] = (
    "level",
    "page_num",
    "block_num",
    "par_num",
    "line_num",
    "word_num",
    "left",
    "top",
    "width",
    "height",
    "conf",
    "text",
)
INTEGER_COLUMNS: tuple[str, ...] = TSV_COLUMNS[:10]
WORD_LEVEL = 5
OVERLAY_SUFFIX = ".overlay.png"


def _check_header(header: list[str]) -> None:
    for position, expected in enumerate(TSV_COLUMNS):
        if position >= len(header):
            raise ParseException(
                message=f"Word table header is missing column '{expected}'.",
                data={"column": expected, "position": position},
            )
        if header[position] != expected:
            raise ParseException(
                message=f"Unexpected column '{header[position]}' at position {position}, expected '{expected}'.",
                data={"column": header[position], "position": position},
            )
    if len(header) > len(TSV_COLUMNS):
        raise ParseException(
            message=f"Unexpected column '{header[len(TSV_COLUMNS)]}' after '{TSV_COLUMNS[-1]}'.",
            data={"column": header[len(TSV_COLUMNS)], "position": len(TSV_COLUMNS)},
        )


def parse_word_table(*, tsv_text: str) -> list[PageWords]:
    """
    Parse the engine's 12-column tab-separated word table.

    Only level-5 (word) rows become WordBox entries, whitespace-only texts are dropped and the reading-order key
    comes from (block_num, par_num, line_num, word_num).

    Args:
        tsv_text (str): Whole table including its header line.

    Returns:
        list[PageWords]: One entry per page that holds at least one word, ordered by page.

    Raises:
        ParseException: missing/permuted header column, wrong field count or a non-integer geometry field.
    """
    lines = tsv_text.splitlines()
    if not lines:
        raise ParseException(message=f"Word table header is missing column '{TSV_COLUMNS[0]}'.")
    _check_header(header=lines[0].rstrip("\r").split("\t"))

    words_by_page: dict[int, list[WordBox]] = {}
    for line_number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.rstrip("\r\n").split("\t", maxsplit=len(TSV_COLUMNS) - 1)
        if len(fields) == len(TSV_COLUMNS) - 1:
            fields.append("")  # engine omits the trailing empty text of structural rows
        if len(fields) != len(TSV_COLUMNS):
            raise ParseException(
                message=f"Line {line_number}: expected {len(TSV_COLUMNS)} fields, got {len(fields)}.",
                data={"line": line_number},
            )
        row = dict(zip(TSV_COLUMNS, fields))
        try:
            numbers = {column: int(row[column]) for column in INTEGER_COLUMNS}
        except ValueError as error:
            column = next(name for name in INTEGER_COLUMNS if not row[name].lstrip("-").isdigit())
            raise ParseException(
                message=f"Line {line_number}: column '{column}' is not an integer ({row[column]!r}).",
                data={"line": line_number, "column": column},
            ) from error
        try:
            confidence = float(row["conf"])
        except ValueError as error:
            raise ParseException(
                message=f"Line {line_number}: column 'conf' is not a number ({row['conf']!r}).",
                data={"line": line_number, "column": "conf"},
            ) from error

        if numbers["level"] != WORD_LEVEL or not row["text"].strip():
            continue
        if numbers["width"] <= 0 or numbers["height"] <= 0:
            logger.warning(msg=f"Line {line_number}: dropped word {row['text']!r} with an empty box.")
            continue
        word = WordBox(
            text=row["text"].strip(),
            left=max(numbers["left"], 0),
            top=max(numbers["top"], 0),
            width=numbers["width"],
            height=numbers["height"],
            page=numbers["page_num"],
            order_key=(numbers["block_num"], numbers["par_num"], numbers["line_num"], numbers["word_num"]),
            confidence=min(max(confidence, -1.0), 100.0),
        )
        words_by_page.setdefault(word.page, []).append(word)

    return [PageWords(page=page, words=words) for page, words in sorted(words_by_page.items())]


def serialize_word_table(*, pages: list[PageWords]) -> str:
    """Inverse of `parse_word_table`: header plus one level-5 row per word."""
    lines = ["\t".join(TSV_COLUMNS)]
    for word in itertools.chain.from_iterable(page.words for page in pages):
        block, paragraph, line, number = word.order_key
        fields = (
            WORD_LEVEL,
            word.page,
            block,
            paragraph,
            line,
            number,
            word.left,
            word.top,
            word.width,
            word.height,
            repr(float(word.confidence)),
            word.text,
        )
        lines.append("\t".join(str(field) for field in fields))
    return "\n".join(lines) + "\n"


def read_word_table(*, path: StrOrPath) -> list[PageWords]:
    path = pathlib.Path(path)
    try:
        return parse_word_table(tsv_text=path.read_text(encoding="utf-8"))
    except ParseException as error:
        error.data = {**(error.data or {}), "path": str(path)}
        raise


def write_word_table(*, pages: list[PageWords], path: StrOrPath) -> pathlib.Path:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_word_table(pages=pages), encoding="utf-8")
    return path


def render_overlay(*, image: GrayImage, words: PageWords, intensity: int = 0) -> GrayImage:
    """
    Copy of `image` with a 1-pixel rectangle on every word box; boxes leaving the image are clipped to it.

    Args:
        image (GrayImage): Page the words were recognized on.
        words (PageWords): Recognized words.
        intensity (int): Gray level of the outline. Defaults: `0` (black)

    Returns:
        GrayImage: New image; the input is never modified.
    """
    canvas = np.array(image.data, copy=True, order="C")
    max_x, max_y = image.width - 1, image.height - 1
    for word in words.words:
        x0, y0 = min(word.left, max_x), min(word.top, max_y)
        x1, y1 = min(word.right, max_x), min(word.bottom, max_y)
        if word.left > max_x or word.top > max_y:
            continue  # box lies entirely outside the page
        cv2.rectangle(canvas, (x0, y0), (x1, y1), color=int(intensity), thickness=1)
    return GrayImage(data=canvas)


def overlay_path(*, source_image: StrOrPath) -> pathlib.Path:
    """`page-001.png` -> `page-001.overlay.png` beside the source."""
    source_image = pathlib.Path(source_image)
    return source_image.with_name(source_image.stem + OVERLAY_SUFFIX)


def save_overlay(*, image: GrayImage, words: PageWords, source_image: StrOrPath) -> pathlib.Path:
    return save_gray_image(image=render_overlay(image=image, words=words), path=overlay_path(source_image=source_image))
