import pathlib
import shutil
import subprocess
import tempfile
import typing

import cv2
import numpy as np

from apps.CORE.enums import OCRBackend
from apps.CORE.exceptions import EngineException, EngineNotFoundException, ParseException
from apps.CORE.utils import bytes_hash
from apps.imaging.schemas import GrayImage
from apps.imaging.services import save_gray_image
from apps.ocr.schemas import PageWords, WordBox
from apps.ocr.services import parse_word_table
from loggers import get_logger
from settings import Settings

__all__ = ("OCREngine", "TesseractEngine", "MockOCREngine", "run_ocr", "get_engine")

logger = get_logger(name=__name__)


class OCREngine(typing.Protocol):
    """Backend handle: recognizes one page image into words."""

    def recognize(self, *, image: GrayImage, page: int = 1) -> PageWords:
        ...


class TesseractEngine:
    """External engine driven through `<cmd> <image> <out-base> [flags...] tsv`."""

    def __init__(
        self,
        cmd: str | None = None,
        extra_flags: list[str] | None = None,
        timeout: float | None = None,
    ):
        self.cmd = cmd or Settings.OCR_CMD
        self.extra_flags = list(Settings.OCR_EXTRA_FLAGS if extra_flags is None else extra_flags)
        self.timeout = timeout or Settings.OCR_TIMEOUT_SECONDS

    def executable(self) -> str:
        path = shutil.which(self.cmd)
        if path is None:
            raise EngineNotFoundException(
                message=f"OCR engine '{self.cmd}' was not found on PATH.", data={"cmd": self.cmd}, stage="ocr"
            )
        return path

    def recognize(self, *, image: GrayImage, page: int = 1) -> PageWords:
        executable = self.executable()
        with tempfile.TemporaryDirectory(prefix="scandoc-ocr-") as tmp:
            image_path = save_gray_image(image=image, path=pathlib.Path(tmp) / "page.png")
            out_base = pathlib.Path(tmp) / "page"
            command = [executable, str(image_path), str(out_base), *self.extra_flags, "tsv"]
            logger.debug(msg=f"Running OCR engine: {' '.join(command)}")
            try:
                completed = subprocess.run(command, capture_output=True, text=True, timeout=self.timeout, check=False)
            except subprocess.TimeoutExpired as error:
                raise EngineException(
                    message=f"OCR engine timed out after {self.timeout} seconds.", data={"cmd": command}, stage="ocr"
                ) from error
            if completed.returncode != 0:
                raise EngineException(
                    message=f"OCR engine exited with code {completed.returncode}.",
                    data={"returncode": completed.returncode, "stderr": completed.stderr.strip()},
                    stage="ocr",
                )
            tsv_path = out_base.with_suffix(".tsv")
            if not tsv_path.exists():
                raise ParseException(message=f"OCR engine produced no word table at '{tsv_path}'.", stage="ocr")
            pages = parse_word_table(tsv_text=tsv_path.read_text(encoding="utf-8"))

        # the engine numbers pages of a single image from 1
        words = [word.copy(update={"page": page}) for result in pages for word in result.words]
        return PageWords(page=page, words=words)


class MockOCREngine:
    """
    Deterministic backend for tests and synthetic corpora.

    Images registered with `register` return their stored words verbatim. Any other image is split into dark
    connected components, each reported as one pseudo-word, so the output depends only on the pixels and the seed.
    """

    DARK_THRESHOLD = 128

    def __init__(self, seed: int | None = None):
        self.seed = Settings.SEED if seed is None else seed
        self._tables: dict[str, list[WordBox]] = {}

    @staticmethod
    def image_key(image: GrayImage) -> str:
        header = f"{image.height}x{image.width}:".encode()
        return bytes_hash(header + image.data.tobytes())

    def register(self, *, image: GrayImage, words: list[WordBox]) -> str:
        key = self.image_key(image)
        self._tables[key] = list(words)
        return key

    def recognize(self, *, image: GrayImage, page: int = 1) -> PageWords:
        stored = self._tables.get(self.image_key(image))
        if stored is not None:
            return PageWords(page=page, words=[word.copy(update={"page": page}) for word in stored])
        return PageWords(page=page, words=self._components(image=image, page=page))

    def _components(self, *, image: GrayImage, page: int) -> list[WordBox]:
        mask = (image.data < self.DARK_THRESHOLD).astype(np.uint8)
        count, _, stats, _ = cv2.connectedComponentsWithStats(mask, connectivity=8)
        words = []
        # label 0 is the background
        boxes = sorted(
            (tuple(int(v) for v in stats[label][:4]) for label in range(1, count)), key=lambda box: (box[1], box[0])
        )
        for number, (left, top, width, height) in enumerate(boxes, start=1):
            words.append(
                WordBox(
                    text=f"w{(number * 7919 + self.seed) % 10007:x}",
                    left=left,
                    top=top,
                    width=width,
                    height=height,
                    page=page,
                    order_key=(1, 1, 1, number),
                    confidence=95.0,
                )
            )
        return words


def get_engine(backend: OCRBackend | None = None) -> OCREngine:
    backend = OCRBackend(backend or Settings.OCR_BACKEND)
    if backend is OCRBackend.MOCK:
        return MockOCREngine()
    return TesseractEngine()


def run_ocr(
    *, image: GrayImage, engine: OCREngine, page: int = 1, source_image: pathlib.Path | None = None
) -> PageWords:
    """Recognize one page; an empty page yields an empty word list."""
    result = engine.recognize(image=image, page=page)
    logger.debug(msg=f"OCR page {page}: {len(result.words)} words.")
    if source_image is not None:
        result = result.copy(update={"source_image": source_image})
    return result
