"""Numeric candidates, context segments and gold-label assignment."""
import collections
import csv
import pathlib
import re
import typing

import pandas as pd

from apps.CORE.enums import Label
from apps.CORE.exceptions import InvalidInputException, UnparseableCandidateException
from apps.CORE.types import StrOrPath
from apps.ocr.schemas import PageWords
from apps.segmentation.schemas import DatasetSummary, GoldRecord, Instance, SplitSummary
from loggers import get_logger
from settings import Settings

__all__ = (
    "CANDIDATE_PATTERN",
    "INSTANCE_COLUMNS",
    "is_word",
    "find_candidates",
    "parse_numeric",
    "extract_segment",
    "segment_report",
    "assign_labels",
    "write_instances_csv",
    "summarize_dataset",
)

logger = get_logger(name=__name__)

CANDIDATE_PATTERN = re.compile(r"[0-9.,%]+")
WORD_PATTERN = re.compile(r"[^\W_]")
INSTANCE_COLUMNS = ("report_id", "left", "top", "width", "height", "page", "numeric_value", "segment", "label")


def is_word(token: str) -> bool:
    """Tokens with at least one letter or digit count toward the segment radius; bare punctuation rides along."""
    return WORD_PATTERN.search(token) is not None


def find_candidates(*, words: PageWords) -> list[int]:
    """Indices of tokens that fully match `[0-9.,%]+` and hold at least one digit, in reading order."""
    return [
        index
        for index, token in enumerate(words.tokens)
        if CANDIDATE_PATTERN.fullmatch(token) and any(char.isdigit() for char in token)
    ]


def parse_numeric(*, token: str) -> float:
    """
    Decimal value of a candidate token: `%` and `,` removed, leading/trailing dots stripped.

    Raises:
        UnparseableCandidateException: more than one interior dot (e.g. `1.2.3`) or nothing left to parse.

    Examples:
        >>> parse_numeric(token="1,200")
        1200.0
        >>> parse_numeric(token="88%")
        88.0
    """
    cleaned = token.replace("%", "").replace(",", "").strip(".")
    if cleaned.count(".") > 1 or not cleaned or not cleaned.replace(".", "").isdigit():
        raise UnparseableCandidateException(
            message=f"Cannot parse numeric candidate '{token}'.", data={"token": token}, stage="segment"
        )
    return float(cleaned)


def _walk(tokens: typing.Sequence[str], indices: typing.Iterable[int], radius: int) -> list[int]:
    taken: list[int] = []
    counted = 0
    for index in indices:
        if counted >= radius:
            break
        taken.append(index)
        if is_word(tokens[index]):
            counted += 1
    return taken


def extract_segment(*, words: PageWords, idx: int, radius: int | None = None) -> str:
    """
    Up to `radius` words on each side of the candidate, on the same page, joined by single spaces.

    Args:
        words (PageWords): Page holding the candidate.
        idx (int): Candidate index within `words`.
        radius (int): Words per side. Defaults: `Settings.SEGMENT_RADIUS` (10)

    Returns:
        str: The segment; the window is truncated at page boundaries.
    """
    radius = Settings.SEGMENT_RADIUS if radius is None else radius
    tokens = words.tokens
    if not 0 <= idx < len(tokens):
        raise InvalidInputException(message=f"Candidate index {idx} is out of range.", data={"idx": idx})
    left = _walk(tokens=tokens, indices=range(idx - 1, -1, -1), radius=radius)
    right = _walk(tokens=tokens, indices=range(idx + 1, len(tokens)), radius=radius)
    return " ".join(tokens[index] for index in [*reversed(left), idx, *right])


def segment_report(*, report_id: str, pages: list[PageWords], radius: int | None = None) -> list[Instance]:
    """Unlabeled instances for every parseable candidate of a de-identified report."""
    instances = []
    for page in pages:
        for idx in find_candidates(words=page):
            word = page.words[idx]
            try:
                value = parse_numeric(token=word.text)
            except UnparseableCandidateException:
                logger.warning(
                    msg=f"Dropped candidate {word.text!r} of report '{report_id}' (page {page.page}, index {idx})."
                )
                continue
            instances.append(
                Instance(
                    report_id=report_id,
                    left=word.left,
                    top=word.top,
                    width=word.width,
                    height=word.height,
                    page=page.page,
                    numeric_value=value,
                    segment=extract_segment(words=page, idx=idx, radius=radius),
                    token=word.text,
                    order_key=word.order_key,
                )
            )
    logger.debug(msg=f"Report '{report_id}': {len(instances)} instances.")
    return instances


def _matches(value: float, targets: list[float], epsilon: float) -> bool:
    return any(abs(value - target) <= epsilon for target in targets)


def assign_labels(*, instances: list[Instance], gold: GoldRecord, epsilon: float | None = None) -> list[Instance]:
    """
    Label each instance by matching its value against the report's gold values.

    AHI wins when a value matches both classes; the collision is logged.
    """
    epsilon = Settings.LABEL_EPSILON if epsilon is None else epsilon
    labeled = []
    for instance in instances:
        if instance.report_id != gold.report_id:
            raise InvalidInputException(
                message=f"Instance of report '{instance.report_id}' labeled with gold of '{gold.report_id}'.",
                data={"instance": instance.report_id, "gold": gold.report_id},
                stage="label",
            )
        is_ahi = _matches(instance.numeric_value, gold.ahi_values, epsilon)
        is_sao2 = _matches(instance.numeric_value, gold.sao2_values, epsilon)
        if is_ahi and is_sao2:
            logger.warning(
                msg=f"Value {instance.numeric_value} of report '{gold.report_id}' matches both AHI and SaO2, "
                f"labeled AHI."
            )
        label = Label.AHI if is_ahi else Label.SAO2 if is_sao2 else Label.OTHER
        labeled.append(instance.copy(update={"label": label}))
    return labeled


def write_instances_csv(*, instances: list[Instance], path: StrOrPath) -> pathlib.Path:
    """Instance table with header `report_id,left,top,width,height,page,numeric_value,segment,label`."""
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        data=[
            {
                **instance.dict(include=set(INSTANCE_COLUMNS) - {"label"}),
                "label": instance.label.value if instance.label else "",
            }
            for instance in instances
        ],
        columns=list(INSTANCE_COLUMNS),
    )
    frame.to_csv(path, index=False, quoting=csv.QUOTE_NONNUMERIC)
    return path


def summarize_dataset(
    *,
    instances: list[Instance],
    page_counts: dict[str, int],
    splits: dict[str, typing.Collection[str]] | None = None,
) -> DatasetSummary:
    """Reports, pages, numeric values and per-label instance counts for the whole set and each split."""
    groups: dict[str, typing.Collection[str]] = {"all": list(page_counts)}
    groups.update(splits or {})
    by_report: dict[str, list[Instance]] = collections.defaultdict(list)
    for instance in instances:
        by_report[instance.report_id].append(instance)

    rows = []
    for name, report_ids in groups.items():
        labels = collections.Counter(
            instance.label for report_id in report_ids for instance in by_report.get(report_id, [])
        )
        rows.append(
            SplitSummary(
                split=name,
                reports=len(report_ids),
                pages=sum(page_counts.get(report_id, 0) for report_id in report_ids),
                numeric_values=sum(len(by_report.get(report_id, [])) for report_id in report_ids),
                ahi=labels[Label.AHI],
                sao2=labels[Label.SAO2],
                other=labels[Label.OTHER],
            )
        )
    return DatasetSummary(rows=rows)
