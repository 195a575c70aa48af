import contextlib
import os
import pathlib
import typing
import uuid

import numpy as np
from pydantic import ValidationError

from apps.CORE.enums import DeidPolicy
from apps.CORE.exceptions import (
    ConfigException,
    InternalException,
    InvalidInputException,
    NumericException,
    ParseException,
    PipelineException,
)
from apps.CORE.types import StrOrPath
from apps.CORE.utils import bytes_hash, content_hash, derive_rng, read_json, read_jsonl, write_jsonl
from apps.deid.schemas import DeidLookup
from apps.deid.services import deidentify_report
from apps.imaging.schemas import PrepRecipe
from apps.imaging.services import preprocess_file
from apps.ocr.managers import get_engine, run_ocr
from apps.ocr.schemas import PageWords
from apps.ocr.services import read_word_table
from apps.pipeline.enums import Stage
from apps.pipeline.schemas import DatasetSplit, ExperimentConfig, ManifestEntry, SplitConfig, TrainSubset
from apps.segmentation.schemas import Instance
from apps.segmentation.services import assign_labels, segment_report
from loggers import get_logger

__all__ = (
    "MIN_REPORTS",
    "stage_scope",
    "load_manifest",
    "manifest_hash",
    "load_experiment_config",
    "split_dataset",
    "sample_train_subset",
    "load_report_pages",
    "prepare_report",
    "write_cache",
    "read_cache",
)

logger = get_logger(name=__name__)

MIN_REPORTS = 10


@contextlib.contextmanager
def stage_scope(stage: Stage) -> typing.Iterator[None]:
    """
    Attribute failures inside the block to `stage`. Validation and I/O errors become invalid-input errors,
    arithmetic and linear-algebra errors numeric errors, anything else an internal error.
    """
    try:
        yield
    except PipelineException as error:
        error.stage = error.stage or stage.value
        raise
    except ValidationError as error:
        raise InvalidInputException(message=str(error), data=error.errors(), stage=stage.value) from error
    except OSError as error:
        raise InvalidInputException(
            message=f"{error.strerror or error}: '{error.filename}'.",
            data={"path": str(error.filename)},
            stage=stage.value,
        ) from error
    except (ArithmeticError, np.linalg.LinAlgError) as error:
        raise NumericException(message=f"{type(error).__name__}: {error}", stage=stage.value) from error
    except Exception as error:
        raise InternalException(
            message=f"{type(error).__name__}: {error}", data={"type": type(error).__name__}, stage=stage.value
        ) from error


def load_manifest(*, path: StrOrPath) -> list[ManifestEntry]:
    """
    Read a JSON-lines manifest (`report_id, pages, images, gold_ahi, gold_sao2`).

    Raises:
        ParseException: an unreadable line.
        InvalidInputException: a repeated report id or an entry without pages and images.
    """
    path = pathlib.Path(path)
    with stage_scope(Stage.LOAD):
        try:
            rows = read_jsonl(path)
        except ValueError as error:
            raise ParseException(message=f"Manifest '{path}' is not valid JSON lines: {error}.") from error
        entries = [ManifestEntry.parse_obj(row) for row in rows]
    seen: set[str] = set()
    for entry in entries:
        if entry.report_id in seen:
            raise InvalidInputException(
                message=f"Manifest repeats report '{entry.report_id}'.", data={"report_id": entry.report_id}
            )
        seen.add(entry.report_id)
    return entries


def manifest_hash(*, entries: typing.Sequence[ManifestEntry], base_dir: StrOrPath) -> str:
    """Content hash of the entries and the bytes of every file they reference."""
    base_dir = pathlib.Path(base_dir)
    payload = []
    for entry in sorted(entries, key=lambda item: item.report_id):
        files = [bytes_hash((base_dir / name).read_bytes()) for name in [*entry.pages, *entry.images]]
        payload.append({**entry.dict(), "files": files})
    return content_hash(payload)


def _resolve(path: pathlib.Path | None, base: pathlib.Path) -> pathlib.Path | None:
    if path is None or path.is_absolute():
        return path
    return base / path


def load_experiment_config(*, path: StrOrPath, overrides: dict[str, typing.Any] | None = None) -> ExperimentConfig:
    """
    Parse an experiment JSON file; relative paths are taken relative to the file.

    Raises:
        ConfigException: unreadable JSON.
        pydantic.ValidationError: unknown keys or invalid values.
    """
    path = pathlib.Path(path)
    try:
        data = read_json(path)
    except (OSError, ValueError) as error:
        raise ConfigException(message=f"Cannot read experiment config '{path}': {error}.") from error
    data.update(overrides or {})
    config = ExperimentConfig.parse_obj(data)
    base = path.resolve().parent
    paths = config.paths.copy(
        update={
            "manifest": _resolve(config.paths.manifest, base),
            "workdir": _resolve(config.paths.workdir, base),
            "deid_lookup": _resolve(config.paths.deid_lookup, base),
        }
    )
    return config.copy(update={"paths": paths})


def split_dataset(*, report_ids: typing.Iterable[str], config: SplitConfig) -> DatasetSplit:
    """
    Report-level random partition: `test_fraction` of the reports for test, the rest split train:val by
    `val_ratio`. Depends only on the set of ids and the seed, not on their order.

    Raises:
        InvalidInputException: fewer than 10 reports.
    """
    ids = sorted(set(report_ids))
    if len(ids) < MIN_REPORTS:
        raise InvalidInputException(
            message=f"At least {MIN_REPORTS} reports are needed to split a dataset, got {len(ids)}.",
            data={"reports": len(ids)},
            stage=Stage.SPLIT.value,
        )
    order = [ids[index] for index in np.random.default_rng(config.seed).permutation(len(ids))]
    n_test = round(config.test_fraction * len(ids))
    development = order[n_test:]
    train_part, val_part = config.ratio
    n_val = round(len(development) * val_part / (train_part + val_part))
    split = DatasetSplit(
        train=sorted(development[n_val:]), val=sorted(development[:n_val]), test=sorted(order[:n_test])
    )
    logger.info(
        msg=f"Split {len(ids)} reports: {len(split.train)} train, {len(split.val)} val, {len(split.test)} test."
    )
    return split


def sample_train_subset(*, train_ids: typing.Sequence[str], subset: TrainSubset, seed: int) -> list[str]:
    """
    `subset.size` training reports. Nested subsets take prefixes of one seeded order, so smaller subsets are
    contained in larger ones; independent subsets draw a fresh sample per size.

    Raises:
        InvalidInputException: the subset is larger than the training set.
    """
    ids = sorted(train_ids)
    if subset.size > len(ids):
        raise InvalidInputException(
            message=f"Training subset of {subset.size} reports exceeds the {len(ids)} training reports.",
            data={"size": subset.size, "train": len(ids)},
            stage=Stage.SPLIT.value,
        )
    rng = derive_rng(seed, "subset", subset.size) if subset.independent else derive_rng(seed, "subset")
    return sorted(ids[index] for index in rng.permutation(len(ids))[: subset.size])


def load_report_pages(
    *, entry: ManifestEntry, base_dir: pathlib.Path, recipe: PrepRecipe, image_dir: pathlib.Path
) -> list[PageWords]:
    """Word tables of a report; scanned pages are preprocessed with `recipe` and recognized first."""
    if entry.pages:
        with stage_scope(Stage.OCR):
            pages = [page for name in entry.pages for page in read_word_table(path=base_dir / name)]
        return sorted(pages, key=lambda page: page.page)

    engine = get_engine()
    pages = []
    for number, name in enumerate(entry.images, start=1):
        destination = image_dir / f"{entry.report_id}_p{number}_{recipe.name.value}.png"
        with stage_scope(Stage.PREPROCESS):
            image = preprocess_file(source=base_dir / name, recipe=recipe, destination=destination)
        with stage_scope(Stage.OCR):
            pages.append(run_ocr(image=image, engine=engine, page=number, source_image=destination))
    return pages


def prepare_report(
    *,
    entry: ManifestEntry,
    base_dir: pathlib.Path,
    recipe: PrepRecipe,
    image_dir: pathlib.Path,
    lookups: dict[str, DeidLookup],
    policy: DeidPolicy,
    radius: int,
    epsilon: float,
) -> tuple[list[Instance], int]:
    """Load, de-identify, segment and label one report. Returns its labeled instances and page count."""
    pages = load_report_pages(entry=entry, base_dir=base_dir, recipe=recipe, image_dir=image_dir)
    with stage_scope(Stage.DEID):
        pages = deidentify_report(report_id=entry.report_id, pages=pages, lookups=lookups, policy=policy)
    with stage_scope(Stage.SEGMENT):
        instances = segment_report(report_id=entry.report_id, pages=pages, radius=radius)
    with stage_scope(Stage.LABEL):
        instances = assign_labels(instances=instances, gold=entry.gold, epsilon=epsilon)
    return instances, len(pages)


def write_cache(*, path: pathlib.Path, rows: typing.Iterable[typing.Any]) -> pathlib.Path:
    """Write JSON lines through a temporary file so concurrent runs never read a partial cache."""
    temporary = path.with_name(f".{path.name}.{os.getpid()}.{uuid.uuid4().hex}")
    write_jsonl(temporary, rows)
    temporary.replace(path)
    return path


def read_cache(*, path: pathlib.Path) -> list[typing.Any] | None:
    return read_jsonl(path) if path.exists() else None
