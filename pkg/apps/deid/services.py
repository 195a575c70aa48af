import pathlib
import re

import pandas as pd

from apps.CORE.enums import DeidPolicy
from apps.CORE.exceptions import InvalidInputException
from apps.CORE.types import StrOrPath
from apps.deid.schemas import TRAILING_PUNCTUATION, DeidLookup, match_key
from apps.ocr.schemas import PageWords
from loggers import get_logger
from settings import Settings

__all__ = (
    "PATNAME_PLACEHOLDER",
    "MRN_PLACEHOLDER",
    "DATE_PLACEHOLDER",
    "deidentify_token",
    "deidentify",
    "deidentify_report",
    "load_lookup_table",
    "write_lookup_table",
)

logger = get_logger(name=__name__)

PATNAME_PLACEHOLDER = "[PATNAME]"
MRN_PLACEHOLDER = "[MRN]"
DATE_PLACEHOLDER = "[DATE]"
DATE_PATTERN = re.compile(r"\d{1,2}/\d{1,2}/(\d{2}|\d{4})")
LOOKUP_COLUMNS = ("report_id", "name_tokens", "mrn_values")
MULTI_VALUE_SEPARATOR = ";"


def deidentify_token(*, token: str, names: frozenset[str], mrns: frozenset[str]) -> str:
    """Placeholder for an identifying token, the token itself otherwise. `names`/`mrns` hold casefolded values."""
    bare = token.rstrip(TRAILING_PUNCTUATION)
    key = match_key(token)
    if key in names:
        return PATNAME_PLACEHOLDER
    if key in mrns:
        return MRN_PLACEHOLDER
    if DATE_PATTERN.fullmatch(bare):
        return DATE_PLACEHOLDER
    return token


def deidentify(*, words: PageWords, lookup: DeidLookup | None) -> PageWords:
    """
    Replace patient names, MRNs and dates with placeholders; geometry, order and token count are kept.

    Args:
        words (PageWords): One page of the report.
        lookup (DeidLookup | None): The report's identifiers. `None` scrubs dates only (lenient policy).

    Examples:
        >>> lookup = DeidLookup(report_id="R1", patient_name_tokens=["Smith"], mrn_values=["12345"])
        >>> [deidentify_token(token=t, names=lookup.names, mrns=lookup.mrns) for t in ["Smith", "MRN:", "12345"]]
        ['[PATNAME]', 'MRN:', '[MRN]']
    """
    names = lookup.names if lookup else frozenset()
    mrns = lookup.mrns if lookup else frozenset()
    tokens = [deidentify_token(token=token, names=names, mrns=mrns) for token in words.tokens]
    return words.replace_tokens(tokens=tokens)


def deidentify_report(
    *,
    report_id: str,
    pages: list[PageWords],
    lookups: dict[str, DeidLookup],
    policy: DeidPolicy | None = None,
) -> list[PageWords]:
    """De-identify every page of a report, applying the missing-lookup policy."""
    policy = DeidPolicy(policy or Settings.DEID_POLICY)
    lookup = lookups.get(report_id)
    if lookup is None:
        if policy is DeidPolicy.STRICT:
            raise InvalidInputException(
                message=f"No de-identification lookup for report '{report_id}'.",
                data={"report_id": report_id},
                stage="deid",
            )
        logger.warning(msg=f"No de-identification lookup for report '{report_id}', scrubbing dates only.")
    return [deidentify(words=page, lookup=lookup) for page in pages]


def _split_values(value: str) -> list[str]:
    return [part.strip() for part in str(value).split(MULTI_VALUE_SEPARATOR) if part.strip()]


def load_lookup_table(*, path: StrOrPath) -> dict[str, DeidLookup]:
    """Read `report_id,name_tokens,mrn_values` CSV (`;`-separated multi-values) keyed by report id."""
    path = pathlib.Path(path)
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [column for column in LOOKUP_COLUMNS if column not in frame.columns]
    if missing:
        raise InvalidInputException(
            message=f"Lookup table '{path}' is missing column '{missing[0]}'.", data={"columns": missing}
        )
    duplicated = frame["report_id"][frame["report_id"].duplicated()].unique().tolist()
    if duplicated:
        raise InvalidInputException(
            message=f"Lookup table '{path}' repeats report ids.", data={"report_ids": duplicated}
        )
    lookups = {
        row.report_id: DeidLookup(
            report_id=row.report_id,
            patient_name_tokens=_split_values(row.name_tokens),
            mrn_values=_split_values(row.mrn_values),
        )
        for row in frame.itertuples(index=False)
    }
    logger.debug(msg=f"Loaded {len(lookups)} de-identification lookups from '{path}'.")
    return lookups


def write_lookup_table(*, lookups: list[DeidLookup], path: StrOrPath) -> pathlib.Path:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        data=[
            (
                lookup.report_id,
                MULTI_VALUE_SEPARATOR.join(lookup.patient_name_tokens),
                MULTI_VALUE_SEPARATOR.join(lookup.mrn_values),
            )
            for lookup in lookups
        ],
        columns=list(LOOKUP_COLUMNS),
    )
    frame.to_csv(path, index=False)
    return path
