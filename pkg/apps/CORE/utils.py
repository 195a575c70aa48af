import datetime
import functools
import hashlib
import pathlib
import typing
import zoneinfo
from typing import Any

import numpy as np
import orjson
from pydantic import BaseModel

from apps.CORE.types import StrOrPath

ORJSON_OPTIONS = orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_NON_STR_KEYS


@functools.lru_cache()
def get_utc_timezone() -> zoneinfo.ZoneInfo:
    """Return UTC zone info."""
    return zoneinfo.ZoneInfo(key="UTC")


def utc_now() -> datetime.datetime:
    """Return current datetime with UTC zone info."""
    return datetime.datetime.now(tz=get_utc_timezone())


def get_timestamp(v: datetime.datetime) -> float:
    """Extract timestamp from datetime object and round for 3 decimal digits."""
    return round(v.timestamp() * 1000, 3)


def _default(obj: Any) -> Any:
    """Fallback encoder for objects orjson does not know."""
    if isinstance(obj, BaseModel):
        return orjson.loads(obj.json())
    if isinstance(obj, pathlib.Path):
        return str(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"Type is not JSON serializable: {type(obj).__name__}")


def orjson_dumps(v: Any, *, default: typing.Any = None) -> str:
    # orjson.dumps returns bytes, to match standard json.dumps we need to decode
    return orjson.dumps(v, default=default or _default, option=ORJSON_OPTIONS).decode(encoding="utf-8")


def content_hash(obj: Any) -> str:
    """Stable sha256 of a JSON-serializable object (keys sorted)."""
    payload = orjson.dumps(obj, default=_default, option=ORJSON_OPTIONS | orjson.OPT_SORT_KEYS)
    return hashlib.sha256(payload).hexdigest()


def bytes_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def derive_rng(seed: int, *keys: str | int) -> np.random.Generator:
    """Independent, reproducible random stream for (seed, *keys).

    Examples:
        >>> a = derive_rng(7, "R00001").random()
        >>> b = derive_rng(7, "R00001").random()
        >>> a == b
        True
    """
    entropy = [int(seed)]
    for key in keys:
        digest = hashlib.sha256(str(key).encode(encoding="utf-8")).digest()
        entropy.append(int.from_bytes(digest[:8], byteorder="little"))
    return np.random.default_rng(np.random.SeedSequence(entropy=entropy))


def write_json(path: StrOrPath, obj: Any) -> pathlib.Path:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(orjson.dumps(obj, default=_default, option=ORJSON_OPTIONS | orjson.OPT_INDENT_2))
    return path


def read_json(path: StrOrPath) -> Any:
    return orjson.loads(pathlib.Path(path).read_bytes())


def write_jsonl(path: StrOrPath, rows: typing.Iterable[Any]) -> pathlib.Path:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open(mode="wb") as stream:
        for row in rows:
            stream.write(orjson.dumps(row, default=_default, option=ORJSON_OPTIONS))
            stream.write(b"\n")
    return path


def read_jsonl(path: StrOrPath) -> list[Any]:
    with pathlib.Path(path).open(mode="rb") as stream:
        return [orjson.loads(line) for line in stream if line.strip()]
