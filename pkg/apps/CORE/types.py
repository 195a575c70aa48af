import pathlib
import typing

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel

StrOrPath: typing.TypeAlias = str | pathlib.Path
FloatArray: typing.TypeAlias = npt.NDArray[np.float64]
IntArray: typing.TypeAlias = npt.NDArray[np.int64]
ByteArray: typing.TypeAlias = npt.NDArray[np.uint8]
ProbTriple: typing.TypeAlias = tuple[float, float, float]
OrderKey: typing.TypeAlias = tuple[int, int, int, int]
SchemaType = typing.TypeVar("SchemaType", bound=BaseModel)
HyperParam: typing.TypeAlias = int | float | str | bool | None
