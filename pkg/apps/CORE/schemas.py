import datetime
import pathlib

import numpy as np
import orjson
from pydantic import BaseModel, Extra

from apps.CORE.utils import orjson_dumps


class BaseInSchema(BaseModel):
    """Base schema for validated pipeline inputs (configs, records read from disk)."""

    class Config:
        """Schema configuration."""

        arbitrary_types_allowed = True
        allow_population_by_field_name = True
        smart_union = True


class BaseOutSchema(BaseInSchema):
    """Base schema for pipeline artifacts written to disk."""

    class Config(BaseInSchema.Config):
        """Schema configuration."""

        json_encoders = {
            # field type: encoder function
            datetime.datetime: lambda date_time: date_time.isoformat(),
            pathlib.Path: str,
            np.ndarray: lambda array: array.tolist(),
        }
        json_dumps = orjson_dumps
        json_loads = orjson.loads


class FrozenSchema(BaseOutSchema):
    """Immutable artifact; derive changed copies with `.copy(update=...)`."""

    class Config(BaseOutSchema.Config):
        allow_mutation = False


class ConfigSchema(BaseInSchema):
    """Base schema for user-written configuration; unknown keys are rejected."""

    class Config(BaseInSchema.Config):
        extra = Extra.forbid
