import numpy as np
from pydantic import Field, root_validator, validator

from apps.CORE.schemas import FrozenSchema
from apps.imaging.enums import PrepRecipeName

__all__ = ("GrayImage", "PrepRecipe", "RECIPES")


class GrayImage(FrozenSchema):
    """8-bit gray-scale raster, `data` is a (height, width) row-major array."""

    data: np.ndarray = Field(default=...)

    @validator("data", pre=True)
    def validate_data(cls, v: np.ndarray) -> np.ndarray:
        array = np.asarray(v)
        if array.ndim != 2:
            raise ValueError(f"Gray image must be 2-D, got shape {array.shape}")
        if array.dtype != np.uint8:
            if array.size and (array.min() < 0 or array.max() > 255):
                raise ValueError("Intensities must lie within [0, 255]")
            array = array.astype(np.uint8)
        return np.ascontiguousarray(array)

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    def same_pixels(self, other: "GrayImage") -> bool:
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))


class PrepRecipe(FrozenSchema):
    name: PrepRecipeName
    dilate_erode: bool
    contrast_percent: int = Field(ge=0)

    @root_validator(skip_on_failure=True)
    def validate_bijection(cls, values: dict) -> dict:
        """A recipe name fixes its flags, so hand-built recipes cannot drift from the table."""
        expected = _RECIPE_FLAGS[values["name"]]
        if (values["dilate_erode"], values["contrast_percent"]) != expected:
            raise ValueError(
                f"Recipe '{values['name'].value}' must be dilate_erode={expected[0]}, "
                f"contrast_percent={expected[1]}"
            )
        return values

    @classmethod
    def from_name(cls, name: PrepRecipeName | str) -> "PrepRecipe":
        return RECIPES[PrepRecipeName(name)]


_RECIPE_FLAGS: dict[PrepRecipeName, tuple[bool, int]] = {
    PrepRecipeName.GRAY: (False, 0),
    PrepRecipeName.GRAY_DE: (True, 0),
    PrepRecipeName.GRAY_C20: (False, 20),
    PrepRecipeName.GRAY_C60: (False, 60),
    PrepRecipeName.GRAY_DE_C20: (True, 20),
    PrepRecipeName.GRAY_DE_C60: (True, 60),
}
RECIPES: dict[PrepRecipeName, PrepRecipe] = {
    name: PrepRecipe(name=name, dilate_erode=flags[0], contrast_percent=flags[1])
    for name, flags in _RECIPE_FLAGS.items()
}
