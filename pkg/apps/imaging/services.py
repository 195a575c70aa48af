"""Page image transformations and the six preprocessing recipes."""
import pathlib

import cv2
import numpy as np

from apps.CORE.exceptions import InvalidInputException
from apps.CORE.types import StrOrPath
from apps.imaging.enums import MorphOp
from apps.imaging.schemas import GrayImage, PrepRecipe
from loggers import get_logger

__all__ = (
    "to_grayscale",
    "morph",
    "adjust_contrast",
    "apply_recipe",
    "load_rgb_image",
    "load_gray_image",
    "save_gray_image",
    "preprocess_file",
)

logger = get_logger(name=__name__)

# ITU-R BT.601 luma weights for (R, G, B).
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)
CONTRAST_PIVOT = 128.0
RECIPE_KERNEL = 3
IMAGE_SUFFIXES = frozenset({".png", ".pgm", ".ppm", ".pnm"})


def to_grayscale(*, image: np.ndarray) -> GrayImage:
    """
    Convert an RGB raster to gray-scale with BT.601 luminance.

    Args:
        image (np.ndarray): (height, width, 3) array in RGB channel order; a (height, width) array is taken as
            already gray.

    Returns:
        GrayImage: round(0.299R + 0.587G + 0.114B) per pixel, clamped to [0, 255].

    Raises:
        InvalidInputException: zero-sized or wrongly shaped raster.

    Examples:
        >>> to_grayscale(image=np.array([[[255, 0, 0], [0, 255, 0]]], dtype=np.uint8)).data.tolist()
        [[76, 150]]
    """
    array = np.asarray(image)
    if array.size == 0 or 0 in array.shape:
        raise InvalidInputException(message="Image has a zero dimension.", data={"shape": list(array.shape)})
    if array.ndim == 2:
        return GrayImage(data=np.clip(array, 0, 255).astype(np.uint8))
    if array.ndim != 3 or array.shape[2] != 3:
        raise InvalidInputException(message="Expected an RGB raster.", data={"shape": list(array.shape)})
    luminance = np.rint(array.astype(np.float64) @ LUMA_WEIGHTS)
    return GrayImage(data=np.clip(luminance, 0, 255).astype(np.uint8))


def morph(*, image: GrayImage, op: MorphOp, kernel: int = RECIPE_KERNEL, iterations: int = 1) -> GrayImage:
    """
    Square-element gray-scale dilation (window max) or erosion (window min) with replicate-edge borders.

    Raises:
        InvalidInputException: even or non-positive kernel side, negative iterations.
    """
    if kernel < 1 or kernel % 2 == 0:
        raise InvalidInputException(message="Kernel side length must be odd and positive.", data={"kernel": kernel})
    if iterations < 0:
        raise InvalidInputException(message="Iterations must be non-negative.", data={"iterations": iterations})
    if iterations == 0 or kernel == 1:
        return GrayImage(data=image.data.copy())

    element = np.ones((kernel, kernel), dtype=np.uint8)
    operation = cv2.dilate if MorphOp(op) is MorphOp.DILATE else cv2.erode
    result = operation(image.data, element, iterations=iterations, borderType=cv2.BORDER_REPLICATE)
    return GrayImage(data=result)


def adjust_contrast(*, image: GrayImage, percent: int) -> GrayImage:
    """
    Linear contrast stretch about mid-gray: p' = clamp(round(128 + (1 + percent/100) * (p - 128)), 0, 255).

    Examples:
        >>> adjust_contrast(image=GrayImage(data=np.array([[200, 128]], dtype=np.uint8)), percent=20).data.tolist()
        [[214, 128]]
    """
    if percent < 0:
        raise InvalidInputException(message="Contrast percent must be non-negative.", data={"percent": percent})
    if percent == 0:
        return GrayImage(data=image.data.copy())
    factor = 1.0 + percent / 100.0
    stretched = np.rint(CONTRAST_PIVOT + factor * (image.data.astype(np.float64) - CONTRAST_PIVOT))
    return GrayImage(data=np.clip(stretched, 0, 255).astype(np.uint8))


def apply_recipe(*, image: GrayImage, recipe: PrepRecipe) -> GrayImage:
    """Dilate (3x3, once) then erode (3x3, once) when the recipe asks for it, then adjust contrast."""
    result = image
    if recipe.dilate_erode:
        result = morph(image=result, op=MorphOp.DILATE, kernel=RECIPE_KERNEL, iterations=1)
        result = morph(image=result, op=MorphOp.ERODE, kernel=RECIPE_KERNEL, iterations=1)
    if recipe.contrast_percent:
        result = adjust_contrast(image=result, percent=recipe.contrast_percent)
    if result is image:
        result = GrayImage(data=image.data.copy())
    return result


def load_rgb_image(*, path: StrOrPath) -> np.ndarray:
    """Read PNG / binary PGM / binary PPM into an RGB (or 2-D gray for PGM) array."""
    path = pathlib.Path(path)
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise InvalidInputException(message=f"Cannot read image '{path}'.", data={"path": str(path)})
    if raw.dtype != np.uint8:
        raise InvalidInputException(message="Only 8-bit images are supported.", data={"dtype": str(raw.dtype)})
    if raw.ndim == 3 and raw.shape[2] == 4:
        return cv2.cvtColor(raw, cv2.COLOR_BGRA2RGB)
    if raw.ndim == 3:
        return cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    return raw


def load_gray_image(*, path: StrOrPath) -> GrayImage:
    return to_grayscale(image=load_rgb_image(path=path))


def save_gray_image(*, image: GrayImage, path: StrOrPath) -> pathlib.Path:
    """Write PNG or binary PGM depending on the suffix."""
    path = pathlib.Path(path)
    if path.suffix.lower() not in IMAGE_SUFFIXES:
        raise InvalidInputException(message=f"Unsupported image suffix '{path.suffix}'.")
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), image.data):
        raise InvalidInputException(message=f"Cannot write image '{path}'.")
    return path


def preprocess_file(*, source: StrOrPath, recipe: PrepRecipe, destination: StrOrPath) -> GrayImage:
    """Load a page image, gray-scale it, apply `recipe` and write the result to `destination`."""
    image = apply_recipe(image=load_gray_image(path=source), recipe=recipe)
    save_gray_image(image=image, path=destination)
    logger.debug(msg=f"Preprocessed '{source}' with recipe '{recipe.name.value}' into '{destination}'.")
    return image
