from enum import Enum

__all__ = ("PrepRecipeName", "MorphOp")


class PrepRecipeName(str, Enum):
    GRAY = "gray"  # baseline
    GRAY_DE = "gray_de"
    GRAY_C20 = "gray_c20"
    GRAY_C60 = "gray_c60"
    GRAY_DE_C20 = "gray_de_c20"  # recipe used by default
    GRAY_DE_C60 = "gray_de_c60"


class MorphOp(str, Enum):
    DILATE = "dilate"  # sliding-window maximum
    ERODE = "erode"  # sliding-window minimum
