"""Utils with Enums."""
import enum


class ErrorKind(str, enum.Enum):
    """Enum based class to set type of pipeline errors."""

    INVALID_INPUT = "invalid_input"
    PARSE = "parse"
    ENVIRONMENT = "environment"  # external tool missing
    ENGINE = "engine"  # external tool failed
    NUMERIC = "numeric"
    DEGENERATE = "degenerate"  # statistic undefined for this input
    CONFIG = "config"
    INTERNAL = "internal"  # unexpected failure inside a stage


class Label(str, enum.Enum):
    """Three-way class of a numeric candidate."""

    AHI = "AHI"
    SAO2 = "SaO2"
    OTHER = "Other"


# Fixed class order of every probability triple.
CLASS_ORDER: tuple[Label, Label, Label] = (Label.AHI, Label.SAO2, Label.OTHER)
TARGET_LABELS: tuple[Label, Label] = (Label.AHI, Label.SAO2)


class OCRBackend(str, enum.Enum):
    TESSERACT = "tesseract"
    MOCK = "mock"


class DeidPolicy(str, enum.Enum):
    STRICT = "strict"  # missing lookup is an error
    LENIENT = "lenient"  # missing lookup scrubs dates only


class RunStatus(str, enum.Enum):
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"
