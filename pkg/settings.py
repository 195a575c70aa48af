import functools
import logging
import pathlib

from pydantic import BaseSettings, Extra, Field

from apps.CORE.enums import DeidPolicy, OCRBackend

PROJECT_BASE_DIR = pathlib.Path(__file__).resolve().parent


class MainSettings(BaseSettings):
    # Pipeline settings
    DEBUG: bool = Field(default=False)
    SHOW_SETTINGS: bool = Field(default=False)
    DATETIME_FORMAT: str = Field(default="%Y-%m-%d %H:%M:%S")
    WORKDIR: pathlib.Path = Field(default=PROJECT_BASE_DIR / "workdir")
    JOBS: int = Field(default=1, ge=1)
    SEED: int = Field(default=0)
    # Logging settings
    LOG_LEVEL: int = Field(default=logging.WARNING)
    LOG_USE_COLORS: bool = Field(default=False)
    # OCR engine settings (`SCANDOC_OCR_CMD` overrides the engine invocation)
    OCR_BACKEND: OCRBackend = Field(default=OCRBackend.TESSERACT)
    OCR_CMD: str = Field(default="tesseract")
    OCR_EXTRA_FLAGS: list[str] = Field(default=[])
    OCR_TIMEOUT_SECONDS: float = Field(default=120.0, gt=0)
    # De-identification settings
    DEID_POLICY: DeidPolicy = Field(default=DeidPolicy.STRICT)
    # Segmentation & features settings
    SEGMENT_RADIUS: int = Field(default=10, ge=0)
    LABEL_EPSILON: float = Field(default=1e-6, ge=0)
    VOCAB_CAP: int = Field(default=400, ge=1)
    SCALE_STRUCTURED: bool = Field(default=True)
    # Neural training settings
    KEEP_EPOCH_CHECKPOINTS: bool = Field(default=False)

    class Config(BaseSettings.Config):
        extra = Extra.ignore
        env_file = ".env"
        env_file_encoding = "UTF-8"
        env_prefix = "SCANDOC_"
        env_nested_delimiter = "__"


@functools.lru_cache()
def get_settings() -> MainSettings:
    return MainSettings()


Settings: MainSettings = get_settings()

if Settings.DEBUG and Settings.SHOW_SETTINGS:
    import pprint  # noqa

    pprint.pprint(Settings.dict())
