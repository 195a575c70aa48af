"""Logging setup: console output for the CLI and one log file per experiment run."""
import copy
import datetime
import logging
import logging.config
import pathlib
import typing

import click

from settings import Settings

LOG_FORMAT = "{levelname} | {name}:{lineno} | {message} | ({asctime})"
LOG_FORMAT_COLORFUL = "{levelname} {message} | {name} | {asctime}"
LOG_FORMAT_RUN_FILE = "{asctime} | {levelname} | {name} | {message}"
DATE_TIME_FORMAT_ISO_8601 = "%Y-%m-%dT%H:%M:%S.%fZ"
DATE_TIME_FORMAT_WITHOUT_MICROSECONDS = "%Y-%m-%dT%H:%M:%SZ"
APPS_LOGGER = "apps"
RUN_FILE_HANDLER_NAME = "run_file_handler"
# Libraries that log per task or per import.
QUIET_LOGGERS = ("joblib", "numexpr", "PIL")


def _root_handlers() -> list[str]:
    """Colorful console output only in DEBUG mode with LOG_USE_COLORS, plain output otherwise."""
    if Settings.LOG_USE_COLORS and Settings.DEBUG:
        return ["colorful_handler"]
    return ["default_handler"]


LOGGING_CONFIG: dict[str, typing.Any] = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "default_formatter": {
            "()": "loggers.UTCFormatter",
            "fmt": LOG_FORMAT,
            "style": "{",
            "datefmt": DATE_TIME_FORMAT_WITHOUT_MICROSECONDS,
        },
        "colorful_formatter": {
            "()": "loggers.ColorfulFormatter",
            "fmt": LOG_FORMAT_COLORFUL,
            "datefmt": DATE_TIME_FORMAT_ISO_8601,
        },
    },
    "handlers": {
        "default_handler": {
            "class": "logging.StreamHandler",
            "level": "DEBUG",
            "formatter": "default_formatter",
            "stream": "ext://sys.stderr",
        },
        "colorful_handler": {
            "class": "logging.StreamHandler",
            "level": "DEBUG",
            "formatter": "colorful_formatter",
            "stream": "ext://sys.stderr",
        },
    },
    "root": {"level": Settings.LOG_LEVEL, "handlers": _root_handlers()},
    "loggers": {name: {"level": "WARNING"} for name in QUIET_LOGGERS},
}


def setup_logging() -> None:
    """Setup logging from dict configuration object."""
    logging.config.dictConfig(config=LOGGING_CONFIG)


def get_logger(name: str | None = APPS_LOGGER) -> logging.Logger:
    """Get logger instance by name.

    Args:
        name (str): Name of logger, usually the module's `__name__`.

    Returns:
        logging.Logger: Instance of logging.Logger

    Examples:
        from loggers import get_logger

        logger = get_logger(name=__name__)
        logger.info(msg="Split 40 reports: 24 train, 4 val, 12 test.")
    """
    return logging.getLogger(name=name)


def attach_run_log(path: pathlib.Path) -> logging.Handler:
    """Mirror every `apps.*` record of INFO and above into a per-run log file.

    Args:
        path (pathlib.Path): Log file location (usually `<workdir>/runs/<run id>/run.log`).

    Returns:
        logging.Handler: The attached handler; pass it to `detach_run_log` when the run finishes.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(filename=path, encoding="utf-8")
    handler.set_name(RUN_FILE_HANDLER_NAME)
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(UTCFormatter(fmt=LOG_FORMAT_RUN_FILE, datefmt=Settings.DATETIME_FORMAT, style="{"))
    apps_logger = get_logger(name=APPS_LOGGER)
    apps_logger.addHandler(handler)
    if apps_logger.level == logging.NOTSET or apps_logger.level > logging.INFO:
        apps_logger.setLevel(logging.INFO)
    return handler


def detach_run_log(handler: logging.Handler) -> None:
    """Remove handler created by `attach_run_log` and close its file."""
    get_logger(name=APPS_LOGGER).removeHandler(handler)
    handler.close()


def _format_time(record: logging.LogRecord, datefmt: str | None) -> str:
    date_time_utc = datetime.datetime.fromtimestamp(record.created, tz=datetime.timezone.utc)
    return date_time_utc.strftime(datefmt or DATE_TIME_FORMAT_ISO_8601)


class UTCFormatter(logging.Formatter):
    """Timestamps in UTC whatever the machine's time zone."""

    def formatTime(self, record: logging.LogRecord, datefmt: str | None = None) -> str:
        return _format_time(record=record, datefmt=datefmt)


class Styler:
    """click styles per log level."""

    _default_styles: dict[int, dict[str, typing.Any]] = {
        logging.DEBUG: {"fg": (121, 85, 72)},
        logging.INFO: {"fg": "bright_blue"},
        logging.WARNING: {"fg": "bright_yellow"},
        logging.ERROR: {"fg": "bright_red"},
        logging.CRITICAL: {"fg": (126, 87, 194), "bold": True, "underline": True},
    }

    def __init__(self, styles: dict[int, dict[str, typing.Any]] | None = None) -> None:
        self.styles = {**self._default_styles, **(styles or {})}

    def style(self, level: int, text: str) -> str:
        kwargs = self.styles.get(level)
        return click.style(text=text, **kwargs) if kwargs else text


class ColorfulFormatter(UTCFormatter):
    """Level-colored message and level name; the other fields in one accent color."""

    def __init__(
        self,
        fmt: str = LOG_FORMAT_COLORFUL,
        datefmt: str = DATE_TIME_FORMAT_ISO_8601,
        style: typing.Literal["%", "$", "{"] = "{",
        accent_color: str = "bright_cyan",
        styler: Styler | None = None,
    ) -> None:
        self.accent_color = accent_color
        self._styler = styler or Styler()
        super().__init__(fmt=fmt, datefmt=datefmt, style=style)

    def formatMessage(self, record: logging.LogRecord) -> str:
        styled = copy.copy(record)
        styled.message = self._styler.style(level=record.levelno, text=record.message)
        styled.levelname = self._styler.style(level=record.levelno, text=f"{record.levelname:<8}")
        for key in ("name", "asctime", "lineno", "funcName"):
            if hasattr(record, key):
                setattr(styled, key, click.style(text=str(getattr(record, key)), fg=self.accent_color))
        return super().formatMessage(record=styled)
