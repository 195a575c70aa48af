import typer
from pydantic import ValidationError

from apps.CORE.enums import ErrorKind
from apps.CORE.exceptions import PipelineException
from loggers import get_logger
from settings import Settings

logger = get_logger(name=__name__)

# Process exit codes per error kind (1 is left to typer/click usage errors).
EXIT_CODES: dict[ErrorKind, int] = {
    ErrorKind.INVALID_INPUT: 2,
    ErrorKind.PARSE: 3,
    ErrorKind.ENVIRONMENT: 4,
    ErrorKind.ENGINE: 5,
    ErrorKind.NUMERIC: 6,
    ErrorKind.DEGENERATE: 7,
    ErrorKind.CONFIG: 8,
    ErrorKind.INTERNAL: 9,
}


def pipeline_exception_handler(exc: PipelineException) -> typer.Exit:
    """
    Handler for PipelineException raised inside a CLI command.

    Args:
        exc (PipelineException): Error that a pipeline stage raises.

    Returns:
        result (typer.Exit): Exit with the code mapped from the error kind (message echoed to stderr).
    """
    logger.error(msg=repr(exc))
    stage = f"[{exc.stage}] " if exc.stage else ""
    typer.secho(message=f"{stage}{exc.kind.value}: {exc.message}", fg=typer.colors.RED, err=True)
    if Settings.DEBUG and exc.data is not None:
        typer.secho(message=f"data: {exc.data}", err=True)
    return typer.Exit(code=EXIT_CODES.get(exc.kind, 1))


def validation_exception_handler(exc: ValidationError) -> typer.Exit:
    """
    Handler for pydantic ValidationError (bad config files, bad records). Each error is echoed on its own line.

    Args:
        exc (ValidationError): Error that Pydantic raises (in case of validation error).

    Returns:
        result (typer.Exit): Exit with the `config` error code.
    """
    for error in exc.errors():
        location = ".".join(str(part) for part in error["loc"])
        typer.secho(message=f"config: {location}: {error['msg'].capitalize()}.", fg=typer.colors.RED, err=True)
    return typer.Exit(code=EXIT_CODES[ErrorKind.CONFIG])
