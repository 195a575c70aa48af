import functools
import typing

from apps.CORE.enums import ErrorKind

ExceptionData: typing.TypeAlias = typing.Union[None, int, float, str, list[typing.Any], dict[str, typing.Any]]


class PipelineException(Exception):
    """Exception for pipeline stages with a machine-readable kind.

    Examples:
        >>> raise PipelineException(kind=ErrorKind.INVALID_INPUT, data={"kernel": 4},
        ... message="Kernel size must be odd.", stage="image_prep")
    """

    default_kind: ErrorKind = ErrorKind.INVALID_INPUT

    def __init__(
        self,
        *,
        kind: ErrorKind | None = None,
        data: ExceptionData = None,
        message: str,
        stage: str | None = None,
    ):
        """
        Initializer for PipelineException.

        Keyword Args:
            kind (ErrorKind): category of failure, defaults to the class' `default_kind`.
            data: any detail or data for this exception.
            message (str): any text detail for this exception.
            stage (str): pipeline stage that raised (filled in by the runner when missing).
        """
        self.kind = kind or self.default_kind
        self.data = data
        self.message = message
        self.stage = stage
        super().__init__(message)

    def __repr__(self) -> str:
        """Representation for PipelineException."""
        return (
            f'{self.__class__.__name__}(kind={self.kind}, data={self.data}, message="{self.message}", '
            f"stage={self.stage})"
        )

    def __str__(self) -> str:
        """String representation for PipelineException."""
        return self.__repr__()

    def __reduce__(self) -> tuple[typing.Any, ...]:
        """Keyword-only initializer, so errors raised in worker processes pickle back intact."""
        rebuild = functools.partial(
            self.__class__, kind=self.kind, data=self.data, message=self.message, stage=self.stage
        )
        return rebuild, ()

    def dict(self) -> typing.Dict[str, typing.Any]:
        """Converts PipelineException to python dict. Used for failed RunRecords and CLI output."""
        return {
            "kind": self.kind.value if isinstance(self.kind, ErrorKind) else self.kind,
            "data": self.data,
            "message": self.message,
            "stage": self.stage,
        }


class InvalidInputException(PipelineException):
    default_kind = ErrorKind.INVALID_INPUT


class ParseException(PipelineException):
    default_kind = ErrorKind.PARSE


class UnparseableCandidateException(ParseException):
    """Numeric candidate token that cannot be read as a decimal (e.g. `1.2.3`)."""


class EngineNotFoundException(PipelineException):
    default_kind = ErrorKind.ENVIRONMENT


class EngineException(PipelineException):
    default_kind = ErrorKind.ENGINE


class NumericException(PipelineException):
    default_kind = ErrorKind.NUMERIC


class DegenerateStatisticException(PipelineException):
    default_kind = ErrorKind.DEGENERATE


class ConfigException(PipelineException):
    default_kind = ErrorKind.CONFIG


class InternalException(PipelineException):
    """Unexpected error inside a stage, wrapped so the run can record it."""

    default_kind = ErrorKind.INTERNAL
