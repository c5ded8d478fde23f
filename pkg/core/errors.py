from typing import Any, Optional, Sequence


class MagikError(Exception):
    """Base error for the workbench. `exit_code` is what the CLI exits with."""

    exit_code = 1

    def __init__(self, message: str, **details: Any):
        self.message = message
        self.details = details
        super().__init__(message)


class ConfigError(MagikError):

    exit_code = 2

    def __init__(self, message: str, field_errors: Optional[Sequence[str]] = None):
        self.field_errors = list(field_errors or [])
        super().__init__(message, field_errors=self.field_errors)


class MissingArtifactError(MagikError):

    exit_code = 3

    def __init__(self, artifact: str, producer: Optional[str] = None):
        self.artifact = artifact
        self.producer = producer
        hint = f", run {producer} first" if producer else ""
        super().__init__(f"Missing artifact '{artifact}'{hint}", artifact=artifact, producer=producer)


class DivergenceError(MagikError):
    """Raised when a training loss turns non-finite."""

    exit_code = 4

    def __init__(self, message: str, step: Optional[int] = None, batch_indices: Optional[Sequence[int]] = None):
        self.step = step
        self.batch_indices = list(batch_indices) if batch_indices is not None else None
        super().__init__(message, step=step, batch_indices=self.batch_indices)


class ContainerError(MagikError):
    exit_code = 5


class ContainerFormatError(ContainerError):
    exit_code = 5


class ContainerVersionError(ContainerError):
    exit_code = 6

    def __init__(self, message: str, found: tuple, supported: tuple):
        self.found = found
        self.supported = supported
        super().__init__(message, found=found, supported=supported)


class ContainerChecksumError(ContainerError):
    exit_code = 7

    def __init__(self, message: str, section: str):
        self.section = section
        super().__init__(message, section=section)


class ContainerTruncatedError(ContainerError):
    exit_code = 8


class InvalidActionError(MagikError):
    pass


class ShapeMismatchError(MagikError):

    def __init__(self, message: str, actual: Optional[tuple] = None, expected: Optional[tuple] = None):
        self.actual = actual
        self.expected = expected
        super().__init__(message, actual=actual, expected=expected)


class SpecMismatchError(MagikError):
    pass


class UnsupportedActionSpecError(MagikError):
    pass


class LabelBudgetError(MagikError):
    pass


class NonFiniteError(MagikError):
    pass


class InvalidTemperatureError(MagikError):
    pass


class SimplexError(MagikError):
    pass


class HsicInputError(MagikError):
    pass


class TraversalError(MagikError):
    pass


class RuleError(MagikError):
    pass
