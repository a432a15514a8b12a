"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class DeltaInterpError(Exception):
    exit_code = 1
    code = "ERROR"


class ConfigError(DeltaInterpError, ValueError):
    exit_code = 2
    code = "CONFIG"


class DimensionError(DeltaInterpError, ValueError):
    exit_code = 2
    code = "DIMENSION"


class ContractError(DeltaInterpError, ValueError):
    """A precondition of an operation was violated by the caller."""

    exit_code = 5
    code = "CONTRACT"


class DegenerateRotationError(DeltaInterpError, ValueError):
    exit_code = 3
    code = "DEGENERATE"


class DataError(DeltaInterpError, ValueError):
    exit_code = 3
    code = "DATA"


class IngestionError(DataError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class SamplingError(DataError):
    code = "SAMPLING"


class NumericError(DeltaInterpError, FloatingPointError):
    exit_code = 4
    code = "NUMERIC"


class UnsupportedTaskError(ContractError):
    exit_code = 5
    code = "UNSUPPORTED_TASK"
