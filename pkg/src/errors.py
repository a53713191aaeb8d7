"""Exceptions raised by the estimators and the exit codes the CLI maps them to."""

EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 1
EXIT_USAGE = 2
EXIT_ESTIMATION_FAILED = 3


class VmmError(Exception):
    """Base class for every error raised by this package"""
    exit_code = EXIT_ESTIMATION_FAILED


class ConfigError(VmmError):
    exit_code = EXIT_USAGE


class DataError(VmmError):
    """Malformed input data; carries the 1-based file line when known"""
    exit_code = EXIT_USAGE

    def __init__(self, message: str, line: int = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionMismatch(VmmError, ValueError):
    exit_code = EXIT_USAGE


class DegenerateData(VmmError):
    pass


class MalformedRecord(VmmError, ValueError):
    exit_code = EXIT_USAGE


class ZeroBehaviorProbability(VmmError):
    pass


class DegenerateInstrument(VmmError):
    pass


class AllJittersFailed(VmmError):
    pass


class OptimizerDiverged(VmmError):
    pass


class SingularV(VmmError):
    pass
