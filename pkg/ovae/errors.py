"""Structured exceptions raised by the engines.

The CLI maps each family onto an exit code via ``exit_code``.
"""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UPSTREAM = 3
EXIT_NUMERIC = 4


class OvaeError(Exception):
    """Base class for every error raised by this package"""
    exit_code = EXIT_NUMERIC


class DimensionMismatchError(OvaeError, ValueError):
    def __init__(self, what: str, expected, got):
        super().__init__(f"{what}: expected {expected}, got {got}")
        self.what = what
        self.expected = expected
        self.got = got


class StaleCacheError(OvaeError):
    pass


class NonFiniteError(OvaeError, ValueError):
    def __init__(self, message: str, block: str = None):
        super().__init__(message)
        self.block = block


class UntrainedModelError(OvaeError):
    pass


class ConvergenceError(OvaeError):
    pass


class QpInfeasibleError(OvaeError):
    pass


class IllConditionedError(OvaeError):
    def __init__(self, condition: float, limit: float):
        super().__init__(f"Hessian is ill-conditioned: condition estimate {condition:.3e} exceeds {limit:.1e}")
        self.condition = condition
        self.limit = limit


class UnboundedLpError(OvaeError):
    pass


class ShortfallStateError(OvaeError, ValueError):
    pass


class NoShortfallError(OvaeError, ValueError):
    def __init__(self, message: str = "no shortfall states in pilot"):
        super().__init__(message)


class DataFormatError(OvaeError, ValueError):
    exit_code = EXIT_CONFIG

    def __init__(self, message: str, row: int = None, column: str = None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        suffix = f" ({', '.join(location)})" if location else ""
        super().__init__(f"{message}{suffix}")
        self.row = row
        self.column = column


class ConfigError(OvaeError, ValueError):
    exit_code = EXIT_CONFIG


class UpstreamArtifactError(OvaeError):
    exit_code = EXIT_UPSTREAM

    def __init__(self, artifact: str, producer: str):
        super().__init__(f"Missing upstream artifact '{artifact}': run `ovae {producer}` first")
        self.artifact = artifact
        self.producer = producer


class ConfigHashMismatchError(OvaeError):
    exit_code = EXIT_UPSTREAM

    def __init__(self, stage: str, expected: str, found: str):
        super().__init__(
            f"Stage '{stage}' was produced with config hash {found}, current config is {expected}; "
            f"re-run the stage or pass --force"
        )
        self.stage = stage
        self.expected = expected
        self.found = found
