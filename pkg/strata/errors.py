"""Exception hierarchy shared by the library and the CLI.

Every error carries a stable ``code`` that the CLI prints as
``error[<code>]: <message>`` before exiting nonzero.
"""


class StrataError(Exception):
    code = 'E_STRATA'


class DimensionError(StrataError, ValueError):
    code = 'E_DIM'


class ValidationError(StrataError, ValueError):
    code = 'E_VALIDATION'


class UsageError(StrataError):
    code = 'E_USAGE'


class ConfigError(StrataError, ValueError):
    code = 'E_CONFIG'


class DatasetParseError(StrataError):
    code = 'E_PARSE'

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class CheckpointError(StrataError):
    code = 'E_CHECKPOINT'


class CheckpointIntegrityError(CheckpointError):
    code = 'E_INTEGRITY'


class CheckpointConfigMismatch(CheckpointError):
    code = 'E_CONFIG_MISMATCH'


class TrainingDivergedError(StrataError):
    code = 'E_DIVERGED'

    def __init__(self, epoch: int, stack_id: str, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, stack {stack_id}")
        self.epoch = epoch
        self.stack_id = stack_id


class BenchmarkGateError(StrataError):
    code = 'E_GATE'


class GradCheckFailed(StrataError):
    code = 'E_GRADCHECK'
