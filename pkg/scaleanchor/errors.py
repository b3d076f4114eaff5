"""Exception types raised by scaleanchor.

Each error carries the process exit code used by the command line:
2 usage, 3 data/format, 4 numerical/stability.
"""


class ScaleAnchorError(Exception):
    exit_code = 1


class UsageError(ScaleAnchorError):
    exit_code = 2


class DataValidityError(ScaleAnchorError, ValueError):
    exit_code = 3


class ShapeError(ScaleAnchorError, ValueError):
    exit_code = 3


class SpectralIntegrityError(ScaleAnchorError, ValueError):
    exit_code = 3


class ConfigMismatchError(ScaleAnchorError):
    exit_code = 3


class FormatError(ScaleAnchorError):
    exit_code = 3

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedVersionError(FormatError):
    pass


class StabilityError(ScaleAnchorError):
    exit_code = 4

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class RolloutDivergenceError(StabilityError):
    pass


class TrainingError(ScaleAnchorError):
    exit_code = 4

    def __init__(self, message, epoch=None, step=None, parameter=None):
        super().__init__(message)
        self.epoch = epoch
        self.step = step
        self.parameter = parameter


class DiagnosticError(ScaleAnchorError):
    exit_code = 4
