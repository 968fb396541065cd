"""Exception hierarchy. Each top-level family maps to a distinct CLI exit code."""


class NoisySplitError(Exception):
    exit_code = 1


class ConfigError(NoisySplitError, ValueError):
    exit_code = 2


class DimensionError(ConfigError):
    pass


class ScheduleError(ConfigError):
    pass


class DataError(NoisySplitError):
    exit_code = 3


class LabelError(DataError, ValueError):
    pass


class FormatError(DataError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class CheckpointError(DataError):
    pass


class AuditError(NoisySplitError):
    exit_code = 4

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
