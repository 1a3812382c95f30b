class NfvcError(Exception):
    exit_code = 1


class ConfigError(NfvcError):
    exit_code = 2


class DataError(NfvcError):
    exit_code = 3


class ShapeError(DataError):
    pass


class ConditioningError(DataError):
    pass


class FormatError(DataError):
    pass


class NumericError(NfvcError):
    exit_code = 4


class FlowError(NumericError):
    pass


class TrainingAborted(NumericError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report
