"""Exception hierarchy; each class maps to one CLI exit code."""


class PipelineError(Exception):
    exit_code = 1


class ConfigError(PipelineError, ValueError):
    exit_code = 2


class DataError(PipelineError, ValueError):
    exit_code = 3


class InvariantError(PipelineError, AssertionError):
    exit_code = 4
