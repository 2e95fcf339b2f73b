class DeidError(Exception):
    """Base class for data and model errors (CLI exit code 2)."""


class ParseError(DeidError):
    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.line = line
        self.path = path


class UnknownLabelError(DeidError):
    def __init__(self, label, line=None):
        msg = f"unknown label {label!r}"
        if line is not None:
            msg = f"line {line}: {msg}"
        super().__init__(msg)
        self.label = label
        self.line = line


class SpanConflictError(DeidError):
    pass


class CheckpointError(DeidError):
    pass


class TrainingDiverged(DeidError):
    pass
