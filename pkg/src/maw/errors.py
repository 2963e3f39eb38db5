"""Exception types shared across the package."""


class MawError(Exception):
    """Base class for all package errors."""


class EmptyInputError(MawError):
    pass


class UnsortedInputError(MawError):
    pass


class DeviceMismatchError(MawError):
    pass


class EmptyCohortError(MawError):
    pass


class UsageError(MawError):
    """Invalid invocation (wrong arity, bad option combination)."""


class RecordParseError(MawError):
    """Malformed input row; carries the file and 1-based line number."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class WorkflowError(MawError):
    """Workflow failed validation; carries the diagnostics list."""

    def __init__(self, diagnostics):
        super().__init__("; ".join(f"{d.code}: {d.message}" for d in diagnostics))
        self.diagnostics = list(diagnostics)
