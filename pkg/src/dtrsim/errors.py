"""Exception hierarchy shared by the simulator modules."""


class DTRError(Exception):
    """Base class for all simulator errors."""


class MalformedLogError(DTRError):
    """A log (or an instruction fed to the runtime) violates the log contract.

    ``line`` is the 1-based source line when known, ``column`` the 1-based
    column reported by the JSON decoder (or 1 for semantic errors).
    """

    def __init__(self, message, line=None, column=None):
        if line is not None and column is None:
            column = 1
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


class OutOfMemory(DTRError):
    """The budget cannot be met: every evictable storage is gone."""


class ThrashAbort(DTRError):
    """Replay aborted by the runaway-compute kill switch."""


class InvariantError(DTRError):
    """Internal state became inconsistent. Always a simulator bug."""
