"""Exception hierarchy shared by the library and the command line."""

from typing import Optional


class WorkbenchError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 2


class ParseError(WorkbenchError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        super().__init__(f"{message} (line {line}, column {column})")


class ProjectionUndefined(WorkbenchError):
    def __init__(self, message: str, diff: Optional[list] = None):
        self.diff = diff or []
        super().__init__(message)


class TypingError(WorkbenchError):
    def __init__(self, rule: str, message: str, location: str = ""):
        self.rule = rule
        self.message = message
        self.location = location
        text = f"[{rule}] {message}"
        if location:
            text += f" at {location}"
        super().__init__(text)


class NotGoverned(WorkbenchError):
    pass


class WorkspaceError(WorkbenchError):
    pass


class UnresolvedName(WorkbenchError):
    exit_code = 3

    def __init__(self, kind: str, name: str):
        self.kind = kind
        self.name = name
        super().__init__(f"unresolved {kind} '{name}'")


class UnfoldBoundExceeded(WorkbenchError):
    exit_code = 4
