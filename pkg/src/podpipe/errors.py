"""Exception hierarchy shared by every pipeline stage.

Each error carries an ``exit_code`` used by the command-line front end:
2 usage/config, 3 mode-unavailable, 4 data-integrity.
"""

from __future__ import annotations


class PodPipeError(Exception):
    exit_code = 4


class ValidationError(PodPipeError, ValueError):
    """A value violates a documented precondition or invariant."""

    exit_code = 2

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class UnknownPlotError(PodPipeError, KeyError):
    def __init__(self, plot_id: int):
        self.plot_id = plot_id
        super().__init__(plot_id)

    def __str__(self) -> str:
        return f"unknown plot id {self.plot_id}"


class FileFormatError(PodPipeError):
    """Base for errors that point at a location inside a collection file."""

    def __init__(self, path: str, line: int | None, message: str):
        self.path = str(path)
        self.line = line
        self.message = message
        where = self.path if line is None else f"{self.path}:{line}"
        super().__init__(f"{where}: {message}")


class MissingFileError(FileFormatError, FileNotFoundError):
    def __init__(self, path: str):
        FileFormatError.__init__(self, path, None, "required file not found")


class ParseError(FileFormatError):
    pass


class IntegrityError(FileFormatError):
    pass


class ModeUnavailableError(PodPipeError):
    exit_code = 3


class SegmentationMismatchError(PodPipeError):
    def __init__(self, side: str, expected: int, found: int):
        self.side = side
        self.expected = expected
        self.found = found
        super().__init__(
            f"{side} side: expected {expected} plant runs, found {found}"
        )


class EmptySelectionError(PodPipeError):
    def __init__(self, plot_id: int, side: str | None = None):
        self.plot_id = plot_id
        self.side = side
        super().__init__(f"no frames available for plot {plot_id} ({side})")


class UnsupportedFrameError(PodPipeError):
    pass


class DuplicateSideError(PodPipeError):
    pass


class DegenerateSeriesError(PodPipeError, ValueError):
    def __init__(self, coordinate: str):
        self.coordinate = coordinate
        super().__init__(f"zero variance in {coordinate}")


class InsufficientDataError(PodPipeError, ValueError):
    def __init__(self, n: int, needed: int):
        self.n = n
        self.needed = needed
        super().__init__(f"need at least {needed} records, got {n}")


class ConfigError(PodPipeError):
    """Bad command-line usage, configuration, or user-supplied path."""

    exit_code = 2
