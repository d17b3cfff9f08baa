"""Exception taxonomy mirrored by the CLI exit codes."""

from __future__ import annotations


class CurriculaError(Exception):
    """Base class for all package errors."""


class UsageError(CurriculaError):
    """Bad flags, bad config keys or values (CLI exit code 1)."""


class DataError(CurriculaError):
    """Unreadable, malformed, or inconsistent data inputs (CLI exit code 2)."""


class TrainingDiverged(CurriculaError):
    """Loss became non-finite during training (CLI exit code 3)."""

    def __init__(self, update_index: int):
        self.update_index = update_index
        super().__init__(f"training diverged: non-finite loss at update {update_index}")
