"""Exception types shared across the toolkit."""


class HyocError(Exception):
    """Base class for all toolkit errors."""


class SizeLimitError(HyocError):
    """A combinatorial operation would exceed its hard size cap."""


class OutOfDomainError(HyocError):
    """A point lies outside the system domain."""

    def __init__(self, message: str, step: int | None = None, point=None):
        super().__init__(message)
        self.step = step
        self.point = point
