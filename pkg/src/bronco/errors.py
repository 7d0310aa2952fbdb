"""Exception types shared across the pipeline."""


class BroncoError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(BroncoError):
    """A volume file could not be read or written; the message names the field."""


class ParameterError(BroncoError):
    """An operation was called with inputs that violate its contract."""


class DegenerateDataError(BroncoError):
    """Input data carries no usable signal (e.g. all samples identical)."""


class UnrepairableLeakError(BroncoError):
    """Controlled erosion failed to split a leaking segmentation.

    Carries the number of erosions that were performed before giving up,
    so the caller can log it alongside the node removal.
    """

    def __init__(self, erosions: int):
        super().__init__(f"unrepairable leak: no split after {erosions} erosions")
        self.erosions = erosions


class PipelineError(BroncoError):
    """A pipeline stage failed; the message names the stage and cause."""
