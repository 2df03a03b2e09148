class ExportError(Exception):
    """Base for everything this package raises on purpose."""


class JobError(ExportError):
    """The job file is missing, malformed, or violates a field contract."""


class ModelResolutionError(ExportError):
    """The model identifier or pinned revision cannot be satisfied."""


class DimensionDriftError(ExportError):
    """The encoder emitted vectors of a different width mid-run."""


class SplitterError(ExportError):
    """The sentence-dump subprocess failed or produced unparsable output."""
