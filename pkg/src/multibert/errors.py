"""Exception types shared across the pipeline.

Every error raised on purpose by this package derives from PipelineError so
the CLI can map failures to a nonzero exit code with a one-line message.
"""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class EmptyCorpusError(PipelineError):
    """A corpus file yielded zero well-formed records."""


class FormatError(PipelineError):
    """A binary or text artifact violates its documented layout."""


class ShapeError(PipelineError):
    """Vector/matrix dimensions do not match what the operation requires."""


class ConfigError(PipelineError):
    """Invalid, missing, or infeasible configuration value."""


class ContractError(PipelineError):
    """A documented precondition was violated by the caller."""


class NotFoundError(PipelineError):
    """A requested id is not present in the index or corpus."""


class EmptyDocumentError(PipelineError):
    """A document with no sentences reached a stage that requires content."""


class ZeroVectorError(PipelineError):
    """Cosine similarity is undefined for a zero-norm vector."""


class EmptyVocabularyError(PipelineError):
    """Vectorizing produced no terms (every document tokenized to nothing)."""


class TrainingDivergedError(PipelineError):
    """A non-finite loss or gradient appeared during training."""
