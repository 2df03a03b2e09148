"""Real sentence embeddings for the recommendation pipeline.

Splits a corpus with the pipeline's own CLI, runs a sentence-encoder model
over every sentence (or whole document), and writes the shared ``.semb``
byte format plus a reproducibility manifest.
"""

from .errors import (
    DimensionDriftError,
    ExportError,
    JobError,
    ModelResolutionError,
    SplitterError,
)
from .export import export_document_embeddings, export_embeddings
from .job import ExportJob, load_job
from .models import EncoderHandle, create_reference_model, directory_digest, resolve_model
from .semb import write_semb

__all__ = [
    "DimensionDriftError",
    "EncoderHandle",
    "ExportError",
    "ExportJob",
    "JobError",
    "ModelResolutionError",
    "SplitterError",
    "create_reference_model",
    "directory_digest",
    "export_document_embeddings",
    "export_embeddings",
    "load_job",
    "resolve_model",
    "write_semb",
]
