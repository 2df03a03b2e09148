"""Export runs: corpus -> sentence dump -> batched inference -> .semb file.

Two modes share the machinery:

  export_embeddings           one vector per sentence
  export_document_embeddings  one vector per book (sentences joined, the
                              whole document encoded as a single input)

Each run also writes ``<output>.manifest.json`` recording the model
identifier, resolved revision, vector dimension, corpus digest, and what
was skipped — enough to reproduce or audit the file.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from .errors import DimensionDriftError
from .job import ExportJob
from .models import EncoderHandle, resolve_model
from .semb import write_semb
from .sentences import SPLITTER_CLI, corpus_book_ids, dump_sentences

log = logging.getLogger("semb_exporter")


def _corpus_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _gather(job: ExportJob, cli: str) -> tuple[list[tuple[str, list[str]]], list[str]]:
    """(kept book -> sentences in corpus order, skipped zero-sentence ids)."""
    by_book = dump_sentences(job.corpus, cli=cli)
    kept: list[tuple[str, list[str]]] = []
    skipped: list[str] = []
    for book_id in corpus_book_ids(job.corpus):
        sentences = by_book.get(book_id, [])
        if job.max_sentences_per_document is not None:
            sentences = sentences[: job.max_sentences_per_document]
        if sentences:
            kept.append((book_id, sentences))
        else:
            skipped.append(book_id)
            log.warning("skipping %r: no sentences to embed", book_id)
    return kept, skipped


def _embed_all(handle: EncoderHandle, texts: list[str], batch_size: int) -> np.ndarray:
    """Batched inference with a per-batch dimension check."""
    parts = []
    dim: int | None = None
    for start in range(0, len(texts), batch_size):
        batch = handle.embed_batch(texts[start : start + batch_size])
        if dim is None:
            dim = int(batch.shape[1])
        elif batch.shape[1] != dim:
            raise DimensionDriftError(
                f"encoder emitted dim {batch.shape[1]} after starting with {dim} "
                f"(batch at sentence {start})"
            )
        parts.append(batch)
    if not parts:
        return np.zeros((0, handle.dim), dtype=np.float32)
    return np.concatenate(parts)


def _write_manifest(job: ExportJob, handle: EncoderHandle, mode: str,
                    records: list[tuple[str, np.ndarray]], skipped: list[str], dim: int) -> None:
    manifest = {
        "model": handle.identifier,
        "revision": handle.revision,
        "dim": dim,
        "corpus": str(job.corpus),
        "corpus_digest": _corpus_digest(job.corpus),
        "mode": mode,
        "records": len(records),
        "sentences": int(sum(v.shape[0] for _, v in records)),
        "skipped": skipped,
    }
    job.manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def export_embeddings(
    job: ExportJob, *, handle: EncoderHandle | None = None, cli: str = SPLITTER_CLI
) -> dict:
    """One vector per sentence; returns the manifest dict."""
    kept, skipped = _gather(job, cli)
    if handle is None:
        handle = resolve_model(job.model, job.revision, job.device)

    flat = [s for _, sentences in kept for s in sentences]
    vectors = _embed_all(handle, flat, job.batch_size)
    records = []
    row = 0
    for book_id, sentences in kept:
        records.append((book_id, vectors[row : row + len(sentences)]))
        row += len(sentences)

    dim = write_semb(job.output, records) or handle.dim
    _write_manifest(job, handle, "sentences", records, skipped, dim)
    return json.loads(job.manifest_path.read_text(encoding="utf-8"))


def export_document_embeddings(
    job: ExportJob, *, handle: EncoderHandle | None = None, cli: str = SPLITTER_CLI
) -> dict:
    """One vector per book: the joined sentences encoded as a single input."""
    kept, skipped = _gather(job, cli)
    if handle is None:
        handle = resolve_model(job.model, job.revision, job.device)

    documents = [" ".join(sentences) for _, sentences in kept]
    vectors = _embed_all(handle, documents, job.batch_size)
    records = [(book_id, vectors[i : i + 1]) for i, (book_id, _) in enumerate(kept)]

    dim = write_semb(job.output, records) or handle.dim
    _write_manifest(job, handle, "document", records, skipped, dim)
    return json.loads(job.manifest_path.read_text(encoding="utf-8"))
