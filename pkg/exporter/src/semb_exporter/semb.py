"""Writer for the ``.semb`` interchange layout (little-endian throughout):

    "SEMB" | u32 version | u32 dim | u64 record count
    per record: u32 id length | UTF-8 book id | u32 sentence count
                | count x dim float32, row-major

This mirrors the consuming pipeline's documented reader contract; the test
suite round-trips every export through that reader to keep the two
implementations pinned together.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ExportError

MAGIC = b"SEMB"
VERSION = 1


def write_semb(path: str | Path, records: list[tuple[str, np.ndarray]]) -> int:
    """Write (book_id, (n_sentences, dim) float32) records; returns dim.

    All records must share one dimension; an empty list writes a
    header-only file with dim 0.
    """
    dim = 0
    for book_id, vectors in records:
        if vectors.ndim != 2:
            raise ExportError(f"{book_id!r}: vectors must be 2-d, got shape {vectors.shape}")
        if dim == 0:
            dim = int(vectors.shape[1])
        if vectors.shape[1] != dim:
            raise ExportError(
                f"{book_id!r}: dimension {vectors.shape[1]} != first record's {dim}"
            )
        if not np.all(np.isfinite(vectors)):
            raise ExportError(f"{book_id!r}: non-finite embedding component")

    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIQ", VERSION, dim, len(records)))
        for book_id, vectors in records:
            encoded = book_id.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", vectors.shape[0]))
            fh.write(np.ascontiguousarray(vectors, dtype="<f4").tobytes())
    return dim
