"""Sentence-embedding interchange format and deterministic synthetic embedders.

The on-disk container ("SEMB") is bit-exact: little-endian header of magic,
format version, dimension, and record count, followed by one record per
document (book_id, sentence count, then sentence-count x dim float32 values
row-major).  Readers are safe concurrently; a writer needs exclusive access
to its output path.

The synthetic embedders stand in for an external sentence-encoder model so
the whole pipeline can be exercised with no network and no weights: vectors
are a pure, platform-independent function of (text, dim, seed).
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ShapeError

MAGIC = b"SEMB"
VERSION = 1


@dataclass(frozen=True)
class SentenceEmbeddingSet:
    """Ordered per-sentence vectors for one document, all of one dimension."""

    book_id: str
    dim: int
    vectors: np.ndarray  # shape (n_sentences, dim), float32

    def __post_init__(self):
        if self.dim < 1:
            raise ShapeError(f"dim must be >= 1, got {self.dim}")
        vectors = np.asarray(self.vectors, dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[1] != self.dim:
            raise ShapeError(
                f"{self.book_id!r}: expected vectors of shape (n, {self.dim}), "
                f"got {vectors.shape}"
            )
        object.__setattr__(self, "vectors", vectors)
        if not np.all(np.isfinite(vectors)):
            raise ShapeError(f"non-finite embedding component in {self.book_id!r}")


def write_embeddings(sets: list[SentenceEmbeddingSet], path) -> None:
    """Serialize embedding sets; all sets must share one dimension.

    An empty list writes a header-only file with dim 0.  Identical input
    always produces identical bytes.
    """
    if sets:
        dim = sets[0].dim
        for s in sets:
            if s.dim != dim:
                raise FormatError(
                    f"dimension mismatch: {s.book_id!r} has dim {s.dim}, expected {dim}"
                )
    else:
        dim = 0
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIQ", VERSION, dim, len(sets)))
        for s in sets:
            encoded = s.book_id.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", s.vectors.shape[0]))
            fh.write(np.ascontiguousarray(s.vectors, dtype="<f4").tobytes())


def read_embeddings(path) -> list[SentenceEmbeddingSet]:
    """Exact inverse of write_embeddings.

    Raises FormatError for a bad magic/version and for truncation, naming
    the byte offset where the file ran out.
    """
    with open(path, "rb") as fh:
        data = fh.read()

    def take(n: int, offset: int) -> tuple[bytes, int]:
        if offset + n > len(data):
            raise FormatError(f"truncated embedding file {path}: need {n} bytes at byte {offset}")
        return data[offset : offset + n], offset + n

    chunk, offset = take(4, 0)
    if chunk != MAGIC:
        raise FormatError(f"bad magic in {path}: {chunk!r}")
    chunk, offset = take(16, offset)
    version, dim, count = struct.unpack("<IIQ", chunk)
    if version != VERSION:
        raise FormatError(f"unsupported embedding format version {version} in {path}")

    sets = []
    for _ in range(count):
        chunk, offset = take(4, offset)
        (id_len,) = struct.unpack("<I", chunk)
        chunk, offset = take(id_len, offset)
        book_id = chunk.decode("utf-8")
        chunk, offset = take(4, offset)
        (n_sentences,) = struct.unpack("<I", chunk)
        chunk, offset = take(n_sentences * dim * 4, offset)
        vectors = np.frombuffer(chunk, dtype="<f4").reshape(n_sentences, dim)
        sets.append(SentenceEmbeddingSet(book_id=book_id, dim=dim, vectors=vectors.copy()))
    if offset != len(data):
        raise FormatError(f"trailing bytes in {path} at byte {offset}")
    return sets


def _hash_rng(seed: int, *parts: str) -> np.random.Generator:
    """PRNG keyed by a SHA-256 hash of the seed and the given text parts.

    PCG64 seeded from the low 128 bits of the digest; the same inputs give
    the same stream on every platform.
    """
    h = hashlib.sha256()
    h.update(struct.pack("<q", seed))
    for part in parts:
        h.update(part.encode("utf-8"))
        h.update(b"\x00")
    key = int.from_bytes(h.digest()[:16], "little")
    return np.random.Generator(np.random.PCG64(key))


def synthetic_embed(sentence: str, dim: int, seed: int) -> np.ndarray:
    """Deterministic unit-norm stand-in for a sentence-encoder vector.

    dim standard normals drawn from a PRNG keyed by (seed, sentence),
    normalized to unit L2 norm, returned as float32.
    """
    if dim < 1:
        raise ShapeError(f"dim must be >= 1, got {dim}")
    rng = _hash_rng(seed, sentence)
    v = rng.standard_normal(dim)
    return (v / np.linalg.norm(v)).astype(np.float32)


def correlated_embed(
    sentence: str, genre: str, dim: int, seed: int, noise: float = 0.1
) -> np.ndarray:
    """Genre-correlated synthetic vector for end-to-end tests.

    All sentences of books sharing a genre start from one unit vector keyed
    by (genre, seed); per-sentence noise of the given scale is added before
    renormalization, so genre structure is guaranteed in embedding space.
    """
    if dim < 1:
        raise ShapeError(f"dim must be >= 1, got {dim}")
    base_rng = _hash_rng(seed, "genre", genre)
    base = base_rng.standard_normal(dim)
    base /= np.linalg.norm(base)
    noise_rng = _hash_rng(seed, "sentence", sentence)
    delta = noise_rng.standard_normal(dim)
    delta /= np.linalg.norm(delta)
    v = base + noise * delta
    return (v / np.linalg.norm(v)).astype(np.float32)
