"""Documents as cluster-id token sequences.

Each sentence becomes the id of its nearest codebook centroid; the sequence
is framed by BOS/EOS and truncated from the tail when a document exceeds the
position budget (book descriptions front-load content, so the head is kept).
Special ids sit above the cluster ids so cluster tokens are exactly their
k-means indices.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codebook import Codebook, assign_batch
from .embedstore import SentenceEmbeddingSet
from .errors import ContractError, EmptyDocumentError, ShapeError


@dataclass(frozen=True)
class TokenVocabulary:
    """Cluster ids [0, k) plus PAD/BOS/EOS/MASK appended after them."""

    k: int

    @property
    def pad(self) -> int:
        return self.k

    @property
    def bos(self) -> int:
        return self.k + 1

    @property
    def eos(self) -> int:
        return self.k + 2

    @property
    def mask(self) -> int:
        return self.k + 3

    @property
    def size(self) -> int:
        return self.k + 4


@dataclass(frozen=True)
class TokenSequence:
    book_id: str
    tokens: tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.tokens)


def encode_document(
    embeddings: SentenceEmbeddingSet, codebook: Codebook, max_positions: int = 512
) -> TokenSequence:
    """[BOS] + one cluster id per sentence + [EOS], head-truncated to fit.

    At most max_positions - 2 cluster tokens are kept so the framed sequence
    never exceeds the position budget.
    """
    if embeddings.vectors.shape[0] == 0:
        raise EmptyDocumentError(f"{embeddings.book_id!r} has no sentence vectors")
    if embeddings.dim != codebook.dim:
        raise ShapeError(
            f"embedding dim {embeddings.dim} != codebook dim {codebook.dim}"
        )
    if max_positions < 3:
        raise ContractError(f"max_positions must be >= 3, got {max_positions}")
    vocab = TokenVocabulary(codebook.k)
    ids = assign_batch(codebook, embeddings.vectors)[: max_positions - 2]
    return TokenSequence(
        book_id=embeddings.book_id,
        tokens=(vocab.bos, *(int(i) for i in ids), vocab.eos),
    )


def pad_batch(
    sequences: list[TokenSequence], vocab: TokenVocabulary, batch_length: int | None = None
):
    """Right-pad sequences to one length; mask is 1 on real tokens, 0 on PAD.

    batch_length defaults to the longest member; passing one shorter than a
    member is a contract violation (sequences are never silently cut here).
    Returns (tokens, mask) as int64 / float32 arrays of shape (B, L).
    """
    if not sequences:
        raise ContractError("cannot pad an empty batch")
    longest = max(s.length for s in sequences)
    if batch_length is None:
        batch_length = longest
    elif batch_length < longest:
        raise ContractError(
            f"batch_length {batch_length} is shorter than the longest sequence ({longest})"
        )
    tokens = np.full((len(sequences), batch_length), vocab.pad, dtype=np.int64)
    mask = np.zeros((len(sequences), batch_length), dtype=np.float32)
    for row, seq in enumerate(sequences):
        tokens[row, : seq.length] = seq.tokens
        mask[row, : seq.length] = 1.0
    return tokens, mask


def write_sequences(sequences: list[TokenSequence], path: str | Path) -> None:
    """One line per document: book_id TAB space-separated token ids."""
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            fh.write(f"{seq.book_id}\t{' '.join(str(t) for t in seq.tokens)}\n")


def read_sequences(path: str | Path) -> list[TokenSequence]:
    sequences = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            book_id, _, rest = line.partition("\t")
            sequences.append(
                TokenSequence(book_id=book_id, tokens=tuple(int(t) for t in rest.split()))
            )
    return sequences
