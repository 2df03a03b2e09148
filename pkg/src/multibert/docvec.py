"""Composed document vectors.

A document's vector is the concatenation of two views:

* the encoder part — final hidden states of the trained encoder pooled over
  the document's cluster-token positions (mean pooling by default, with the
  BOS state as an alternative and as the fallback for documents whose
  sequence carries no cluster tokens), and
* the sentence part — the plain mean of the document's sentence embeddings.

Vectors are float32 with dimension hidden_size + embedding dim.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .embedstore import SentenceEmbeddingSet
from .encoder import EncoderModel, forward
from .errors import ContractError, EmptyDocumentError, NotFoundError, ShapeError
from .sequencer import TokenSequence, TokenVocabulary, pad_batch

POOLING_MODES = ("mean", "bos")


def _pool_hidden(hidden, tokens, mask, k: int, pooling: str):
    """Pool (B, L, H) hidden states to (B, H) document vectors."""
    if pooling == "bos":
        return hidden[:, 0, :]
    cluster = (tokens < k) & (mask > 0)
    counts = cluster.sum(axis=1)
    safe = np.maximum(counts, 1)[:, None]
    pooled = (hidden * cluster[:, :, None]).sum(axis=1) / safe
    empty = counts == 0
    if empty.any():
        pooled[empty] = hidden[empty, 0, :]
    return pooled


def encoder_docvecs(
    model: EncoderModel,
    sequences: Sequence[TokenSequence],
    *,
    pooling: str = "mean",
    batch_size: int = 16,
) -> np.ndarray:
    """Encoder part for each sequence, as a (n, hidden_size) float32 array
    in input order."""
    if pooling not in POOLING_MODES:
        raise ContractError(f"unknown pooling mode '{pooling}', expected one of {POOLING_MODES}")
    if not sequences:
        raise ContractError("no sequences to embed")
    vocab = TokenVocabulary(model.config.vocab_size - 4)
    out = np.empty((len(sequences), model.config.hidden_size), dtype=np.float32)
    for start in range(0, len(sequences), batch_size):
        chunk = sequences[start : start + batch_size]
        tokens, mask = pad_batch(chunk, vocab)
        hidden, _ = forward(model, tokens, mask)
        pooled = _pool_hidden(hidden, tokens, mask, vocab.k, pooling)
        out[start : start + len(chunk)] = pooled.astype(np.float32)
    return out


def encoder_docvec(
    model: EncoderModel, sequence: TokenSequence, *, pooling: str = "mean"
) -> np.ndarray:
    return encoder_docvecs(model, [sequence], pooling=pooling)[0]


def sentence_docvec(matrix: np.ndarray) -> np.ndarray:
    """Sentence part: the mean of a document's sentence-embedding rows."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ShapeError(f"expected a (n_sentences, dim) matrix, got shape {matrix.shape}")
    if matrix.shape[0] == 0:
        raise EmptyDocumentError("cannot pool an empty sentence-embedding matrix")
    return matrix.mean(axis=0, dtype=np.float64).astype(np.float32)


def compose_docvec(encoder_part: np.ndarray, sentence_part: np.ndarray) -> np.ndarray:
    encoder_part = np.asarray(encoder_part, dtype=np.float32)
    sentence_part = np.asarray(sentence_part, dtype=np.float32)
    if encoder_part.ndim != 1 or sentence_part.ndim != 1:
        raise ShapeError("document vector parts must be 1-d")
    return np.concatenate([encoder_part, sentence_part])


def compose_all(
    model: EncoderModel,
    sequences: Sequence[TokenSequence],
    embedding_sets: Sequence[SentenceEmbeddingSet],
    *,
    pooling: str = "mean",
    batch_size: int = 16,
) -> tuple[list[str], np.ndarray]:
    """Composed vectors for every sequence, in sequence order.

    embedding_sets must contain one entry per sequence book_id; a missing id
    raises NotFoundError.  Returns (book_ids, matrix) where matrix is
    (n, hidden_size + dim) float32.
    """
    by_id = {s.book_id: s for s in embedding_sets}
    sentence_parts = []
    for seq in sequences:
        if seq.book_id not in by_id:
            raise NotFoundError(f"no sentence embeddings for book '{seq.book_id}'")
        sentence_parts.append(sentence_docvec(by_id[seq.book_id].vectors))
    encoder_parts = encoder_docvecs(model, sequences, pooling=pooling, batch_size=batch_size)
    matrix = np.concatenate([encoder_parts, np.stack(sentence_parts)], axis=1)
    return [seq.book_id for seq in sequences], matrix
