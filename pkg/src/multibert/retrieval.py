"""Book-to-book retrieval over document embeddings.

Two query paths share one index: an exact cosine scan over the whole
corpus, and a cluster-restricted scan that ranks only the members of the
query's k-means cluster, spilling deterministically to neighboring
clusters (nearest centroid first) whenever the home cluster is smaller
than k.  Scores are computed in float64 and clamped to [-1, 1]; ties break
by ascending book_id so rankings are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .codebook import Codebook, assign_batch, kmeans_fit
from .embedstore import SentenceEmbeddingSet, read_embeddings, write_embeddings
from .errors import ConfigError, ContractError, NotFoundError, ShapeError, ZeroVectorError


@dataclass(eq=False)
class EmbeddingIndex:
    book_ids: tuple[str, ...]
    matrix: np.ndarray  # (n, d) float32
    norms: np.ndarray  # (n,) float64
    codebook: Codebook | None = None
    assignments: np.ndarray | None = None
    _row_of: dict[str, int] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self._row_of:
            self._row_of = {bid: i for i, bid in enumerate(self.book_ids)}
        if len(self._row_of) != len(self.book_ids):
            raise ContractError("duplicate book_id in index")

    def __len__(self) -> int:
        return len(self.book_ids)

    def row(self, book_id: str) -> int:
        if book_id not in self._row_of:
            raise NotFoundError(f"book '{book_id}' not in index")
        return self._row_of[book_id]

    @property
    def has_clusters(self) -> bool:
        return self.codebook is not None


def build_index(book_ids: Sequence[str], matrix) -> EmbeddingIndex:
    matrix = np.asarray(matrix, dtype=np.float32)
    if matrix.ndim != 2:
        raise ShapeError(f"index matrix must be 2-d, got shape {matrix.shape}")
    if len(book_ids) != matrix.shape[0]:
        raise ShapeError(f"{len(book_ids)} ids for {matrix.shape[0]} matrix rows")
    if len(book_ids) == 0:
        raise ContractError("cannot build an empty index")
    norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
    return EmbeddingIndex(book_ids=tuple(book_ids), matrix=matrix, norms=norms)


def save_index(index: EmbeddingIndex, path) -> None:
    """Persist one record per book with a single document-level vector."""
    sets = [
        SentenceEmbeddingSet(
            book_id=bid, dim=index.matrix.shape[1], vectors=index.matrix[i : i + 1]
        )
        for i, bid in enumerate(index.book_ids)
    ]
    write_embeddings(sets, path)


def load_index(path) -> EmbeddingIndex:
    sets = read_embeddings(path)
    ids = [s.book_id for s in sets]
    for s in sets:
        if s.vectors.shape[0] != 1:
            raise ContractError(
                f"document-vector record for '{s.book_id}' has "
                f"{s.vectors.shape[0]} rows, expected 1"
            )
    matrix = np.concatenate([s.vectors for s in sets], axis=0)
    return build_index(ids, matrix)


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"vectors must share one dimension, got {a.shape} and {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def _scores_for(index: EmbeddingIndex, qrow: int) -> np.ndarray:
    """Cosine of every row against row qrow; zero-norm rows score -inf so
    they can never be retrieved (similarity to them is undefined)."""
    if index.norms[qrow] == 0.0:
        raise ZeroVectorError(
            f"query '{index.book_ids[qrow]}' has a zero embedding; cosine is undefined"
        )
    m64 = index.matrix.astype(np.float64)
    dots = m64 @ m64[qrow]
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = dots / (index.norms * index.norms[qrow])
    scores = np.clip(scores, -1.0, 1.0)
    scores[index.norms == 0.0] = -np.inf
    return scores


def _rank(index: EmbeddingIndex, scores: np.ndarray, candidates: np.ndarray, k: int):
    pairs = [
        (index.book_ids[i], float(scores[i])) for i in candidates if np.isfinite(scores[i])
    ]
    pairs.sort(key=lambda p: (-p[1], p[0]))
    return pairs[:k]


def top_k(index: EmbeddingIndex, query_id: str, k: int) -> list[tuple[str, float]]:
    """The k most cosine-similar books to the query, query excluded.

    Descending score; equal scores order by ascending book_id.  Returns
    fewer than k only when the corpus has fewer candidates.
    """
    if k <= 0:
        raise ContractError(f"k must be positive, got {k}")
    qrow = index.row(query_id)
    scores = _scores_for(index, qrow)
    candidates = np.array([i for i in range(len(index)) if i != qrow], dtype=np.int64)
    return _rank(index, scores, candidates, k)


def build_cluster_index(
    index: EmbeddingIndex,
    n_clusters: int | None = None,
    *,
    seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-4,
) -> EmbeddingIndex:
    """Attach a k-means cluster structure to the index.

    n_clusters defaults to ceil(sqrt(n)).  Returns a new index sharing the
    embedding matrix, with centroids and per-book cluster assignments.
    """
    n = len(index)
    if n_clusters is None:
        n_clusters = int(np.ceil(np.sqrt(n)))
    if n_clusters > n:
        raise ConfigError(f"n_clusters {n_clusters} exceeds corpus size {n}")
    codebook = kmeans_fit(index.matrix, n_clusters, max_iter=max_iter, tol=tol, seed=seed)
    assignments = assign_batch(codebook, index.matrix)
    return EmbeddingIndex(
        book_ids=index.book_ids,
        matrix=index.matrix,
        norms=index.norms,
        codebook=codebook,
        assignments=assignments,
    )


def cluster_retrieve(index: EmbeddingIndex, query_id: str, k: int) -> list[tuple[str, float]]:
    """Cosine ranking restricted to the query's cluster.

    When the home cluster holds fewer than k candidates, whole neighboring
    clusters are added in order of centroid-to-centroid distance (ties by
    lower cluster id) until k candidates are available or the corpus is
    exhausted; ranking then proceeds as in top_k over that candidate pool.
    """
    if k <= 0:
        raise ContractError(f"k must be positive, got {k}")
    if not index.has_clusters:
        raise ContractError("cluster_retrieve needs a cluster index; call build_cluster_index")
    qrow = index.row(query_id)
    scores = _scores_for(index, qrow)

    home = int(index.assignments[qrow])
    centroids = index.codebook.centroids.astype(np.float64)
    dist = ((centroids - centroids[home]) ** 2).sum(axis=1)
    order = sorted(range(len(centroids)), key=lambda c: (dist[c], c))

    candidates: list[int] = []
    for cluster in order:
        members = np.flatnonzero(index.assignments == cluster)
        candidates.extend(int(i) for i in members if i != qrow)
        if len(candidates) >= k:
            break
    return _rank(index, scores, np.array(candidates, dtype=np.int64), k)


def format_results(
    results: list[tuple[str, float]], titles: dict[str, str] | None = None
) -> str:
    """Tab-separated result rows: rank, book_id, score to 9 significant
    digits, and the title when known."""
    lines = []
    for rank, (book_id, score) in enumerate(results, start=1):
        row = f"{rank}\t{book_id}\t{score:.9g}"
        if titles is not None and book_id in titles:
            row += f"\t{titles[book_id]}"
        lines.append(row)
    return "\n".join(lines) + ("\n" if lines else "")
